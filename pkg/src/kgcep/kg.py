"""Typed knowledge-graph data model, TSV ingestion, splitting and label derivation."""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

SPLITS = ("LRN", "VLD", "TUN", "TST")
EVAL_SPLITS = ("VLD", "TUN", "TST")
DEFAULT_RATIOS = (0.90, 0.033, 0.033, 0.034)


class KGError(ValueError):
    """Raised on malformed or inconsistent knowledge-graph data."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Relation(NamedTuple):
    name: str
    domain: int
    range: int


@dataclass(frozen=True)
class TypedDictionary:
    """Dense id maps for entities, relations and types.

    ``entity_types[i]`` is the type id of entity ``i``; ``relations[j]``
    carries the domain and range type of relation ``j``.
    """

    entity_names: tuple[str, ...] = ()
    entity_types: tuple[int, ...] = ()
    relations: tuple[Relation, ...] = ()
    type_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entity_names", tuple(self.entity_names))
        object.__setattr__(self, "entity_types", tuple(int(t) for t in self.entity_types))
        object.__setattr__(self, "relations", tuple(Relation(*r) for r in self.relations))
        object.__setattr__(self, "type_names", tuple(self.type_names))
        if len(self.entity_names) != len(self.entity_types):
            raise KGError("entity names and types differ in length")
        for ns, names in (("entity", self.entity_names),
                          ("relation", [r.name for r in self.relations]),
                          ("type", self.type_names)):
            if len(set(names)) != len(names):
                raise KGError(f"duplicate {ns} name")
        n_types = len(self.type_names)
        if any(not 0 <= t < n_types for t in self.entity_types):
            raise KGError("entity type id out of range")
        for r in self.relations:
            if not (0 <= r.domain < n_types and 0 <= r.range < n_types):
                raise KGError(f"relation {r.name!r} references an unknown type")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_index[name]
        except KeyError:
            raise KGError(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_index[name]
        except KeyError:
            raise KGError(f"unknown relation {name!r}") from None

    def type_id(self, name: str) -> int:
        try:
            return self._type_index[name]
        except KeyError:
            raise KGError(f"unknown type {name!r}") from None

    @property
    def _entity_index(self) -> dict[str, int]:
        return _cached_index(self, "_eidx", self.entity_names)

    @property
    def _relation_index(self) -> dict[str, int]:
        return _cached_index(self, "_ridx", [r.name for r in self.relations])

    @property
    def _type_index(self) -> dict[str, int]:
        return _cached_index(self, "_tidx", self.type_names)

    def types_array(self) -> np.ndarray:
        return np.asarray(self.entity_types, dtype=np.int64)

    def entities_of_type(self, type_id: int) -> np.ndarray:
        return np.flatnonzero(self.types_array() == type_id)

    def digest(self) -> str:
        """Stable hash of the dictionary, used to pair models with datasets."""
        h = hashlib.sha256()
        h.update(json.dumps({
            "entities": list(zip(self.entity_names, self.entity_types)),
            "relations": [list(r) for r in self.relations],
            "types": list(self.type_names),
        }, separators=(",", ":")).encode())
        return h.hexdigest()


def _cached_index(obj, attr, names):
    try:
        return obj.__dict__[attr]
    except KeyError:
        idx = {n: i for i, n in enumerate(names)}
        object.__setattr__(obj, attr, idx)
        return idx


class _DictionaryBuilder:
    def __init__(self, base: TypedDictionary | None = None):
        base = base or TypedDictionary()
        self.entities = {n: i for i, n in enumerate(base.entity_names)}
        self.entity_types = list(base.entity_types)
        self.types = {n: i for i, n in enumerate(base.type_names)}
        self.relations = {r.name: i for i, r in enumerate(base.relations)}
        self.relation_sig = [(r.domain, r.range) for r in base.relations]

    def type(self, name: str) -> int:
        if name not in self.types:
            self.types[name] = len(self.types)
        return self.types[name]

    def entity(self, name: str, type_name: str | None, strict: bool, lineno: int) -> int:
        if name in self.entities:
            eid = self.entities[name]
            if type_name is not None:
                declared = self.entity_types[eid]
                if self.types.get(type_name) != declared:
                    raise KGError(
                        f"line {lineno}: entity {name!r} re-declared with conflicting type "
                        f"{type_name!r} (was {self._type_name(declared)!r})")
            return eid
        if strict:
            raise KGError(f"line {lineno}: unknown entity {name!r}")
        if type_name is None:
            raise KGError(f"line {lineno}: entity token {name!r} lacks a ':Type' suffix")
        eid = len(self.entities)
        self.entities[name] = eid
        self.entity_types.append(self.type(type_name))
        return eid

    def relation(self, name: str, head_type: int, tail_type: int, strict: bool, lineno: int) -> int:
        if name in self.relations:
            rid = self.relations[name]
            dom, rng = self.relation_sig[rid]
            if (dom, rng) != (head_type, tail_type):
                raise KGError(
                    f"line {lineno}: relation {name!r} used with types "
                    f"({self._type_name(head_type)}, {self._type_name(tail_type)}), "
                    f"expected ({self._type_name(dom)}, {self._type_name(rng)})")
            return rid
        if strict:
            raise KGError(f"line {lineno}: unknown relation {name!r}")
        rid = len(self.relations)
        self.relations[name] = rid
        self.relation_sig.append((head_type, tail_type))
        return rid

    def _type_name(self, tid):
        for n, i in self.types.items():
            if i == tid:
                return n
        return str(tid)

    def build(self) -> TypedDictionary:
        names = sorted(self.entities, key=self.entities.get)
        type_names = sorted(self.types, key=self.types.get)
        rel_names = sorted(self.relations, key=self.relations.get)
        return TypedDictionary(
            entity_names=tuple(names),
            entity_types=tuple(self.entity_types),
            relations=tuple(Relation(n, *self.relation_sig[self.relations[n]]) for n in rel_names),
            type_names=tuple(type_names),
        )


def _split_token(token: str) -> tuple[str, str | None]:
    name, sep, type_name = token.rpartition(":")
    if not sep or not name or not type_name:
        return token, None
    return name, type_name


def _iter_rows(stream: str | Iterable[str]):
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise KGError(f"line {lineno}: expected 'head<TAB>relation<TAB>tail', got {line!r}")
        yield lineno, [p.strip() for p in parts]


def parse_triples(stream: str | Iterable[str], mode: str = "build",
                  dictionary: TypedDictionary | None = None
                  ) -> tuple[TypedDictionary, np.ndarray]:
    """Parse ``head<TAB>relation<TAB>tail`` lines into dense-id triples.

    In ``build`` mode entity tokens are ``name:Type`` and new names extend
    ``dictionary`` (or an empty one). In ``strict`` mode every name must
    already exist in ``dictionary``; a ``:Type`` suffix, if given, must agree.

    Returns the dictionary and an ``(n, 3)`` int64 array of
    ``(head, relation, tail)`` rows.
    """
    if mode not in ("build", "strict"):
        raise ValueError(f"unknown dictionary mode {mode!r}")
    strict = mode == "strict"
    if strict and dictionary is None:
        raise KGError("strict mode requires a dictionary")
    builder = _DictionaryBuilder(dictionary)
    rows = []
    for lineno, (h_tok, r_tok, t_tok) in _iter_rows(stream):
        h_name, h_type = _split_token(h_tok)
        t_name, t_type = _split_token(t_tok)
        if strict:
            # a bare name that exists verbatim wins over a name:Type reading
            if h_tok in builder.entities:
                h_name, h_type = h_tok, None
            if t_tok in builder.entities:
                t_name, t_type = t_tok, None
        h = builder.entity(h_name, h_type, strict, lineno)
        t = builder.entity(t_name, t_type, strict, lineno)
        r = builder.relation(r_tok, builder.entity_types[h], builder.entity_types[t], strict, lineno)
        rows.append((h, r, t))
    triples = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    return builder.build(), triples


def serialize_triples(dictionary: TypedDictionary, triples: np.ndarray) -> str:
    """Inverse of :func:`parse_triples` in build mode."""
    out = io.StringIO()
    names, types = dictionary.entity_names, dictionary.entity_types
    tnames = dictionary.type_names
    for h, r, t in np.asarray(triples).reshape(-1, 3):
        out.write(f"{names[h]}:{tnames[types[h]]}\t{dictionary.relations[r].name}\t"
                  f"{names[t]}:{tnames[types[t]]}\n")
    return out.getvalue()


def parse_types(stream: str | Iterable[str]) -> TypedDictionary:
    """Read an ``entity<TAB>Type`` sidecar into an entity-only dictionary."""
    builder = _DictionaryBuilder()
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise KGError(f"line {lineno}: expected 'entity<TAB>Type', got {line!r}")
        builder.entity(parts[0].strip(), parts[1].strip(), False, lineno)
    return builder.build()


@dataclass(frozen=True)
class KnowledgeGraph:
    dictionary: TypedDictionary
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        splits = {}
        for name in SPLITS:
            arr = np.asarray(self.splits.get(name, np.empty((0, 3))), dtype=np.int64).reshape(-1, 3)
            arr.setflags(write=False)
            splits[name] = arr
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise KGError(f"unknown split names {sorted(unknown)}")
        object.__setattr__(self, "splits", splits)

    def __getitem__(self, split: str) -> np.ndarray:
        return self.splits[split]

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.splits[s] for s in SPLITS])

    def validate(self) -> None:
        """Check every structural invariant, raising :class:`KGError` on the first failure."""
        d = self.dictionary
        types = d.types_array()
        dom = np.asarray([r.domain for r in d.relations], dtype=np.int64)
        rng = np.asarray([r.range for r in d.relations], dtype=np.int64)
        seen = {}
        for name in SPLITS:
            tr = self.splits[name]
            if tr.size == 0:
                continue
            if tr[:, [0, 2]].min() < 0 or tr[:, [0, 2]].max() >= d.n_entities:
                raise KGError(f"{name}: entity id out of range")
            if tr[:, 1].min() < 0 or tr[:, 1].max() >= d.n_relations:
                raise KGError(f"{name}: relation id out of range")
            bad = (types[tr[:, 0]] != dom[tr[:, 1]]) | (types[tr[:, 2]] != rng[tr[:, 1]])
            if bad.any():
                raise KGError(f"{name}: triple {tuple(tr[np.argmax(bad)])} violates relation typing")
            for row in map(tuple, tr.tolist()):
                if row in seen:
                    where = "twice in " + name if seen[row] == name else f"in {seen[row]} and {name}"
                    raise KGError(f"triple {row} appears {where}")
                seen[row] = name
        lrn = self.splits["LRN"]
        trained = np.zeros(d.n_entities, dtype=bool)
        trained[lrn[:, 0]] = True
        trained[lrn[:, 2]] = True
        for name in EVAL_SPLITS:
            tr = self.splits[name]
            ents = np.concatenate([tr[:, 0], tr[:, 2]])
            if ents.size and not trained[ents].all():
                raise KGError(f"{name}: entity {d.entity_names[ents[~trained[ents]][0]]!r} "
                              "never appears in LRN")

    def digest(self) -> str:
        h = hashlib.sha256(self.dictionary.digest().encode())
        for name in SPLITS:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.splits[name], dtype="<i8").tobytes())
        return h.hexdigest()


def split_dataset(triples: np.ndarray, ratios=DEFAULT_RATIOS, seed: int = 0,
                  dictionary: TypedDictionary | None = None) -> KnowledgeGraph:
    """Shuffle and partition triples into LRN/VLD/TUN/TST.

    Evaluation split sizes are ``round(n * ratio)``; LRN takes the rest.
    Afterwards, evaluation triples mentioning an entity absent from LRN
    are moved into LRN (scanned in shuffled order), so no evaluation
    triple refers to an untrained entity.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 4 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise KGError(f"split ratios must be four non-negative fractions summing to 1, got {ratios}")
    n = len(triples)
    if n < 4:
        raise KGError(f"need at least 4 triples to split, got {n}")
    sizes = [int(round(n * r)) for r in ratios[1:]]
    if sum(sizes) > n:
        raise KGError("evaluation splits exceed the triple count")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_lrn = n - sum(sizes)
    lrn_idx = list(order[:n_lrn])
    bounds = np.cumsum([n_lrn] + sizes)
    eval_idx = {name: order[bounds[i]:bounds[i + 1]] for i, name in enumerate(EVAL_SPLITS)}

    covered = np.zeros(int(triples[:, [0, 2]].max()) + 1 if n else 0, dtype=bool)
    covered[triples[lrn_idx, 0]] = True
    covered[triples[lrn_idx, 2]] = True
    kept = {}
    for name in EVAL_SPLITS:
        keep = []
        for i in eval_idx[name]:
            h, _, t = triples[i]
            if covered[h] and covered[t]:
                keep.append(i)
            else:
                lrn_idx.append(i)
                covered[h] = covered[t] = True
        kept[name] = keep
    # a triple kept earlier stays valid because coverage only grows
    if dictionary is None:
        dictionary = TypedDictionary()
    splits = {"LRN": triples[np.asarray(lrn_idx, dtype=np.int64)]}
    for name in EVAL_SPLITS:
        splits[name] = triples[np.asarray(kept[name], dtype=np.int64)]
    return KnowledgeGraph(dictionary, splits)


@dataclass(frozen=True)
class LabelMap:
    target_type: int
    relation: int
    entities: np.ndarray
    labels: np.ndarray
    label_entities: tuple[int, ...]

    @property
    def n_labels(self) -> int:
        return len(self.label_entities)

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.entities.tolist(), self.labels.tolist()))


def derive_labels(kg: KnowledgeGraph, relation: int | str) -> LabelMap:
    """Labels for the relation's domain-type entities, one per distinct tail.

    The relation must be many-to-one across all splits. Label ids are
    assigned in increasing tail-entity-id order.
    """
    d = kg.dictionary
    rid = d.relation_id(relation) if isinstance(relation, str) else int(relation)
    if not 0 <= rid < d.n_relations:
        raise KGError(f"unknown relation id {rid}")
    tr = kg.all_triples()
    tr = tr[tr[:, 1] == rid]
    pairs = np.unique(tr[:, [0, 2]], axis=0)
    heads, counts = np.unique(pairs[:, 0], return_counts=True)
    if (counts > 1).any():
        bad = heads[counts > 1][0]
        raise KGError(f"relation {d.relations[rid].name!r} is not many-to-one: "
                      f"{d.entity_names[bad]!r} has several tails")
    tails = np.unique(pairs[:, 1])
    labels = np.searchsorted(tails, pairs[:, 1])
    return LabelMap(target_type=d.relations[rid].domain, relation=rid,
                    entities=pairs[:, 0].copy(), labels=labels.astype(np.int64),
                    label_entities=tuple(tails.tolist()))


# --- persistence ------------------------------------------------------------

def save_kg(kg: KnowledgeGraph, directory: str, seed: int | None = None,
            ratios=None) -> None:
    """Write four split TSVs, an ``entities.tsv`` type sidecar and ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    d = kg.dictionary
    for name in SPLITS:
        with open(os.path.join(directory, f"{name.lower()}.tsv"), "w", encoding="utf-8", newline="\n") as f:
            f.write(serialize_triples(d, kg.splits[name]))
    with open(os.path.join(directory, "entities.tsv"), "w", encoding="utf-8", newline="\n") as f:
        for name, t in zip(d.entity_names, d.entity_types):
            f.write(f"{name}\t{d.type_names[t]}\n")
    manifest = {
        "counts": {name: int(len(kg.splits[name])) for name in SPLITS},
        "entities": d.n_entities,
        "relations": [[r.name, d.type_names[r.domain], d.type_names[r.range]] for r in d.relations],
        "types": list(d.type_names),
        "seed": seed,
        "ratios": list(ratios) if ratios is not None else None,
        "digest": kg.digest(),
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_kg(directory: str) -> KnowledgeGraph:
    """Load a directory written by :func:`save_kg` and validate it."""
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.isdir(directory):
        raise KGError(f"{directory}: not a dataset directory")
    base = None
    ent_path = os.path.join(directory, "entities.tsv")
    if os.path.exists(ent_path):
        with open(ent_path, encoding="utf-8") as f:
            base = parse_types(f)
    manifest = None
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
    if base is not None and manifest is not None:
        # fix type and relation ids to the manifest order
        tnames = list(manifest["types"])
        for t in base.type_names:
            if t not in tnames:
                tnames.append(t)
        tidx = {n: i for i, n in enumerate(tnames)}
        base = TypedDictionary(
            entity_names=base.entity_names,
            entity_types=tuple(tidx[base.type_names[t]] for t in base.entity_types),
            relations=tuple(Relation(n, tidx[a], tidx[b]) for n, a, b in manifest["relations"]),
            type_names=tuple(tnames),
        )
    dictionary = base
    splits = {}
    for name in SPLITS:
        path = os.path.join(directory, f"{name.lower()}.tsv")
        if not os.path.exists(path):
            splits[name] = np.empty((0, 3), dtype=np.int64)
            continue
        with open(path, encoding="utf-8") as f:
            dictionary, splits[name] = parse_triples(f, "build", dictionary)
    if dictionary is None:
        dictionary = TypedDictionary()
    kg = KnowledgeGraph(dictionary, splits)
    kg.validate()
    return kg
