"""Deterministic synthetic categorised KGs in two relational shapes.

``ontology-like``: subjects hang off a nested many-to-one hierarchy
(group > subgroup > org-form) and carry many-to-many restriction links
whose partners are biased towards a per-group pool.

``ehr-like``: subjects carry a few flat many-to-one demographic labels
and a dominant many-to-many link to codes biased by the first label.

In both shapes the partner bias strength is ``1 - noise_rate``. In the
ontology shape the same rate also replaces observed non-leaf labels with a
wrong one; ground truth is kept separately.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .kg import DEFAULT_RATIOS, KGError, KnowledgeGraph, Relation, TypedDictionary, save_kg, split_dataset

SHAPES = ("ontology-like", "ehr-like")

ONTOLOGY_LEVELS = (("PGroup", "inPGroup"), ("PSubgroup", "inPSubgroup"), ("POrgForm", "inPOrgForm"))
EHR_LABELS = (("AgeStage", "ageStage"), ("AbortionFlag", "hadAbortion"))


@dataclass(frozen=True)
class ShapeSpec:
    shape: str = "ontology-like"
    n_subjects: int = 500
    n_partners: int = 48
    label_cardinalities: tuple = (8, 59, 150)
    density: float = 1.0
    noise_rate: float = 0.0
    seed: int = 0
    ratios: tuple = DEFAULT_RATIOS

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise KGError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        object.__setattr__(self, "label_cardinalities", tuple(int(c) for c in self.label_cardinalities))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if self.n_subjects < 1 or self.n_partners < 1 or not self.label_cardinalities:
            raise KGError("entity counts must be >= 1")
        if min(self.label_cardinalities) < 1:
            raise KGError("label cardinalities must be >= 1")
        if self.density < 0:
            raise KGError("density must be >= 0")
        if not 0 <= self.noise_rate < 1:
            raise KGError("noise rate must lie in [0, 1)")
        if self.density > self.n_partners:
            raise KGError("density exceeds the number of partner entities")

    @property
    def hierarchy_depth(self) -> int:
        return len(self.label_cardinalities)

    @classmethod
    def ontology(cls, **kw) -> "ShapeSpec":
        return cls(**kw)

    @classmethod
    def ehr(cls, **kw) -> "ShapeSpec":
        defaults = dict(shape="ehr-like", n_subjects=300, n_partners=200,
                        label_cardinalities=(6, 2), density=6.0)
        defaults.update(kw)
        return cls(**defaults)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["label_cardinalities"] = list(self.label_cardinalities)
        d["ratios"] = list(self.ratios)
        return d


@dataclass
class GeneratedKG:
    kg: KnowledgeGraph
    spec: ShapeSpec
    # relation name -> {subject entity id: ground-truth label entity id}
    truth: dict = field(default_factory=dict)
    targets: tuple = ()


class _Builder:
    def __init__(self):
        self.types: list[str] = []
        self.names: list[str] = []
        self.entity_types: list[int] = []
        self.relations: list[Relation] = []
        self.triples: list[tuple[int, int, int]] = []

    def add_type(self, name):
        self.types.append(name)
        return len(self.types) - 1

    def add_entities(self, type_id, prefix, n):
        width = len(str(max(n - 1, 0)))
        start = len(self.names)
        for i in range(n):
            self.names.append(f"{prefix}{i:0{width}d}")
            self.entity_types.append(type_id)
        return np.arange(start, start + n)

    def add_relation(self, name, domain, range_):
        self.relations.append(Relation(name, domain, range_))
        return len(self.relations) - 1

    def link(self, heads, rel, tails):
        self.triples.extend((int(h), rel, int(t)) for h, t in zip(heads, tails))

    def dictionary(self):
        return TypedDictionary(tuple(self.names), tuple(self.entity_types),
                               tuple(self.relations), tuple(self.types))


def _cover_assign(rng, n_children, n_parents):
    """Assign each child a parent so that every parent gets at least one child."""
    if n_children < n_parents:
        raise KGError(f"inconsistent cardinalities: {n_children} children for {n_parents} parents")
    parents = np.concatenate([np.arange(n_parents), rng.integers(0, n_parents, n_children - n_parents)])
    return rng.permutation(parents)


def _noisy(rng, labels, n_labels, noise_rate):
    """Replace a ``noise_rate`` fraction of labels by a different random label."""
    labels = labels.copy()
    if n_labels < 2 or noise_rate == 0:
        return labels
    flip = rng.random(len(labels)) < noise_rate
    shift = rng.integers(1, n_labels, len(labels))
    labels[flip] = (labels[flip] + shift[flip]) % n_labels
    return labels


def _partner_links(rng, groups, n_groups, n_partners, density, noise_rate):
    """Distinct many-to-many partners per subject, biased to a per-group pool.

    Each subject draws ``floor(density)`` partners, plus one more with
    probability equal to the fractional part.
    """
    pools = np.array_split(rng.permutation(n_partners), n_groups)
    base = int(np.floor(density))
    frac = density - base
    heads, tails = [], []
    for s, g in enumerate(groups):
        m = base + int(rng.random() < frac)
        chosen = set()
        pool = pools[g]
        while len(chosen) < m:
            if rng.random() < 1 - noise_rate and len(set(pool.tolist()) - chosen) > 0:
                cand = int(pool[rng.integers(len(pool))])
            else:
                cand = int(rng.integers(n_partners))
            if cand not in chosen:
                chosen.add(cand)
        for c in sorted(chosen):
            heads.append(s)
            tails.append(c)
    return np.asarray(heads, dtype=np.int64), np.asarray(tails, dtype=np.int64)


def gen_ontology_like(spec: ShapeSpec | None = None) -> GeneratedKG:
    """Procedures under a nested group hierarchy plus biased restriction links."""
    spec = spec or ShapeSpec()
    if spec.shape != "ontology-like":
        raise KGError("gen_ontology_like needs an ontology-like spec")
    cards = spec.label_cardinalities
    if any(a > b for a, b in zip(cards, cards[1:])) or cards[-1] > spec.n_subjects:
        raise KGError(f"inconsistent cardinalities {cards} for {spec.n_subjects} subjects")
    rng = np.random.default_rng(spec.seed)
    b = _Builder()
    t_proc = b.add_type("Procedure")
    level_types, level_ents = [], []
    for i, n in enumerate(cards):
        tname, _ = _level_names(i)
        tid = b.add_type(tname)
        level_types.append(tid)
        level_ents.append(b.add_entities(tid, tname.lower() + "_", n))
    t_diag = b.add_type("Diagnosis")
    procs = b.add_entities(t_proc, "proc_", spec.n_subjects)
    diags = b.add_entities(t_diag, "diag_", spec.n_partners)

    # parent[i][c] = index in level i-1 of child c at level i
    parent = [None] + [_cover_assign(rng, cards[i], cards[i - 1]) for i in range(1, len(cards))]
    leaf = _cover_assign(rng, spec.n_subjects, cards[-1])
    truth_idx = [None] * len(cards)
    truth_idx[-1] = leaf
    for i in range(len(cards) - 1, 0, -1):
        truth_idx[i - 1] = parent[i][truth_idx[i]]

    rels = []
    for i in range(len(cards)):
        _, rname = _level_names(i)
        rels.append(b.add_relation(rname, t_proc, level_types[i]))
    for i in range(len(cards)):
        # the leaf link stays clean so the hierarchy remains recoverable
        observed = truth_idx[i] if i == len(cards) - 1 else _noisy(rng, truth_idx[i], cards[i], spec.noise_rate)
        b.link(procs, rels[i], level_ents[i][observed])
    for i in range(1, len(cards)):
        child, _ = _level_names(i)
        r = b.add_relation(f"{child[1:].lower()}Of", level_types[i], level_types[i - 1])
        b.link(level_ents[i], r, level_ents[i - 1][parent[i]])
    r_restr = b.add_relation("isRestrictedBy", t_proc, t_diag)
    hs, ts = _partner_links(rng, truth_idx[0], cards[0], spec.n_partners, spec.density, spec.noise_rate)
    b.link(procs[hs], r_restr, diags[ts])

    truth = {}
    for i in range(len(cards)):
        _, rname = _level_names(i)
        truth[rname] = dict(zip(procs.tolist(), level_ents[i][truth_idx[i]].tolist()))
    targets = tuple(_level_names(i)[1] for i in range(min(2, len(cards))))
    return _finish(b, spec, truth, targets)


def _level_names(i):
    if i < len(ONTOLOGY_LEVELS):
        return ONTOLOGY_LEVELS[i]
    return f"PLevel{i + 1}", f"inPLevel{i + 1}"


def gen_ehr_like(spec: ShapeSpec | None = None) -> GeneratedKG:
    """Patients with flat demographic labels and a dominant patient-code relation."""
    spec = spec or ShapeSpec.ehr()
    if spec.shape != "ehr-like":
        raise KGError("gen_ehr_like needs an ehr-like spec")
    cards = spec.label_cardinalities
    if max(cards) > spec.n_subjects:
        raise KGError(f"inconsistent cardinalities {cards} for {spec.n_subjects} subjects")
    rng = np.random.default_rng(spec.seed)
    b = _Builder()
    t_pat = b.add_type("Patient")
    label_types, label_ents = [], []
    for i, n in enumerate(cards):
        tname, _ = _ehr_names(i)
        tid = b.add_type(tname)
        label_types.append(tid)
        label_ents.append(b.add_entities(tid, tname.lower() + "_", n))
    t_code = b.add_type("Code")
    pats = b.add_entities(t_pat, "patient_", spec.n_subjects)
    codes = b.add_entities(t_code, "code_", spec.n_partners)

    truth_idx = [_cover_assign(rng, spec.n_subjects, n) for n in cards]
    truth = {}
    for i in range(len(cards)):
        _, rname = _ehr_names(i)
        r = b.add_relation(rname, t_pat, label_types[i])
        b.link(pats, r, label_ents[i][truth_idx[i]])
        truth[rname] = dict(zip(pats.tolist(), label_ents[i][truth_idx[i]].tolist()))
    r_diag = b.add_relation("hasDiagnosis", t_pat, t_code)
    hs, ts = _partner_links(rng, truth_idx[0], cards[0], spec.n_partners, spec.density, spec.noise_rate)
    b.link(pats[hs], r_diag, codes[ts])
    targets = tuple(_ehr_names(i)[1] for i in range(len(cards)))
    return _finish(b, spec, truth, targets)


def _ehr_names(i):
    if i < len(EHR_LABELS):
        return EHR_LABELS[i]
    return f"Demo{i + 1}", f"hasDemo{i + 1}"


def _finish(b: _Builder, spec: ShapeSpec, truth, targets) -> GeneratedKG:
    dictionary = b.dictionary()
    triples = np.asarray(b.triples, dtype=np.int64).reshape(-1, 3)
    kg = split_dataset(triples, spec.ratios, spec.seed, dictionary)
    kg.validate()
    return GeneratedKG(kg, spec, truth, targets)


def generate(spec: ShapeSpec) -> GeneratedKG:
    return gen_ontology_like(spec) if spec.shape == "ontology-like" else gen_ehr_like(spec)


def save_generated(gen: GeneratedKG, directory: str) -> None:
    """Dataset directory plus ``labels_<relation>.tsv`` ground truth and ``spec.json``."""
    save_kg(gen.kg, directory, seed=gen.spec.seed, ratios=gen.spec.ratios)
    names = gen.kg.dictionary.entity_names
    for rel, mapping in gen.truth.items():
        with open(os.path.join(directory, f"labels_{rel}.tsv"), "w", encoding="utf-8", newline="\n") as f:
            for e in sorted(mapping):
                f.write(f"{names[e]}\t{names[mapping[e]]}\n")
    with open(os.path.join(directory, "spec.json"), "w", encoding="utf-8") as f:
        json.dump({**gen.spec.to_dict(), "targets": list(gen.targets)}, f, indent=2, sort_keys=True)
        f.write("\n")
