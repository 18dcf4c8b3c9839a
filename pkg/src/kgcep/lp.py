"""Link-prediction evaluation: rank true entities against corrupted candidates."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph
from .model import EmbeddingModel

_CHUNK = 128


@dataclass(frozen=True)
class LPConfig:
    """Ranking protocol options.

    ``candidate_scope=None`` follows the model: typed candidates for a
    type-restricted model, every entity otherwise.
    """

    candidate_scope: str | None = None
    filter_mode: str = "raw"
    sides: str = "both"
    hits_levels: tuple = (10,)

    def __post_init__(self):
        if self.candidate_scope not in (None, "global", "typed"):
            raise ValueError(f"bad candidate scope {self.candidate_scope!r}")
        if self.filter_mode not in ("raw", "filtered"):
            raise ValueError(f"bad filter mode {self.filter_mode!r}")
        if self.sides not in ("head", "tail", "both"):
            raise ValueError(f"bad sides {self.sides!r}")
        levels = tuple(int(n) for n in self.hits_levels)
        if not levels or min(levels) < 1:
            raise ValueError("hits levels must be a nonempty list of N >= 1")
        object.__setattr__(self, "hits_levels", tuple(sorted(set(levels))))

    def scope_for(self, model: EmbeddingModel) -> str:
        if self.candidate_scope is not None:
            return self.candidate_scope
        return "typed" if model.typed else "global"

    def side_list(self) -> tuple:
        return ("head", "tail") if self.sides == "both" else (self.sides,)


@dataclass
class LPReport:
    mrank: float
    mrr: float
    hits: dict
    count: int
    per_relation: dict = field(default_factory=dict)
    ranks: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "mrank": self.mrank,
            "mrr": self.mrr,
            "hits": {str(n): v for n, v in self.hits.items()},
            "count": self.count,
            "per_relation": self.per_relation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self, config_hash: str) -> str:
        h10 = self.hits.get(10, float("nan"))
        return f"{config_hash},{self.mrank!r},{self.mrr!r},{h10!r}"


def summarize_ranks(ranks, hits_levels=(10,)) -> tuple[float, float, dict]:
    """``(mrank, mrr, {N: hits@N})`` of a rank array, reduced in index order."""
    ranks = np.asarray(ranks, dtype=np.float64).ravel()
    if ranks.size == 0:
        raise ValueError("no ranks to summarize")
    mrank = float(np.mean(ranks))
    mrr = float(np.mean(1.0 / ranks))
    hits = {int(n): float(np.mean(ranks <= n)) for n in hits_levels}
    return mrank, mrr, hits


class _Ranker:
    """Shared state for ranking many triples of one KG under one model."""

    def __init__(self, model: EmbeddingModel, kg: KnowledgeGraph, config: LPConfig):
        self.model = model
        self.kg = kg
        self.config = config
        self.scope = config.scope_for(model)
        d = kg.dictionary
        self.types = d.types_array()
        self.all_entities = np.arange(d.n_entities)
        self._pools = {}
        self._known = None
        if config.filter_mode == "filtered":
            known_t, known_h = defaultdict(list), defaultdict(list)
            for h, r, t in kg.all_triples().tolist():
                known_t[(h, r)].append(t)
                known_h[(r, t)].append(h)
            self._known = ({k: np.asarray(v) for k, v in known_h.items()},
                           {k: np.asarray(v) for k, v in known_t.items()})

    def pool_of_type(self, t: int) -> np.ndarray:
        if t not in self._pools:
            self._pools[t] = np.flatnonzero(self.types == t)
        return self._pools[t]

    def ranks_for_relation(self, r: int, triples: np.ndarray, side: str) -> np.ndarray:
        """Pessimistic ranks of the true entity for triples sharing relation ``r``."""
        model = self.model
        rel = model.relations[r]
        true_col = 0 if side == "head" else 2
        out = np.empty(len(triples), dtype=np.int64)
        # typed candidates come from the relation's domain (head side) or range (tail side)
        sig = self.kg.dictionary.relations[r]
        if self.scope == "global":
            pool = self.all_entities
        else:
            pool = self.pool_of_type(sig.domain if side == "head" else sig.range)
        if pool.size == 0:
            raise ValueError(f"empty candidate pool for relation {r} ({side} side)")
        cand = model.projected(r, model.entities[pool])
        pos_in_pool = np.searchsorted(pool, triples[:, true_col])
        if np.any(pool[np.minimum(pos_in_pool, len(pool) - 1)] != triples[:, true_col]):
            raise ValueError("candidate pool does not contain the true entity")
        for s in range(0, len(triples), _CHUNK):
            sel = np.arange(s, min(s + _CHUNK, len(triples)))
            tr = triples[sel]
            if side == "tail":
                anchor = model.projected(r, model.entities[tr[:, 0]]) + rel
                diff = anchor[:, None, :] - cand[None, :, :]
            else:
                anchor = model.projected(r, model.entities[tr[:, 2]]) - rel
                diff = cand[None, :, :] - anchor[:, None, :]
            scores = np.einsum("ijk,ijk->ij", diff, diff)
            p = pos_in_pool[s:s + _CHUNK]
            true_scores = scores[np.arange(len(sel)), p]
            le = scores <= true_scores[:, None]
            if self._known is not None:
                for row, (h, _, t) in enumerate(tr.tolist()):
                    others = (self._known[0].get((r, t)) if side == "head"
                              else self._known[1].get((h, r)))
                    if others is None:
                        continue
                    others = others[others != (h if side == "head" else t)]
                    le[row] &= ~np.isin(pool, others)
            out[s:s + len(sel)] = le.sum(axis=1)
        return out


def rank_triple(model: EmbeddingModel, kg: KnowledgeGraph, triple, side: str,
                config: LPConfig | None = None) -> int:
    """Rank of the true ``side`` entity of ``triple`` (1 is best, ties count against it)."""
    config = config or LPConfig()
    if side not in ("head", "tail"):
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
    tr = np.asarray(triple, dtype=np.int64).reshape(1, 3)
    return int(_Ranker(model, kg, config).ranks_for_relation(int(tr[0, 1]), tr, side)[0])


def rank_split(model: EmbeddingModel, kg: KnowledgeGraph, triples: np.ndarray,
               config: LPConfig) -> np.ndarray:
    """``(n, n_sides)`` rank matrix for ``triples``, columns in ``config.side_list()`` order."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ranker = _Ranker(model, kg, config)
    sides = config.side_list()
    ranks = np.zeros((len(triples), len(sides)), dtype=np.int64)
    for r in np.unique(triples[:, 1]).tolist():
        rows = np.flatnonzero(triples[:, 1] == r)
        for j, side in enumerate(sides):
            ranks[rows, j] = ranker.ranks_for_relation(r, triples[rows], side)
    return ranks


def evaluate_lp(model: EmbeddingModel, kg: KnowledgeGraph, split: str = "TST",
                config: LPConfig | None = None) -> LPReport:
    """MRank, MRR and Hits@N of ``model`` over one split, with a per-relation breakdown."""
    config = config or LPConfig()
    triples = kg[split] if isinstance(split, str) else np.asarray(split, dtype=np.int64)
    if len(triples) == 0:
        raise ValueError(f"split {split!r} is empty")
    ranks = rank_split(model, kg, triples, config)
    mrank, mrr, hits = summarize_ranks(ranks, config.hits_levels)
    per_relation = {}
    names = [r.name for r in kg.dictionary.relations]
    for r in np.unique(triples[:, 1]).tolist():
        sub = ranks[triples[:, 1] == r]
        m, rr, hh = summarize_ranks(sub, config.hits_levels)
        per_relation[names[r]] = {"mrank": m, "mrr": rr,
                                  "hits": {str(n): v for n, v in hh.items()},
                                  "count": int(sub.size)}
    return LPReport(mrank, mrr, hits, int(ranks.size), per_relation, ranks)
