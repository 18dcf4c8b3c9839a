"""SGD training with margin loss and (optionally type-restricted) negative sampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kg import KnowledgeGraph, Triple
from .lp import LPConfig, evaluate_lp
from .model import EmbeddingModel, TrainConfig, init_model, renormalize_entities

log = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    """Loss or parameters became non-finite; usually the learning rate is too high."""


class CorruptionSampler:
    """Draws replacement entities uniformly from a candidate pool, excluding the original.

    With ``typed=True`` the pool is the set of entities sharing the replaced
    entity's type; otherwise every entity in the dictionary.
    """

    def __init__(self, kg: KnowledgeGraph, typed: bool, max_retries: int = 10):
        d = kg.dictionary
        self.typed = typed
        self.max_retries = max_retries
        self.n_entities = d.n_entities
        self.n_relations = max(d.n_relations, 1)
        types = d.types_array() if typed else np.zeros(d.n_entities, dtype=np.int64)
        self.types = types
        self.order = np.argsort(types, kind="stable")
        n_types = int(types.max()) + 1 if types.size else 0
        self.size = np.bincount(types, minlength=n_types)
        self.start = np.concatenate([[0], np.cumsum(self.size)[:-1]]).astype(np.int64)
        self.pos_in_pool = np.empty(d.n_entities, dtype=np.int64)
        self.pos_in_pool[self.order] = np.arange(d.n_entities) - self.start[types[self.order]]
        self.lrn_keys = np.unique(self._keys(kg["LRN"]))

    def _keys(self, triples):
        triples = np.asarray(triples, dtype=np.int64)
        return (triples[:, 0] * self.n_relations + triples[:, 1]) * self.n_entities + triples[:, 2]

    def _draw(self, originals, rng):
        t = self.types[originals]
        size = self.size[t]
        if np.any(size < 2):
            bad = originals[np.argmax(size < 2)]
            raise ValueError(f"empty corruption pool for entity {int(bad)}: its type has a single entity")
        j = np.floor(rng.random(len(originals)) * (size - 1)).astype(np.int64)
        j += j >= self.pos_in_pool[originals]
        return self.order[self.start[t] + j]

    def corrupt(self, triples: np.ndarray, head_side: np.ndarray, rng) -> tuple[np.ndarray, int]:
        """Corrupt each row on the head (``head_side`` True) or tail.

        Candidates that recreate an LRN triple are redrawn up to
        ``max_retries`` times; the number still colliding is returned.
        """
        triples = np.asarray(triples, dtype=np.int64)
        col = np.where(head_side, 0, 2)
        rows = np.arange(len(triples))
        neg = triples.copy()
        todo = rows
        for attempt in range(self.max_retries + 1):
            if todo.size == 0:
                break
            neg[todo, col[todo]] = self._draw(triples[todo, col[todo]], rng)
            hit = np.isin(self._keys(neg[todo]), self.lrn_keys, assume_unique=False)
            todo = todo[hit]
        return neg, int(todo.size)


def corrupt_triple(kg: KnowledgeGraph, triple, side: str, typed: bool, rng,
                   max_retries: int = 10) -> tuple[Triple, bool]:
    """Corrupt one triple; the flag is True if it still matches an LRN triple."""
    if side not in ("head", "tail"):
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
    sampler = CorruptionSampler(kg, typed, max_retries)
    row = np.asarray(triple, dtype=np.int64).reshape(1, 3)
    neg, flagged = sampler.corrupt(row, np.array([side == "head"]), rng)
    return Triple(*(int(x) for x in neg[0])), bool(flagged)


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    replica_scores: list = field(default_factory=list)
    selected: int = 0
    backend: str = ""

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "evaluations": self.evaluations,
                "replica_scores": self.replica_scores, "selected": self.selected,
                "backend": self.backend}


def _tuning_mrr(model, kg, split):
    return evaluate_lp(model, kg, split, LPConfig()).mrr


def train_replica(kg: KnowledgeGraph, config: TrainConfig, seed, log_: TrainingLog | None = None,
                  replica: int = 0, backend: str | None = None, tuning_split: str = "TUN",
                  epoch_callback=None) -> EmbeddingModel:
    """Train one independently initialised replica to ``config.max_epochs``.

    ``epoch_callback(epoch, model)`` runs once on the initial model
    (epoch 0) and after every epoch's renormalisation.
    """
    _, sgd_epoch = kernels.get_backend(backend)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    init_seed, sample_seed = seed.spawn(2)
    d = kg.dictionary
    model = init_model(d.n_entities, d.n_relations, config, init_seed)
    rng = np.random.default_rng(sample_seed)
    lrn = np.ascontiguousarray(kg["LRN"], dtype=np.int64)
    if len(lrn) == 0:
        raise ValueError("LRN split is empty")
    sampler = CorruptionSampler(kg, config.typed, config.max_retries)
    transh = config.model_kind == "transH"
    normals = model.normals if transh else np.empty((0, 0))
    evaluate = len(kg[tuning_split]) > 0
    if epoch_callback is not None:
        epoch_callback(0, model)
    if log_ is not None and evaluate:
        log_.evaluations.append({"replica": replica, "epoch": 0,
                                 "mrr": _tuning_mrr(model, kg, tuning_split)})
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(lrn))
        pos = np.ascontiguousarray(lrn[perm])
        head_side = rng.random(len(pos)) < 0.5
        neg, collisions = sampler.corrupt(pos, head_side, rng)
        loss, active = sgd_epoch(model.entities, model.relations, normals, pos,
                                 np.ascontiguousarray(neg), float(config.gamma),
                                 float(config.learning_rate), transh)
        mean_loss = loss / len(pos)
        if not math.isfinite(mean_loss) or not model.is_finite():
            raise TrainingDiverged(
                f"non-finite loss at epoch {epoch} (replica {replica}, "
                f"learning rate {config.learning_rate:g}); lower the learning rate")
        renormalize_entities(model)
        if log_ is not None:
            log_.epochs.append({"replica": replica, "epoch": epoch, "loss": mean_loss,
                                "active": int(active), "collisions": collisions})
            if evaluate and (epoch % config.eval_every == 0 or epoch == config.max_epochs):
                log_.evaluations.append({"replica": replica, "epoch": epoch,
                                         "mrr": _tuning_mrr(model, kg, tuning_split)})
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return model


def train(kg: KnowledgeGraph, config: TrainConfig, backend: str | None = None
          ) -> tuple[EmbeddingModel, TrainingLog]:
    """Train ``config.replicas`` replicas and keep the one with the best TUN MRR.

    Ties go to the lowest replica index. A single replica is returned
    without evaluation on TUN beyond what the log records.
    """
    if len(kg["TUN"]) == 0 and config.replicas > 1:
        raise ValueError("TUN split is empty; cannot select among replicas")
    name, _ = kernels.get_backend(backend)
    tlog = TrainingLog(backend=name)
    seeds = np.random.SeedSequence(config.seed).spawn(config.replicas)
    best, best_score = None, -math.inf
    for i, seed in enumerate(seeds):
        model = train_replica(kg, config, seed, tlog, i, backend)
        score = _tuning_mrr(model, kg, "TUN") if len(kg["TUN"]) else 0.0
        tlog.replica_scores.append(score)
        log.info("replica %d: TUN MRR %.4f", i, score)
        if score > best_score:
            best, best_score, tlog.selected = model, score, i
    best.meta = {"tuning_mrr": best_score, "replica": tlog.selected}
    return best, tlog
