"""Translational embedding models (TransE, TransH): parameters, scores, gradients, persistence."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

MODEL_KINDS = ("transE", "transH")
MAGIC = b"KGEMB\x00\x00\x01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIBBIII")


@dataclass(frozen=True)
class TrainConfig:
    k: int = 32
    gamma: float = 2.0
    learning_rate: float = 0.01
    max_epochs: int = 1000
    replicas: int = 1
    seed: int = 0
    model_kind: str = "transE"
    typed: bool = True
    tuning_metric: str = "MRR"
    eval_every: int = 25
    max_retries: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.tuning_metric != "MRR":
            raise ValueError("only MRR is supported as tuning metric")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmbeddingModel:
    entities: np.ndarray
    relations: np.ndarray
    normals: np.ndarray | None = None
    model_kind: str = "transE"
    typed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if (self.model_kind == "transH") != (self.normals is not None):
            raise ValueError("TransH models need hyperplane normals; TransE models must not have them")

    @property
    def k(self) -> int:
        return self.entities.shape[1]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.entities.copy(), self.relations.copy(),
                              None if self.normals is None else self.normals.copy(),
                              self.model_kind, self.typed, dict(self.meta))

    def is_finite(self) -> bool:
        arrs = [self.entities, self.relations] + ([self.normals] if self.normals is not None else [])
        return all(np.isfinite(a).all() for a in arrs)

    def score(self, triple) -> float:
        h, r, t = (int(x) for x in triple)
        if self.model_kind == "transE":
            return score_transe(self.entities[h], self.relations[r], self.entities[t])
        return score_transh(self.entities[h], self.relations[r], self.entities[t], self.normals[r])

    def projected(self, relation: int, vectors: np.ndarray) -> np.ndarray:
        """Entity vectors as the score function sees them under ``relation``."""
        if self.normals is None:
            return vectors
        w = self.normals[relation]
        return vectors - np.outer(vectors @ w, w)


def score_transe(h, r, t) -> float:
    """Squared L2 dissimilarity ``|h + r - t|^2``; zero for an exact translation."""
    d = np.asarray(h, dtype=float) + r - t
    return float(d @ d)


def score_transh(h, r, t, w) -> float:
    """TransH dissimilarity: translate on the hyperplane with unit normal ``w``."""
    h = np.asarray(h, dtype=float)
    t = np.asarray(t, dtype=float)
    h_p = h - (w @ h) * w
    t_p = t - (w @ t) * w
    d = h_p + r - t_p
    return float(d @ d)


def score_grad(kind: str, h, r, t, w=None) -> dict:
    """Gradient of the score function with respect to each of its arguments.

    For TransH the normal is treated as a free vector in the projection
    formula (the unit-norm constraint is restored after the update).
    """
    h, r, t = (np.asarray(x, dtype=float) for x in (h, r, t))
    if kind == "transE":
        d = h + r - t
        return {"h": 2 * d, "r": 2 * d, "t": -2 * d}
    w = np.asarray(w, dtype=float)
    e = h - t
    a = w @ e
    d = e - a * w + r
    dw = d @ w
    proj = d - dw * w
    return {"h": 2 * proj, "r": 2 * d, "t": -2 * proj, "w": -2 * (dw * e + a * d)}


def hinge_loss(kind: str, gamma: float, pos, neg, r, w=None) -> float:
    """Margin loss ``max(0, gamma + f(pos) - f(neg))`` for one pair.

    ``pos`` and ``neg`` are ``(head_vec, tail_vec)`` pairs sharing relation ``r``.
    """
    if kind == "transE":
        fp, fn = score_transe(pos[0], r, pos[1]), score_transe(neg[0], r, neg[1])
    else:
        fp, fn = score_transh(pos[0], r, pos[1], w), score_transh(neg[0], r, neg[1], w)
    return max(0.0, gamma + fp - fn)


def hinge_grad(kind: str, gamma: float, pos, neg, r, w=None) -> dict:
    """Gradients of :func:`hinge_loss` keyed by ``ph, pt, nh, nt, r`` (and ``w``).

    Positive and negative vectors are reported separately; callers that
    share entities between the two triples add the matching entries.
    """
    zero = {k: np.zeros_like(np.asarray(r, dtype=float)) for k in ("ph", "pt", "nh", "nt", "r")}
    if kind == "transH":
        zero["w"] = np.zeros_like(np.asarray(r, dtype=float))
    if hinge_loss(kind, gamma, pos, neg, r, w) <= 0.0:
        return zero
    gp = score_grad(kind, pos[0], r, pos[1], w)
    gn = score_grad(kind, neg[0], r, neg[1], w)
    out = {"ph": gp["h"], "pt": gp["t"], "nh": -gn["h"], "nt": -gn["t"], "r": gp["r"] - gn["r"]}
    if kind == "transH":
        out["w"] = gp["w"] - gn["w"]
    return out


def _unit_rows(a: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(a, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return a / n


def renormalize_entities(model: EmbeddingModel) -> None:
    """Project entity rows back into the unit ball, in place."""
    n = np.linalg.norm(model.entities, axis=1)
    over = n > 1.0
    if over.any():
        model.entities[over] /= n[over, None]


def init_model(n_entities: int, n_relations: int, config: TrainConfig, replica_seed) -> EmbeddingModel:
    """Uniform ``[-6/sqrt(k), 6/sqrt(k)]`` initialisation; entity rows and normals set to unit norm."""
    k = config.k
    bound = 6.0 / np.sqrt(k)
    rng = np.random.default_rng(replica_seed)
    ent = rng.uniform(-bound, bound, size=(n_entities, k))
    rel = rng.uniform(-bound, bound, size=(n_relations, k))
    normals = None
    if config.model_kind == "transH":
        normals = _unit_rows(rng.uniform(-bound, bound, size=(n_relations, k)))
    return EmbeddingModel(_unit_rows(ent), rel, normals, config.model_kind, config.typed)


# --- persistence ------------------------------------------------------------

def save_model(model: EmbeddingModel, path: str, config: TrainConfig | None = None,
               dictionary_digest: str | None = None) -> None:
    """Binary model file plus ``<path>.json`` sidecar with config and dictionary hash."""
    n_e, k = model.entities.shape
    n_r = model.relations.shape[0]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, MODEL_KINDS.index(model.model_kind),
                             int(model.typed), k, n_e, n_r))
        for a in (model.entities, model.relations, model.normals):
            if a is not None:
                f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    sidecar = {"config": config.to_dict() if config else None,
               "dictionary_digest": dictionary_digest,
               "meta": model.meta}
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path: str, dictionary_digest: str | None = None) -> EmbeddingModel:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated model file")
    magic, version, kind, typed, k, n_e, n_r = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    kind = MODEL_KINDS[kind]
    shapes = [(n_e, k), (n_r, k)] + ([(n_r, k)] if kind == "transH" else [])
    expected = _HEADER.size + 8 * sum(a * b for a, b in shapes)
    if len(raw) != expected:
        raise ValueError(f"{path}: size {len(raw)} does not match header ({expected})")
    mats, off = [], _HEADER.size
    for shape in shapes:
        n = shape[0] * shape[1]
        mats.append(np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64))
        off += 8 * n
    meta = {}
    try:
        with open(path + ".json", encoding="utf-8") as f:
            sidecar = json.load(f)
        meta = sidecar.get("meta") or {}
        stored = sidecar.get("dictionary_digest")
        if dictionary_digest and stored and stored != dictionary_digest:
            raise ValueError(f"{path}: model was trained on a different dictionary")
    except FileNotFoundError:
        pass
    return EmbeddingModel(mats[0], mats[1], mats[2] if kind == "transH" else None,
                          kind, bool(typed), meta)
