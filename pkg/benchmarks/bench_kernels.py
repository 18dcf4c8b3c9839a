"""Time one SGD epoch on the compiled and the pure-Python backend.

    python benchmarks/bench_kernels.py [--k 32] [--repeat 3] [--model transE]

Both backends get identical inputs; the script also reports the largest
parameter difference after the epoch, which should be at rounding level.
"""

import argparse
import time

import numpy as np

from kgcep.datagen import ShapeSpec, generate
from kgcep.kernels import get_backend
from kgcep.model import TrainConfig, init_model
from kgcep.train import CorruptionSampler


def _inputs(k, model_kind, seed=0):
    kg = generate(ShapeSpec(seed=seed)).kg
    d = kg.dictionary
    model = init_model(d.n_entities, d.n_relations, TrainConfig(k=k, model_kind=model_kind), seed)
    rng = np.random.default_rng(seed)
    pos = np.ascontiguousarray(kg["LRN"], dtype=np.int64)
    neg, _ = CorruptionSampler(kg, typed=True).corrupt(pos, rng.random(len(pos)) < 0.5, rng)
    return model, pos, np.ascontiguousarray(neg)


def bench(name, model, pos, neg, repeat):
    _, fn = get_backend(name)
    transh = model.model_kind == "transH"
    best, out = float("inf"), None
    for _ in range(repeat):
        m = model.copy()
        normals = m.normals if transh else np.empty((0, 0))
        t0 = time.perf_counter()
        fn(m.entities, m.relations, normals, pos, neg, 2.0, 0.01, transh)
        best = min(best, time.perf_counter() - t0)
        out = m
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--model", choices=("transE", "transH"), default="transE")
    args = ap.parse_args(argv)

    model, pos, neg = _inputs(args.k, args.model)
    print(f"{len(pos)} triples per epoch, k={args.k}, {args.model}")
    results = {}
    for name in ("python", "cython"):
        try:
            results[name] = bench(name, model, pos, neg, args.repeat)
        except ImportError:
            print(f"{name:>7}: unavailable (extension not built)")
            continue
        t = results[name][0]
        print(f"{name:>7}: {t * 1e3:9.2f} ms/epoch  {len(pos) / t:12.0f} triples/s")
    if len(results) == 2:
        (tp, mp), (tc, mc) = results["python"], results["cython"]
        diff = max(np.abs(mp.entities - mc.entities).max(), np.abs(mp.relations - mc.relations).max())
        print(f"speedup {tp / tc:.1f}x, max parameter difference {diff:.2e}")


if __name__ == "__main__":
    main()
