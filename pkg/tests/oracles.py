"""Independent reference implementations used only by the tests.

Each oracle follows the textbook definition directly, with no code shared
with the package, so agreement is meaningful.
"""

import itertools
import math


def score(model, h, r, t):
    """Dissimilarity computed coordinate by coordinate with plain floats."""
    hv = [float(x) for x in model.entities[h]]
    tv = [float(x) for x in model.entities[t]]
    rv = [float(x) for x in model.relations[r]]
    if model.model_kind == "transH":
        w = [float(x) for x in model.normals[r]]
        wh = sum(a * b for a, b in zip(w, hv))
        wt = sum(a * b for a, b in zip(w, tv))
        hv = [a - wh * b for a, b in zip(hv, w)]
        tv = [a - wt * b for a, b in zip(tv, w)]
    return sum((a + b - c) ** 2 for a, b, c in zip(hv, rv, tv))


def lp_ranks(model, entity_types, known, triples, scope="typed", filtered=False, sides=("head", "tail")):
    """Enumerate every replacement entity and count those scoring no better than the truth."""
    n = len(entity_types)
    out = []
    for h, r, t in triples:
        row = []
        for side in sides:
            true = h if side == "head" else t
            s_true = score(model, h, r, t)
            rank = 0
            for e in range(n):
                if scope == "typed" and entity_types[e] != entity_types[true]:
                    continue
                cand = (e, r, t) if side == "head" else (h, r, e)
                if filtered and e != true and cand in known:
                    continue
                s = s_true if e == true else score(model, *cand)
                if s <= s_true:
                    rank += 1
            row.append(rank)
        out.append(row)
    return out


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0 or vy == 0:
        return None
    return cov / math.sqrt(vx * vy)


def average_ranks(x):
    """Rank i counts the values below x[i], plus half of the ties including itself."""
    out = []
    for v in x:
        below = sum(1 for u in x if u < v)
        equal = sum(1 for u in x if u == v)
        out.append(below + (equal + 1) / 2)
    return out


def spearman(x, y):
    return pearson(average_ranks(x), average_ranks(y))


def central_difference(f, x, step=1e-5):
    """Numerical gradient of scalar ``f`` at list-of-arrays ``x``."""
    grads = []
    for a in x:
        g = a.copy() * 0.0
        for idx in itertools.product(*(range(s) for s in a.shape)):
            old = a[idx]
            a[idx] = old + step
            fp = f()
            a[idx] = old - step
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * step)
        grads.append(g)
    return grads


def predominant(labels):
    """Modal label with ties to the smallest; returns (label, count)."""
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = min(counts, key=lambda k: (-counts[k], k))
    return best, counts[best]
