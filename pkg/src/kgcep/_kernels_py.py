"""Pure-Python SGD epoch; same contract as the compiled ``_kernels`` module."""

import numpy as np


def sgd_epoch(ent, rel, normals, pos, neg, gamma, lr, transh):
    total = 0.0
    active = 0
    for (ph, r, pt), (nh, _, nt) in zip(pos.tolist(), neg.tolist()):
        if not transh:
            dp = ent[ph] + rel[r] - ent[pt]
            dn = ent[nh] + rel[r] - ent[nt]
            loss = gamma + dp @ dp - dn @ dn
            if loss <= 0.0:
                continue
            total += loss
            active += 1
            ent[ph] -= lr * 2.0 * dp
            ent[pt] += lr * 2.0 * dp
            ent[nh] += lr * 2.0 * dn
            ent[nt] -= lr * 2.0 * dn
            rel[r] -= lr * (2.0 * dp - 2.0 * dn)
            continue
        w = normals[r]
        ep = ent[ph] - ent[pt]
        en = ent[nh] - ent[nt]
        ap = w @ ep
        an = w @ en
        dp = ep - ap * w + rel[r]
        dn = en - an * w + rel[r]
        loss = gamma + dp @ dp - dn @ dn
        if loss <= 0.0:
            continue
        total += loss
        active += 1
        dwp = dp @ w
        dwn = dn @ w
        gw = -2.0 * (dwp * ep + ap * dp) + 2.0 * (dwn * en + an * dn)
        sp = lr * 2.0 * (dp - dwp * w)
        sn = lr * 2.0 * (dn - dwn * w)
        ent[ph] -= sp
        ent[pt] += sp
        ent[nh] += sn
        ent[nt] -= sn
        rel[r] -= lr * (2.0 * dp - 2.0 * dn)
        w = w - lr * gw
        norm = np.sqrt(w @ w)
        normals[r] = w / norm if norm > 0.0 else w
    return total, active
