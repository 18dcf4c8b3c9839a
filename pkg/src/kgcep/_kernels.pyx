# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD epoch for the translational models.

Mirrors :mod:`kgcep._kernels_py` step for step.
"""

from libc.math cimport sqrt

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sgd_epoch(double[:, ::1] ent, double[:, ::1] rel, double[:, ::1] normals,
              const cnp.int64_t[:, ::1] pos, const cnp.int64_t[:, ::1] neg,
              double gamma, double lr, bint transh):
    """Run one SGD pass over ``pos``/``neg`` pairs in order, updating arrays in place.

    Returns ``(loss_sum, n_active)`` where loss is the hinge value before each step.
    """
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t k = ent.shape[1]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t ph, pt, nh, nt, r
    cdef double fp, fn, loss, total = 0.0
    cdef double ap, an, dwp, dwn, s, norm
    cdef Py_ssize_t active = 0
    cdef double[::1] dp = np.empty(k)
    cdef double[::1] dn = np.empty(k)
    cdef double[::1] gw = np.empty(k)

    with nogil:
        for i in range(n):
            ph = pos[i, 0]
            r = pos[i, 1]
            pt = pos[i, 2]
            nh = neg[i, 0]
            nt = neg[i, 2]
            if not transh:
                fp = 0.0
                fn = 0.0
                for j in range(k):
                    dp[j] = ent[ph, j] + rel[r, j] - ent[pt, j]
                    dn[j] = ent[nh, j] + rel[r, j] - ent[nt, j]
                    fp = fp + dp[j] * dp[j]
                    fn = fn + dn[j] * dn[j]
                loss = gamma + fp - fn
                if loss <= 0.0:
                    continue
                total = total + loss
                active = active + 1
                for j in range(k):
                    ent[ph, j] -= lr * 2.0 * dp[j]
                    ent[pt, j] += lr * 2.0 * dp[j]
                    ent[nh, j] += lr * 2.0 * dn[j]
                    ent[nt, j] -= lr * 2.0 * dn[j]
                    rel[r, j] -= lr * (2.0 * dp[j] - 2.0 * dn[j])
            else:
                ap = 0.0
                an = 0.0
                for j in range(k):
                    ap = ap + normals[r, j] * (ent[ph, j] - ent[pt, j])
                    an = an + normals[r, j] * (ent[nh, j] - ent[nt, j])
                fp = 0.0
                fn = 0.0
                dwp = 0.0
                dwn = 0.0
                for j in range(k):
                    dp[j] = (ent[ph, j] - ent[pt, j]) - ap * normals[r, j] + rel[r, j]
                    dn[j] = (ent[nh, j] - ent[nt, j]) - an * normals[r, j] + rel[r, j]
                    fp = fp + dp[j] * dp[j]
                    fn = fn + dn[j] * dn[j]
                    dwp = dwp + dp[j] * normals[r, j]
                    dwn = dwn + dn[j] * normals[r, j]
                loss = gamma + fp - fn
                if loss <= 0.0:
                    continue
                total = total + loss
                active = active + 1
                for j in range(k):
                    gw[j] = (-2.0 * (dwp * (ent[ph, j] - ent[pt, j]) + ap * dp[j])
                             + 2.0 * (dwn * (ent[nh, j] - ent[nt, j]) + an * dn[j]))
                for j in range(k):
                    s = lr * 2.0 * (dp[j] - dwp * normals[r, j])
                    ent[ph, j] -= s
                    ent[pt, j] += s
                    s = lr * 2.0 * (dn[j] - dwn * normals[r, j])
                    ent[nh, j] += s
                    ent[nt, j] -= s
                    rel[r, j] -= lr * (2.0 * dp[j] - 2.0 * dn[j])
                norm = 0.0
                for j in range(k):
                    normals[r, j] -= lr * gw[j]
                    norm = norm + normals[r, j] * normals[r, j]
                norm = sqrt(norm)
                if norm > 0.0:
                    for j in range(k):
                        normals[r, j] /= norm
    return total, active
