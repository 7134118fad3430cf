"""Compiled hot loops: candidate-split scoring and cascade traversal.

Every float expression here mirrors the pure-Python reference path in
``imaging``/``tree``/``ensemble`` operation for operation, so both paths
agree bit for bit.  No fastmath: reassociation would break that.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _round_half_away(x):
    t = float(int(x))
    d = x - t
    if d >= 0.5:
        t += 1.0
    elif d <= -0.5:
        t -= 1.0
    return int(t)


@njit(cache=True, nogil=True, inline="always")
def _sample(flat, off, w, h, cx, cy, size, u, v):
    x = cx + u * size / 2
    y = cy + v * size / 2
    x = min(max(x, -1.0), float(w))
    y = min(max(y, -1.0), float(h))
    xi = min(max(_round_half_away(x), 0), w - 1)
    yi = min(max(_round_half_away(y), 0), h - 1)
    return flat[off + yi * w + xi]


@njit(cache=True, nogil=True, inline="always")
def _bit(flat, off, w, h, cx, cy, size, t0, t1, t2, t3):
    a = _sample(flat, off, w, h, cx, cy, size, t0, t1)
    b = _sample(flat, off, w, h, cx, cy, size, t2, t3)
    return 0 if a <= b else 1


@njit(cache=True, nogil=True)
def node_costs(flat, offs, ws, hs, img_idx, regions, targets, idx, cands, k_lo, k_hi, out):
    """Two-cluster squared-error cost of candidates ``k_lo:k_hi`` on samples ``idx``."""
    m = idx.shape[0]
    bits = np.empty(m, np.uint8)
    for k in range(k_lo, k_hi):
        t0 = cands[k, 0]
        t1 = cands[k, 1]
        t2 = cands[k, 2]
        t3 = cands[k, 3]
        # sums are taken relative to each cluster's first member, so a
        # constant cluster costs exactly zero
        n0 = 0
        n1 = 0
        r0x = 0.0
        r0y = 0.0
        r1x = 0.0
        r1y = 0.0
        s0x = 0.0
        s0y = 0.0
        s1x = 0.0
        s1y = 0.0
        for j in range(m):
            i = idx[j]
            g = img_idx[i]
            b = _bit(flat, offs[g], ws[g], hs[g], regions[i, 0], regions[i, 1], regions[i, 2],
                     t0, t1, t2, t3)
            bits[j] = b
            if b == 0:
                if n0 == 0:
                    r0x = targets[i, 0]
                    r0y = targets[i, 1]
                n0 += 1
                s0x += targets[i, 0] - r0x
                s0y += targets[i, 1] - r0y
            else:
                if n1 == 0:
                    r1x = targets[i, 0]
                    r1y = targets[i, 1]
                n1 += 1
                s1x += targets[i, 0] - r1x
                s1y += targets[i, 1] - r1y
        m0x = s0x / n0 if n0 > 0 else 0.0
        m0y = s0y / n0 if n0 > 0 else 0.0
        m1x = s1x / n1 if n1 > 0 else 0.0
        m1y = s1y / n1 if n1 > 0 else 0.0
        q0 = 0.0
        q1 = 0.0
        for j in range(m):
            i = idx[j]
            if bits[j] == 0:
                dx = (targets[i, 0] - r0x) - m0x
                dy = (targets[i, 1] - r0y) - m0y
                q0 += dx * dx + dy * dy
            else:
                dx = (targets[i, 0] - r1x) - m1x
                dy = (targets[i, 1] - r1y) - m1y
                q1 += dx * dx + dy * dy
        out[k] = q0 + q1


@njit(cache=True, nogil=True)
def node_bits(flat, offs, ws, hs, img_idx, regions, idx, t0, t1, t2, t3):
    m = idx.shape[0]
    bits = np.empty(m, np.uint8)
    for j in range(m):
        i = idx[j]
        g = img_idx[i]
        bits[j] = _bit(flat, offs[g], ws[g], hs[g], regions[i, 0], regions[i, 1], regions[i, 2],
                       t0, t1, t2, t3)
    return bits


@njit(cache=True, nogil=True)
def cascade_estimates(pix, regions, bases, shrinks, depths, stage_tree_lo, tree_test_lo,
                      tree_leaf_lo, tests, leaves, scale_decay, out):
    """Run the full stage chain once per row of ``regions``; pixel results go to ``out``."""
    h = pix.shape[0]
    w = pix.shape[1]
    flat = pix.ravel()
    n_stages = bases.shape[0]
    for r in range(regions.shape[0]):
        cx = regions[r, 0]
        cy = regions[r, 1]
        size = regions[r, 2]
        px = cx
        py = cy
        for s in range(n_stages):
            depth = depths[s]
            first_leaf = (1 << depth) - 1
            sx = 0.0
            sy = 0.0
            for t in range(stage_tree_lo[s], stage_tree_lo[s + 1]):
                tb = tree_test_lo[t]
                node = 0
                for _ in range(depth):
                    row = tb + node
                    b = _bit(flat, 0, w, h, cx, cy, size, tests[row, 0], tests[row, 1],
                             tests[row, 2], tests[row, 3])
                    node = 2 * node + 1 + b
                lf = tree_leaf_lo[t] + node - first_leaf
                sx += leaves[lf, 0]
                sy += leaves[lf, 1]
            pu = bases[s, 0] + shrinks[s] * sx
            pv = bases[s, 1] + shrinks[s] * sy
            px = cx + pu * size / 2
            py = cy + pv * size / 2
            if s + 1 < n_stages:
                cx = px
                cy = py
                size = size * scale_decay
        out[r, 0] = px
        out[r, 1] = py


@njit(cache=True, nogil=True)
def seq_mean(targets, idx):
    sx = 0.0
    sy = 0.0
    for j in range(idx.shape[0]):
        sx += targets[idx[j], 0]
        sy += targets[idx[j], 1]
    return sx / idx.shape[0], sy / idx.shape[0]
