"""Slow scalar-loop reference implementations used as independent test oracles."""

import math

import numpy as np


def conv2d_direct(x, w, b, stride=1, padding=0):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for i in range(n):
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    acc = 0.0 if b is None else b[o]
                    for ci in range(cin):
                        for p in range(kh):
                            for q in range(kw):
                                acc += xp[i, ci, r * stride + p, c * stride + q] * w[o, ci, p, q]
                    out[i, o, r, c] = acc
    return out


def gradient_map_loops(img):
    """Forward differences of a 2-D plane with explicit loops."""
    h, w = img.shape
    gh = np.zeros_like(img)
    gv = np.zeros_like(img)
    for i in range(h):
        for j in range(w - 1):
            gh[i, j] = img[i, j + 1] - img[i, j]
    for i in range(h - 1):
        for j in range(w):
            gv[i, j] = img[i + 1, j] - img[i, j]
    return gh, gv


def mse_loops(a, b):
    total = 0.0
    flat_a, flat_b = a.reshape(-1), b.reshape(-1)
    for x, y in zip(flat_a, flat_b):
        total += (float(x) - float(y)) ** 2
    return total / flat_a.size


def uqi_loops(p, g, window=8):
    vals = []
    h, w, _ = p.shape
    n = window * window
    for c in range(3):
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                xs = [float(p[i + a, j + b, c]) for a in range(window) for b in range(window)]
                ys = [float(g[i + a, j + b, c]) for a in range(window) for b in range(window)]
                mx = sum(xs) / n
                my = sum(ys) / n
                vx = sum((x - mx) ** 2 for x in xs) / (n - 1)
                vy = sum((y - my) ** 2 for y in ys) / (n - 1)
                cxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / (n - 1)
                den = (vx + vy) * (mx * mx + my * my)
                if den > 0:
                    vals.append(4 * cxy * mx * my / den)
    return sum(vals) / len(vals)


def angles_loops(p, g):
    out = []
    for a, b in zip(p.reshape(-1, 3), g.reshape(-1, 3)):
        na = math.sqrt(sum(float(v) ** 2 for v in a))
        nb = math.sqrt(sum(float(v) ** 2 for v in b))
        if na == 0 or nb == 0:
            continue
        cos = sum(float(x) * float(y) for x, y in zip(a, b)) / (na * nb)
        out.append(math.degrees(math.acos(max(-1.0, min(1.0, cos)))))
    return out


def median_by_sort(values):
    s = sorted(values)
    m = len(s) // 2
    return s[m] if len(s) % 2 else 0.5 * (s[m - 1] + s[m])
