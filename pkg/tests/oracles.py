"""Independent reference computations used by the tests (pure Python, no numpy linear algebra)."""

import itertools
import math


def normal_equations_oracle(x, y):
    """OLS with intercept via explicit normal equations and Gauss-Jordan elimination.

    Returns (weights as list of rows, intercepts).
    """
    rows = [list(map(float, r)) + [1.0] for r in x]
    p = len(rows[0])
    ys = [list(map(float, r)) for r in y]
    q = len(ys[0])
    ata = [[sum(r[i] * r[j] for r in rows) for j in range(p)] for i in range(p)]
    aty = [[sum(r[i] * t[k] for r, t in zip(rows, ys)) for k in range(q)] for i in range(p)]
    aug = [ata[i] + aty[i] for i in range(p)]
    for col in range(p):
        piv = max(range(col, p), key=lambda r: abs(aug[r][col]))
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [v / pv for v in aug[col]]
        for r in range(p):
            if r != col and aug[r][col] != 0.0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    beta = [row[p:] for row in aug]
    return beta[:-1], beta[-1]


def euclid(a, b):
    return math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))


def brute_force_pair(emotion, midlevel, mode):
    """Exhaustive search over all C(n, 2) pairs with explicit min-max scaling."""
    n = len(emotion)
    pairs = list(itertools.combinations(range(n), 2))
    de = {p: euclid(emotion[p[0]], emotion[p[1]]) for p in pairs}
    dm = {p: euclid(midlevel[p[0]], midlevel[p[1]]) for p in pairs}

    def scale(d):
        lo, hi = min(d.values()), max(d.values())
        return {p: (0.0 if hi == lo else (v - lo) / (hi - lo)) for p, v in d.items()}

    se, sm = scale(de), scale(dm)
    best, best_score = None, -math.inf
    for p in pairs:
        s = se[p] - (1 - sm[p]) if mode == "paper" else sm[p] - se[p]
        if s > best_score:
            best, best_score = p, s
    return best, best_score
