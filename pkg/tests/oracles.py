"""Slow, independent reference implementations used only by the tests.

Nothing here imports the package's numerical code: loops over pairs, bit
strings instead of packed words, quadrature instead of closed forms.
"""

import math

import numpy as np


def kernel(y, s):
    # printed normalisation: (2 pi)^(-n/2) * s^(-1/2) * exp(-|y|^2 / (2 s))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return (2 * math.pi) ** (-y.size / 2) * s ** -0.5 * math.exp(-float(y @ y) / (2 * s))


def trapezoid_convolution(a, b, s, half_width=12.0, step=None):
    """int K(y - a; s) K(y - b; s) dy in 1-D by the trapezoid rule."""
    sd = math.sqrt(s)
    step = sd / 50 if step is None else step
    lo, hi = min(a, b) - half_width * sd, max(a, b) + half_width * sd
    grid = np.linspace(lo, hi, int((hi - lo) / step) + 1)
    f = np.exp(-((grid - a) ** 2) / (2 * s)) * np.exp(-((grid - b) ** 2) / (2 * s)) / (2 * math.pi * s)
    h = grid[1] - grid[0]
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


def naive_potentials(Y, labels, s):
    """Triple loops over classes and pairs with kernel width 2s."""
    Y = np.asarray(Y, dtype=float)
    N = len(Y)
    classes = sorted(set(labels))
    prior = {c: labels.count(c) / N for c in classes}
    K = [[kernel(Y[i] - Y[j], 2 * s) for j in range(N)] for i in range(N)]
    v_in = sum(K[i][j] for i in range(N) for j in range(N) if labels[i] == labels[j]) / N**2
    total = sum(K[i][j] for i in range(N) for j in range(N))
    v_all = sum(p * p for p in prior.values()) * total / N**2
    v_btw = sum(prior[labels[i]] * K[i][j] for i in range(N) for j in range(N)) / N**2
    return v_in, v_all, v_btw


def cos_sim(a, b):
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    return 0.5 * (float(a @ b) / (max(na, 1e-12) * max(nb, 1e-12)) + 1.0)


def cosine_potentials(Y, labels):
    """Potentials with the cosine similarity in place of the kernel, class-loop form."""
    Y = np.asarray(Y, dtype=float)
    N = len(Y)
    S = [[cos_sim(Y[i], Y[j]) for j in range(N)] for i in range(N)]
    classes = sorted(set(labels))
    prior = {c: labels.count(c) / N for c in classes}
    v_in = sum(S[i][j] for c in classes for i in range(N) for j in range(N)
               if labels[i] == c and labels[j] == c) / N**2
    v_all = sum(prior[c] ** 2 for c in classes) * sum(map(sum, S)) / N**2
    v_btw = sum(prior[c] * S[i][j] for c in classes for i in range(N) for j in range(N) if labels[i] == c) / N**2
    return v_in, v_all, v_btw


# ------------------------------------------------------------------ retrieval


def naive_ap11(flags, ntotal):
    """Direct transcription: for each recall level scan every cut-off."""
    levels = [i / 10 for i in range(11)]
    out = []
    for r in levels:
        best = 0.0
        hits = 0
        for k, f in enumerate(flags, 1):
            hits += bool(f)
            if hits / ntotal >= r - 1e-15:
                best = max(best, hits / k)
        out.append(best)
    return sum(out) / 11


def bitstrings(bits):
    return ["".join("1" if b else "0" for b in row) for row in bits]


def naive_hamming(s1, s2):
    return sum(a != b for a, b in zip(s1, s2))


def naive_knn(strings, ids, q, k):
    scored = sorted((naive_hamming(s, q), int(i)) for s, i in zip(strings, ids))
    return [(i, d) for d, i in scored[:k]]


def naive_radius(strings, ids, q, r):
    return sorted(int(i) for s, i in zip(strings, ids) if naive_hamming(s, q) <= r)


def naive_prh2(strings, labels, q, qlabels):
    ball = [i for i, s in enumerate(strings) if naive_hamming(s, q) <= 2]
    if not ball:
        return 0.0
    return sum(1 for i in ball if set(labels[i]) & set(qlabels)) / len(ball)
