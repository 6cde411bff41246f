"""Central finite-difference checks for every analytic gradient in the package.

Relative error of an instance is ``max|analytic - numeric| / max(|analytic|, |numeric|)``
with the maxima taken over all entries, so tiny components are judged against the
gradient's overall scale rather than their own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import backward, forward, init_mlp
from .information import (
    clamped_qsmi_grad,
    clamped_qsmi_loss,
    combined_loss,
    hashing_regularizer,
    qmi,
    unclamped_qmi_loss,
)
from .similarity import estimate_batch_m, indicator_matrix, pairwise_similarity

LOSS_TOL = 1e-5
NETWORK_TOL = 1e-4
STEP = 1e-5
KINK_MARGIN = 1e-3


@dataclass
class SuiteResult:
    name: str
    max_rel_error: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


@dataclass
class GradcheckReport:
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if s.passed else 'FAIL'} {s.name}: max rel error {s.max_rel_error:.3e} "
            f"(tol {s.tolerance:g}, {s.instances} instances)"
            for s in self.suites
        ]


def numeric_grad(f, x: np.ndarray, h: float = STEP) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_error(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(v) for v in analytic]) if isinstance(analytic, list) else np.ravel(analytic)
    n = np.concatenate([np.ravel(v) for v in numeric]) if isinstance(numeric, list) else np.ravel(numeric)
    scale = max(np.abs(a).max(), np.abs(n).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def _labels(rng, N, C):
    # every class present so the potentials are non-trivial
    y = np.concatenate([np.arange(C), rng.integers(0, C, N - C)])
    return [frozenset((int(v),)) for v in rng.permutation(y)]


def _multi_labels(rng, N, C):
    out = []
    for _ in range(N):
        k = rng.integers(1, 3)
        out.append(frozenset(int(v) for v in rng.choice(C, size=k, replace=False)))
    return out


def _away_from_kinks(Y) -> bool:
    a = np.abs(Y)
    return bool(np.all(a > KINK_MARGIN) and np.all(np.abs(a - 1.0) > KINK_MARGIN))


def _perturb(grad, name, corrupt):
    return grad * 1.01 + 1e-3 * np.abs(grad).max() if corrupt == name else grad


def _suite_clamped(name, measure, rng, instances, N, n, corrupt):
    worst = 0.0
    for t in range(instances):
        Y = rng.standard_normal((N, n))
        labels = _multi_labels(rng, N, 3) if t % 2 else _labels(rng, N, 3)
        delta = indicator_matrix(labels)
        M = estimate_batch_m(delta)
        sigma2 = float(rng.uniform(0.5, 5.0)) if measure != "cosine" else None
        b = clamped_qsmi_grad(Y, delta, M, measure, sigma2)
        num = numeric_grad(lambda: clamped_qsmi_loss(pairwise_similarity(Y, measure, sigma2), delta, M), Y)
        worst = max(worst, rel_error(_perturb(b.grad, name, corrupt), num))
    return SuiteResult(name, worst, LOSS_TOL, instances)


def _suite_unclamped(rng, instances, N, n, corrupt):
    name = "unclamped-qmi"
    worst = 0.0
    for _ in range(instances):
        Y = rng.standard_normal((N, n))
        labels = _labels(rng, N, 3)
        sigma2 = float(rng.uniform(0.5, 5.0))
        b = unclamped_qmi_loss(Y, labels, sigma2)
        num = numeric_grad(lambda: -qmi(Y, labels, sigma2), Y)
        worst = max(worst, rel_error(_perturb(b.grad, name, corrupt), num))
    return SuiteResult(name, worst, LOSS_TOL, instances)


def _suite_regularizer(rng, instances, N, n, corrupt):
    name = "hashing-regularizer"
    worst = 0.0
    for _ in range(instances):
        Y = 1.5 * rng.standard_normal((N, n))
        while not _away_from_kinks(Y):
            Y = 1.5 * rng.standard_normal((N, n))
        b = hashing_regularizer(Y)
        num = numeric_grad(lambda: hashing_regularizer(Y).value, Y)
        worst = max(worst, rel_error(_perturb(b.grad, name, corrupt), num))
    return SuiteResult(name, worst, LOSS_TOL, instances)


def _suite_combined(rng, instances, N, n, corrupt):
    name = "combined-loss"
    worst = 0.0
    for t in range(instances):
        Y = rng.standard_normal((N, n))
        while not _away_from_kinks(Y):
            Y = rng.standard_normal((N, n))
        d_sup = indicator_matrix(_labels(rng, N, 3))
        d_uns = indicator_matrix(_labels(rng, N, 2))
        measure = "cosine" if t % 2 == 0 else "gaussian-normalized"
        kw = dict(alpha=0.01, beta=0.5, measure=measure, sigma2=2.0)
        b = combined_loss(Y, d_sup, d_uns, **kw)
        num = numeric_grad(lambda: combined_loss(Y, d_sup, d_uns, **kw).value, Y)
        worst = max(worst, rel_error(_perturb(b.grad, name, corrupt), num))
    return SuiteResult(name, worst, LOSS_TOL, instances)


def _suite_network(rng, instances, N, corrupt, sizes=(2, 8, 4)):
    name = "through-network"
    worst = 0.0
    for t in range(instances):
        enc = init_mlp(sizes, int(rng.integers(2**31)))
        while True:
            X = rng.standard_normal((N, sizes[0]))
            Y, cache = forward(enc, X)
            hidden_ok = all(np.abs(z).min() > KINK_MARGIN for z in cache.preacts[:-1])
            if hidden_ok and _away_from_kinks(Y):
                break
        d_sup = indicator_matrix(_labels(rng, N, 3))
        d_uns = indicator_matrix(_labels(rng, N, 2))
        measure = "cosine" if t % 2 == 0 else "gaussian-normalized"
        kw = dict(alpha=0.01, beta=0.5, measure=measure, sigma2=2.0)

        def loss():
            return combined_loss(forward(enc, X)[0], d_sup, d_uns, **kw).value

        b = combined_loss(Y, d_sup, d_uns, **kw)
        grads = backward(enc, cache, b.grad)
        num = [numeric_grad(loss, p) for p in enc.params()]
        grads = [_perturb(g, name, corrupt) for g in grads]
        worst = max(worst, rel_error(grads, num))
    return SuiteResult(name, worst, NETWORK_TOL, instances)


SUITES = (
    "clamped-cosine",
    "clamped-gaussian",
    "unclamped-qmi",
    "hashing-regularizer",
    "combined-loss",
    "through-network",
)


def run_gradcheck(seed: int = 0, instances: int = 20, N: int = 8, n: int = 6,
                  corrupt: str | None = None) -> GradcheckReport:
    """Run every suite; ``corrupt`` names a suite whose analytic gradient is
    deliberately skewed, to prove the harness can fail."""
    if corrupt is not None and corrupt not in SUITES:
        raise ValueError(f"unknown suite {corrupt!r}")
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    report.suites.append(_suite_clamped("clamped-cosine", "cosine", rng, instances, N, n, corrupt))
    report.suites.append(_suite_clamped("clamped-gaussian", "gaussian-normalized", rng, instances, N, n, corrupt))
    report.suites.append(_suite_unclamped(rng, instances, N, n, corrupt))
    report.suites.append(_suite_regularizer(rng, instances, N, n, corrupt))
    report.suites.append(_suite_combined(rng, instances, N, n, corrupt))
    report.suites.append(_suite_network(rng, instances, N, corrupt))
    return report
