"""Multi-kernel maximum mean discrepancy (MK-MMD).

Sample sets are ``d x n`` arrays with one sample per column, matching the
representation matrices produced by the encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionError

DEFAULT_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelBank:
    """Convex combination of Gaussian kernels ``exp(-||x - y||^2 / tau)``."""

    bandwidths: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        bw = tuple(float(t) for t in self.bandwidths)
        w = tuple(float(b) for b in self.weights)
        object.__setattr__(self, "bandwidths", bw)
        object.__setattr__(self, "weights", w)
        if len(bw) == 0 or len(bw) != len(w):
            raise ValueError("bandwidths and weights must be non-empty and of equal length")
        if any(not np.isfinite(t) or t <= 0 for t in bw):
            raise ValueError(f"bandwidths must be positive, got {bw}")
        if any(not np.isfinite(b) or b < 0 for b in w):
            raise ValueError(f"weights must be non-negative, got {w}")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(w)!r}")

    @classmethod
    def uniform(cls, bandwidths) -> "KernelBank":
        bandwidths = tuple(bandwidths)
        m = len(bandwidths)
        weights = [1.0 / m] * m
        # absorb rounding so the sum is 1 to the last bit
        weights[-1] = 1.0 - sum(weights[:-1])
        return cls(bandwidths, tuple(weights))

    def to_dict(self) -> dict:
        return {"bandwidths": list(self.bandwidths), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelBank":
        return cls(tuple(d["bandwidths"]), tuple(d["weights"]))


def median_heuristic_bank(samples, scales=DEFAULT_SCALES, max_samples: int = 1000) -> KernelBank:
    """Bank with bandwidths ``median(||x_a - x_b||^2) * scale`` and uniform weights.

    Only the first ``max_samples`` columns are used, which keeps the pairwise
    pass bounded and deterministic.
    """
    x = np.asarray(samples, dtype=np.float64)[:, :max_samples]
    if x.shape[1] < 2:
        med = 1.0
    else:
        d2 = cdist(x.T, x.T, "sqeuclidean")
        med = float(np.median(d2[np.triu_indices(x.shape[1], k=1)]))
        if not np.isfinite(med) or med <= 1e-12:
            med = 1.0
    return KernelBank.uniform(tuple(med * s for s in scales))


def gaussian_kernel(x, y, tau: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(np.exp(-np.sum((x - y) ** 2) / tau))


def multi_kernel(x, y, bank: KernelBank) -> float:
    return sum(b * gaussian_kernel(x, y, t) for t, b in zip(bank.bandwidths, bank.weights))


def _kernel_from_sqdist(d2, bank: KernelBank):
    out = np.zeros_like(d2)
    for tau, beta in zip(bank.bandwidths, bank.weights):
        out += beta * np.exp(-d2 / tau)
    return out


def _check_pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 2 or q.ndim != 2:
        raise DimensionError("sample sets must be 2-D (d x n)")
    if p.shape[0] != q.shape[0]:
        raise DimensionError(f"sample dimension mismatch: {p.shape[0]} vs {q.shape[0]}")
    return p, q


def mmd_sq_biased(p_samples, q_samples, bank: KernelBank) -> float:
    """Plug-in (V-statistic) estimate of squared MK-MMD over all sample pairs."""
    p, q = _check_pair(p_samples, q_samples)
    if p.shape[1] == 0 or q.shape[1] == 0:
        raise ValueError("sample sets must be non-empty")
    kpp = _kernel_from_sqdist(cdist(p.T, p.T, "sqeuclidean"), bank).mean()
    kqq = _kernel_from_sqdist(cdist(q.T, q.T, "sqeuclidean"), bank).mean()
    kpq = _kernel_from_sqdist(cdist(p.T, q.T, "sqeuclidean"), bank).mean()
    return max(float(kpp - 2.0 * kpq + kqq), 0.0)


def _check_linear(p, q):
    p, q = _check_pair(p, q)
    n = p.shape[1]
    if q.shape[1] != n:
        raise ValueError(f"linear estimator needs equal counts, got {n} and {q.shape[1]}")
    if n < 2 or n % 2:
        raise ValueError(f"linear estimator needs an even count >= 2, got {n}")
    return p, q


def _pair_terms(a, b, bank: KernelBank):
    """Column-wise kernel values ``k(a_j, b_j)`` and ``sum_a 2 beta_a/tau_a k_a``."""
    d2 = np.sum((a - b) ** 2, axis=0)
    k = np.zeros_like(d2)
    g = np.zeros_like(d2)
    for tau, beta in zip(bank.bandwidths, bank.weights):
        ka = np.exp(-d2 / tau)
        k += beta * ka
        g += (2.0 * beta / tau) * ka
    return k, g


def mmd_sq_linear(p_samples, q_samples, bank: KernelBank) -> float:
    """Linear-time unbiased MK-MMD estimate over consecutive quad-tuples.

    Column pairs ``(2n, 2n+1)`` of both sets form tuple ``n``; the estimate
    averages ``k(x1,x2) - k(x1,y2) + k(y1,y2) - k(y1,x2)`` over tuples. It can
    be slightly negative.
    """
    p, q = _check_linear(p_samples, q_samples)
    x1, x2 = p[:, 0::2], p[:, 1::2]
    y1, y2 = q[:, 0::2], q[:, 1::2]
    eta = (
        _pair_terms(x1, x2, bank)[0]
        - _pair_terms(x1, y2, bank)[0]
        + _pair_terms(y1, y2, bank)[0]
        - _pair_terms(y1, x2, bank)[0]
    )
    return float(2.0 / p.shape[1] * eta.sum())


def mmd_sq_linear_grad(p_samples, q_samples, bank: KernelBank):
    """Value and per-sample gradients of :func:`mmd_sq_linear`.

    Returns:
        ``(value, grad_p, grad_q)`` where the gradients have the shapes of the
        inputs.
    """
    p, q = _check_linear(p_samples, q_samples)
    c = 2.0 / p.shape[1]
    x1, x2 = p[:, 0::2], p[:, 1::2]
    y1, y2 = q[:, 0::2], q[:, 1::2]

    k_xx, g_xx = _pair_terms(x1, x2, bank)
    k_xy, g_xy = _pair_terms(x1, y2, bank)
    k_yy, g_yy = _pair_terms(y1, y2, bank)
    k_yx, g_yx = _pair_terms(y1, x2, bank)
    value = float(c * (k_xx - k_xy + k_yy - k_yx).sum())

    # d k(a, b) / da = -g (a - b),  d k(a, b) / db = +g (a - b)
    grad_p = np.empty_like(p)
    grad_q = np.empty_like(q)
    grad_p[:, 0::2] = c * (-g_xx * (x1 - x2) + g_xy * (x1 - y2))
    grad_p[:, 1::2] = c * (g_xx * (x1 - x2) - g_yx * (y1 - x2))
    grad_q[:, 0::2] = c * (-g_yy * (y1 - y2) + g_yx * (y1 - x2))
    grad_q[:, 1::2] = c * (g_yy * (y1 - y2) - g_xy * (x1 - y2))
    return value, grad_p, grad_q
