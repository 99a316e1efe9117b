"""Deterministic integration on bounded grids, scalar search, FD gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    """Scalar minimization failed to bracket the minimum within max_iters."""


@dataclass(frozen=True, eq=True)
class Grid:
    """Uniform grid on [lo, hi] with n_points >= 2."""

    lo: float
    hi: float
    n_points: int

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_points < 2:
            raise ValueError(f"grid needs n_points >= 2, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)


def integrate_values(y: np.ndarray, spacing: float) -> float:
    """Composite Simpson over equally spaced samples.

    Uses a trapezoid on the final panel when the sample count is even.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("need at least two samples")
    if not np.isfinite(y).all():
        raise ValueError("non-finite integrand values (density or derivative blow-up?)")
    if n == 2:
        return 0.5 * spacing * (y[0] + y[1])
    if n % 2 == 1:
        core = y
        tail = 0.0
    else:
        core = y[:-1]
        tail = 0.5 * spacing * (y[-2] + y[-1])
    s = core[0] + core[-1] + 4.0 * core[1:-1:2].sum() + 2.0 * core[2:-2:2].sum()
    return spacing / 3.0 * s + tail


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: Grid) -> float:
    """Composite Simpson approximation of the integral of f over the grid."""
    return integrate_values(np.asarray(f(grid.points), dtype=float), grid.spacing)


def argmin_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    max_iters: int = 500,
) -> tuple[float, float]:
    """Golden-section search for the minimizer of a unimodal f on [lo, hi]."""
    if not (lo < hi):
        raise ValueError("argmin_scalar needs lo < hi")
    if tol <= 0:
        raise ValueError("argmin_scalar needs tol > 0")
    a, b = float(lo), float(hi)
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if b - a <= tol:
            x = 0.5 * (a + b)
            return x, f(x)
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    raise ConvergenceError(
        f"golden-section did not reach tol={tol} within {max_iters} iterations"
    )


def gradient_fd(
    f: Callable[[np.ndarray], float], x: Sequence[float], eps: float
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector."""
    if eps <= 0:
        raise ValueError("gradient_fd needs eps > 0")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        out[i] = (f(x + step) - f(x - step)) / (2.0 * eps)
    return out


def default_grid(
    samples: Sequence[float],
    bandwidths: Sequence[float],
    n_points: int = 4001,
    pad: float = 5.0,
) -> Grid:
    """Integration window for KDE work: pooled range padded by pad * (max h + sd)."""
    x = np.asarray(samples, dtype=float)
    h = float(np.max(np.asarray(bandwidths, dtype=float)))
    sd = float(np.std(x)) if x.size > 1 else 1.0
    margin = pad * h + pad * sd
    return Grid(float(x.min()) - margin, float(x.max()) + margin, n_points)
