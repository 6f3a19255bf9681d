"""Named, versioned test problems."""

from __future__ import annotations

import math

import numpy as np

from .grid import DEFAULT_N, ComplexSamples, Grid, Problem
from .inverse import BasisParams

EXAMPLE2_A = 0.5 * math.pi


def zero_kernel(n: int = DEFAULT_N) -> Problem:
    g = Grid(n)
    return Problem(g, ComplexSamples(g, np.zeros(n + 1)), ComplexSamples(g, np.ones(n + 1)),
                   name="zero-kernel", validate=False)


def smooth_1(n: int = DEFAULT_N) -> Problem:
    return Problem.from_functions(lambda x: 1 + 0.3 * np.cos(x), lambda x: 1 - 0.2 * np.cos(2 * x),
                                  n=n, name="smooth-1")


def smooth_1_scaled(n: int = DEFAULT_N, c: complex = 2.0) -> Problem:
    """``(cR, V/c)``: the same kernel, so the same eigenvalues."""
    return Problem.from_functions(lambda x: c * (1 + 0.3 * np.cos(x)),
                                  lambda x: (1 - 0.2 * np.cos(2 * x)) / c, n=n, name=f"smooth-1*{c}")


def _example2_R(x, a=EXAMPLE2_A):
    return np.where(x > a, np.sin(np.clip(x - a, 0.0, None)) ** 2, 0.0)


def _example2_V(x):
    return 1 - 0.2 * np.cos(2 * x)


def _bump(x, lo, hi):
    """``sin^2`` bump supported on ``[lo, hi]``."""
    inside = (x >= lo) & (x <= hi)
    return np.where(inside, np.sin(math.pi * (x - lo) / (hi - lo)) ** 2, 0.0)


def example2(n: int = DEFAULT_N) -> Problem:
    return Problem.from_functions(_example2_R, _example2_V, n=n, name="example2")


def example2_setup(n: int = DEFAULT_N, a: float = EXAMPLE2_A):
    """``(a, R, V, V_tilde, V_control)`` for the vanishing-R comparison.

    ``V_tilde`` differs from ``V`` only on ``[0, a]``; ``V_control`` only on
    ``(a, pi)``.
    """
    g = Grid(n)
    x = g.nodes
    R = ComplexSamples(g, _example2_R(x, a))
    V = ComplexSamples(g, _example2_V(x))
    Vt = ComplexSamples(g, _example2_V(x) + 0.5 * _bump(x, 0.0, a))
    Vc = ComplexSamples(g, _example2_V(x) + 0.5 * _bump(x, a, math.pi))
    return a, R, V, Vt, Vc


PRESETS = {
    "zero-kernel": zero_kernel,
    "smooth-1": smooth_1,
    "example2": example2,
}

# ground truth for the synthetic inverse round trip (K = 6 real coefficients)
TRUTH_K6 = BasisParams([1.0, 0.3, -0.1, 0.05, 0.02, -0.01], [1.0, 0.1, -0.2, 0.05, -0.03, 0.01])


def perturbed(bp: BasisParams, frac: float = 0.1) -> BasisParams:
    """Deterministic relative perturbation with alternating signs."""
    sign = np.where(np.arange(bp.K) % 2 == 0, 1.0, -1.0)
    return BasisParams(bp.r_coef * (1 + frac * sign), bp.v_coef * (1 - frac * sign))


def get(name: str, n: int = DEFAULT_N) -> Problem:
    try:
        return PRESETS[name](n)
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
