"""Uniform grids on [0, pi], sampled complex functions and the problem container.

Every solver in the package shares the nodes of a single :class:`Grid`, so
quadrature, interpolation and the Runge-Kutta integrators never resample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import FormatError, GridError, ProblemError

DEFAULT_N = 2000


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_k = k*pi/n``, ``k = 0..n`` with ``n`` even."""

    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise GridError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 2 or self.n % 2:
            raise GridError(f"grid size must be an even integer >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return math.pi / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n + 1) * self.h
        x[-1] = math.pi
        x.setflags(write=False)
        return x

    @cached_property
    def simpson_pattern(self) -> np.ndarray:
        """Integer Simpson pattern ``1 4 2 4 ... 2 4 1``."""
        w = np.ones(self.n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w.setflags(write=False)
        return w

    @cached_property
    def simpson_weights(self) -> np.ndarray:
        w = self.simpson_pattern * (self.h / 3.0)
        w.setflags(write=False)
        return w

    def refine(self) -> "Grid":
        return Grid(2 * self.n)


def make_grid(n: int = DEFAULT_N) -> Grid:
    return Grid(n)


@dataclass(frozen=True, eq=False)
class ComplexSamples:
    """Complex values of a function at every node of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n + 1,):
            raise GridError(f"expected {self.grid.n + 1} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f: Callable, grid: Grid) -> "ComplexSamples":
        vals = np.broadcast_to(np.asarray(f(grid.nodes), dtype=complex), grid.nodes.shape)
        return cls(grid, vals)

    def __len__(self):
        return self.grid.n + 1

    def __call__(self, x):
        return value_at(self, x)

    def _combine(self, other, op):
        if isinstance(other, ComplexSamples):
            if other.grid != self.grid:
                raise GridError("samples live on different grids")
            other = other.values
        return ComplexSamples(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexSamples(self.grid, -self.values)


def integrate(f: ComplexSamples) -> complex:
    """Composite Simpson approximation of the integral of ``f`` over [0, pi]."""
    # scale once at the end so constants integrate to pi within an ulp or two
    return complex(np.dot(f.grid.simpson_pattern, f.values) * (f.grid.h / 3.0))


def cumulative_integral(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Running integral from 0 to every node, fourth order.

    Each cell uses the integral of the cubic through the four surrounding
    nodes (one-sided at the two end cells).  ``values`` may carry trailing
    batch axes after the node axis.
    """
    f = np.asarray(values)
    h = grid.h
    cells = np.empty((grid.n,) + f.shape[1:], dtype=np.result_type(f, float))
    cells[1:-1] = (h / 24.0) * (-f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:])
    cells[0] = (h / 24.0) * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
    cells[-1] = (h / 24.0) * (f[-4] - 5.0 * f[-3] + 19.0 * f[-2] + 9.0 * f[-1])
    out = np.zeros((grid.n + 1,) + f.shape[1:], dtype=cells.dtype)
    np.cumsum(cells, axis=0, out=out[1:])
    return out


def _lagrange4(values: np.ndarray, grid: Grid, x: np.ndarray) -> np.ndarray:
    n = grid.n
    t = np.asarray(x, dtype=float) / grid.h
    k = np.clip(np.floor(t).astype(int) - 1, 0, n - 3)
    s = t - k  # position relative to node k, in [0, 3]
    w0 = -(s - 1) * (s - 2) * (s - 3) / 6.0
    w1 = s * (s - 2) * (s - 3) / 2.0
    w2 = -s * (s - 1) * (s - 3) / 2.0
    w3 = s * (s - 1) * (s - 2) / 6.0
    return (w0 * values[..., k] + w1 * values[..., k + 1]
            + w2 * values[..., k + 2] + w3 * values[..., k + 3])


def value_at(f: ComplexSamples, x):
    """Four-point Lagrange interpolation, stencil clamped at the interval ends.

    Exact at nodes and for cubic polynomials.  ``x`` may be a scalar or an
    array; every point must lie in [0, pi].
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0) or np.any(xa > math.pi) or not np.all(np.isfinite(xa)):
        raise GridError(f"interpolation point outside [0, pi]: {x!r}")
    out = _lagrange4(f.values, f.grid, xa)
    # snap to stored values at nodes so node evaluation is exact
    t = xa / f.grid.h
    idx = np.rint(t).astype(int)
    at_node = np.abs(t - idx) < 1e-12
    out = np.where(at_node, f.values[np.clip(idx, 0, f.grid.n)], out)
    return complex(out) if out.ndim == 0 else out


def midpoints(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Interpolated values at the cell midpoints ``x_k + h/2`` (last axis = nodes)."""
    return _lagrange4(np.asarray(values), grid, grid.nodes[:-1] + 0.5 * grid.h)


def load_samples_csv(path, grid: Grid | None = None) -> ComplexSamples:
    """Read a three-column ``x,value_re,value_im`` file on a uniform grid."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "x":
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 3:
        raise FormatError(f"{path}: need at least 3 samples")
    data = np.array(rows)
    g = grid or Grid(len(rows) - 1)
    if len(rows) != g.n + 1 or not np.allclose(data[:, 0], g.nodes, rtol=0, atol=1e-9):
        raise GridError(f"{path}: nodes do not form the uniform grid with n={g.n}")
    return ComplexSamples(g, data[:, 1] + 1j * data[:, 2])


def save_samples_csv(path, f: ComplexSamples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value_re", "value_im"])
        for x, v in zip(f.grid.nodes, f.values):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])


@dataclass(frozen=True, eq=False)
class Problem:
    """Separable-kernel operator data: ``Q(x, t) = R(x) V(t)`` on a shared grid.

    ``alpha``/``beta`` are the vanishing exponents of ``R`` at ``pi`` and of
    ``V`` at ``0``; ``Calpha``/``Dbeta`` the leading coefficients.  For zero
    exponents the coefficients are the endpoint values and are filled in
    automatically.  ``validate=False`` admits degenerate kernels such as
    ``R = 0`` that violate ``Calpha * Dbeta != 0``.
    """

    grid: Grid
    R: ComplexSamples
    V: ComplexSamples
    alpha: float = 0.0
    beta: float = 0.0
    Calpha: complex | None = None
    Dbeta: complex | None = None
    name: str = field(default="", compare=False)
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.R.grid != self.grid or self.V.grid != self.grid:
            raise ProblemError("R and V must share the problem grid")
        if self.alpha < 0 or self.beta < 0:
            raise ProblemError("endpoint exponents must be nonnegative")
        if not self.validate:
            # degenerate fixtures (e.g. R = 0) skip the endpoint requirement
            for attr, val in (("Calpha", self.R.values[-1]), ("Dbeta", self.V.values[0])):
                if getattr(self, attr) is None:
                    object.__setattr__(self, attr, complex(val))
            return
        Ca = self._endpoint(self.alpha, self.Calpha, self.R.values[-1], "R(pi)", "Calpha")
        Db = self._endpoint(self.beta, self.Dbeta, self.V.values[0], "V(0)", "Dbeta")
        object.__setattr__(self, "Calpha", Ca)
        object.__setattr__(self, "Dbeta", Db)

    @staticmethod
    def _endpoint(exponent, coef, endpoint_value, label, coef_name):
        if exponent == 0:
            if abs(endpoint_value) == 0:
                raise ProblemError(f"{label} must be nonzero when its exponent is 0")
            if coef is not None and abs(complex(coef) - endpoint_value) > 1e-9 * (1 + abs(endpoint_value)):
                raise ProblemError(f"{coef_name} must equal {label} when its exponent is 0")
            return complex(endpoint_value)
        if coef is None or complex(coef) == 0:
            raise ProblemError(f"{coef_name} must be given and nonzero for a positive exponent")
        return complex(coef)

    @classmethod
    def from_functions(cls, R: Callable, V: Callable, n: int = DEFAULT_N, **kw) -> "Problem":
        g = Grid(n)
        return cls(g, ComplexSamples.from_function(R, g), ComplexSamples.from_function(V, g), **kw)

    @property
    def gamma(self) -> float:
        return self.alpha + self.beta + 1.0

    def with_samples(self, R=None, V=None, **kw) -> "Problem":
        """Copy with replaced samples; endpoint coefficients are re-derived."""
        R = self.R if R is None else R
        V = self.V if V is None else V
        params = dict(alpha=self.alpha, beta=self.beta, name=self.name, validate=self.validate,
                      Calpha=None if self.alpha == 0 else self.Calpha,
                      Dbeta=None if self.beta == 0 else self.Dbeta)
        params.update(kw)
        return Problem(self.grid, R, V, **params)

    def on_grid(self, n: int) -> "Problem":
        """Resample onto a grid of size ``n`` by interpolation (for refinement studies)."""
        g = Grid(n)
        R = ComplexSamples(g, value_at(self.R, g.nodes))
        V = ComplexSamples(g, value_at(self.V, g.nodes))
        return self.with_samples(R, V) if g == self.grid else Problem(
            g, R, V, self.alpha, self.beta,
            None if self.alpha == 0 else self.Calpha,
            None if self.beta == 0 else self.Dbeta, name=self.name, validate=self.validate)

    @cached_property
    def coefficients(self):
        """``(R_nodes, R_mid, V_nodes, V_mid)`` arrays used by the integrators."""
        Rn, Vn = self.R.values, self.V.values
        return Rn, midpoints(Rn, self.grid), Vn, midpoints(Vn, self.grid)


def load_problem_csv(r_path, v_path, **kw) -> Problem:
    R = load_samples_csv(Path(r_path))
    V = load_samples_csv(Path(v_path), R.grid)
    return Problem(R.grid, R, V, **kw)
