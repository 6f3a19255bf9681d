"""Forward solvers for phi (initial value at 0) and eta (terminal value at pi).

The Volterra term with separable kernel ``R(x) V(t)`` is carried as an extra
state ``z(x) = int_0^x V phi`` (resp. ``w(x) = int_x^pi V eta``), which turns
each integro-differential equation into a linear 2x2 complex ODE system.
The normalized lambda-derivatives ``(1/nu!) d^nu/dlambda^nu`` satisfy the
same system driven by the previous member of the chain, so a whole chain is
integrated in one pass.  All integrators are classical RK4 on the problem
grid with coefficients at half steps taken from four-point interpolation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .grid import ComplexSamples, Grid, Problem

NU_MAX_CAP = 8
OVERFLOW_LIMIT = 1e300
_CHECK_EVERY = 64


def _check_order(nu_max):
    if not 0 <= int(nu_max) <= NU_MAX_CAP:
        raise ValueError(f"nu_max must be in [0, {NU_MAX_CAP}], got {nu_max}")
    return int(nu_max)


def _overflow(y, lam):
    bad = ~np.all(np.isfinite(y) & (np.abs(y) <= OVERFLOW_LIMIT), axis=0)
    if np.any(bad):
        where = np.broadcast_to(lam, bad.shape)[bad][0]
        raise SolverError(f"magnitude overflow at lambda={complex(where)}")


def integrate_chain(coefs, h, lam, nu_max, *, backward=False, keep=False):
    """Run RK4 for a batch of spectral parameters.

    Parameters
    ----------
    coefs : tuple
        ``(R_nodes, R_mid, V_nodes, V_mid)``; node arrays have the grid on
        the last axis and may carry a leading batch axis matching ``lam``.
    h : float
        Grid step.
    lam : array_like
        Spectral parameters, shape ``(B,)`` (a scalar is promoted).
    nu_max : int
        Highest normalized derivative carried.
    backward : bool
        Integrate the eta system from ``pi`` down to ``0``.
    keep : bool
        Return the full trace instead of only the end state.

    Returns
    -------
    (y, u) : ndarray
        End values of shape ``(nu_max+1, B)`` or, with ``keep``, traces of
        shape ``(n+1, nu_max+1, B)`` indexed by node (always in increasing x).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    Rn, Rm, Vn, Vm = (np.asarray(c) for c in coefs)
    if backward:
        # s = pi - x turns the terminal problem into an initial one
        Rn, Rm, Vn, Vm = Rn[..., ::-1], Rm[..., ::-1], Vn[..., ::-1], Vm[..., ::-1]
        rot = 1j
        sign_R = 1.0
    else:
        rot = -1j
        sign_R = -1.0
    n = Rn.shape[-1] - 1
    m = nu_max + 1
    B = lam.shape[0]
    y = np.zeros((m, B), dtype=complex)
    u = np.zeros((m, B), dtype=complex)
    if not backward:
        y[0] = 1.0
    rl = rot * lam
    forcing = backward

    def rhs(y, u, Rx, Vx):
        dy = rl * y + (rot * sign_R) * (Rx * u)
        if m > 1:
            dy[1:] += rot * y[:-1]
        if forcing:
            dy[0] -= rot * Rx
        return dy, Vx * y

    if keep:
        ys = np.empty((n + 1, m, B), dtype=complex)
        us = np.empty((n + 1, m, B), dtype=complex)
        ys[0], us[0] = y, u
    half = 0.5 * h
    sixth = h / 6.0
    # overflow surfaces through _overflow as a SolverError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            R0, Rh, R1 = Rn[..., k], Rm[..., k], Rn[..., k + 1]
            V0, Vh, V1 = Vn[..., k], Vm[..., k], Vn[..., k + 1]
            k1y, k1u = rhs(y, u, R0, V0)
            k2y, k2u = rhs(y + half * k1y, u + half * k1u, Rh, Vh)
            k3y, k3u = rhs(y + half * k2y, u + half * k2u, Rh, Vh)
            k4y, k4u = rhs(y + h * k3y, u + h * k3u, R1, V1)
            y = y + sixth * (k1y + 2.0 * (k2y + k3y) + k4y)
            u = u + sixth * (k1u + 2.0 * (k2u + k3u) + k4u)
            if keep:
                ys[k + 1], us[k + 1] = y, u
            elif k % _CHECK_EVERY == 0:
                _overflow(y, lam)
    _overflow(ys if keep else y, lam)
    if keep:
        if backward:
            ys, us = ys[::-1], us[::-1]
        return ys, us
    return y, u


@dataclass(frozen=True, eq=False)
class PhiTrace:
    """Chain ``phi_nu(., lambda)`` and ``z_nu = int_0^x V phi_nu``."""

    lam: complex
    order: int
    phi: list
    aux: list

    @property
    def grid(self) -> Grid:
        return self.phi[0].grid

    def to_csv(self, path):
        _trace_csv(path, self.grid, self.phi, "phi")


@dataclass(frozen=True, eq=False)
class EtaTrace:
    """Chain ``eta_nu(., lambda)`` and ``w_nu = int_x^pi V eta_nu``."""

    lam: complex
    order: int
    eta: list
    aux: list

    @property
    def grid(self) -> Grid:
        return self.eta[0].grid

    def to_csv(self, path):
        _trace_csv(path, self.grid, self.eta, "eta")


def _trace_csv(path, grid, members, label):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["x"]
        for nu in range(len(members)):
            header += [f"re_{label}{nu}", f"im_{label}{nu}"]
        w.writerow(header)
        cols = np.array([m.values for m in members])
        for k, x in enumerate(grid.nodes):
            row = [repr(float(x))]
            for v in cols[:, k]:
                row += [repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row)


def _samples(grid, arr):
    return [ComplexSamples(grid, arr[:, nu]) for nu in range(arr.shape[1])]


def solve_phi(p: Problem, lam: complex, nu_max: int = 0) -> PhiTrace:
    """Solve ``i phi' + R int_0^x V phi = lambda phi``, ``phi(0) = 1``, with its derivative chain."""
    nu_max = _check_order(nu_max)
    ys, zs = integrate_chain(p.coefficients, p.grid.h, lam, nu_max, keep=True)
    return PhiTrace(complex(lam), nu_max, _samples(p.grid, ys[:, :, 0]), _samples(p.grid, zs[:, :, 0]))


def solve_eta(p: Problem, lam: complex, nu_max: int = 0) -> EtaTrace:
    """Solve ``i eta' - R int_x^pi V eta + R = lambda eta``, ``eta(pi) = 0``, with its chain."""
    nu_max = _check_order(nu_max)
    ys, ws = integrate_chain(p.coefficients, p.grid.h, lam, nu_max, backward=True, keep=True)
    return EtaTrace(complex(lam), nu_max, _samples(p.grid, ys[:, :, 0]), _samples(p.grid, ws[:, :, 0]))


def phi_traces(p: Problem, lams, nu_max: int = 0):
    """Batched phi chains: arrays of shape ``(n+1, nu_max+1, len(lams))``."""
    return integrate_chain(p.coefficients, p.grid.h, lams, _check_order(nu_max), keep=True)


def eta_traces(p: Problem, lams, nu_max: int = 0):
    """Batched eta chains: arrays of shape ``(n+1, nu_max+1, len(lams))``."""
    return integrate_chain(p.coefficients, p.grid.h, lams, _check_order(nu_max),
                           backward=True, keep=True)


def reflect_theta(e: EtaTrace) -> ComplexSamples:
    """``theta(x) = eta_0(pi - x)``; on a uniform grid this is a node reversal."""
    return ComplexSamples(e.grid, e.eta[0].values[::-1])


def derivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Fourth-order central difference on interior nodes ``2..n-2`` (NaN elsewhere)."""
    f = np.asarray(values)
    d = np.full(f.shape, np.nan, dtype=complex)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * grid.h)
    return d


@dataclass
class AsymptoticReport:
    T: np.ndarray
    r_phi: np.ndarray
    r_eta: np.ndarray

    @staticmethod
    def _decreasing(a):
        return bool(np.all(np.diff(a) < 0))

    @property
    def phi_decreasing(self) -> bool:
        return self._decreasing(self.r_phi)

    @property
    def eta_decreasing(self) -> bool:
        return self._decreasing(self.r_eta)


def phi_asymptotic_report(p: Problem, T_list) -> AsymptoticReport:
    """Sup-norm deviations along ``lambda = iT`` in the upper half-plane.

    ``r_phi(T) = max_x |phi_0(x, iT) exp(i lambda x) - 1|`` and
    ``r_eta(T) = max_x |eta_0(x, iT)|``; both vanish as ``T`` grows.
    """
    T = np.asarray(T_list, dtype=float)
    if T.ndim != 1 or np.any(T <= 0) or np.any(T > 50) or np.any(np.diff(T) <= 0):
        raise ValueError("T_list must be increasing positive values not above 50")
    lams = 1j * T
    ys, _ = phi_traces(p, lams)
    x = p.grid.nodes[:, None]
    # log-magnitude bookkeeping: exp(log phi + i lambda x) never forms e^{T pi} alone
    scaled = np.exp(np.log(ys[:, 0, :]) + 1j * lams[None, :] * x)
    r_phi = np.max(np.abs(scaled - 1.0), axis=0)
    es, _ = eta_traces(p, lams)
    r_eta = np.max(np.abs(es[:, 0, :]), axis=0)
    return AsymptoticReport(T, r_phi, r_eta)


def sector_ray(radii, angle=1.5 * math.pi):
    return np.asarray(radii, dtype=float) * np.exp(1j * angle)
