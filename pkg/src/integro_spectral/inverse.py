"""Recovery of ``(R, V)`` from truncated spectral data, plus identifiability probes.

The unknown functions are truncated cosine series.  The data misfit is the
weighted difference of the first ``M`` eigenvalues and weight numbers, and
it is minimized by Levenberg-Marquardt with a forward-difference Jacobian.
Between nearby parameter vectors the eigenvalues are followed by Newton's
method instead of being searched for again, and all perturbed problems of a
Jacobian are integrated in a single batch.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .chareq import DEFAULT_BOX, SearchBox, delta_batch, find_eigenvalues, standard_lambda_grid
from .errors import (CountMismatchError, MultiplicityChangeError, ProblemError, SpectralError)
from .forward import integrate_chain
from .grid import DEFAULT_N, ComplexSamples, Grid, Problem, midpoints
from .specdata import SpectralData, spectral_data, spectral_data_from_eigenvalues, weights_from_arrays

log = logging.getLogger(__name__)

ENDPOINT_FLOOR = 1e-6
PROBE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BasisParams:
    """Cosine coefficients ``R = sum r_k cos(kx)``, ``V = sum v_k cos(kx)``."""

    r_coef: np.ndarray
    v_coef: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r_coef, dtype=complex)).copy()
        v = np.atleast_1d(np.asarray(self.v_coef, dtype=complex)).copy()
        if r.ndim != 1 or r.shape != v.shape or r.size < 1:
            raise ValueError("r_coef and v_coef must be equal-length nonempty vectors")
        object.__setattr__(self, "r_coef", r)
        object.__setattr__(self, "v_coef", v)

    @property
    def K(self) -> int:
        return self.r_coef.size

    def to_vector(self) -> np.ndarray:
        """Real parameter vector ``[Re r, Im r, Re v, Im v]``."""
        return np.concatenate([self.r_coef.real, self.r_coef.imag, self.v_coef.real, self.v_coef.imag])

    @classmethod
    def from_vector(cls, x) -> "BasisParams":
        x = np.asarray(x, dtype=float)
        K = x.size // 4
        return cls(x[:K] + 1j * x[K:2 * K], x[2 * K:3 * K] + 1j * x[3 * K:])


def _cos_basis(K, x):
    return np.cos(np.outer(x, np.arange(K)))


def synth(bp: BasisParams, g: Grid) -> tuple:
    """Sample the cosine series on ``g``; ``R(pi)`` must stay away from zero."""
    B = _cos_basis(bp.K, g.nodes)
    R = ComplexSamples(g, B @ bp.r_coef)
    V = ComplexSamples(g, B @ bp.v_coef)
    if abs(R.values[-1]) <= ENDPOINT_FLOOR:
        raise ProblemError(f"synthesized R(pi) = {R.values[-1]} vanishes")
    return R, V


def project(R: ComplexSamples, V: ComplexSamples, K: int) -> BasisParams:
    """Grid least-squares projection onto the first ``K`` cosines."""
    B = _cos_basis(K, R.grid.nodes)
    r = np.linalg.lstsq(B, R.values, rcond=None)[0]
    v = np.linalg.lstsq(B, V.values, rcond=None)[0]
    return BasisParams(r, v)


def problem_from_params(bp: BasisParams, g: Grid) -> Problem:
    R, V = synth(bp, g)
    return Problem(g, R, V)


# --- residual assembly ---------------------------------------------------

def _match(cand_lams, target_lams):
    """Greedy nearest-lambda assignment in target order; ties go to the lower index."""
    used = np.zeros(len(cand_lams), bool)
    idx = np.empty(len(target_lams), int)
    for n, lam in enumerate(target_lams):
        d = np.abs(cand_lams - lam)
        d[used] = np.inf
        j = int(np.argmin(d))
        used[j] = True
        idx[n] = j
    return idx


def _pack(lams, betas, target: SpectralData, M, w_lambda, w_beta):
    dl = w_lambda * (lams - target.lambdas[:M])
    db = w_beta * (betas - target.betas[:M])
    return np.concatenate([dl.real, dl.imag, db.real, db.imag])


def residual(bp: BasisParams, target: SpectralData, M: int, w_lambda: float = 1.0, w_beta: float = 1.0,
             *, box: SearchBox = DEFAULT_BOX, n: int = DEFAULT_N, tol: float = 1e-12) -> np.ndarray:
    """Weighted misfit of the first ``M`` spectral data, length ``4M``.

    The candidate's data are computed from scratch in ``box`` and matched to
    the target by nearest eigenvalue.
    """
    if len(target) < M:
        raise ValueError(f"target has {len(target)} entries, need {M}")
    p = problem_from_params(bp, Grid(n))
    cand = spectral_data(p, box, tol)
    if len(cand) < M:
        raise CountMismatchError(f"count mismatch: candidate has {len(cand)} eigenvalues in box, need {M}")
    idx = _match(cand.lambdas, target.lambdas[:M])
    return _pack(cand.lambdas[idx], cand.betas[idx], target, M, w_lambda, w_beta)


class _Tracker:
    """Batched evaluation of simple eigenvalues and weights for many parameter vectors."""

    def __init__(self, grid: Grid, K: int, tol: float):
        self.grid = grid
        self.B = _cos_basis(K, grid.nodes)
        self.Bm = midpoints(self.B.T, grid).T
        self.tol = tol

    def coefs(self, X):
        """Coefficient arrays for a stack of real parameter vectors ``X`` (P, 4K)."""
        X = np.atleast_2d(X)
        K = self.B.shape[1]
        r = X[:, :K] + 1j * X[:, K:2 * K]
        v = X[:, 2 * K:3 * K] + 1j * X[:, 3 * K:]
        Rn, Vn = r @ self.B.T, v @ self.B.T
        if np.any(np.abs(Rn[:, -1]) <= ENDPOINT_FLOOR):
            raise ProblemError("R(pi) vanishes for a trial parameter vector")
        if np.any(np.abs(Vn[:, 0]) == 0):
            raise ProblemError("V(0) vanishes for a trial parameter vector")
        return Rn, r @ self.Bm.T, Vn, v @ self.Bm.T

    def evaluate(self, X, starts):
        """Follow ``starts`` (M,) to the zeros of every problem in ``X`` (P, 4K).

        Returns ``(lams, betas)`` of shape ``(P, M)``.
        """
        X = np.atleast_2d(X)
        P, M = X.shape[0], len(starts)
        Rn, Rm, Vn, Vm = self.coefs(X)
        rep = lambda a: np.repeat(a, M, axis=0)
        co = tuple(rep(a) for a in (Rn, Rm, Vn, Vm))
        z = np.tile(np.asarray(starts, dtype=complex), P)
        h = self.grid.h
        active = np.ones(z.shape, bool)
        for _ in range(60):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            d, _ = integrate_chain(tuple(a[idx] for a in co), h, z[idx], 1)
            step = d[0] / d[1]
            z[idx] -= step
            if not np.all(np.isfinite(z[idx])):
                raise MultiplicityChangeError("zero tracking diverged")
            active[idx[np.abs(step) <= self.tol * np.maximum(1.0, np.abs(z[idx]))]] = False
        if active.any():
            raise MultiplicityChangeError("zero tracking did not converge")
        lams = z.reshape(P, M)
        if M > 1:
            gaps = np.abs(lams[:, :, None] - lams[:, None, :])
            gaps[:, np.arange(M), np.arange(M)] = np.inf
            if np.min(gaps) < 1e-6:
                raise MultiplicityChangeError("tracked eigenvalues collided")
        ys, _ = integrate_chain(co, h, z, 0, keep=True)
        es, _ = integrate_chain(co, h, z, 0, backward=True, keep=True)
        beta, resid = weights_from_arrays(ys, es, self.grid.simpson_weights)
        if np.max(resid) > 1e-3:
            raise MultiplicityChangeError("weight relation violated while tracking")
        return lams, beta[0].reshape(P, M)


@dataclass
class RecoveryOptions:
    grid_n: int = DEFAULT_N
    box: SearchBox = DEFAULT_BOX
    M: int = 24
    w_lambda: float = 1.0
    w_beta: float = 1.0
    damping: float = 1e-3
    mu: float = 0.0
    max_iter: int = 100
    fd_step: float = 1e-6
    ftol: float = 1e-10
    xtol: float = 1e-10
    gtol: float = 1e-6
    root_tol: float = 1e-12


@dataclass
class RecoveryReport:
    params: BasisParams
    iterations: int
    final_cost: float
    sup_error_R: float | None
    sup_error_V: float | None
    converged: bool
    gradient_norm: float = float("nan")
    step_norm: float = float("nan")
    message: str = ""
    cost_log: list = field(default_factory=list)
    truncation: str = "cosine series, K terms per function"

    def save_coefficients(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "re_r", "im_r", "re_v", "im_v"])
            for k, (r, v) in enumerate(zip(self.params.r_coef, self.params.v_coef)):
                w.writerow([k] + [f"{x:.17g}" for x in (r.real, r.imag, v.real, v.imag)])

    def save_cost_log(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "cost", "damping", "accepted"])
            for row in self.cost_log:
                w.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", int(row[3])])


def _sup_errors(bp, truth, g):
    if truth is None:
        return None, None
    R, V = synth(bp, g)
    Rt, Vt = synth(truth, g)
    return float(np.max(np.abs(R.values - Rt.values))), float(np.max(np.abs(V.values - Vt.values)))


def recover(target: SpectralData, init: BasisParams, opts: RecoveryOptions | None = None,
            truth: BasisParams | None = None) -> RecoveryReport:
    """Damped least-squares fit of cosine coefficients to spectral data.

    Never reports success silently: ``converged`` requires a small gradient
    together with a small step or a stalled cost.
    """
    opts = opts or RecoveryOptions()
    M = opts.M
    if len(target) < M:
        raise ValueError(f"target has {len(target)} entries, need M={M}")
    if M < 2 * init.K:
        raise ValueError(f"need M >= 2K data entries, got M={M} for K={init.K}")
    if any(m > 1 for m in target.multiplicities[:M]):
        raise SpectralError("recovery supports simple eigenvalues only")
    g = Grid(opts.grid_n)
    tr = _Tracker(g, init.K, opts.root_tol)
    x0 = init.to_vector()
    sq_mu = math.sqrt(opts.mu)

    # initial correspondence from a full search, then follow by Newton
    p0 = problem_from_params(init, g)
    cand = spectral_data(p0, opts.box, opts.root_tol)
    if len(cand) < M:
        raise CountMismatchError(f"count mismatch: initial guess has {len(cand)} eigenvalues in box, need {M}")
    starts = cand.lambdas[_match(cand.lambdas, target.lambdas[:M])]

    def res_from(lams, betas, X):
        core = np.array([_pack(l, b, target, M, opts.w_lambda, opts.w_beta) for l, b in zip(lams, betas)])
        if opts.mu > 0:
            core = np.hstack([core, sq_mu * (np.atleast_2d(X) - x0)])
        return core

    def evaluate(X, st):
        lams, betas = tr.evaluate(X, st)
        return res_from(lams, betas, X), lams

    x = x0.copy()
    r, lams = evaluate(x, starts)
    r, starts = r[0], lams[0]
    cost = 0.5 * float(r @ r)
    lam_d = opts.damping
    cost_log = [(0, cost, lam_d, True)]
    it = 0
    step_norm = np.inf
    gnorm = np.inf
    message = "maximum iterations reached"
    stop = False
    h = opts.fd_step
    while it < opts.max_iter and not stop:
        it += 1
        X = x[None, :] + h * np.eye(x.size)
        try:
            rJ, _ = evaluate(X, starts)
        except SpectralError as exc:
            message = f"jacobian failed: {exc}"
            break
        J = (rJ - r[None, :]).T / h
        grad = J.T @ r
        gnorm = float(np.linalg.norm(grad))
        if cost < 1e-30:
            step_norm = 0.0
            message = "cost at numerical zero"
            break
        JtJ = J.T @ J
        D = np.sqrt(np.maximum(np.diag(JtJ), 1e-30))
        accepted = False
        while not accepted:
            A = np.vstack([J, math.sqrt(lam_d) * np.diag(D)])
            b = np.concatenate([-r, np.zeros(x.size)])
            dx = np.linalg.lstsq(A, b, rcond=None)[0]
            step_norm = float(np.linalg.norm(dx))
            xn = x + dx
            try:
                rn, ln = evaluate(xn, starts)
                rn, ln = rn[0], ln[0]
                cn = 0.5 * float(rn @ rn)
            except SpectralError:
                cn = np.inf
            if cn <= cost:
                accepted = True
                rel = (cost - cn) / max(cost, 1e-300)
                x, r, starts = xn, rn, ln
                cost = cn
                lam_d = max(lam_d / 10.0, 1e-12)
                cost_log.append((it, cost, lam_d, True))
                log.info("iter %d cost %.3e damping %.1e step %.2e", it, cost, lam_d, step_norm)
                if rel < opts.ftol:
                    message = "relative cost change below tolerance"
                    stop = True
                elif step_norm < opts.xtol * (1.0 + np.linalg.norm(x)):
                    message = "step norm below tolerance"
                    stop = True
            else:
                lam_d *= 10.0
                cost_log.append((it, cn, lam_d, False))
                if step_norm < opts.xtol * (1.0 + np.linalg.norm(x)):
                    # no descent left at the resolution of the parameters
                    message = "step norm below tolerance"
                    stop = True
                    break
                if lam_d > 1e12:
                    message = "stagnated: damping exhausted"
                    stop = True
                    break
    bp = BasisParams.from_vector(x)
    converged = bool(gnorm <= opts.gtol and ("tolerance" in message or "numerical zero" in message))
    eR, eV = _sup_errors(bp, truth, g)
    return RecoveryReport(bp, it, cost, eR, eV, converged, gnorm, step_norm, message, cost_log)


def synthetic_target(truth: BasisParams, n: int = DEFAULT_N, box: SearchBox = DEFAULT_BOX,
                     tol: float = 1e-12) -> SpectralData:
    return spectral_data(problem_from_params(truth, Grid(n)), box, tol)


# --- identifiability probes ---------------------------------------------

def _align(sd: SpectralData, sd_t: SpectralData):
    k = min(len(sd), len(sd_t))
    if k == 0:
        return np.empty(0, complex), np.empty(0, complex), np.empty(0, int)
    idx = _match(sd_t.lambdas, sd.lambdas[:k])
    return sd.lambdas[:k] - sd_t.lambdas[idx], sd.betas[:k] - sd_t.betas[idx], idx


@dataclass
class ProbeResult:
    index: int | None
    magnitude: float

    @property
    def indistinguishable(self) -> bool:
        return self.index is None


def uniqueness_probe(p: Problem, p_tilde: Problem, box: SearchBox = DEFAULT_BOX,
                     tol: float = 1e-12) -> ProbeResult:
    """First spectral index (1-based) where the two problems' data differ by more than 1e-6."""
    sd, sdt = spectral_data(p, box, tol), spectral_data(p_tilde, box, tol)
    dl, db, _ = _align(sd, sdt)
    mag = np.abs(dl) + np.abs(db)
    bad = np.flatnonzero(mag > PROBE_TOL)
    if bad.size:
        return ProbeResult(int(bad[0]) + 1, float(mag[bad[0]]))
    if len(sd) != len(sdt):
        return ProbeResult(min(len(sd), len(sdt)) + 1, float("inf"))
    return ProbeResult(None, float(mag.max()) if mag.size else 0.0)


@dataclass
class Example2Report:
    a: float
    max_lambda_diff: float
    max_beta_diff: float
    max_delta_diff: float
    count: int
    count_tilde: int

    def passed(self, threshold: float = 1e-7) -> bool:
        return (self.count == self.count_tilde and self.max_lambda_diff < threshold
                and self.max_beta_diff < threshold)

    def separated(self, threshold: float = 1e-4) -> bool:
        return (self.count != self.count_tilde or max(self.max_lambda_diff, self.max_beta_diff) > threshold)


def example2_check(a: float, R: ComplexSamples, V: ComplexSamples, V_tilde: ComplexSamples,
                   box: SearchBox = DEFAULT_BOX, *, control: bool = False, tol: float = 1e-12,
                   lambda_grid=None) -> Example2Report:
    """Compare spectral data of ``(R, V)`` and ``(R, V_tilde)`` when ``R`` vanishes on ``[0, a]``.

    With ``control=True`` the requirement that ``V`` and ``V_tilde`` agree on
    ``(a, pi)`` is lifted, which is how the separated control run is set up.
    """
    if not 0 < a < math.pi:
        raise ValueError("a must lie in (0, pi)")
    g = R.grid
    x = g.nodes
    left, right = x <= a, x > a
    if np.max(np.abs(R.values[left])) >= 1e-12:
        raise ValueError("R must vanish on [0, a]")
    if np.any(np.abs(R.values[right & (x < math.pi)]) == 0):
        raise ValueError("R must be nonzero on (a, pi)")
    if not control and np.max(np.abs(V.values[right] - V_tilde.values[right])) > 1e-12:
        raise ValueError("V and V_tilde must agree on (a, pi)")
    p = Problem(g, R, V)
    pt = Problem(g, R, V_tilde)
    sd, sdt = spectral_data(p, box, tol), spectral_data(pt, box, tol)
    dl, db, _ = _align(sd, sdt)
    lams = standard_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid)
    dd = np.abs(delta_batch(p, lams)[0] - delta_batch(pt, lams)[0])
    return Example2Report(a, float(np.max(np.abs(dl), initial=0.0)), float(np.max(np.abs(db), initial=0.0)),
                          float(dd.max()), len(sd), len(sdt))


def data_jacobian(p: Problem, directions, box: SearchBox = DEFAULT_BOX, step: float = 1e-6,
                  tol: float = 1e-12) -> np.ndarray:
    """Forward-difference sensitivity of the spectral data to ``V -> V + step*d``.

    ``directions`` is a list of node arrays.  Returns a real matrix with
    columns per direction and rows ``[Re lam, Im lam, Re beta, Im beta]``.
    """
    eigs = find_eigenvalues(p, box, tol)
    base = spectral_data_from_eigenvalues(p, eigs)
    if any(e.multiplicity > 1 for e in eigs):
        raise SpectralError("data_jacobian supports simple eigenvalues only")
    grid = p.grid
    Rn, Rm, Vn, Vm = p.coefficients
    M = len(eigs)
    starts = base.lambdas
    cols = []
    for d in directions:
        Vp = Vn + step * np.asarray(d)
        co = (np.tile(Rn, (M, 1)), np.tile(Rm, (M, 1)), np.tile(Vp, (M, 1)),
              np.tile(midpoints(Vp, grid), (M, 1)))
        z = starts.copy()
        for _ in range(60):
            dd, _ = integrate_chain(co, grid.h, z, 1)
            s = dd[0] / dd[1]
            z = z - s
            if np.max(np.abs(s)) <= tol * max(1.0, np.max(np.abs(z))):
                break
        ys, _ = integrate_chain(co, grid.h, z, 0, keep=True)
        es, _ = integrate_chain(co, grid.h, z, 0, backward=True, keep=True)
        beta, _ = weights_from_arrays(ys, es, grid.simpson_weights)
        dl = (z - base.lambdas) / step
        db = (beta[0] - base.betas) / step
        cols.append(np.concatenate([dl.real, dl.imag, db.real, db.imag]))
    return np.array(cols).T
