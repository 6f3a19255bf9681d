"""Characteristic functions, identity checks and zero localization.

``Delta(lambda) = phi(pi, lambda)`` comes from the forward phi solve and
``Delta_0(lambda) = 1 - int_0^pi V eta`` from the independent eta solve; the
two are tied by ``Delta = Delta_0 exp(-i lambda pi)``.  Zeros of ``Delta`` in a
rectangle are counted by the argument principle, isolated by quadrisection
and polished by Newton's method using the exact derivative chain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (BoundaryZeroError, CompletenessError, NewtonStagnationError,
                     PhaseResolutionError, SolverError)
from .forward import NU_MAX_CAP, derivative, eta_traces, integrate_chain
from .grid import Problem, cumulative_integral

BOUNDARY_FLOOR = 1e-8
MAX_BOUNDARY_SAMPLES = 10**6
INFLATE_STEP = 0.01
INFLATE_RETRIES = 5
LEAF_DIAMETER = 0.2
LEAF_WINDING = 4
MIN_DIAMETER = 1e-7
NEWTON_MAX_ITER = 100
MULTIPLICITY_THRESHOLD = 1e-4


@dataclass(frozen=True)
class SearchBox:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate search box {self}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def diameter(self) -> float:
        return math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    def inflate(self, frac: float) -> "SearchBox":
        dr = 0.5 * frac * (self.re_max - self.re_min)
        di = 0.5 * frac * (self.im_max - self.im_min)
        return SearchBox(self.re_min - dr, self.re_max + dr, self.im_min - di, self.im_max + di)

    def contains(self, z, margin=0.0) -> bool:
        return (self.re_min - margin <= z.real <= self.re_max + margin
                and self.im_min - margin <= z.imag <= self.im_max + margin)

    def split(self, at=0.5):
        rm = self.re_min + at * (self.re_max - self.re_min)
        im = self.im_min + at * (self.im_max - self.im_min)
        return [SearchBox(self.re_min, rm, self.im_min, im), SearchBox(rm, self.re_max, self.im_min, im),
                SearchBox(self.re_min, rm, im, self.im_max), SearchBox(rm, self.re_max, im, self.im_max)]


DEFAULT_BOX = SearchBox(-20.0, 20.0, -6.0, 2.0)


@dataclass(frozen=True)
class Eigenvalue:
    lam: complex
    multiplicity: int
    newton_residual: float
    derivative_check: bool = True


# --- evaluation ----------------------------------------------------------

def delta_batch(p: Problem, lams, nu_max: int = 0) -> np.ndarray:
    """Normalized derivatives ``phi_nu(pi, lambda)`` for many lambdas, shape ``(nu_max+1, B)``."""
    y, _ = integrate_chain(p.coefficients, p.grid.h, lams, nu_max)
    return y


def delta(p: Problem, lam: complex, nu_max: int = 0) -> list:
    """``[Delta, Delta', Delta''/2!, ...]`` at ``lam`` (entry k times k! is the k-th derivative)."""
    return [complex(v) for v in delta_batch(p, [lam], nu_max)[:, 0]]


def delta0_batch(p: Problem, lams, nu_max: int = 0) -> np.ndarray:
    es, _ = eta_traces(p, lams, nu_max)
    vals = -np.einsum("k,k,kmb->mb", p.grid.simpson_weights, p.V.values, es)
    vals[0] += 1.0
    return vals


def delta0(p: Problem, lam: complex, nu_max: int = 0) -> list:
    """Normalized derivatives of ``Delta_0 = 1 - int_0^pi V eta``."""
    return [complex(v) for v in delta0_batch(p, [lam], nu_max)[:, 0]]


def _check_im(lams, limit=20.0):
    if np.any(np.imag(lams) > limit):
        raise SolverError(f"Im lambda above {limit} would overflow the identity check")


def identity_residuals(p: Problem, lams) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    _check_im(lams)
    D = delta_batch(p, lams)[0]
    D0 = delta0_batch(p, lams)[0]
    return np.abs(D - D0 * np.exp(-1j * lams * math.pi)) / (1.0 + np.abs(D))


def identity_residual(p: Problem, lam: complex) -> float:
    """Relative mismatch ``|Delta - Delta_0 e^{-i lam pi}| / (1 + |Delta|)``."""
    return float(identity_residuals(p, [lam])[0])


def eq12_residuals(p: Problem, lams) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    es, _ = eta_traces(p, lams)
    eta = es[:, 0, :]
    D0 = 1.0 - p.grid.simpson_weights @ (p.V.values[:, None] * eta)
    running = cumulative_integral(p.V.values[:, None] * eta, p.grid)
    deta = derivative(eta, p.grid)
    R = p.R.values[:, None]
    res = 1j * deta + R * (D0[None, :] + running) - lams[None, :] * eta
    return np.max(np.abs(res[2:-2]), axis=0)


def eq12_residual(p: Problem, lam: complex) -> float:
    """Max interior residual of the eta equation rewritten through ``Delta_0``."""
    return float(eq12_residuals(p, [lam])[0])


def standard_lambda_grid(re=(-10.0, 10.0), im=(-2.0, 2.0), shape=(5, 5)) -> np.ndarray:
    return (np.linspace(*re, shape[0])[:, None] + 1j * np.linspace(*im, shape[1])[None, :]).ravel()


@dataclass
class DeltaAsymptotics:
    T: np.ndarray
    upper: np.ndarray       # |Delta(iT) e^{-T pi} - 1|
    lower: np.ndarray       # |Delta(-iT)|
    scaled_delta1: np.ndarray  # |Delta_1(-iT) (-iT)^{gamma+1}|

    @property
    def upper_decreasing(self):
        return bool(np.all(np.diff(self.upper) < 0))

    @property
    def lower_decreasing(self):
        return bool(np.all(np.diff(self.lower) < 0))

    def ratio_variation(self, i=-2, j=-1):
        a, b = self.scaled_delta1[i], self.scaled_delta1[j]
        return abs(b - a) / max(a, b)


def delta_asymptotics(p: Problem, T_list, angle=1.5 * math.pi) -> DeltaAsymptotics:
    """Growth of ``Delta`` along ``iT`` and decay along the lower-sector ray ``T e^{i angle}``."""
    T = np.asarray(T_list, dtype=float)
    up = 1j * T
    D_up = delta_batch(p, up)[0]
    upper = np.abs(np.exp(np.log(D_up) - T * math.pi) - 1.0)
    low = T * np.exp(1j * angle)
    lower = np.abs(delta_batch(p, low)[0])
    D1 = delta0_batch(p, low)[0] * np.exp(-1j * low * math.pi)
    scaled = np.abs(D1 * low ** (p.gamma + 1.0))
    return DeltaAsymptotics(T, upper, lower, scaled)


# --- argument principle --------------------------------------------------

def _box_points(box: SearchBox, t: np.ndarray) -> np.ndarray:
    w = box.re_max - box.re_min
    hgt = box.im_max - box.im_min
    per = 2 * (w + hgt)
    s = (np.asarray(t) % 1.0) * per
    z = np.empty(s.shape, dtype=complex)
    e1 = s < w
    e2 = (s >= w) & (s < w + hgt)
    e3 = (s >= w + hgt) & (s < 2 * w + hgt)
    e4 = s >= 2 * w + hgt
    z[e1] = box.re_min + s[e1] + 1j * box.im_min
    z[e2] = box.re_max + 1j * (box.im_min + s[e2] - w)
    z[e3] = box.re_max - (s[e3] - w - hgt) + 1j * box.im_max
    z[e4] = box.re_min + 1j * (box.im_max - (s[e4] - 2 * w - hgt))
    return z


def _box_initial(box: SearchBox) -> np.ndarray:
    # parameter values hitting all four corners plus roughly 0.1 spacing
    w = box.re_max - box.re_min
    hgt = box.im_max - box.im_min
    per = 2 * (w + hgt)
    pieces = []
    for start, length in ((0, w), (w, hgt), (w + hgt, w), (2 * w + hgt, hgt)):
        k = max(4, int(math.ceil(length / 0.1)))
        pieces.append((start + length * np.arange(k) / k) / per)
    return np.concatenate(pieces)


class _Circle:
    def __init__(self, center, radius):
        self.center, self.radius = complex(center), float(radius)

    def points(self, t):
        return self.center + self.radius * np.exp(2j * math.pi * np.asarray(t))

    def initial(self):
        return np.arange(32) / 32.0


class _Rect:
    def __init__(self, box):
        self.box = box

    def points(self, t):
        return _box_points(self.box, t)

    def initial(self):
        return _box_initial(self.box)


def _evaluator(f):
    if isinstance(f, Problem):
        # a positive real factor leaves the phase alone; it measures Delta
        # against the size of the free solution exp(-i lambda pi)
        def fz(z):
            z = np.asarray(z, dtype=complex)
            return delta_batch(f, z)[0] / np.minimum(1.0, np.exp(math.pi * z.imag))
        return fz
    return lambda z: np.asarray(f(np.asarray(z, dtype=complex)), dtype=complex)


def _winding_many(fz, contours, floor=BOUNDARY_FLOOR, max_samples=MAX_BOUNDARY_SAMPLES):
    """Winding numbers of ``fz`` along several closed contours.

    Returns ``(windings, clear)`` where ``clear[i]`` is False when a sample on
    contour ``i`` fell below ``floor``.  Sampling is refined by bisection
    until every consecutive phase increment is below pi/2 and no magnitude
    jumps by more than a factor e.
    """
    ts = [c.initial() for c in contours]
    pts = [c.points(t) for c, t in zip(contours, ts)]
    sizes = [len(t) for t in ts]
    vals_flat = fz(np.concatenate(pts)) if pts else np.empty(0, complex)
    vals = np.split(vals_flat, np.cumsum(sizes)[:-1])
    active = list(range(len(contours)))
    clear = [True] * len(contours)
    while active:
        new_t = {}
        for i in active:
            v = vals[i]
            if np.any(np.abs(v) < floor) or not np.all(np.isfinite(v)):
                clear[i] = False
                continue
            r = np.roll(v, -1) / v
            bad = (np.abs(np.angle(r)) >= 0.5 * math.pi) | (np.abs(np.log(np.abs(r))) > 1.0)
            if np.any(bad):
                t = ts[i]
                t_next = np.append(t[1:], 1.0)
                new_t[i] = 0.5 * (t[bad] + t_next[bad])
        active = [i for i in new_t if clear[i]]
        if not active:
            break
        if sum(len(ts[i]) + len(new_t[i]) for i in active) > max_samples:
            raise PhaseResolutionError("phase resolution exceeded: more than 1e6 boundary samples")
        chunk = [contours[i].points(new_t[i]) for i in active]
        nv = fz(np.concatenate(chunk))
        nv = np.split(nv, np.cumsum([len(c) for c in chunk])[:-1])
        for i, add in zip(active, nv):
            t = np.concatenate([ts[i], new_t[i]])
            v = np.concatenate([vals[i], add])
            order = np.argsort(t, kind="stable")
            ts[i], vals[i] = t[order], v[order]
    windings = []
    for i in range(len(contours)):
        if not clear[i]:
            windings.append(None)
            continue
        v = vals[i]
        total = np.sum(np.angle(np.roll(v, -1) / v))
        windings.append(int(round(total / (2 * math.pi))))
    return windings, clear


def winding(f, box: SearchBox, *, retries: int = INFLATE_RETRIES, return_box: bool = False,
            max_samples: int = MAX_BOUNDARY_SAMPLES):
    """Number of zeros (with multiplicity) of ``Delta`` inside ``box``.

    ``f`` is a :class:`Problem` or any vectorized callable.  When a boundary
    sample is within ``BOUNDARY_FLOOR`` of zero the box is inflated by 1% and
    the count repeated.  The initial samples are about 0.1 apart, so ``f``
    must not turn its phase by more than about pi/2 over that distance
    (``Delta`` turns by roughly 0.3); faster functions can alias.
    """
    fz = _evaluator(f)
    b = box
    for attempt in range(retries + 1):
        (w,), (ok,) = _winding_many(fz, [_Rect(b)], max_samples=max_samples)
        if ok:
            return (w, b) if return_box else w
        b = b.inflate(INFLATE_STEP)
    raise BoundaryZeroError(f"boundary zero suspected on {box} after {retries} inflations")


def _split_clear(fz, boxes):
    """Quadrisect each box; nudge the split point if a child edge meets a zero."""
    out = [None] * len(boxes)
    pending = list(range(len(boxes)))
    for at in (0.5, 0.5 + 0.0137, 0.5 - 0.0291, 0.5 + 0.0613):
        if not pending:
            break
        kids = {i: boxes[i].split(at) for i in pending}
        flat = [k for i in pending for k in kids[i]]
        ws, ok = _winding_many(fz, [_Rect(k) for k in flat])
        nxt = []
        for j, i in enumerate(pending):
            wj, okj = ws[4 * j:4 * j + 4], ok[4 * j:4 * j + 4]
            if all(okj):
                out[i] = list(zip(kids[i], wj))
            else:
                nxt.append(i)
        pending = nxt
    if pending:
        raise BoundaryZeroError(f"cannot split {boxes[pending[0]]} away from a zero")
    return out


def _newton(p, starts, mults, boxes, tol):
    """Vectorized (modified) Newton from ``starts``; returns roots and success mask."""
    z = np.array(starts, dtype=complex)
    m = np.asarray(mults, dtype=float)
    done = np.zeros(z.shape, bool)
    failed = np.zeros(z.shape, bool)
    for _ in range(NEWTON_MAX_ITER):
        act = ~(done | failed)
        if not act.any():
            break
        d = delta_batch(p, z[act], 1)
        step = m[act] * d[0] / d[1]
        zi = z[act] - step
        idx = np.flatnonzero(act)
        z[idx] = zi
        conv = np.abs(step) <= tol * np.maximum(1.0, np.abs(zi))
        for k, j in enumerate(idx):
            b = boxes[j]
            if not np.isfinite(zi[k]) or abs(zi[k] - b.center) > 2.0 * b.diameter:
                failed[j] = True
            elif conv[k] or d[0, k] == 0:
                done[j] = True
    stagnated = ~(done | failed)
    return z, done, failed, stagnated


def _multiplicity(p, root, tol, guard):
    """Winding of a small circle around ``root``; radius grows while the floor is hit."""
    r = max(10.0 * tol, 1e-6)
    fz = _evaluator(p)
    while r < guard:
        (w,), (ok,) = _winding_many(fz, [_Circle(root, r)])
        if ok and w >= 1:
            return w
        r *= 10.0
    (w,), _ = _winding_many(fz, [_Circle(root, guard)], floor=0.0)
    return max(w, 1)


def _derivative_check(p, root, m):
    if m - 1 > NU_MAX_CAP - 1:
        return False
    d = delta_batch(p, [root], min(m, NU_MAX_CAP))[:, 0]
    mags = np.array([math.factorial(k) * abs(d[k]) for k in range(len(d))])
    small = np.all(mags[:m] < MULTIPLICITY_THRESHOLD)
    big = mags[m] >= MULTIPLICITY_THRESHOLD if m < len(mags) else True
    return bool(small and big)


def find_eigenvalues(p: Problem, box: SearchBox = DEFAULT_BOX, tol: float = 1e-12) -> list:
    """All zeros of ``Delta`` in ``box`` with multiplicities, sorted by (Re, Im).

    Raises :class:`CompletenessError` when the multiplicities do not add up
    to the winding number of the (possibly inflated) outer box.
    """
    fz = _evaluator(p)
    total, outer = winding(p, box, return_box=True)
    if total < 0:
        raise CompletenessError(f"negative winding {total} on {outer}")
    queue = [(outer, total)] if total > 0 else []
    found = []
    while queue:
        # boxes ready for Newton
        leaves = [(b, w) for b, w in queue if b.diameter < LEAF_DIAMETER and w <= LEAF_WINDING]
        rest = [(b, w) for b, w in queue if not (b.diameter < LEAF_DIAMETER and w <= LEAF_WINDING)]
        queue = []
        if leaves:
            bs = [b for b, _ in leaves]
            ws = [w for _, w in leaves]
            z, done, failed, stag = _newton(p, [b.center for b in bs], ws, bs, tol)
            for k, (b, w) in enumerate(leaves):
                root = z[k]
                ok = done[k] and b.contains(root, margin=1e-9 * max(1.0, abs(root)))
                if ok:
                    guard = 0.25 * min(b.re_max - b.re_min, b.im_max - b.im_min)
                    m = _multiplicity(p, root, tol, max(guard, 2e-6))
                    if m == w:
                        res = abs(delta_batch(p, [root])[0, 0])
                        found.append(Eigenvalue(complex(root), m, float(res),
                                                _derivative_check(p, root, m)))
                        continue
                if b.diameter < MIN_DIAMETER:
                    if stag[k]:
                        raise NewtonStagnationError(f"Newton stagnation in {b}")
                    raise CompletenessError(f"cannot resolve {w} zeros in {b}")
                rest.append((b, w))
        if rest:
            kids = _split_clear(fz, [b for b, _ in rest])
            for (b, w), children in zip(rest, kids):
                if sum(cw for _, cw in children) != w:
                    raise CompletenessError(f"child windings do not add up to {w} in {b}")
                queue.extend((cb, cw) for cb, cw in children if cw > 0)
    roots = _dedupe(found, tol)
    msum = sum(e.multiplicity for e in roots)
    if msum != total:
        raise CompletenessError(f"completeness mismatch: multiplicities sum to {msum}, winding is {total}")
    return roots


def _dedupe(found, tol):
    found = sorted(found, key=lambda e: (e.lam.real, e.lam.imag))
    out = []
    for e in found:
        dup = next((i for i, o in enumerate(out) if abs(o.lam - e.lam) <= 10 * tol * max(1.0, abs(e.lam))), None)
        if dup is None:
            out.append(e)
        elif e.multiplicity > out[dup].multiplicity:
            out[dup] = e
    return out


def polish(p: Problem, eigs, tol: float = 1e-12) -> list:
    """Newton-refine known zeros (e.g. after a small change of ``p``), keeping multiplicities."""
    if not eigs:
        return []
    starts = [e.lam for e in eigs]
    boxes = [SearchBox(z.real - 0.25, z.real + 0.25, z.imag - 0.25, z.imag + 0.25) for z in starts]
    z, done, failed, stag = _newton(p, starts, [e.multiplicity for e in eigs], boxes, tol)
    if not done.all():
        raise NewtonStagnationError("zero tracking failed to converge")
    res = np.abs(delta_batch(p, z)[0])
    return [replace(e, lam=complex(zz), newton_residual=float(r)) for e, zz, r in zip(eigs, z, res)]


def save_eigenvalues(path, eigs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "re_lambda", "im_lambda", "multiplicity", "residual"])
        for i, e in enumerate(eigs, start=1):
            w.writerow([i, repr(e.lam.real), repr(e.lam.imag), e.multiplicity, repr(e.newton_residual)])
