"""Eigen/associated function chains, Levinson weight numbers and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .chareq import DEFAULT_BOX, Eigenvalue, SearchBox, find_eigenvalues
from .errors import DegenerateChainError, FormatError, RelationViolatedError
from .forward import NU_MAX_CAP, eta_traces, phi_traces
from .grid import ComplexSamples, Problem

RELATION_TOL = 1e-3
DEGENERATE_NORM = 1e-12
CSV_COLUMNS = ["n", "re_lambda", "im_lambda", "multiplicity_run", "re_beta", "im_beta"]


@dataclass(frozen=True, eq=False)
class FunctionChain:
    at_lambda: complex
    members: list

    def __len__(self):
        return len(self.members)


@dataclass(eq=False)
class SpectralData:
    """Flattened pairs ``(lambda_n, beta_n)``, ``n = 1, 2, ...``.

    ``runs`` holds ``(start, multiplicity)`` for each distinct eigenvalue;
    the starts form the index set of first members of each run.
    """

    entries: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(complex(l), complex(b)) for l, b in self.entries]
        self.runs = [(int(s), int(m)) for s, m in self.runs]
        pos = 1
        for s, m in self.runs:
            if s != pos or m < 1:
                raise ValueError(f"runs do not tile the entries at index {pos}")
            lams = {self.entries[k][0] for k in range(s - 1, s - 1 + m)}
            if len(lams) != 1:
                raise ValueError(f"run starting at {s} mixes eigenvalues")
            pos += m
        if pos != len(self.entries) + 1:
            raise ValueError("runs do not cover all entries")
        for (s0, _), (s1, _) in zip(self.runs, self.runs[1:]):
            if self.entries[s0 - 1][0] == self.entries[s1 - 1][0]:
                raise ValueError(f"consecutive runs at {s0} and {s1} share an eigenvalue")

    def __len__(self):
        return len(self.entries)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([l for l, _ in self.entries], dtype=complex)

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for _, b in self.entries], dtype=complex)

    @property
    def multiplicities(self) -> list:
        return [m for _, m in self.runs for _ in range(m)]

    def head(self, M: int) -> "SpectralData":
        """First ``M`` entries, cutting runs only at their boundaries."""
        runs, total = [], 0
        for s, m in self.runs:
            if total + m > M:
                break
            runs.append((s, m))
            total += m
        return SpectralData(self.entries[:total], runs)


def flatten_index(eigs) -> tuple:
    """Global 1-based numbering of a sorted eigenvalue list.

    Returns ``(S, assignments)`` where ``S`` lists the indices starting each
    multiplicity run and ``assignments`` holds ``(n, eigenvalue, nu)`` for
    every flattened entry.
    """
    S, assignments = [], []
    n = 1
    for e in eigs:
        if e.multiplicity < 1:
            raise ValueError("multiplicity must be positive")
        S.append(n)
        for nu in range(e.multiplicity):
            assignments.append((n + nu, e, nu))
        n += e.multiplicity
    return S, assignments


def chains(p: Problem, e: Eigenvalue) -> tuple:
    """``(s_chain, psi_chain)``: phi and eta derivative chains at the eigenvalue."""
    if e.multiplicity > NU_MAX_CAP:
        raise ValueError(f"multiplicity {e.multiplicity} above the cap {NU_MAX_CAP}")
    nu = e.multiplicity - 1
    ys, _ = phi_traces(p, [e.lam], nu)
    es, _ = eta_traces(p, [e.lam], nu)
    s = [ComplexSamples(p.grid, ys[:, k, 0]) for k in range(nu + 1)]
    psi = [ComplexSamples(p.grid, es[:, k, 0]) for k in range(nu + 1)]
    return FunctionChain(e.lam, s), FunctionChain(e.lam, psi)


def _inner(w, a, b):
    return np.sum(w * np.conj(a) * b, axis=0)


def weights_from_arrays(s, psi, w):
    """Triangular least-squares solve on stacked chain arrays.

    ``s`` and ``psi`` have shape ``(n+1, m, ...)``; ``w`` are quadrature
    weights on the node axis.  Returns ``(beta, residual)`` of shape
    ``(m, ...)``.
    """
    m = s.shape[1]
    wb = w.reshape((-1,) + (1,) * (s.ndim - 2))
    s0 = s[:, 0]
    ss = _inner(wb, s0, s0).real
    if np.any(np.sqrt(ss) < DEGENERATE_NORM):
        raise DegenerateChainError("degenerate chain: eigenfunction norm below 1e-12")
    beta = np.zeros((m,) + s.shape[2:], dtype=complex)
    resid = np.zeros((m,) + s.shape[2:])
    for nu in range(m):
        known = np.zeros_like(psi[:, nu])
        for j in range(1, nu + 1):
            known = known + beta[nu - j] * s[:, j]
        target = psi[:, nu] - known
        beta[nu] = _inner(wb, s0, target) / ss
        r = target - beta[nu] * s0
        pn = np.sqrt(_inner(wb, psi[:, nu], psi[:, nu]).real)
        rn = np.sqrt(_inner(wb, r, r).real)
        resid[nu] = np.where(pn > 0, rn / np.where(pn > 0, pn, 1.0), 0.0)
    return beta, resid


def weights(s_chain: FunctionChain, psi_chain: FunctionChain, return_residuals: bool = False):
    """Levinson weight numbers of one run from ``psi_{n+nu} = sum_j beta_{n+nu-j} s_{n+j}``."""
    if len(s_chain) != len(psi_chain):
        raise ValueError("chains must have equal length")
    if s_chain.at_lambda != psi_chain.at_lambda:
        raise ValueError("chains belong to different eigenvalues")
    grid = s_chain.members[0].grid
    s = np.stack([c.values for c in s_chain.members], axis=1)
    psi = np.stack([c.values for c in psi_chain.members], axis=1)
    beta, resid = weights_from_arrays(s, psi, grid.simpson_weights)
    bad = np.flatnonzero(resid > RELATION_TOL)
    if bad.size:
        raise RelationViolatedError(
            f"relation violated at level {bad[0]} (residual {resid[bad[0]]:.3g})", index=int(bad[0]))
    betas = [complex(b) for b in beta]
    return (betas, [float(r) for r in resid]) if return_residuals else betas


def spectral_data_from_eigenvalues(p: Problem, eigs) -> SpectralData:
    """Weight numbers for a known eigenvalue list, chains computed in one batch."""
    if not eigs:
        return SpectralData()
    S, _ = flatten_index(eigs)
    nu = max(e.multiplicity for e in eigs) - 1
    if nu + 1 > NU_MAX_CAP:
        raise ValueError(f"multiplicity above the cap {NU_MAX_CAP}")
    lams = [e.lam for e in eigs]
    ys, _ = phi_traces(p, lams, nu)
    es, _ = eta_traces(p, lams, nu)
    entries, runs = [], []
    for k, (e, start) in enumerate(zip(eigs, S)):
        m = e.multiplicity
        beta, resid = weights_from_arrays(ys[:, :m, k], es[:, :m, k], p.grid.simpson_weights)
        bad = np.flatnonzero(resid > RELATION_TOL)
        if bad.size:
            idx = start + int(bad[0])
            raise RelationViolatedError(
                f"relation violated at spectral index {idx} (residual {resid[bad[0]]:.3g})", index=idx)
        entries.extend((e.lam, b) for b in beta)
        runs.append((start, m))
    return SpectralData(entries, runs)


def spectral_data(p: Problem, box: SearchBox = DEFAULT_BOX, tol: float = 1e-12) -> SpectralData:
    """Eigenvalues in ``box`` and their weight numbers as one flattened sequence."""
    return spectral_data_from_eigenvalues(p, find_eigenvalues(p, box, tol))


def ratio_spread(s: ComplexSamples, psi: ComplexSamples, mask_frac: float = 0.1) -> tuple:
    """Mean and standard deviation of ``psi/s`` on nodes where ``|s| > mask_frac max|s|``."""
    a = np.abs(s.values)
    keep = a > mask_frac * a.max()
    r = psi.values[keep] / s.values[keep]
    return complex(np.mean(r)), float(np.std(r))


def save(sd: SpectralData, path) -> None:
    mult = sd.multiplicities
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for n, ((lam, beta), m) in enumerate(zip(sd.entries, mult), start=1):
            w.writerow([n] + [f"{v:.17g}" for v in (lam.real, lam.imag)] + [m]
                       + [f"{v:.17g}" for v in (beta.real, beta.imag)])


def load(path) -> SpectralData:
    entries, mults = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_COLUMNS:
            raise FormatError(f"{path}:1: expected header {','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} columns, got {len(row)}")
            try:
                n, m = int(row[0]), int(row[3])
                lr, li, br, bi = (float(row[k]) for k in (1, 2, 4, 5))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if n != len(entries) + 1:
                raise FormatError(f"{path}:{lineno}: index {n} out of sequence")
            if m < 1:
                raise FormatError(f"{path}:{lineno}: multiplicity must be positive")
            entries.append((complex(lr, li), complex(br, bi)))
            mults.append(m)
    runs = []
    k = 0
    while k < len(entries):
        m = mults[k]
        block = range(k, k + m)
        if k + m > len(entries) or any(mults[j] != m or entries[j][0] != entries[k][0] for j in block):
            raise FormatError(f"{path}:{k + 2}: inconsistent multiplicity run")
        runs.append((k + 1, m))
        k += m
    try:
        return SpectralData(entries, runs)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
