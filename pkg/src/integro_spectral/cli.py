"""Command-line front end.

Every subcommand reads an optional flat ``key = value`` config file, applies
command-line overrides and writes CSV files into the output directory.

Exit codes: 0 success, 1 check failed, 2 configuration error, 3 solver
error, 4 completeness mismatch or boundary zero, 5 spectral-data relation
violated, 6 recovery not converged.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import presets
from .chareq import (DEFAULT_BOX, SearchBox, find_eigenvalues, identity_residuals, save_eigenvalues,
                     standard_lambda_grid, winding)
from .errors import (BoundaryZeroError, CompletenessError, ConfigError, CountMismatchError,
                     FormatError, RelationViolatedError, SpectralError)
from .forward import solve_eta, solve_phi
from .grid import DEFAULT_N, Grid, Problem, load_problem_csv
from . import specdata
from .inverse import (BasisParams, RecoveryOptions, example2_check, problem_from_params, recover,
                      synthetic_target)

log = logging.getLogger("integro_spectral")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER, EXIT_COMPLETENESS, EXIT_RELATION, EXIT_NOT_CONVERGED = range(7)


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _complexes(text):
    return [complex(t.replace(" ", "").replace("i", "j")) for t in text.split(",") if t.strip()]


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonnegative(text):
    v = float(text)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _box(text):
    vals = _floats(text)
    if len(vals) != 4:
        raise ValueError("box needs re_min re_max im_min im_max")
    return SearchBox(*vals)


# key -> parser; anything else in a config file is rejected
CONFIG_KEYS = {
    "preset": str,
    "r_file": str,
    "v_file": str,
    "coef_file": str,
    "grid_n": _positive_int,
    "box": _box,
    "tol": _positive,
    "out": str,
    "lambdas": _complexes,
    "nu_max": int,
    "K": _positive_int,
    "M": _positive_int,
    "w_lambda": _positive,
    "w_beta": _positive,
    "damping": _positive,
    "mu": _nonnegative,
    "max_iter": _positive_int,
    "target": str,
    "truth_r": _complexes,
    "truth_v": _complexes,
    "init": str,
    "init_r": _complexes,
    "init_v": _complexes,
    "init_perturb": _nonnegative,
}


@dataclass
class RunConfig:
    subcommand: str
    preset: str = "smooth-1"
    r_file: str | None = None
    v_file: str | None = None
    coef_file: str | None = None
    grid_n: int = DEFAULT_N
    box: SearchBox = DEFAULT_BOX
    tol: float = 1e-12
    out: str = "out"
    lambdas: list = field(default_factory=lambda: [1.0 + 0j])
    nu_max: int = 0
    K: int = 6
    M: int = 24
    w_lambda: float = 1.0
    w_beta: float = 1.0
    damping: float = 1e-3
    mu: float = 0.0
    max_iter: int = 100
    target: str | None = None
    truth_r: list | None = None
    truth_v: list | None = None
    init: str = "perturbed"
    init_r: list | None = None
    init_v: list | None = None
    init_perturb: float = 0.1


def parse_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            try:
                values[key] = CONFIG_KEYS[key](val)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {exc}") from None
    return values


def build_config(args) -> RunConfig:
    values = parse_config(args.config) if args.config else {}
    if args.grid_n is not None:
        values["grid_n"] = args.grid_n
    if args.box is not None:
        try:
            values["box"] = SearchBox(*args.box)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.tol is not None:
        values["tol"] = args.tol
    if args.out is not None:
        values["out"] = args.out
    if getattr(args, "preset", None):
        values["preset"] = args.preset
    cfg = RunConfig(args.command, **values)
    if cfg.grid_n % 2 or cfg.grid_n < 4:
        raise ConfigError(f"grid_n must be an even integer >= 4, got {cfg.grid_n}")
    if cfg.preset not in presets.PRESETS and not (cfg.r_file or cfg.coef_file):
        raise ConfigError(f"unknown preset '{cfg.preset}'")
    return cfg


def load_problem(cfg: RunConfig) -> Problem:
    if cfg.coef_file:
        return problem_from_params(read_coefficients(cfg.coef_file), _grid(cfg))
    if cfg.r_file:
        if not cfg.v_file:
            raise ConfigError("r_file requires v_file")
        return load_problem_csv(cfg.r_file, cfg.v_file)
    return presets.get(cfg.preset, cfg.grid_n)


def _grid(cfg):
    return Grid(cfg.grid_n)


def read_coefficients(path) -> BasisParams:
    r, v = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["k", "re_r", "im_r", "re_v", "im_v"]:
            raise FormatError(f"{path}:1: expected header k,re_r,im_r,re_v,im_v")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns")
            try:
                a, b, c, d = (float(x) for x in row[1:])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            r.append(complex(a, b))
            v.append(complex(c, d))
    return BasisParams(r, v)


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ---------------------------------------------------------

def cmd_forward(cfg: RunConfig) -> int:
    p = load_problem(cfg)
    out = _outdir(cfg)
    for k, lam in enumerate(cfg.lambdas):
        solve_phi(p, lam, cfg.nu_max).to_csv(out / f"phi_{k}.csv")
        solve_eta(p, lam, cfg.nu_max).to_csv(out / f"eta_{k}.csv")
    with open(out / "lambdas.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "re_lambda", "im_lambda"])
        for k, lam in enumerate(cfg.lambdas):
            w.writerow([k, f"{lam.real:.17g}", f"{lam.imag:.17g}"])
    print(f"wrote {len(cfg.lambdas)} phi/eta trace pairs to {out}")
    return EXIT_OK


def write_identity_report(p: Problem, path) -> float:
    lams = standard_lambda_grid()
    res = identity_residuals(p, lams)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re_lambda", "im_lambda", "residual"])
        for lam, r in zip(lams, res):
            w.writerow([f"{lam.real:.17g}", f"{lam.imag:.17g}", f"{r:.17g}"])
    return float(res.max())


def cmd_eigs(cfg: RunConfig) -> int:
    p = load_problem(cfg)
    out = _outdir(cfg)
    eigs = find_eigenvalues(p, cfg.box, cfg.tol)
    save_eigenvalues(out / "eigenvalues.csv", eigs)
    total = winding(p, cfg.box)
    msum = sum(e.multiplicity for e in eigs)
    max_res = write_identity_report(p, out / "identity_report.csv")
    with open(out / "certificate.txt", "w") as fh:
        b = cfg.box
        fh.write(f"box = {b.re_min!r} {b.re_max!r} {b.im_min!r} {b.im_max!r}\n")
        fh.write(f"outer_winding = {total}\n")
        fh.write(f"multiplicity_sum = {msum}\n")
        fh.write(f"distinct_eigenvalues = {len(eigs)}\n")
        fh.write(f"identity_max_residual = {max_res:.17g}\n")
        fh.write("note = completeness is certified inside the box only\n")
    print(f"{len(eigs)} eigenvalues (multiplicity sum {msum}, outer winding {total}); "
          f"identity max residual {max_res:.3e}")
    print("completeness certified inside the search box only; zeros outside it are not examined")
    return EXIT_OK


def cmd_specdata(cfg: RunConfig) -> int:
    p = load_problem(cfg)
    out = _outdir(cfg)
    sd = specdata.spectral_data(p, cfg.box, cfg.tol)
    specdata.save(sd, out / "spectral_data.csv")
    print(f"{len(sd)} spectral data entries written to {out / 'spectral_data.csv'}")
    return EXIT_OK


def _truth(cfg) -> BasisParams:
    if cfg.truth_r or cfg.truth_v:
        if not (cfg.truth_r and cfg.truth_v) or len(cfg.truth_r) != len(cfg.truth_v):
            raise ConfigError("truth_r and truth_v must be given together with equal length")
        return BasisParams(cfg.truth_r, cfg.truth_v)
    return presets.TRUTH_K6


def cmd_invert(cfg: RunConfig) -> int:
    truth = None if cfg.target else _truth(cfg)
    if cfg.init_r or cfg.init_v:
        if not (cfg.init_r and cfg.init_v) or len(cfg.init_r) != len(cfg.init_v):
            raise ConfigError("init_r and init_v must be given together with equal length")
        init = BasisParams(cfg.init_r, cfg.init_v)
    elif cfg.init == "truth":
        if truth is None:
            raise ConfigError("init = truth needs a synthetic target")
        init = truth
    elif cfg.init == "perturbed":
        if truth is None:
            raise ConfigError("init = perturbed needs a synthetic target")
        init = presets.perturbed(truth, cfg.init_perturb)
    else:
        raise ConfigError(f"unknown init '{cfg.init}'")
    if init.K != cfg.K:
        raise ConfigError(f"initial guess has K={init.K}, config says K={cfg.K}")
    # validate everything cheap before the target's eigenvalue search
    if cfg.target:
        target = specdata.load(cfg.target)
    else:
        target = synthetic_target(truth, cfg.grid_n, cfg.box, cfg.tol)
    opts = RecoveryOptions(grid_n=cfg.grid_n, box=cfg.box, M=cfg.M, w_lambda=cfg.w_lambda,
                           w_beta=cfg.w_beta, damping=cfg.damping, mu=cfg.mu, max_iter=cfg.max_iter,
                           root_tol=cfg.tol)
    try:
        rep = recover(target, init, opts, truth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(cfg)
    rep.save_coefficients(out / "coefficients.csv")
    rep.save_cost_log(out / "cost_log.csv")
    with open(out / "recovery_report.txt", "w") as fh:
        fh.write(f"iterations = {rep.iterations}\n")
        fh.write(f"final_cost = {rep.final_cost:.17g}\n")
        fh.write(f"converged = {rep.converged}\n")
        fh.write(f"message = {rep.message}\n")
        if rep.sup_error_R is not None:
            fh.write(f"sup_error_R = {rep.sup_error_R:.17g}\n")
            fh.write(f"sup_error_V = {rep.sup_error_V:.17g}\n")
        fh.write(f"basis = {rep.truncation} (K = {init.K})\n")
    print(f"iterations {rep.iterations}, cost {rep.final_cost:.3e}, converged {rep.converged} ({rep.message})")
    if rep.sup_error_R is not None:
        print(f"sup error R {rep.sup_error_R:.3e}, V {rep.sup_error_V:.3e}")
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_example2(cfg: RunConfig) -> int:
    a, R, V, Vt, Vc = presets.example2_setup(cfg.grid_n)
    main = example2_check(a, R, V, Vt, cfg.box, tol=cfg.tol)
    ctrl = example2_check(a, R, V, Vc, cfg.box, control=True, tol=cfg.tol)
    out = _outdir(cfg)
    ok_main, ok_ctrl = main.passed(1e-7), ctrl.separated(1e-4)
    with open(out / "example2_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "max_lambda_diff", "max_beta_diff", "max_delta_diff", "count", "count_tilde", "verdict"])
        for name, rep, ok in (("vanishing-R", main, ok_main), ("control", ctrl, ok_ctrl)):
            w.writerow([name, f"{rep.max_lambda_diff:.17g}", f"{rep.max_beta_diff:.17g}",
                        f"{rep.max_delta_diff:.17g}", rep.count, rep.count_tilde, "PASS" if ok else "FAIL"])
    print(f"a = {a:.6f}")
    print(f"max |lambda - lambda~| = {main.max_lambda_diff:.3e}")
    print(f"max |beta - beta~|     = {main.max_beta_diff:.3e}")
    print(f"max |Delta - Delta~|   = {main.max_delta_diff:.3e}")
    print(f"identical data (< 1e-7): {'PASS' if ok_main else 'FAIL'}")
    print(f"control separated (> 1e-4): {'PASS' if ok_ctrl else 'FAIL'}")
    return EXIT_OK if ok_main and ok_ctrl else EXIT_FAIL


COMMANDS = {
    "forward": cmd_forward,
    "eigs": cmd_eigs,
    "specdata": cmd_specdata,
    "invert": cmd_invert,
    "example2": cmd_example2,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="integro-spectral",
        description="Spectral problems for i y' + int_0^x R(x) V(t) y(t) dt = lambda y on [0, pi].")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "forward": "write phi/eta traces for the listed lambdas",
        "eigs": "locate eigenvalues and certify the identity Delta = Delta_0 exp(-i lambda pi)",
        "specdata": "compute eigenvalues with Levinson weight numbers",
        "invert": "recover cosine coefficients of R and V from spectral data",
        "example2": "compare spectral data of kernels whose R vanishes on [0, a]",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--preset", help=f"built-in problem ({', '.join(presets.PRESETS)})")
        sp.add_argument("--grid-n", type=int, dest="grid_n")
        sp.add_argument("--box", type=float, nargs=4, metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"))
        sp.add_argument("--tol", type=float)
        sp.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, FormatError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompletenessError, BoundaryZeroError, CountMismatchError) as exc:
        print(f"completeness error: {exc}", file=sys.stderr)
        return EXIT_COMPLETENESS
    except RelationViolatedError as exc:
        print(f"spectral data error: {exc}", file=sys.stderr)
        return EXIT_RELATION
    except (SpectralError, ArithmeticError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
