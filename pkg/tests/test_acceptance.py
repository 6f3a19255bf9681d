"""End-to-end acceptance checks; each test records one PASS/FAIL line."""

import time

import numpy as np

from integro_spectral import cli, presets
from integro_spectral.chareq import (DEFAULT_BOX, SearchBox, delta_asymptotics, delta_batch, eq12_residuals,
                                     find_eigenvalues, identity_residuals, standard_lambda_grid, winding)
from integro_spectral.forward import phi_asymptotic_report, solve_phi
from integro_spectral.inverse import RecoveryOptions, example2_check, recover, synthetic_target
from integro_spectral.specdata import (FunctionChain, chains, ratio_spread, spectral_data,
                                       spectral_data_from_eigenvalues, weights)

from oracles import unmatched_basins

INVERSE_BOX = SearchBox(-26.0, 26.0, -7.0, 2.0)


def test_01_closed_form_forward(record):
    t0 = time.perf_counter()
    p = presets.zero_kernel(2000)
    x = p.grid.nodes
    err = max(np.max(np.abs(solve_phi(p, lam).phi[0].values - np.exp(-1j * lam * x)))
              for lam in (1, 1 + 0.5j, -2 + 1j))
    dt = time.perf_counter() - t0
    ok = err < 1e-8 and dt < 1.0
    record(1, ok, f"max node error {err:.2e} (< 1e-8), runtime {dt:.2f} s (< 1 s)")
    assert ok


def test_02_identity_certification(record):
    t0 = time.perf_counter()
    lams = standard_lambda_grid()
    r1 = identity_residuals(presets.smooth_1(2000), lams).max()
    r2 = identity_residuals(presets.smooth_1(4000), lams).max()
    dt = time.perf_counter() - t0
    ok = r1 < 1e-6 and r1 / r2 >= 10 and dt < 60
    record(2, ok, f"max residual {r1:.2e} (< 1e-6), drop x{r1 / r2:.1f} at n=4000 (>= 10), runtime {dt:.1f} s")
    assert ok


def test_03_eq12_rewrite(record):
    lams = standard_lambda_grid()
    r1 = eq12_residuals(presets.smooth_1(2000), lams).max()
    r2 = eq12_residuals(presets.smooth_1(4000), lams).max()
    ok = r1 < 1e-4 and r2 < r1
    record(3, ok, f"max residual {r1:.2e} (< 1e-4), n=4000 {r2:.2e} (decreasing)")
    assert ok


def test_04_root_completeness(record):
    t0 = time.perf_counter()
    p = presets.smooth_1(2000)
    eigs = find_eigenvalues(p, DEFAULT_BOX)
    total = winding(p, DEFAULT_BOX)
    msum = sum(e.multiplicity for e in eigs)
    lams = np.array([e.lam for e in eigs])
    worst = np.abs(delta_batch(p, lams)[0]).max()
    minima, bad = unmatched_basins(p, DEFAULT_BOX, lams, shape=(400, 100))
    dt = time.perf_counter() - t0
    ok = msum == total and worst < 1e-9 and not bad and dt < 300
    record(4, ok, f"{len(eigs)} roots, multiplicity sum {msum} = winding {total}, max |Delta| {worst:.1e} "
                  f"(< 1e-9), mesh basins {len(minima)} with {len(bad)} unmatched, runtime {dt:.1f} s")
    assert ok


def test_05_asymptotics(record):
    p = presets.smooth_1(2000)
    T = [5.0, 10.0, 20.0]
    rep = phi_asymptotic_report(p, T)
    da = delta_asymptotics(p, T)
    ok = rep.phi_decreasing and rep.eta_decreasing and da.upper_decreasing and da.lower_decreasing
    record(5, ok, f"r_phi {np.array2string(rep.r_phi, precision=3)}, r_eta {np.array2string(rep.r_eta, precision=3)}, "
                  f"|Delta(iT)e^(-T pi)-1| {np.array2string(da.upper, precision=3)}, "
                  f"lower |Delta| {np.array2string(da.lower, precision=3)}")
    assert ok


def test_06_weight_numbers(record):
    p = presets.smooth_1(2000)
    eigs = find_eigenvalues(p, DEFAULT_BOX)
    sd = spectral_data_from_eigenvalues(p, eigs)
    worst = 0.0
    for e, beta in zip(eigs, sd.betas):
        if e.multiplicity == 1:
            s, psi = chains(p, e)
            worst = max(worst, ratio_spread(s.members[0], psi.members[0])[1] / abs(beta))
    tr = solve_phi(p, 2.2 + 0.3j, 1)
    s0, s1 = tr.phi
    beta = weights(FunctionChain(tr.lam, tr.phi), FunctionChain(tr.lam, [2 * s0, 3j * s0 + 2 * s1]))
    err = max(abs(beta[0] - 2), abs(beta[1] - 3j))
    ok = worst < 1e-6 and err < 1e-10
    record(6, ok, f"max ratio spread / |beta| {worst:.1e} (< 1e-6), (2, 3i) recovered within {err:.1e} (< 1e-10)")
    assert ok


def test_07_scaling_covariance(record):
    sd = spectral_data(presets.smooth_1(2000), DEFAULT_BOX)
    sc = spectral_data(presets.smooth_1_scaled(2000, 2.0), DEFAULT_BOX)
    same = len(sd) == len(sc)
    dl = np.abs(sd.lambdas - sc.lambdas).max() if same else np.inf
    db = np.abs(sc.betas / (2.0 * sd.betas) - 1).max() if same else np.inf
    ok = same and dl < 1e-8 and db < 1e-6
    record(7, ok, f"max |lambda shift| {dl:.1e} (< 1e-8), max relative beta/(2 beta) - 1 {db:.1e} (< 1e-6)")
    assert ok


def test_08_vanishing_r_example(record):
    t0 = time.perf_counter()
    a, R, V, Vt, Vc = presets.example2_setup(2000)
    main = example2_check(a, R, V, Vt)
    ctrl = example2_check(a, R, V, Vc, control=True)
    dt = time.perf_counter() - t0
    ok = main.passed(1e-7) and ctrl.separated(1e-4) and dt < 300
    record(8, ok, f"vanishing-R pair: max |dlambda| {main.max_lambda_diff:.2e}, max |dbeta| {main.max_beta_diff:.2e}, "
                  f"max |dDelta| {main.max_delta_diff:.2e} (need < 1e-7); control max |dlambda| "
                  f"{ctrl.max_lambda_diff:.2e} (need > 1e-4); runtime {dt:.1f} s")
    assert ok


def test_09_inverse_round_trip(record):
    t0 = time.perf_counter()
    truth = presets.TRUTH_K6
    target = synthetic_target(truth, 2000, INVERSE_BOX)
    opts = RecoveryOptions(grid_n=2000, box=INVERSE_BOX, M=24)
    rep = recover(target, presets.perturbed(truth, 0.1), opts, truth=truth)
    dt = time.perf_counter() - t0
    ok = rep.sup_error_R < 1e-3 and rep.sup_error_V < 1e-3 and rep.iterations <= 100 and dt < 600
    record(9, ok, f"sup error R {rep.sup_error_R:.1e}, V {rep.sup_error_V:.1e} (< 1e-3), "
                  f"{rep.iterations} iterations, converged {rep.converged}, runtime {dt:.1f} s (< 600 s)")
    assert ok


def test_10_determinism(tmp_path, record):
    runs = [["forward", "--preset", "smooth-1"], ["eigs", "--preset", "smooth-1"], ["specdata", "--preset", "smooth-1"]]
    files = {}
    for k in (0, 1):
        out = tmp_path / f"run{k}"
        for argv in runs:
            assert cli.main(argv + ["--out", str(out)]) == 0
        files[k] = {f.name: f.read_bytes() for f in sorted(out.glob("*.csv"))}
    ok = files[0].keys() == files[1].keys() and all(files[0][n] == files[1][n] for n in files[0])
    record(10, ok, f"{len(files[0])} CSV files compared byte for byte across two runs")
    assert ok
