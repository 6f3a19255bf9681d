import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from integro_spectral.errors import FormatError, GridError, ProblemError
from integro_spectral.grid import (ComplexSamples, Grid, Problem, cumulative_integral, integrate,
                                   load_problem_csv, load_samples_csv, make_grid, midpoints,
                                   save_samples_csv, value_at)


def test_make_grid_nodes():
    assert np.array_equal(make_grid(2).nodes, [0, math.pi / 2, math.pi])
    np.testing.assert_allclose(make_grid(4).nodes, [0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi],
                               rtol=0, atol=1e-15)
    g = make_grid(2000)
    assert g.nodes[0] == 0 and g.nodes[-1] == math.pi
    assert np.all(np.diff(g.nodes) > 0)


@pytest.mark.parametrize("n", [3, 0, -2, 1, 2.0, True])
def test_make_grid_rejects(n):
    with pytest.raises(GridError):
        make_grid(n)


def test_integrate_examples():
    g = make_grid(2000)
    assert abs(integrate(ComplexSamples.from_function(lambda x: 1.0, g)) - math.pi) < 1e-14
    assert abs(integrate(ComplexSamples.from_function(lambda x: x, g)) - math.pi ** 2 / 2) < 1e-12
    # Simpson is exact for cubics
    assert abs(integrate(ComplexSamples.from_function(lambda x: x ** 3, make_grid(4))) - math.pi ** 4 / 4) < 1e-12


_coef = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(a=_coef, b=_coef, seed=st.integers(0, 2 ** 32 - 1))
def test_integrate_linear(a, b, seed):
    g = make_grid(64)
    rng = np.random.default_rng(seed)
    f = ComplexSamples(g, rng.normal(size=65) + 1j * rng.normal(size=65))
    h = ComplexSamples(g, rng.normal(size=65) + 1j * rng.normal(size=65))
    lhs = integrate(a * f + b * h)
    scale = max(np.abs(f.values).max(), np.abs(h.values).max())
    assert abs(lhs - a * integrate(f) - b * integrate(h)) < 1e-13 * (abs(a) + abs(b) + 1e-300) * scale * math.pi


def test_integrate_refinement_sixteen():
    f = lambda x: np.exp(x / 2) + 1j * x ** 5
    I = [integrate(ComplexSamples.from_function(f, make_grid(n))) for n in (20, 40, 80, 160)]
    diffs = [abs(I[k + 1] - I[k]) for k in range(3)]
    for d0, d1 in zip(diffs, diffs[1:]):
        assert 12 < d0 / d1 < 20


def test_value_at_examples():
    g = make_grid(200)
    f = ComplexSamples.from_function(lambda x: np.sin(x) + 1j * x, g)
    for k in (0, 1, 57, 199, 200):
        assert value_at(f, g.nodes[k]) == f.values[k]
    assert abs(value_at(f, 1.0).real - math.sin(1.0)) < 1e-8
    q = ComplexSamples.from_function(lambda x: x ** 2, g)
    mids = g.nodes[:-1] + g.h / 2
    np.testing.assert_allclose(value_at(q, mids).real, mids ** 2, rtol=0, atol=1e-13)
    np.testing.assert_allclose(midpoints(q.values, g).real, mids ** 2, rtol=0, atol=1e-13)


@pytest.mark.parametrize("x", [-1e-9, math.pi + 1e-9, float("nan")])
def test_value_at_rejects(x):
    f = ComplexSamples(make_grid(4), np.zeros(5))
    with pytest.raises(GridError):
        value_at(f, x)


@settings(max_examples=40, deadline=None)
@given(c=st.lists(st.floats(-5, 5), min_size=4, max_size=4), x=st.floats(0, math.pi))
def test_cubic_reproduced(c, x):
    g = make_grid(16)
    poly = lambda t: c[0] + c[1] * t + c[2] * t ** 2 + c[3] * t ** 3
    f = ComplexSamples.from_function(poly, g)
    assert abs(value_at(f, x) - poly(x)) < 1e-10 * (1 + sum(abs(v) for v in c) * 40)


def test_cumulative_integral_fourth_order():
    errs = []
    for n in (50, 100, 200):
        g = make_grid(n)
        F = cumulative_integral(np.cos(g.nodes), g)
        errs.append(np.max(np.abs(F - np.sin(g.nodes))))
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12
    g = make_grid(10)
    np.testing.assert_allclose(cumulative_integral(g.nodes ** 3, g), g.nodes ** 4 / 4, atol=1e-13)


def test_samples_validation():
    g = make_grid(4)
    with pytest.raises(GridError):
        ComplexSamples(g, np.zeros(4))
    with pytest.raises(GridError):
        ComplexSamples(g, [0, 1, np.inf, 0, 0])
    with pytest.raises(GridError):
        ComplexSamples(g, np.zeros(5)) + ComplexSamples(make_grid(6), np.zeros(7))


def test_problem_endpoint_checks():
    g = make_grid(8)
    one = ComplexSamples(g, np.ones(9))
    p = Problem(g, 2 * one, 3 * one)
    assert p.Calpha == 2 and p.Dbeta == 3 and p.gamma == 1.0
    with pytest.raises(ProblemError):
        Problem(g, ComplexSamples(g, np.r_[np.ones(8), 0]), one)
    with pytest.raises(ProblemError):
        Problem(g, one, one, Calpha=5.0)
    with pytest.raises(ProblemError):
        Problem(g, one, one, alpha=1.0)
    q = Problem(g, one, one, alpha=1.0, Calpha=0.5j)
    assert q.gamma == 2.0 and q.Calpha == 0.5j
    with pytest.raises(ProblemError):
        Problem(g, one, ComplexSamples(make_grid(4), np.ones(5)))


def test_samples_csv_roundtrip(tmp_path):
    g = make_grid(10)
    f = ComplexSamples.from_function(lambda x: np.exp(1j * x) + 0.1, g)
    save_samples_csv(tmp_path / "r.csv", f)
    save_samples_csv(tmp_path / "v.csv", f * 2)
    back = load_samples_csv(tmp_path / "r.csv")
    assert back.grid == g and np.array_equal(back.values, f.values)
    p = load_problem_csv(tmp_path / "r.csv", tmp_path / "v.csv")
    assert np.array_equal(p.V.values, 2 * f.values)


def test_samples_csv_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,value_re,value_im\n0,1,0\n1.5707963267948966,1\n3.141592653589793,1,0\n")
    with pytest.raises(FormatError, match=":3:"):
        load_samples_csv(bad)
    bad.write_text("x,value_re,value_im\n0,1,0\n1.0,1,0\n3.141592653589793,1,0\n")
    with pytest.raises(GridError):
        load_samples_csv(bad)
