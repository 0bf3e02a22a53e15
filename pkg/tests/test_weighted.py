import math

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from planar_leray.geometry import RegionSpec, ScalarField, VectorField, make_polar_grid, perp_gradient
from planar_leray.weighted import (
    PROFILE_SUP_D1,
    PROFILE_SUP_D2,
    CutoffFamily,
    PathDependenceError,
    certify_constant,
    cutoff_certificate,
    estimate_hardy_constant,
    estimate_poincare_constant,
    plateau_radius,
    plateau_threshold,
    profile,
    reconstruct_stream,
    weight_w,
)


def _mp_profile(t):
    s = 2 * t - 1
    return 1 - 1 / (1 + mpmath.exp(1 / s - 1 / (1 - s)))


def test_weight_values():
    assert weight_w([0.0, 0.0]) == pytest.approx(1.0)
    r = math.e - 1  # <r> = e, <log<r>> = 2
    assert weight_w([0.0, r]) == pytest.approx(1 / (2 * math.e))


def test_profile_matches_symbolic_derivatives():
    t = sympy.symbols("t")
    s = 2 * t - 1
    p = 1 - 1 / (1 + sympy.exp(1 / s - 1 / (1 - s)))
    d1, d2 = sympy.diff(p, t), sympy.diff(p, t, 2)
    pts = np.linspace(0.52, 0.98, 17)
    for order, expr in enumerate([p, d1, d2]):
        f = sympy.lambdify(t, expr, "mpmath")
        ref = np.array([float(f(mpmath.mpf(x))) for x in pts])
        assert np.allclose(profile(pts, order), ref, rtol=1e-10, atol=1e-12)


def test_profile_flat_pieces():
    assert np.all(profile(np.array([0.0, 0.3, 0.5]), 0) == 1.0)
    assert np.all(profile(np.array([1.0, 2.0]), 0) == 0.0)
    assert np.all(profile(np.array([0.2, 1.5]), 2) == 0.0)


def test_profile_constants_against_high_precision():
    # sup |p'| sits at t = 3/4 where it equals 4; sup |p''| is found by a
    # root of p''' polished at 40 digits
    mpmath.mp.dps = 40
    try:
        d1 = abs(mpmath.diff(_mp_profile, mpmath.mpf(3) / 4))
        assert float(d1) == pytest.approx(4.0, rel=1e-30)
        ts = np.linspace(0.501, 0.999, 4000)
        t0 = ts[np.argmax(np.abs(profile(ts, 2)))]
        tstar = mpmath.findroot(lambda x: mpmath.diff(_mp_profile, x, 3), mpmath.mpf(t0))
        d2 = float(abs(mpmath.diff(_mp_profile, tstar, 2)))
    finally:
        mpmath.mp.dps = 15
    assert d2 <= PROFILE_SUP_D2 and PROFILE_SUP_D2 == pytest.approx(d2, rel=1e-8)
    assert 4.0 <= PROFILE_SUP_D1 <= 4.0 * (1 + 1e-11)
    dense = np.linspace(0.5, 1.0, 200001)
    assert np.max(np.abs(profile(dense, 1))) <= PROFILE_SUP_D1
    assert np.max(np.abs(profile(dense, 2))) <= PROFILE_SUP_D2


@pytest.mark.parametrize("kind", ["psi", "eta"])
def test_threshold_gives_unit_plateau(kind):
    n0 = plateau_threshold(kind)
    assert plateau_radius(kind, n0 * (1 + 1e-9)) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        CutoffFamily(kind, n0 * 0.99)


def test_plateau_formula():
    n = 500.0
    assert plateau_radius("psi", n) == pytest.approx(
        math.exp(math.sqrt(1 + math.log(1 + n)) - 1) - 1)


@pytest.mark.parametrize("kind,n", [("psi", 20.0), ("eta", 400.0)])
def test_cutoff_certificate_small(kind, n):
    fam = CutoffFamily(kind, n)
    cert = cutoff_certificate(fam, make_polar_grid(n * 1.1, 800, 16))
    assert cert["passed"], cert


def test_cutoff_needs_large_enough_grid():
    with pytest.raises(ValueError):
        cutoff_certificate(CutoffFamily("psi", 50.0), make_polar_grid(10.0, 50, 8))


def test_poincare_full_disk_matches_constant_mode():
    # constants give ||u||^2 = pi |c|^2 and mean c, so Lambda = pi; the next
    # mode is the first Neumann eigenfunction, eigenvalue 1 / j'_{1,1}^2
    g = make_polar_grid(1.0, 16, 32)
    est = estimate_poincare_constant(g, RegionSpec.disk((0, 0), 1.0))
    assert est.value == pytest.approx(math.sqrt(math.pi), rel=1e-3)
    jp11 = 1.8411837813406593
    assert est.next_eigenvalue == pytest.approx(1 / jp11 ** 2, rel=1e-2)


@pytest.mark.parametrize("which", ["poincare", "hardy"])
def test_sparse_matches_dense(which):
    g = make_polar_grid(1.0, 10, 20)
    om = RegionSpec.disk((0.1, 0.0), 0.3)
    fn = estimate_poincare_constant if which == "poincare" else estimate_hardy_constant
    a, b = fn(g, om, "sparse"), fn(g, om, "dense")
    assert a.value == pytest.approx(b.value, rel=1e-9)


def test_hardy_certificate_and_sharpness():
    g = make_polar_grid(2.0, 12, 24)
    est = estimate_hardy_constant(g, RegionSpec.disk((0.0, 0.0), 0.5))
    cert = certify_constant(est, g, samples=300)
    assert cert["violations"] == 0
    assert 0.1 < cert["max_ratio"] <= 1.0
    too_small = type(est)(**{**est.__dict__, "value": 0.4 * est.value})
    assert certify_constant(too_small, g, samples=300)["violations"] > 0


def test_certify_rejects_other_grid():
    g = make_polar_grid(1.0, 8, 16)
    est = estimate_poincare_constant(g, RegionSpec.disk((0, 0), 0.5))
    with pytest.raises(ValueError):
        certify_constant(est, make_polar_grid(1.0, 10, 16))


def test_stream_round_trip():
    errs = []
    for n in (32, 64):
        g = make_polar_grid(1.0, n, 2 * n)
        psi = ScalarField.from_function(g, lambda x, y: np.exp(-4 * ((x - 0.2) ** 2 + y ** 2)) * y)
        back = reconstruct_stream(perp_gradient(psi))
        X, Y = g.coords
        exact = psi.values - 0.0  # psi(0) = 0 for this choice
        errs.append(np.max(np.abs(back.values - exact)))
    assert errs[1] < errs[0] / 3


def test_constant_field_stream_is_linear():
    g = make_polar_grid(1.0, 24, 48)
    v = VectorField.constant(g, (0.7, -0.2))
    psi = reconstruct_stream(v)
    X, Y = g.coords
    # grad_perp psi = (psi_y, -psi_x) = v  =>  psi = 0.7 y + 0.2 x
    assert np.max(np.abs(psi.values - (0.7 * Y + 0.2 * X))) < 1e-5


def test_non_solenoidal_field_rejected():
    g = make_polar_grid(1.0, 24, 48)
    with pytest.raises(PathDependenceError):
        reconstruct_stream(VectorField.from_function(g, lambda x, y: (x, y)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e6), st.floats(0.0, 1e6))
def test_weight_is_decreasing(r1, r2):
    lo, hi = sorted([r1, r2])
    assert weight_w([hi, 0.0]) <= weight_w([lo, 0.0])


@settings(max_examples=20, deadline=None)
@given(st.floats(6.0, 1e3))
def test_psi_cutoff_bounds_property(n):
    fam = CutoffFamily("psi", n)
    r = np.linspace(0.0, n, 3001)
    f0, f1, _ = fam.radial(r)
    assert np.all((f0 >= 0) & (f0 <= 1))
    assert np.all(np.abs(f1) <= fam.gradient_bound(r))
