from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planar_leray.audit import (
    AuditInconsistency,
    HypothesisViolation,
    audit_fields,
    audit_pair,
    check_skew_symmetry,
    discrete_flux_divergence,
    measure_decay_envelope,
)
from planar_leray.geometry import (
    GridMismatchError,
    RegionSpec,
    VectorField,
    make_polar_grid,
    mean_weights,
)
from planar_leray.solver import SolveConfig, solve_disk
from planar_leray.sources import catalog_spec, manufacture_solution

OMEGA = RegionSpec.disk((0.1, 0.0), 0.3)


@pytest.fixture(scope="module")
def pair(grid32):
    _, F = manufacture_solution(catalog_spec("rotating-bump", mu=(0.4, -0.2)), grid32)
    cfg = SolveConfig(mu=(0.4, -0.2), omega=OMEGA)
    a = solve_disk(grid32, F, cfg)
    b = solve_disk(grid32, F, replace(cfg, homotopy_steps=3, damping=0.7))
    return a, b


def test_independent_runs_audit_as_unique(pair):
    a, b = pair
    rep = audit_pair(a, b)
    assert rep.verdict == "unique-regime" and rep.consistent
    assert rep.contraction_factor < 1
    assert rep.grad_d_norm <= rep.tolerance
    assert "unique-regime" in rep.line()


def test_mean_gap_is_a_hypothesis_violation(pair):
    a, _ = pair
    shifted = VectorField(a.grid, a.u.values + 0.1)
    with pytest.raises(HypothesisViolation):
        audit_fields(a.u, shifted, OMEGA, a.boundary_value, 1e-10)


def test_inconsistent_verdict_is_raised(pair):
    # same mean and a small envelope, but a gap far above solver tolerance
    a, _ = pair
    X, Y = a.grid.coords
    bump = np.exp(-20 * ((X + 0.5) ** 2 + Y ** 2))
    m = mean_weights(a.grid, OMEGA)
    wiggle = 1e-3 * (bump - m @ bump.ravel())
    other = VectorField(a.grid, a.u.values + wiggle[..., None])
    with pytest.raises(AuditInconsistency) as info:
        audit_fields(a.u, other, OMEGA, a.boundary_value, 1e-10)
    assert not info.value.report.consistent
    rep = audit_fields(a.u, other, OMEGA, a.boundary_value, 1e-10, strict=False)
    assert rep.verdict == "unique-regime" and not rep.consistent


def test_large_envelope_is_inconclusive(pair):
    a, b = pair
    rep = audit_pair(a, b, u_inf=(10.0, 0.0))
    assert rep.verdict == "inconclusive" and rep.consistent


def test_decay_envelope_of_constant_is_zero(grid16):
    v = VectorField.constant(grid16, (0.3, 0.4))
    assert measure_decay_envelope(v, (0.3, 0.4)) == 0.0
    # |v| / w(x) peaks on the outer ring, where w(1) = 1 / (2 (1 + log 2))
    assert measure_decay_envelope(v, (0.0, 0.0)) == pytest.approx(0.5 * 2 * (1 + np.log(2)))


def test_grid_mismatch(grid16, grid32):
    with pytest.raises(GridMismatchError):
        audit_fields(VectorField.constant(grid16, (0, 0)), VectorField.constant(grid32, (0, 0)),
                     OMEGA, (0, 0), 1e-10)


def _zero_trace_noise(g, rng):
    vals = rng.normal(size=g.shape + (2,))
    vals[-1] = 0.0
    return VectorField(g, vals)


@pytest.mark.parametrize("u", [(0.3, -0.7), "rotation"])
def test_skew_exact_for_discretely_solenoidal(u, rng):
    g = make_polar_grid(1.0, 24, 48)
    if u == "rotation":
        field = VectorField.from_function(g, lambda x, y: (-y, x))
    else:
        field = VectorField.constant(g, u)
    # interior dual cells have zero net flux; the boundary ring carries the
    # outflow, which test fields with zero trace never see
    assert np.max(np.abs(discrete_flux_divergence(field)[:-g.n_theta])) < 1e-13
    assert check_skew_symmetry(field, _zero_trace_noise(g, rng)) < 1e-12


def test_skew_detects_divergence(rng):
    g = make_polar_grid(1.0, 24, 48)
    u = VectorField.from_function(g, lambda x, y: (x, y))
    v = VectorField.from_function(g, lambda x, y: (1 - x * x - y * y, (1 - x * x - y * y) * x))
    assert check_skew_symmetry(u, v) > 1e-2


def test_skew_zero_for_zero_test_field(grid16):
    u = VectorField.constant(grid16, (1.0, 2.0))
    assert check_skew_symmetry(u, VectorField.constant(grid16, (0.0, 0.0))) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5))
def test_envelope_homogeneity(s):
    g = make_polar_grid(2.0, 10, 20)
    u_inf = np.array([0.3, -0.1])
    dev = VectorField.from_function(g, lambda x, y: (np.exp(-x * x - y * y), np.sin(x) / (1 + y * y)))
    lhs = measure_decay_envelope(VectorField(g, u_inf + s * dev.values), u_inf)
    rhs = abs(s) * measure_decay_envelope(VectorField(g, u_inf + dev.values), u_inf)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)
