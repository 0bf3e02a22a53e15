import csv

import numpy as np
import pytest

from planar_leray.geometry import RegionSpec
from planar_leray.invading import (
    compact_distance,
    extended_values,
    forcing_on,
    ladder_grid,
    run_invading,
)
from planar_leray.solver import SolveConfig, solve_disk
from planar_leray.sources import SourceSpec

SOURCE = SourceSpec("manufactured", "offset-bump", (0.25, -0.15), 0.5, 0.2, (0.5, 0.0))
CONFIG = SolveConfig(mu=(0.2, 0.1), omega=RegionSpec.disk((0.0, 0.0), 0.5))


@pytest.fixture(scope="module")
def ladder():
    return run_invading([2.0, 4.0], SOURCE, CONFIG, monitor_radius=1.0, points_per_unit=8,
                        n_theta=32)


def test_ladder_grid_resolution():
    g = ladder_grid(4.0, 8, 32)
    assert g.n_r == 32 and g.radius == 4.0


def test_report_contents(ladder, tmp_path):
    assert ladder.complete and ladder.decreasing is None
    assert len(ladder.per_radius) == 2 and len(ladder.distances) == 1
    d = ladder.distances[0]
    assert d["L4"] > d["L4_interpolation_error"]
    path = tmp_path / "conv.csv"
    ladder.write_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert [r["distance_to_previous"] == "" for r in rows] == [True, False]
    assert float(rows[1]["grad_norm"]) == pytest.approx(ladder.per_radius[1]["grad_norm"])


def test_anchored_mean_on_every_rung(ladder):
    for row in ladder.per_radius:
        assert np.allclose(row["anchored_mean"], CONFIG.mu, atol=1e-12)


def test_distance_properties(ladder):
    a, b = ladder.solutions
    assert compact_distance(a, a, 1.0) == 0.0
    assert compact_distance(a, b, 1.0) == pytest.approx(compact_distance(b, a, 1.0))
    assert compact_distance(a, b, 0.5) <= compact_distance(a, b, 1.0)
    with pytest.raises(ValueError):
        compact_distance(a, b, 3.0)
    with pytest.raises(ValueError):
        compact_distance(a, b, 1.0, norm="L3")


def test_extension_outside_disk(ladder):
    sol = ladder.solutions[0]
    vals = extended_values(sol, np.array([5.0, 0.0]), np.array([0.0, 7.0]))
    assert np.allclose(vals, sol.boundary_value)


@pytest.mark.parametrize("radii,m", [([2.0, 1.5], 1.0), ([2.0, 4.0], 2.5), ([2.0, 4.0], 0.2)])
def test_invalid_ladders(radii, m):
    with pytest.raises(ValueError):
        run_invading(radii, SOURCE, CONFIG, monitor_radius=m)


def test_threads_give_same_result():
    one = run_invading([2.0, 3.0], SOURCE, CONFIG, 1.0, 6, 32, workers=1)
    two = run_invading([2.0, 3.0], SOURCE, CONFIG, 1.0, 6, 32, workers=2)
    assert one.distances[0]["L4"] == pytest.approx(two.distances[0]["L4"], rel=1e-12)


def test_vector_source_is_lifted_per_rung():
    g = ladder_grid(2.0, 8, 32)
    F = forcing_on(SourceSpec("vector-compact", "dipole", (0.0, 0.0), 0.5), g)
    sol = solve_disk(g, F, CONFIG)
    assert sol.grad_norm > 0
