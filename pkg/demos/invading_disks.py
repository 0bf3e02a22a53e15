"""Invading-disk ladder for a small compactly supported forcing.

Solves on disks of radius 4, 8 and 16 with a fixed number of rings per unit
length and prints the boundary shift c and the L4 distance on B_2 between
consecutive rungs.
"""

import logging

from planar_leray import RegionSpec, SolveConfig
from planar_leray.invading import run_invading
from planar_leray.sources import SourceSpec

logging.basicConfig(level=logging.INFO, format="%(message)s")

source = SourceSpec("manufactured", "offset-bump", (0.25, -0.15), 0.5, 0.2, (0.5, 0.0))
config = SolveConfig(mu=(0.2, 0.1), omega=RegionSpec.disk((0.0, 0.0), 0.5))
report = run_invading([4.0, 8.0, 16.0], source, config, monitor_radius=2.0,
                      points_per_unit=8, n_theta=64, workers=3)

for row in report.per_radius:
    print(f"R = {row['radius']:5.1f}: c = ({row['c'][0]: .4e}, {row['c'][1]: .4e}), "
          f"|grad v| = {row['grad_norm']:.4e}")
for d in report.distances:
    print(f"|u_{d['radius']:g} - u_{d['previous']:g}|_L4(B_2) = {d['L4']:.4e} "
          f"(+- {d['L4_interpolation_error']:.1e})")
print("distances decreasing:", report.decreasing)
