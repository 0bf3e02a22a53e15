"""Poincare and Hardy constants anchored on a small disk, with certificates.

The Poincare constant grows with the disk radius.  The Hardy constant, whose
weight decays like 1 / (|x| log |x|), grows much more slowly.
"""

from planar_leray import RegionSpec, make_polar_grid
from planar_leray.weighted import (
    certify_constant,
    estimate_hardy_constant,
    estimate_poincare_constant,
)

anchor = RegionSpec.disk((0.0, 0.0), 0.5)
for radius in (1.0, 2.0, 4.0, 8.0):
    grid = make_polar_grid(radius, 32, 64)
    cells = []
    for fn in (estimate_poincare_constant, estimate_hardy_constant):
        est = fn(grid, anchor)
        cert = certify_constant(est, grid, samples=1000)
        cells.append(f"{est.inequality} {est.value:8.4f} ({cert['violations']} violations)")
    print(f"R = {radius:4.1f}: " + ", ".join(cells))
