"""Mean-anchored planar steady Navier-Stokes on invading disks.

Submodules: :mod:`.geometry` (polar grids, fields, quadrature),
:mod:`.weighted` (weight, cutoffs, constants), :mod:`.sources` (forcing),
:mod:`.solver` (disk solver), :mod:`.invading` (radius ladder),
:mod:`.audit` (uniqueness audit) and :mod:`.cli`.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    PolarGrid,
    RegionSpec,
    ScalarField,
    TensorField,
    VectorField,
    make_polar_grid,
    mean_over,
)
from .solver import ConvergenceError, DiskSolution, SolveConfig, solve_disk  # noqa: E402
from .sources import SourceSpec, catalog_spec, manufacture_solution  # noqa: E402
