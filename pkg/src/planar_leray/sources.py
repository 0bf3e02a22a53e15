"""Forcing data: tensor sources, compact vector sources and their lift,
and manufactured solutions with closed-form derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    PolarGrid,
    RegionSpec,
    ScalarField,
    TensorField,
    VectorField,
    dirichlet_norm,
    dirichlet_pairing,
    gradient,
    inner_product_l2,
)
from .solver import _refined_solve, stream_space

__all__ = [
    "SourceSpec",
    "ZeroMeanError",
    "CATALOG",
    "bump_derivatives",
    "build_tensor_source",
    "build_vector_source",
    "lift_vector_source",
    "manufacture_solution",
    "pairing_residual",
    "catalog_spec",
    "strong_residual",
    "zero_mean_defect",
]

KINDS = ("tensor-direct", "vector-compact", "manufactured")
TENSOR_SHAPES = ("bump", "shear-bump")
VECTOR_SHAPES = ("dipole", "quadrupole", "monopole")
CATALOG = ("rotating-bump", "offset-bump", "dipole-bump")

# fixed mixing matrix for the plain tensor bump
_TENSOR_PATTERN = np.array([[1.0, 0.5], [-0.3, 0.8]])


class ZeroMeanError(ValueError):
    """A vector source with nonzero net integral cannot be lifted."""

    def __init__(self, integral, l1_norm: float, tol: float):
        self.integral = np.asarray(integral, float)
        self.l1_norm = float(l1_norm)
        super().__init__(
            f"source has net integral ({self.integral[0]:.3e}, {self.integral[1]:.3e}) "
            f"exceeding {tol:.1e} * ||f||_L1 = {tol * l1_norm:.3e}; "
            "no finite-energy lift exists")


@dataclass(frozen=True)
class SourceSpec:
    kind: str
    shape: str = "bump"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    amplitude: float = 1.0
    mu: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "mu", (float(self.mu[0]), float(self.mu[1])))
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        shapes = {"tensor-direct": TENSOR_SHAPES, "vector-compact": VECTOR_SHAPES,
                  "manufactured": CATALOG}[self.kind]
        if self.shape not in shapes:
            raise ValueError(f"shape {self.shape!r} not available for {self.kind}; "
                             f"choose from {shapes}")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("support radius must be finite and positive")

    @property
    def reach(self) -> float:
        """Radius of a disk about the origin containing the support."""
        return math.hypot(*self.center) + self.radius

    def to_json(self) -> dict:
        return {"kind": self.kind, "shape": self.shape, "center": list(self.center),
                "radius": self.radius, "amplitude": self.amplitude, "mu": list(self.mu)}

    @classmethod
    def from_json(cls, d: dict) -> "SourceSpec":
        return cls(**d)


def _check_support(spec: SourceSpec, grid: PolarGrid) -> None:
    if spec.reach > grid.radius * (1 - 1e-12):
        raise ValueError(f"source support reaches {spec.reach:.4g}, beyond the grid "
                         f"radius {grid.radius:.4g}")


# ---------------------------------------------------------------------------
# bump calculus
# ---------------------------------------------------------------------------

def _profile(q: np.ndarray):
    """``g(q) = exp(1/(q-1))`` for ``q < 1`` and its first three derivatives."""
    g = np.zeros((4,) + q.shape)
    inside = q < 1.0
    s = 1.0 / (q[inside] - 1.0)
    e = np.exp(s)
    g[0][inside] = e
    g[1][inside] = -e * s ** 2
    g[2][inside] = e * (s ** 4 + 2 * s ** 3)
    g[3][inside] = -e * (s ** 6 + 6 * s ** 5 + 6 * s ** 4)
    return g


def bump_derivatives(x, y, center, radius: float, amplitude: float = 1.0):
    """Value, gradient, Hessian and third derivatives of
    ``b = amplitude * exp(1/(q - 1))``, ``q = |x - center|^2 / radius^2``.

    Returns arrays ``b``, ``db[..., i]``, ``d2b[..., i, j]``, ``d3b[..., i, j, k]``.
    """
    d = np.stack([np.asarray(x, float) - center[0], np.asarray(y, float) - center[1]], -1)
    r2 = radius * radius
    q = np.sum(d * d, axis=-1) / r2
    g0, g1, g2, g3 = amplitude * _profile(q)
    I = np.eye(2)
    db = (2 * g1 / r2)[..., None] * d
    dd = d[..., :, None] * d[..., None, :]
    d2b = (4 * g2 / r2 ** 2)[..., None, None] * dd + (2 * g1 / r2)[..., None, None] * I
    ddd = dd[..., :, :, None] * d[..., None, None, :]
    sym = (I[:, None, :] * d[..., None, :, None] + I[None, :, :] * d[..., :, None, None]
           + I[:, :, None] * d[..., None, None, :])
    d3b = (8 * g3 / r2 ** 3)[..., None, None, None] * ddd \
        + (4 * g2 / r2 ** 2)[..., None, None, None] * sym
    return g0, db, d2b, d3b


def _catalog_stream(spec: SourceSpec, x, y):
    """Stream function derivatives for a catalog shape (summed over bumps)."""
    cx, cy = spec.center
    rho, a = spec.radius, spec.amplitude
    if spec.shape in ("rotating-bump", "offset-bump"):
        parts = [((cx, cy), rho, a)]
    else:  # dipole-bump: counter-rotating pair inside the support disk
        off = 0.4 * rho
        parts = [((cx + off, cy), 0.6 * rho, a), ((cx - off, cy), 0.6 * rho, -a)]
    out = None
    for c, r, amp in parts:
        terms = bump_derivatives(x, y, c, r, amp)
        out = terms if out is None else tuple(o + t for o, t in zip(out, terms))
    return out


def _velocity_parts(spec: SourceSpec, x, y):
    """``w = grad_perp b``, its Jacobian ``J[i, j] = d_j w_i`` and ``Lap w``."""
    _, db, d2b, d3b = _catalog_stream(spec, x, y)
    w = np.stack([db[..., 1], -db[..., 0]], -1)
    J = np.stack([d2b[..., 1, :], -d2b[..., 0, :]], -2)
    lap_grad = np.einsum("...iik->...k", d3b)
    lap = np.stack([lap_grad[..., 1], -lap_grad[..., 0]], -1)
    return w, J, lap


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_tensor_source(spec: SourceSpec, grid: PolarGrid) -> TensorField:
    """Sample a tensor forcing ``F`` on the grid.

    ``tensor-direct`` shapes are a bump times a fixed matrix (``bump``) or a
    trace-free shear pattern built from the bump gradient (``shear-bump``).
    ``manufactured`` specs return the forcing of :func:`manufacture_solution`.
    """
    if spec.kind == "manufactured":
        return manufacture_solution(spec, grid)[1]
    if spec.kind != "tensor-direct":
        raise ValueError("vector sources are lifted with lift_vector_source")
    _check_support(spec, grid)
    X, Y = grid.coords
    b, db, _, _ = bump_derivatives(X, Y, spec.center, spec.radius, spec.amplitude)
    if spec.shape == "bump":
        vals = b[..., None, None] * _TENSOR_PATTERN
    else:
        s = spec.radius * db
        vals = np.stack([np.stack([s[..., 0], s[..., 1]], -1),
                         np.stack([s[..., 1], -s[..., 0]], -1)], -2)
    return TensorField(grid, vals)


def build_vector_source(spec: SourceSpec, grid: PolarGrid) -> VectorField:
    """Compactly supported vector source ``f``.

    ``dipole`` is the gradient of a bump and ``quadrupole`` a rotated second
    derivative pattern; both have zero net integral, and the small
    quadrature defect is removed by subtracting a multiple of the bump
    itself so the grid integral vanishes to rounding.  ``monopole`` is a bump
    times ``e_x`` and has a nonzero integral on purpose.
    """
    if spec.kind != "vector-compact":
        raise ValueError("expected a vector-compact spec")
    _check_support(spec, grid)
    X, Y = grid.coords
    b, db, d2b, _ = bump_derivatives(X, Y, spec.center, spec.radius, spec.amplitude)
    if spec.shape == "monopole":
        return VectorField.from_components(grid, b, np.zeros_like(b))
    if spec.shape == "dipole":
        f = spec.radius * db
    else:
        f = spec.radius ** 2 * np.stack([d2b[..., 0, 1], d2b[..., 0, 0] - d2b[..., 1, 1]], -1)
    return VectorField(grid, _remove_grid_mean(grid, f, b))


def _remove_grid_mean(grid: PolarGrid, f: np.ndarray, profile: np.ndarray) -> np.ndarray:
    """Subtract a multiple of ``profile`` so the grid integral of ``f`` is zero.

    For sources whose exact integral vanishes this only removes the
    quadrature defect, which is of the order of the quadrature error.
    """
    w = grid.quadrature_weights
    base = np.sum(w * profile)
    if base == 0.0:
        return f
    return f - (np.einsum("jk,jkc->c", w, f) / base)[None, None, :] * profile[..., None]


def zero_mean_defect(f: VectorField) -> tuple[np.ndarray, float]:
    """Componentwise grid integral of ``f`` and its ``L^1`` norm."""
    w = f.grid.quadrature_weights
    integral = np.einsum("jk,jkc->c", w, f.values)
    l1 = float(np.sum(w * np.sqrt(np.sum(f.values ** 2, axis=-1))))
    return integral, l1


def lift_vector_source(f: VectorField, grid: PolarGrid | None = None,
                       omega: RegionSpec | None = None, tol: float = 1e-8) -> TensorField:
    """Tensor ``F`` with ``<f, phi> = -<F, grad phi>`` on solenoidal fields.

    Solves ``<grad U, grad phi> = <f, phi>`` over the clamped solenoidal space
    of the grid disk and returns ``F = -grad U`` (nodal gradient).  ``omega``
    is accepted for interface symmetry: testing against the whole discrete
    space already covers the zero-anchor-mean subspace.

    Raises
    ------
    ZeroMeanError
        If ``|int f| > tol * ||f||_L1`` in either component.
    """
    grid = grid or f.grid
    if not grid.same_as(f.grid):
        raise ValueError("f must be sampled on the lifting grid")
    integral, l1 = zero_mean_defect(f)
    if np.any(np.abs(integral) > tol * l1):
        raise ZeroMeanError(integral, l1, tol)
    if omega is not None and not grid.contains_region(omega):
        raise ValueError("anchor region must lie inside the grid")
    vals = np.zeros(grid.shape + (2, 2))
    if l1 == 0.0:
        return TensorField(grid, vals)
    space = stream_space(grid)
    w = grid.flat_weights
    load = space.velocity.T @ np.concatenate([w * f.component(0), w * f.component(1)])
    chi = _refined_solve(space.stokes_lu, space.stokes, load)
    U = space.field(chi)
    for i in range(2):
        gi = gradient(ScalarField(grid, U.values[..., i]))
        vals[..., i, :] = -gi.values
    return TensorField(grid, vals)


def pairing_residual(f: VectorField, F: TensorField, battery) -> float:
    """``max |<f, phi> + <F, grad phi>| / (||f|| ||grad phi||)`` over a battery."""
    fn = math.sqrt(max(inner_product_l2(f, f), 0.0))
    worst = 0.0
    for phi in battery:
        val = inner_product_l2(f, phi) + dirichlet_pairing(F, phi)
        worst = max(worst, abs(val) / max(fn * dirichlet_norm(phi), 1e-300))
    return worst


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

_CATALOG_DEFAULTS = {
    "rotating-bump": ((0.0, 0.0), 0.6),
    "offset-bump": ((0.25, -0.15), 0.5),
    "dipole-bump": ((0.0, 0.0), 0.7),
}


def catalog_spec(shape: str, amplitude: float = 0.05, mu=(0.0, 0.0),
                 radius: float | None = None, center=None) -> SourceSpec:
    """Catalog entry with its default placement inside the unit disk."""
    if shape not in CATALOG:
        raise ValueError(f"unknown manufactured shape {shape!r}; choose from {CATALOG}")
    c0, r0 = _CATALOG_DEFAULTS[shape]
    return SourceSpec("manufactured", shape, center if center is not None else c0,
                      radius if radius is not None else r0, amplitude, mu)


def manufacture_solution(spec, grid: PolarGrid, route: str = "closed-form"):
    """Exact velocity ``u = mu + grad_perp(b)`` and a forcing it solves.

    ``route="closed-form"`` returns
    ``F = grad w - (mu (x) w + w (x) mu + w (x) w)``, compactly supported with
    ``<F, grad phi> = <grad u, grad phi> + <u . grad u, phi>`` exactly.
    ``route="lift"`` evaluates the strong residual analytically and passes
    it through :func:`lift_vector_source`.

    Returns
    -------
    (VectorField, TensorField)
    """
    if isinstance(spec, str):
        spec = catalog_spec(spec)
    if spec.kind != "manufactured":
        raise ValueError("expected a manufactured spec")
    _check_support(spec, grid)
    X, Y = grid.coords
    w, J, lap = _velocity_parts(spec, X, Y)
    mu = np.asarray(spec.mu)
    u = VectorField(grid, w + mu)
    if route == "closed-form":
        uu = (mu[:, None] * w[..., None, :] + w[..., :, None] * mu[None, :]
              + w[..., :, None] * w[..., None, :])
        return u, TensorField(grid, J - uu)
    if route == "lift":
        adv = np.einsum("...ij,...j->...i", J, w + mu)
        b = bump_derivatives(X, Y, spec.center, spec.radius)[0]
        f = _remove_grid_mean(grid, lap - adv, b)
        return u, lift_vector_source(VectorField(grid, f), grid)
    raise ValueError(f"unknown route {route!r}")


def strong_residual(spec: SourceSpec, x, y) -> np.ndarray:
    """``-Lap u + u . grad u`` of a catalog solution at points."""
    w, J, lap = _velocity_parts(spec, x, y)
    return -lap + np.einsum("...ij,...j->...i", J, w + np.asarray(spec.mu))
