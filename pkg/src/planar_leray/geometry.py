"""Polar grids on origin-centred disks, grid-sampled fields and the discrete
operators every other module is built from.

Layout
------
A grid of radius ``R`` carries ``n_r`` rings at ``r_j = (j + 1/2) h`` with
``h = R / (n_r - 1/2)``, so there is no node at the pole and the last ring
sits exactly on the boundary.  Each ring has ``n_theta`` equispaced angles
``theta_k = 2 pi k / n_theta``.  Flat node index is ``j * n_theta + k``
(ring outer).

Seen along a diameter the nodes ``+-(j + 1/2) h`` are uniformly spaced, which
is how the radial stencils cross the pole: the neighbour of ring 0 at angle
``theta`` is ring 0 at ``theta + pi``.

Two families of operators live here:

* nodal Cartesian derivatives (``gradient``, ``perp_gradient``,
  ``divergence``), second order, exact on affine fields;
* an edge-based Dirichlet form on the polygonal dual mesh, used for every
  ``||grad u||`` and ``<F, grad u>`` pairing so that the energy bookkeeping of
  the solver is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "PolarGrid",
    "ScalarField",
    "VectorField",
    "TensorField",
    "RegionSpec",
    "Edges",
    "GridMismatchError",
    "make_polar_grid",
    "gradient",
    "perp_gradient",
    "divergence",
    "inner_product_l2",
    "mean_over",
    "mean_weights",
    "interpolation_matrix",
    "interpolate",
    "edge_gradient",
    "dirichlet_norm",
    "tensor_edge_values",
    "tensor_edge_norm",
    "dirichlet_pairing",
    "write_field_csv",
    "read_field_csv",
    "grid_metadata",
]

MIN_RADIAL = 8
MIN_ANGULAR = 8
GRADING = "half-shifted-uniform"


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _lagrange_basis(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange basis polynomials of ``nodes`` evaluated at ``x``.

    Returns shape ``(len(x), len(nodes))``.
    """
    x = np.atleast_1d(x)[:, None]
    out = np.ones((x.shape[0], nodes.size))
    for m in range(nodes.size):
        for l in range(nodes.size):
            if l != m:
                out[:, m] *= (x[:, 0] - nodes[l]) / (nodes[m] - nodes[l])
    return out


def _diameter_weights(n_r: int, h: float) -> np.ndarray:
    """Weights ``c_i`` with ``sum c_i g(s_i) ~ int_{-R}^{R} |s| g(s) ds``.

    ``s_i = (i - n_r + 1/2) h`` are the ``2 n_r`` nodes of one diameter.  On
    each interval a cubic through the four surrounding nodes is integrated
    against ``|s|`` exactly (Gauss-Legendre, split at the origin).
    """
    m = 2 * n_r
    s = (np.arange(m) - n_r + 0.5) * h
    c = np.zeros(m)
    gx, gw = np.polynomial.legendre.leggauss(6)
    for i in range(m - 1):
        start = min(max(i - 1, 0), m - 4)
        stencil = s[start:start + 4]
        a, b = s[i], s[i + 1]
        pieces = [(a, b)] if a * b >= 0 else [(a, 0.0), (0.0, b)]
        for lo, hi in pieces:
            x = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * gw * np.abs(x)
            c[start:start + 4] += w @ _lagrange_basis(stencil, x)
    return c


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Tensor-product polar grid on the disk ``B_radius``.

    Build it with :func:`make_polar_grid`, which validates the arguments.
    Operators and quadrature are computed lazily and cached; the grid itself
    is immutable.
    """

    radius: float
    n_r: int
    n_theta: int

    @property
    def h(self) -> float:
        return self.radius / (self.n_r - 0.5)

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @cached_property
    def radial_nodes(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.h

    @cached_property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian node coordinates, each of shape ``(n_r, n_theta)``."""
        r = self.radial_nodes[:, None]
        t = self.angles[None, :]
        return r * np.cos(t), r * np.sin(t)

    @cached_property
    def r_mesh(self) -> np.ndarray:
        return np.broadcast_to(self.radial_nodes[:, None], self.shape)

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Per-node area weights, shape ``(n_r, n_theta)``.

        Trapezoidal in angle and cubic-interpolatory in the signed diameter
        coordinate with Jacobian ``|s|``; exact for polynomials of degree 3
        along every diameter.
        """
        c = _diameter_weights(self.n_r, self.h)
        radial = c[self.n_r:]  # symmetric, positive half
        return np.repeat(radial[:, None] * self.dtheta, self.n_theta, axis=1)

    @cached_property
    def flat_weights(self) -> np.ndarray:
        return self.quadrature_weights.ravel()

    # -- nodal difference operators ------------------------------------
    @cached_property
    def d_r(self) -> sp.csr_matrix:
        """Radial derivative along diameters, second order.

        Centred everywhere except the boundary ring, which uses the
        one-sided three-point formula.  Ring 0 borrows its inner neighbour
        from angle ``theta + pi``.
        """
        nr, nt, h = self.n_r, self.n_theta, self.h
        k = np.arange(nt)
        rows, cols, vals = [], [], []

        def add(rr, cc, vv):
            rows.append(rr)
            cols.append(cc)
            vals.append(np.full(rr.shape, vv) if np.isscalar(vv) else vv)

        for j in range(nr - 1):
            row = j * nt + k
            add(row, (j + 1) * nt + k, 1.0 / (2 * h))
            inner = (j - 1) * nt + k if j > 0 else (k + nt // 2) % nt
            add(row, inner, -1.0 / (2 * h))
        j = nr - 1
        row = j * nt + k
        add(row, j * nt + k, 3.0 / (2 * h))
        add(row, (j - 1) * nt + k, -4.0 / (2 * h))
        add(row, (j - 2) * nt + k, 1.0 / (2 * h))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )

    @cached_property
    def d_theta(self) -> sp.csr_matrix:
        """Angular derivative; the centred difference is divided by
        ``2 sin(dtheta)`` so that ``cos`` and ``sin`` are differentiated
        exactly."""
        nt = self.n_theta
        scale = 1.0 / (2.0 * math.sin(self.dtheta))
        circ = sp.diags([scale, -scale, scale, -scale], [1, -1, -(nt - 1), nt - 1],
                        shape=(nt, nt))
        return sp.kron(sp.identity(self.n_r), circ, format="csr")

    @cached_property
    def d_x(self) -> sp.csr_matrix:
        x, y = self.coords
        r = self.r_mesh.ravel()
        c, s = (x.ravel() / r), (y.ravel() / r)
        return (sp.diags(c) @ self.d_r - sp.diags(s / r) @ self.d_theta).tocsr()

    @cached_property
    def d_y(self) -> sp.csr_matrix:
        x, y = self.coords
        r = self.r_mesh.ravel()
        c, s = (x.ravel() / r), (y.ravel() / r)
        return (sp.diags(s) @ self.d_r + sp.diags(c / r) @ self.d_theta).tocsr()

    @cached_property
    def edges(self) -> "Edges":
        return Edges.build(self)

    def same_as(self, other: "PolarGrid") -> bool:
        return (self is other) or (
            self.n_r == other.n_r
            and self.n_theta == other.n_theta
            and math.isclose(self.radius, other.radius, rel_tol=0, abs_tol=0)
        )

    def contains_region(self, region: "RegionSpec") -> bool:
        return region.max_radius() <= self.radius * (1 + 1e-12)


def make_polar_grid(radius: float, n_r: int, n_theta: int) -> PolarGrid:
    """Create a :class:`PolarGrid` after checking the constructor contract."""
    if not (radius > 0 and math.isfinite(radius)):
        raise ValueError(f"radius must be positive and finite, got {radius!r}")
    if int(n_r) != n_r or n_r < MIN_RADIAL:
        raise ValueError(f"n_r must be an integer >= {MIN_RADIAL}, got {n_r!r}")
    if int(n_theta) != n_theta or n_theta < MIN_ANGULAR or n_theta % 2:
        raise ValueError(f"n_theta must be an even integer >= {MIN_ANGULAR}, got {n_theta!r}")
    return PolarGrid(float(radius), int(n_r), int(n_theta))


def grid_metadata(grid: PolarGrid) -> dict:
    return {"radius": grid.radius, "n_r": grid.n_r, "n_theta": grid.n_theta,
            "grading": GRADING}


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{what} contains NaN or Inf")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        _check_finite(v, "ScalarField")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_function(cls, grid: PolarGrid, fn) -> "ScalarField":
        x, y = grid.coords
        return cls(grid, np.broadcast_to(fn(x, y), grid.shape))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _values_like(self, other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _values_like(self, other))

    def __mul__(self, s: float):
        return ScalarField(self.grid, self.values * s)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Cartesian vector samples, ``values.shape == (n_r, n_theta, 2)``."""

    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape + (2,))
        _check_finite(v, "VectorField")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.values[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.values[..., 1]

    def component(self, c: int) -> np.ndarray:
        """Flat samples of Cartesian component ``c``."""
        return self.values[..., c].ravel()

    @classmethod
    def from_components(cls, grid: PolarGrid, vx, vy) -> "VectorField":
        vx = np.broadcast_to(np.asarray(vx, float).reshape(-1) if np.ndim(vx) else vx,
                             (grid.size,)).reshape(grid.shape)
        vy = np.broadcast_to(np.asarray(vy, float).reshape(-1) if np.ndim(vy) else vy,
                             (grid.size,)).reshape(grid.shape)
        return cls(grid, np.stack([vx, vy], axis=-1))

    @classmethod
    def constant(cls, grid: PolarGrid, c) -> "VectorField":
        c = np.asarray(c, float)
        return cls(grid, np.broadcast_to(c, grid.shape + (2,)))

    @classmethod
    def from_function(cls, grid: PolarGrid, fn) -> "VectorField":
        x, y = grid.coords
        vx, vy = fn(x, y)
        return cls.from_components(grid, np.broadcast_to(vx, grid.shape),
                                   np.broadcast_to(vy, grid.shape))

    def __add__(self, other):
        return VectorField(self.grid, self.values + _values_like(self, other))

    def __sub__(self, other):
        return VectorField(self.grid, self.values - _values_like(self, other))

    def __mul__(self, s: float):
        return VectorField(self.grid, self.values * s)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Rank-two tensor samples, ``values[..., i, j]`` is ``F_ij``.

    The contraction with a velocity gradient is ``sum_ij F_ij d_j u_i``.
    """

    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape + (2, 2))
        _check_finite(v, "TensorField")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: PolarGrid) -> "TensorField":
        return cls(grid, np.zeros(grid.shape + (2, 2)))

    def __add__(self, other):
        return TensorField(self.grid, self.values + _values_like(self, other))

    def __mul__(self, s: float):
        return TensorField(self.grid, self.values * s)

    __rmul__ = __mul__


Field = Union[ScalarField, VectorField, TensorField]


def _values_like(a, b):
    if isinstance(b, (ScalarField, VectorField, TensorField)):
        _require_same_grid(a.grid, b.grid)
        return b.values
    return np.asarray(b, float)


def _require_same_grid(g1: PolarGrid, g2: PolarGrid) -> None:
    if not g1.same_as(g2):
        raise GridMismatchError(
            f"fields live on different grids: {grid_metadata(g1)} vs {grid_metadata(g2)}")


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionSpec:
    """Anchor set: a disk, an annular sector or an axis-aligned rectangle.

    ``params`` holds

    * disk: ``center`` (x, y), ``radius``;
    * annular-sector: ``center``, ``r_inner``, ``r_outer``, ``theta_start``,
      ``theta_end`` (radians, ``theta_start < theta_end``);
    * rectangle: ``xmin``, ``xmax``, ``ymin``, ``ymax``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("disk", "annular-sector", "rectangle"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.measure > 0:
            raise ValueError(f"region {self} has non-positive measure")

    @classmethod
    def disk(cls, center=(0.0, 0.0), radius=1.0) -> "RegionSpec":
        return cls("disk", (("center", (float(center[0]), float(center[1]))),
                            ("radius", float(radius))))

    @classmethod
    def annular_sector(cls, r_inner, r_outer, theta_start, theta_end,
                       center=(0.0, 0.0)) -> "RegionSpec":
        return cls("annular-sector", (("center", (float(center[0]), float(center[1]))),
                                      ("r_inner", float(r_inner)), ("r_outer", float(r_outer)),
                                      ("theta_start", float(theta_start)),
                                      ("theta_end", float(theta_end))))

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax) -> "RegionSpec":
        return cls("rectangle", (("xmin", float(xmin)), ("xmax", float(xmax)),
                                 ("ymin", float(ymin)), ("ymax", float(ymax))))

    @property
    def p(self) -> dict:
        return dict(self.params)

    @property
    def measure(self) -> float:
        p = self.p
        if self.kind == "disk":
            return math.pi * p["radius"] ** 2 if p["radius"] > 0 else 0.0
        if self.kind == "annular-sector":
            dt = p["theta_end"] - p["theta_start"]
            if not (0 <= p["r_inner"] < p["r_outer"]) or not (0 < dt <= 2 * math.pi):
                return 0.0
            return 0.5 * dt * (p["r_outer"] ** 2 - p["r_inner"] ** 2)
        return max(p["xmax"] - p["xmin"], 0.0) * max(p["ymax"] - p["ymin"], 0.0)

    def max_radius(self) -> float:
        """Largest distance from the origin of a point of the region."""
        p = self.p
        if self.kind == "disk":
            return math.hypot(*p["center"]) + p["radius"]
        if self.kind == "annular-sector":
            return math.hypot(*p["center"]) + p["r_outer"]
        return max(math.hypot(x, y) for x in (p["xmin"], p["xmax"])
                   for y in (p["ymin"], p["ymax"]))

    def contains(self, x, y) -> np.ndarray:
        p = self.p
        x, y = np.asarray(x, float), np.asarray(y, float)
        if self.kind == "rectangle":
            return (x >= p["xmin"]) & (x <= p["xmax"]) & (y >= p["ymin"]) & (y <= p["ymax"])
        dx, dy = x - p["center"][0], y - p["center"][1]
        r = np.hypot(dx, dy)
        if self.kind == "disk":
            return r <= p["radius"]
        t = np.mod(np.arctan2(dy, dx) - p["theta_start"], 2 * math.pi)
        return (r >= p["r_inner"]) & (r <= p["r_outer"]) & (t <= p["theta_end"] - p["theta_start"])

    def quadrature(self, order: int = 24) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points ``(x, y)`` and weights of a tensor Gauss rule on the region.

        Weights sum to :attr:`measure` up to rounding.
        """
        p = self.p
        gx, gw = np.polynomial.legendre.leggauss(order)
        if self.kind == "rectangle":
            xs = 0.5 * (p["xmax"] - p["xmin"]) * gx + 0.5 * (p["xmax"] + p["xmin"])
            ys = 0.5 * (p["ymax"] - p["ymin"]) * gx + 0.5 * (p["ymax"] + p["ymin"])
            wx = 0.5 * (p["xmax"] - p["xmin"]) * gw
            wy = 0.5 * (p["ymax"] - p["ymin"]) * gw
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            return X.ravel(), Y.ravel(), np.outer(wx, wy).ravel()
        if self.kind == "disk":
            r0, r1, t0, t1 = 0.0, p["radius"], 0.0, 2 * math.pi
            n_ang = 2 * order
            ts = t0 + (np.arange(n_ang) + 0.5) * (t1 - t0) / n_ang
            wt = np.full(n_ang, (t1 - t0) / n_ang)
        else:
            r0, r1 = p["r_inner"], p["r_outer"]
            t0, t1 = p["theta_start"], p["theta_end"]
            ts = 0.5 * (t1 - t0) * gx + 0.5 * (t1 + t0)
            wt = 0.5 * (t1 - t0) * gw
        rs = 0.5 * (r1 - r0) * gx + 0.5 * (r1 + r0)
        wr = 0.5 * (r1 - r0) * gw * rs
        R, T = np.meshgrid(rs, ts, indexing="ij")
        cx, cy = p["center"]
        return ((cx + R * np.cos(T)).ravel(), (cy + R * np.sin(T)).ravel(),
                np.outer(wr, wt).ravel())

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        for k, v in self.params:
            d[k] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RegionSpec":
        kind = d["kind"]
        if kind == "disk":
            return cls.disk(d.get("center", (0.0, 0.0)), d["radius"])
        if kind == "annular-sector":
            return cls.annular_sector(d["r_inner"], d["r_outer"], d["theta_start"],
                                      d["theta_end"], d.get("center", (0.0, 0.0)))
        if kind == "rectangle":
            return cls.rectangle(d["xmin"], d["xmax"], d["ymin"], d["ymax"])
        raise ValueError(f"unknown region kind {kind!r}")


def _require_region_inside(grid: PolarGrid, region: RegionSpec) -> None:
    if not grid.contains_region(region):
        raise ValueError(
            f"region {region.to_json()} is not contained in the grid disk of radius {grid.radius}")


# ---------------------------------------------------------------------------
# edge structure (dual-mesh Dirichlet form)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Edges:
    """Primal edges of the polar grid with their dual-face weights.

    Radial edges join ring ``j`` to ``j + 1`` at fixed angle; angular edges
    join neighbouring nodes of one ring.  The dual cell of a node is the
    polygon bounded by chords at ``r = j h`` and ``(j + 1) h`` and the rays at
    ``theta_{k +- 1/2}`` (ring 0 cells are wedges meeting at the pole, the
    boundary ring's outer side is the chord at ``R``).  ``weight`` is
    ``|dual face| * |edge|`` and ``tangent`` the unit vector from ``a`` to
    ``b``.  For constant vector fields the discrete flux through every
    interior dual cell vanishes exactly.
    """

    a: np.ndarray
    b: np.ndarray
    length: np.ndarray
    weight: np.ndarray
    tangent: np.ndarray
    matrix: sp.csr_matrix  # (m, n): (f_b - f_a) / length

    @classmethod
    def build(cls, grid: PolarGrid) -> "Edges":
        nr, nt, h, dt = grid.n_r, grid.n_theta, grid.h, grid.dtheta
        k = np.arange(nt)
        half = math.sin(0.5 * dt)
        a_l, b_l, len_l, w_l, t_l = [], [], [], [], []
        theta = grid.angles
        for j in range(nr - 1):  # radial
            a_l.append(j * nt + k)
            b_l.append((j + 1) * nt + k)
            len_l.append(np.full(nt, h))
            w_l.append(np.full(nt, 2.0 * (j + 1) * h * half * h))
            t_l.append(np.stack([np.cos(theta), np.sin(theta)], axis=1))
        tmid = theta + 0.5 * dt
        for j in range(nr):  # angular
            r = grid.radial_nodes[j]
            chord = 2.0 * r * half
            face = 0.5 * h if j == nr - 1 else h
            a_l.append(j * nt + k)
            b_l.append(j * nt + (k + 1) % nt)
            len_l.append(np.full(nt, chord))
            w_l.append(np.full(nt, face * chord))
            t_l.append(np.stack([-np.sin(tmid), np.cos(tmid)], axis=1))
        a = np.concatenate(a_l)
        b = np.concatenate(b_l)
        length = np.concatenate(len_l)
        m = a.size
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([b, a])
        vals = np.concatenate([1.0 / length, -1.0 / length])
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(m, grid.size))
        return cls(a, b, length, np.concatenate(w_l), np.concatenate(t_l), mat)

    @property
    def count(self) -> int:
        return self.a.size

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Scalar Dirichlet matrix ``E^T diag(weight) E``."""
        return (self.matrix.T @ sp.diags(self.weight) @ self.matrix).tocsr()


def edge_gradient(f: Union[ScalarField, VectorField]) -> np.ndarray:
    """Edge differences ``(f_b - f_a)/|e|``; shape ``(m,)`` or ``(m, 2)``."""
    E = f.grid.edges.matrix
    if isinstance(f, ScalarField):
        return E @ f.flat
    return np.stack([E @ f.component(0), E @ f.component(1)], axis=1)


def dirichlet_norm(f: Union[ScalarField, VectorField]) -> float:
    """Discrete ``||grad f||_{L^2}`` from the edge form."""
    g = edge_gradient(f)
    w = f.grid.edges.weight
    if g.ndim == 1:
        return float(math.sqrt(np.dot(w, g * g)))
    return float(math.sqrt(np.dot(w, np.sum(g * g, axis=1))))


def tensor_edge_values(F: TensorField) -> np.ndarray:
    """``F t_e`` at edge midpoints (endpoint average), shape ``(m, 2)``."""
    ed = F.grid.edges
    flat = F.values.reshape(-1, 2, 2)
    Fm = 0.5 * (flat[ed.a] + flat[ed.b])
    return np.einsum("eij,ej->ei", Fm, ed.tangent)


def tensor_edge_norm(F: TensorField) -> float:
    """``||F||_{L^2}`` measured with the same edge quadrature as the
    Dirichlet form, so that ``|<F, grad v>| <= ||F|| ||grad v||`` holds
    exactly on the grid."""
    Ft = tensor_edge_values(F)
    return float(math.sqrt(np.dot(F.grid.edges.weight, np.sum(Ft * Ft, axis=1))))


def dirichlet_pairing(F: TensorField, v: VectorField) -> float:
    """Discrete ``<F, grad v>_{L^2}``."""
    _require_same_grid(F.grid, v.grid)
    Ft = tensor_edge_values(F)
    g = edge_gradient(v)
    return float(np.dot(F.grid.edges.weight, np.sum(Ft * g, axis=1)))


# ---------------------------------------------------------------------------
# nodal operators
# ---------------------------------------------------------------------------

def gradient(s: ScalarField) -> VectorField:
    """Second-order nodal gradient in Cartesian components."""
    g = s.grid
    f = s.flat
    return VectorField.from_components(g, g.d_x @ f, g.d_y @ f)


def perp_gradient(s: ScalarField) -> VectorField:
    """``(d_y s, -d_x s)``; velocity of the stream function ``s``."""
    g = s.grid
    f = s.flat
    return VectorField.from_components(g, g.d_y @ f, -(g.d_x @ f))


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    return ScalarField(g, g.d_x @ v.component(0) + g.d_y @ v.component(1))


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def _trig_lagrange(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Trigonometric Lagrange basis on an odd number of angular nodes.

    ``nodes`` has shape ``(p, q)`` (one stencil per query), ``x`` shape
    ``(p,)``.  Exact for trigonometric polynomials of degree ``(q - 1)/2``.
    """
    p, q = nodes.shape
    out = np.ones((p, q))
    for m in range(q):
        for l in range(q):
            if l != m:
                out[:, m] *= (np.sin(0.5 * (x - nodes[:, l]))
                              / np.sin(0.5 * (nodes[:, m] - nodes[:, l])))
    return out


def interpolation_matrix(grid: PolarGrid, x, y) -> sp.csr_matrix:
    """Sparse matrix evaluating a nodal field at the points ``(x, y)``.

    Cubic Lagrange along the diameter through each point, five-point
    trigonometric interpolation along every ring involved.  The product is
    exact on affine fields and reproduces constants to rounding.  Points
    must lie in the closed disk.
    """
    x = np.atleast_1d(np.asarray(x, float)).ravel()
    y = np.atleast_1d(np.asarray(y, float)).ravel()
    nr, nt, h, dt = grid.n_r, grid.n_theta, grid.h, grid.dtheta
    r = np.hypot(x, y)
    if np.any(r > grid.radius * (1 + 1e-12)):
        raise ValueError("interpolation point outside the grid disk")
    theta = np.mod(np.arctan2(y, x), 2 * math.pi)
    p = x.size
    # signed diameter coordinate: index i <-> s_i = (i - nr + 1/2) h
    pos = r / h + nr - 0.5
    start = np.clip(np.floor(pos).astype(int) - 1, 0, 2 * nr - 4)
    s_nodes = (start[:, None] + np.arange(4)[None, :] - nr + 0.5) * h
    rad_w = np.ones((p, 4))
    for m in range(4):
        for l in range(4):
            if l != m:
                rad_w[:, m] *= (r - s_nodes[:, l]) / (s_nodes[:, m] - s_nodes[:, l])
    rows, cols, vals = [], [], []
    idx = start[:, None] + np.arange(4)[None, :]  # diameter indices
    for m in range(4):
        i = idx[:, m]
        neg = i < nr
        ring = np.where(neg, nr - 1 - i, i - nr)
        ang = np.where(neg, theta + math.pi, theta)
        kc = np.rint(ang / dt).astype(int)
        ks = kc[:, None] + np.arange(-2, 3)[None, :]
        ang_w = _trig_lagrange(ks * dt, ang)
        for q in range(5):
            rows.append(np.arange(p))
            cols.append(ring * nt + np.mod(ks[:, q], nt))
            vals.append(rad_w[:, m] * ang_w[:, q])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(p, grid.size))


def interpolate(f: Union[ScalarField, VectorField], x, y) -> np.ndarray:
    """Values of ``f`` at arbitrary points; shape ``(p,)`` or ``(p, 2)``."""
    M = interpolation_matrix(f.grid, x, y)
    if isinstance(f, ScalarField):
        return M @ f.flat
    return np.stack([M @ f.component(0), M @ f.component(1)], axis=1)


# ---------------------------------------------------------------------------
# integrals and means
# ---------------------------------------------------------------------------

def _contract(a: Field, b: Field) -> np.ndarray:
    if type(a) is not type(b):
        raise TypeError("inner product needs two fields of the same kind")
    _require_same_grid(a.grid, b.grid)
    va, vb = a.values, b.values
    if isinstance(a, ScalarField):
        return va * vb
    if isinstance(a, VectorField):
        return np.sum(va * vb, axis=-1)
    return np.sum(va * vb, axis=(-2, -1))


def inner_product_l2(a: Field, b: Field, domain: RegionSpec | None = None) -> float:
    """Quadrature value of ``int a . b`` over the grid disk or ``domain``.

    Over a sub-region the fields are interpolated onto a Gauss rule of the
    region (nodal indicator sums are only first-order accurate).
    """
    if domain is None:
        return float(np.sum(a.grid.quadrature_weights * _contract(a, b)))
    _require_region_inside(a.grid, domain)
    _contract(a, b)  # type and grid checks
    px, py, pw = domain.quadrature()
    M = interpolation_matrix(a.grid, px, py)
    fa = a.values.reshape(a.grid.size, -1)
    fb = b.values.reshape(b.grid.size, -1)
    return float(np.dot(pw, np.sum((M @ fa) * (M @ fb), axis=1)))


_MEAN_CACHE: dict = {}


def mean_weights(grid: PolarGrid, omega: RegionSpec) -> np.ndarray:
    """Nodal weights ``m`` with ``mean_omega(f) = m . f``; ``sum(m) = 1``."""
    key = (grid.radius, grid.n_r, grid.n_theta, omega)
    w = _MEAN_CACHE.get(key)
    if w is None:
        _require_region_inside(grid, omega)
        px, py, pw = omega.quadrature()
        w = interpolation_matrix(grid, px, py).T @ pw
        w = w / w.sum()
        w.setflags(write=False)
        if len(_MEAN_CACHE) > 64:
            _MEAN_CACHE.clear()
        _MEAN_CACHE[key] = w
    return w


def mean_over(v: Union[VectorField, ScalarField], omega: RegionSpec):
    """Mean value of ``v`` on ``omega``: a 2-vector, or a float for scalars."""
    m = mean_weights(v.grid, omega)
    if isinstance(v, ScalarField):
        return float(m @ v.flat)
    return np.array([m @ v.component(0), m @ v.component(1)])


# ---------------------------------------------------------------------------
# field dumps
# ---------------------------------------------------------------------------

def write_field_csv(path, f: Field, names: tuple[str, ...] | None = None) -> None:
    """CSV with header ``r,theta,<components>``, ring-outer row order,
    17 significant digits."""
    g = f.grid
    vals = f.values.reshape(g.size, -1)
    if names is None:
        if isinstance(f, ScalarField):
            names = ("value",)
        elif isinstance(f, VectorField):
            names = ("x", "y")
        else:
            names = ("xx", "xy", "yx", "yy")
    r = np.repeat(g.radial_nodes, g.n_theta)
    t = np.tile(g.angles, g.n_r)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "theta", *names])
        for i in range(g.size):
            w.writerow([f"{r[i]:.17g}", f"{t[i]:.17g}", *(f"{v:.17g}" for v in vals[i])])
    meta = Path(path).with_suffix(".grid.json")
    meta.write_text(json.dumps(grid_metadata(g), indent=2))


def read_field_csv(path, grid: PolarGrid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, 2:]
    if vals.shape[1] == 1:
        return ScalarField(grid, vals[:, 0])
    if vals.shape[1] == 2:
        return VectorField(grid, vals)
    return TensorField(grid, vals.reshape(-1, 2, 2))
