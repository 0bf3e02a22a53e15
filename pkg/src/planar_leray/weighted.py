"""Logarithmic weight, invading cutoffs, stream reconstruction and
numerical Poincare/Hardy constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq
from scipy.special import expit

from .geometry import PolarGrid, RegionSpec, ScalarField, VectorField, mean_weights

__all__ = [
    "PROFILE_SUP_D1",
    "PROFILE_SUP_D2",
    "CutoffFamily",
    "ConstantEstimate",
    "PathDependenceError",
    "weight_w",
    "weight_of_radius",
    "plateau_radius",
    "plateau_threshold",
    "profile",
    "sample_cutoff",
    "cutoff_certificate",
    "reconstruct_stream",
    "stream_path_defect",
    "estimate_poincare_constant",
    "estimate_hardy_constant",
    "certify_constant",
]

# Sup norms of the first two derivatives of the cutoff profile on [0, 1],
# measured once with 40-digit arithmetic and padded upward.  The first is
# attained at t = 3/4 where it equals 4 exactly.
PROFILE_SUP_D1 = 4.0 * (1 + 1e-12)
PROFILE_SUP_D2 = 39.364169207324624 * (1 + 1e-9)


def _br(t):
    """Japanese-style bracket ``<t> = 1 + |t|``."""
    return 1.0 + np.abs(t)


def weight_of_radius(r) -> np.ndarray:
    """``1 / (<r> <log <r>>)`` for radii ``r >= 0``."""
    r = np.asarray(r, float)
    a = _br(r)
    return 1.0 / (a * (1.0 + np.log(a)))


def weight_w(x) -> np.ndarray:
    """The weight ``w(x) = 1/((1+|x|)(1+log(1+|x|)))``.

    ``x`` is a point or an array of points with a trailing axis of length 2.
    """
    x = np.asarray(x, float)
    return weight_of_radius(np.hypot(x[..., 0], x[..., 1]))


def _iterated_log(r, depth: int):
    """``L_1 = log<r>``, ``L_2 = log<L_1>``, ...; returns ``L_depth``."""
    t = np.asarray(r, float)
    for _ in range(depth):
        t = np.log1p(t)
    return t


def plateau_radius(kind: str, n: float) -> float:
    """Radius ``gamma_n`` below which the cutoff equals 1.

    ``psi``: ``exp(sqrt(<log<n>>) - 1) - 1``;
    ``eta``: ``exp(exp(sqrt(<log<log<n>>>) - 1) - 1) - 1``.

    Raises
    ------
    ValueError
        If ``n`` is below the kind's threshold (``gamma_n < 1``).
    """
    g = _gamma(kind, n)
    if g < 1.0:
        raise ValueError(f"n = {n:g} is below the {kind} threshold "
                         f"{plateau_threshold(kind):.6g} (plateau radius would be {g:.4g} < 1)")
    return g


def _gamma(kind: str, n: float) -> float:
    if kind == "psi":
        return math.expm1(math.sqrt(1.0 + math.log1p(n)) - 1.0)
    if kind == "eta":
        return math.expm1(math.expm1(math.sqrt(1.0 + math.log1p(math.log1p(n))) - 1.0))
    raise ValueError(f"unknown cutoff kind {kind!r}")


def plateau_threshold(kind: str) -> float:
    """Smallest admissible ``n``: where the plateau radius reaches 1."""
    return brentq(lambda n: _gamma(kind, n) - 1.0, 1.0, 1e4, xtol=1e-13)


def profile(t, order: int = 0):
    """Cutoff profile ``p`` on ``[0, inf)`` and its derivatives.

    ``p = 1`` on ``t <= 1/2``, ``p = 0`` on ``t >= 1`` and in between
    ``p(t) = 1 - S(2t - 1)`` with the smoothstep
    ``S(s) = 1 / (1 + exp(1/s - 1/(1-s)))``.
    """
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    if order == 0:
        out[t <= 0.5] = 1.0
    mid = (t > 0.5) & (t < 1.0)
    s = 2.0 * t[mid] - 1.0
    z = np.clip(1.0 / s - 1.0 / (1.0 - s), -700, 700)
    # S and 1 - S are evaluated separately to keep digits near both ends
    S, Sc = expit(-z), expit(z)
    k = 1.0 / s ** 2 + 1.0 / (1.0 - s) ** 2
    S1 = S * Sc * k
    if order == 0:
        out[mid] = Sc
    elif order == 1:
        out[mid] = -2.0 * S1
    elif order == 2:
        S2 = S1 * (Sc - S) * k + S * Sc * (-2.0 / s ** 3 + 2.0 / (1.0 - s) ** 3)
        out[mid] = -4.0 * S2
    else:
        raise ValueError("order must be 0, 1 or 2")
    return out


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffFamily:
    """Radial cutoff ``p(L(|x|) / L(n))`` with an iterated-log scale.

    ``kind="psi"`` uses ``L = log<log<r>>`` and ``kind="eta"`` uses
    ``L = log<log<log<r>>>``.  Both equal 1 on ``|x| <= gamma_n`` and 0 on
    ``|x| >= n``.
    """

    kind: str
    n: float
    sup_d1: float = PROFILE_SUP_D1
    sup_d2: float = PROFILE_SUP_D2

    def __post_init__(self):
        plateau_radius(self.kind, self.n)  # validates kind and threshold

    @property
    def depth(self) -> int:
        return 2 if self.kind == "psi" else 3

    @property
    def plateau(self) -> float:
        return plateau_radius(self.kind, self.n)

    @cached_property
    def scale(self) -> float:
        return float(_iterated_log(self.n, self.depth))

    def _chain(self, r):
        A = 1.0 + r
        B = 1.0 + np.log(A)
        if self.kind == "psi":
            d1 = 1.0 / (A * B)
            d2 = -d1 / A * (1.0 + 1.0 / B)
            return d1, d2, (A, B, None)
        C = 1.0 + np.log(B)
        d1 = 1.0 / (A * B * C)
        d2 = -d1 / A * (1.0 + 1.0 / B + 1.0 / (B * C))
        return d1, d2, (A, B, C)

    def radial(self, r):
        """Value and first two radial derivatives at radii ``r``."""
        r = np.asarray(r, float)
        t = _iterated_log(r, self.depth) / self.scale
        L1, L2, _ = self._chain(r)
        p0, p1, p2 = profile(t, 0), profile(t, 1), profile(t, 2)
        f1 = p1 * L1 / self.scale
        f2 = p2 * (L1 / self.scale) ** 2 + p1 * L2 / self.scale
        return p0, f1, f2

    def gradient_bound(self, r):
        """Right side of the explicit gradient inequality."""
        r = np.asarray(r, float)
        _, _, (A, B, C) = self._chain(r)
        if self.kind == "psi":
            return self.sup_d1 / self.scale * weight_of_radius(r)
        return self.sup_d1 / (self.scale * A * B * C)

    def hessian_bound(self, r):
        """Right side of the explicit second-derivative inequality (``eta``)."""
        if self.kind != "eta":
            raise ValueError("the second-derivative bound is stated for the eta family")
        r = np.asarray(r, float)
        _, _, (A, B, C) = self._chain(r)
        return (4 * self.sup_d1 + 2 * self.sup_d2) / (self.scale * A ** 2 * B * C)

    def to_json(self) -> dict:
        return {"kind": self.kind, "n": self.n, "plateau": self.plateau,
                "sup_d1": self.sup_d1, "sup_d2": self.sup_d2}


def sample_cutoff(family: CutoffFamily, grid: PolarGrid):
    """Closed-form samples of a cutoff on the grid nodes.

    Returns
    -------
    value : ScalarField
    grad : VectorField
    hessian_norm : ScalarField or None
        Frobenius norm of the Hessian, ``sqrt(f''^2 + (f'/r)^2)``; only for
        the ``eta`` family.
    """
    if grid.radius < family.n:
        raise ValueError(f"grid radius {grid.radius:g} is smaller than the cutoff "
                         f"support radius {family.n:g}")
    r = grid.r_mesh
    f0, f1, f2 = family.radial(r)
    X, Y = grid.coords
    grad = VectorField.from_components(grid, f1 * X / r, f1 * Y / r)
    hess = None
    if family.kind == "eta":
        hess = ScalarField(grid, np.sqrt(f2 ** 2 + (f1 / r) ** 2))
    return ScalarField(grid, f0), grad, hess


def cutoff_certificate(family: CutoffFamily, grid: PolarGrid) -> dict:
    """Check the plateau, support and derivative bounds at every node.

    Ratios are ``sampled / bound``; the certificate passes when each is
    at most 1 and the plateau and support values are exact.
    """
    val, grad, hess = sample_cutoff(family, grid)
    r = grid.r_mesh
    gnorm = np.hypot(grad.x, grad.y)
    out = {
        "family": family.to_json(),
        "nodes": int(grid.size),
        "plateau_exact": bool(np.all(val.values[r <= family.plateau] == 1.0)),
        "support_exact": bool(np.all(val.values[r >= family.n] == 0.0)),
        "gradient_ratio": float(np.max(gnorm / family.gradient_bound(r))),
    }
    if hess is not None:
        out["hessian_ratio"] = float(np.max(hess.values / family.hessian_bound(r)))
    ratios = [out["gradient_ratio"], out.get("hessian_ratio", 0.0)]
    out["passed"] = bool(out["plateau_exact"] and out["support_exact"] and max(ratios) <= 1.0)
    return out


# ---------------------------------------------------------------------------
# stream-function reconstruction
# ---------------------------------------------------------------------------

class PathDependenceError(ValueError):
    """The path integral of ``v_perp`` depends on the path: ``v`` is not solenoidal."""


_CUBIC_INTERIOR = np.array([-1.0, 13.0, 13.0, -1.0]) / 24.0
_CUBIC_FIRST = np.array([9.0, 19.0, -5.0, 1.0]) / 24.0
# integral over [0, 1/2] of the cubic through t = -1, 0, 1, 2
_CUBIC_HALF = np.array([-18.0, 310.0, 106.0, -14.0]) / 768.0


def _cumulative(values: np.ndarray, step: float) -> np.ndarray:
    """Cumulative integral along the last axis (cubic, uniform nodes)."""
    f = values
    N = f.shape[-1]
    seg = np.empty(f.shape[:-1] + (N - 1,))
    seg[..., 0] = f[..., :4] @ _CUBIC_FIRST
    seg[..., -1] = f[..., -4:] @ _CUBIC_FIRST[::-1]
    seg[..., 1:-1] = (_CUBIC_INTERIOR[0] * f[..., :-3] + _CUBIC_INTERIOR[1] * f[..., 1:-2]
                      + _CUBIC_INTERIOR[2] * f[..., 2:-1] + _CUBIC_INTERIOR[3] * f[..., 3:])
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(seg, axis=-1) * step
    return out


def _ray_integrals(v: VectorField) -> np.ndarray:
    """``psi`` along every ray from the origin; shape ``(n_r, n_theta)``."""
    g = v.grid
    nr, nt = g.n_r, g.n_theta
    c, s = np.cos(g.angles), np.sin(g.angles)
    # derivative of psi along e_k is -v_y cos + v_x sin, at both ends of the diameter
    opp = (np.arange(nt) + nt // 2) % nt
    far = -v.y[:, opp] * c + v.x[:, opp] * s
    near = -v.y * c + v.x * s
    diam = np.concatenate([far[::-1], near], axis=0).T  # (nt, 2 nr), s ascending
    cum = _cumulative(diam, g.h)
    centre = cum[:, nr - 1] + g.h * (diam[:, nr - 2:nr + 2] @ _CUBIC_HALF)
    return (cum[:, nr:] - centre[:, None]).T


def _ring_integrals(v: VectorField):
    """Angular integrals from ``theta_0`` on every ring and the closure flux."""
    g = v.grid
    c, s = np.cos(g.angles), np.sin(g.angles)
    a = g.radial_nodes[:, None] * (v.x * c + v.y * s)
    w = _CUBIC_INTERIOR
    seg = (w[0] * np.roll(a, 1, axis=1) + w[1] * a + w[2] * np.roll(a, -1, axis=1)
           + w[3] * np.roll(a, -2, axis=1)) * g.dtheta
    cum = np.zeros_like(a)
    cum[:, 1:] = np.cumsum(seg[:, :-1], axis=1)
    return cum, seg.sum(axis=1)


def stream_path_defect(v: VectorField) -> dict:
    """Path-dependence diagnostics of the stream-function line integral.

    ``path_defect`` compares the canonical path (along the ray at angle 0,
    then around the circle) with the straight ray to each node;
    ``ring_flux`` is the largest flux of ``v`` through a grid circle.
    """
    rays = _ray_integrals(v)
    ring, closure = _ring_integrals(v)
    canonical = rays[:, :1] + ring
    scale = float(np.max(np.hypot(v.x, v.y))) * v.grid.radius
    return {"path_defect": float(np.max(np.abs(canonical - rays))),
            "ring_flux": float(np.max(np.abs(closure))),
            "scale": scale}


def reconstruct_stream(v: VectorField, tol: float = 1e-3) -> ScalarField:
    """Stream function ``psi(x) = int_0^x v_perp . dx`` with ``psi(0) = 0``.

    Integrates radially along the ray at angle 0 and then around the circle
    through ``x``, so that ``grad_perp psi = v``.  ``v`` is accepted when
    the canonical and straight-ray paths agree within
    ``tol * max|v| * radius``.

    Raises
    ------
    PathDependenceError
        If the two paths disagree beyond the tolerance.
    """
    rays = _ray_integrals(v)
    ring, _ = _ring_integrals(v)
    canonical = rays[:, :1] + ring
    scale = float(np.max(np.hypot(v.x, v.y))) * v.grid.radius
    defect = float(np.max(np.abs(canonical - rays)))
    if defect > tol * scale:
        raise PathDependenceError(
            f"path dependence {defect:.3e} exceeds {tol:g} * {scale:.3e}; "
            "the field is not solenoidal")
    return ScalarField(v.grid, canonical)


# ---------------------------------------------------------------------------
# Poincare / Hardy constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantEstimate:
    """Certified constant ``C`` for ``||u a|| <= C (||grad u|| + |mean_anchor u|)``.

    ``a = 1`` for ``poincare`` and ``a = w`` for ``hardy``.  ``rayleigh_max``
    is the largest generalized eigenvalue ``Lambda`` of mass against
    stiffness-plus-anchor, ``value = sqrt(Lambda)``; ``next_eigenvalue`` is
    the runner-up, which tracks the first nonzero Neumann eigenvalue.
    """

    inequality: str
    radius: float
    anchor: RegionSpec
    value: float
    n_r: int
    n_theta: int
    rayleigh_max: float
    next_eigenvalue: float
    method: str

    def to_json(self) -> dict:
        return {"inequality": self.inequality, "radius": self.radius,
                "anchor": self.anchor.to_json(), "value": self.value,
                "n_r": self.n_r, "n_theta": self.n_theta,
                "rayleigh_max": self.rayleigh_max,
                "next_eigenvalue": self.next_eigenvalue, "method": self.method}


def _mass_diagonal(grid: PolarGrid, inequality: str) -> np.ndarray:
    w = grid.flat_weights
    if inequality == "poincare":
        return w.copy()
    if inequality == "hardy":
        return w * weight_of_radius(grid.r_mesh.ravel()) ** 2
    raise ValueError(f"unknown inequality {inequality!r}")


def _top_eigenvalues(grid: PolarGrid, mass: np.ndarray, m: np.ndarray, method: str):
    K = grid.edges.stiffness
    n = grid.size
    if method == "dense":
        B = K.toarray() + np.outer(m, m)
        ev = sla.eigh(np.diag(mass), B, eigvals_only=True, subset_by_index=[n - 2, n - 1])
        return float(ev[1]), float(ev[0])
    aug = sp.bmat([[K, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), sp.csr_matrix([[-1.0]])]],
                  format="csc")
    lu = spla.splu(aug)
    B = spla.LinearOperator((n, n), lambda x: K @ x + m * (m @ x), dtype=float)
    Binv = spla.LinearOperator((n, n), lambda x: lu.solve(np.append(x, 0.0))[:n], dtype=float)
    try:
        ev = spla.eigsh(sp.diags(mass), k=2, M=B, Minv=Binv, which="LA",
                        tol=1e-12, maxiter=20 * n, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError("eigen-solver did not converge") from exc
    ev = np.sort(ev)
    return float(ev[1]), float(ev[0])


def _estimate(inequality: str, grid: PolarGrid, anchor: RegionSpec, method: str):
    if method not in ("sparse", "dense"):
        raise ValueError("method must be 'sparse' or 'dense'")
    m = mean_weights(grid, anchor)
    lam, nxt = _top_eigenvalues(grid, _mass_diagonal(grid, inequality), m, method)
    return ConstantEstimate(inequality, grid.radius, anchor, math.sqrt(lam), grid.n_r,
                            grid.n_theta, lam, nxt, method)


def estimate_poincare_constant(grid: PolarGrid, anchor: RegionSpec,
                               method: str = "sparse") -> ConstantEstimate:
    """Smallest ``C`` with ``||u||^2 <= C^2 (||grad u||^2 + |mean u|^2)`` on the grid.

    Because ``(a + b)^2 >= a^2 + b^2`` the same ``C`` certifies
    ``||u|| <= C (||grad u|| + |mean_anchor u|)`` for every discrete field.
    ``method="dense"`` runs a full generalized eigen-solve (small grids).
    """
    return _estimate("poincare", grid, anchor, method)


def estimate_hardy_constant(grid: PolarGrid, anchor: RegionSpec,
                            method: str = "sparse") -> ConstantEstimate:
    """Weighted analogue of :func:`estimate_poincare_constant` with mass ``w^2``."""
    return _estimate("hardy", grid, anchor, method)


def _random_fields(grid: PolarGrid, count: int, rng: np.random.Generator) -> np.ndarray:
    """Columns of scalar fields: constants, noise, smooth waves, bumps."""
    X, Y = (c.ravel() / grid.radius for c in grid.coords)
    cols = []
    for i in range(count):
        kind = i % 4
        if kind == 0:
            f = np.full(X.size, rng.normal()) + 1e-3 * rng.normal(size=X.size)
        elif kind == 1:
            f = rng.normal(size=X.size)
        elif kind == 2:
            k = rng.normal(scale=3.0, size=(3, 2))
            ph = rng.uniform(0, 2 * math.pi, 3)
            f = sum(np.cos(k[j, 0] * X + k[j, 1] * Y + ph[j]) for j in range(3))
            f = f + rng.normal()
        else:
            cx, cy = rng.uniform(-0.6, 0.6, 2)
            f = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / rng.uniform(0.01, 0.3))
        cols.append(f)
    return np.array(cols).T


def certify_constant(estimate: ConstantEstimate, grid: PolarGrid, samples: int = 1000,
                     seed: int = 0) -> dict:
    """Test the estimated inequality on random discrete vector fields.

    Each sample is a pair of random scalar components.  A violation is a
    field with ``||u a|| > C (||grad u|| + |mean u|) * (1 + 1e-10)``.
    """
    if (grid.radius, grid.n_r, grid.n_theta) != (estimate.radius, estimate.n_r, estimate.n_theta):
        raise ValueError("estimate was computed on a different grid")
    rng = np.random.default_rng(seed)
    mass = _mass_diagonal(grid, estimate.inequality)
    m = mean_weights(grid, estimate.anchor)
    ed = grid.edges
    U = _random_fields(grid, 2 * samples, rng)
    lhs2 = mass @ (U * U)
    G = ed.matrix @ U
    grad2 = ed.weight @ (G * G)
    means = m @ U
    lhs = np.sqrt(lhs2[0::2] + lhs2[1::2])
    rhs = estimate.value * (np.sqrt(grad2[0::2] + grad2[1::2])
                            + np.hypot(means[0::2], means[1::2]))
    ratio = lhs / rhs
    return {"samples": samples, "violations": int(np.sum(ratio > 1 + 1e-10)),
            "max_ratio": float(np.max(ratio))}
