"""Weak-strong uniqueness audit for pairs of discrete solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    GridMismatchError,
    RegionSpec,
    VectorField,
    dirichlet_norm,
    mean_over,
)
from .invading import extended_values
from .solver import DiskSolution
from .weighted import ConstantEstimate, estimate_hardy_constant, weight_of_radius

__all__ = [
    "UniquenessReport",
    "HypothesisViolation",
    "AuditInconsistency",
    "measure_decay_envelope",
    "audit_fields",
    "audit_pair",
    "check_skew_symmetry",
    "discrete_flux_divergence",
]


class HypothesisViolation(ValueError):
    """The two solutions do not share the anchor mean."""


class AuditInconsistency(RuntimeError):
    """Verdict ``unique-regime`` but the measured difference is not small."""

    def __init__(self, message: str, report: "UniquenessReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class UniquenessReport:
    delta_measured: float
    hardy_constant: float
    contraction_factor: float
    grad_d_norm: float
    mean_gap: tuple[float, float]
    verdict: str
    tolerance: float
    consistent: bool
    u_inf: tuple[float, float]

    def to_json(self) -> dict:
        return {"delta_measured": self.delta_measured, "hardy_constant": self.hardy_constant,
                "contraction_factor": self.contraction_factor,
                "grad_d_norm": self.grad_d_norm, "mean_gap": list(self.mean_gap),
                "verdict": self.verdict, "tolerance": self.tolerance,
                "consistent": self.consistent, "u_inf": list(self.u_inf)}

    def line(self) -> str:
        return (f"verdict: {self.verdict} (C*delta = {self.contraction_factor:.4g}, "
                f"||grad d|| = {self.grad_d_norm:.3e}, tolerance {self.tolerance:.1e})")


def measure_decay_envelope(u_tilde: VectorField, u_inf) -> float:
    """Smallest ``delta`` with ``|u_tilde - u_inf| <= delta * w(x)`` at all nodes."""
    dev = u_tilde.values - np.asarray(u_inf, float)
    mag = np.hypot(dev[..., 0], dev[..., 1])
    return float(np.max(mag / weight_of_radius(u_tilde.grid.r_mesh)))


def _on_grid(target: VectorField, source) -> VectorField:
    """``source`` resampled to ``target.grid`` (extension outside its disk)."""
    if isinstance(source, DiskSolution):
        if source.grid.same_as(target.grid):
            return source.u
        X, Y = target.grid.coords
        vals = extended_values(source, X, Y)
        return VectorField(target.grid, vals.reshape(target.values.shape))
    if not source.grid.same_as(target.grid):
        raise GridMismatchError("fields live on different grids; pass DiskSolutions to resample")
    return source


def audit_fields(u: VectorField, u_tilde: VectorField, omega: RegionSpec, u_inf,
                 solver_tol: float, forcing_norm: float = 0.0,
                 hardy: ConstantEstimate | None = None, mean_tol: float = 1e-8,
                 tol_factor: float = 10.0, strict: bool = True) -> UniquenessReport:
    """Audit two velocity fields on the same grid.

    ``delta`` is measured on ``u_tilde``, ``C`` is the Hardy constant
    anchored on ``omega`` and the contraction factor is ``C * delta``.  The
    verdict is ``unique-regime`` when ``C * delta < 1`` and the anchor means
    agree; the measured ``||grad (u - u_tilde)||`` must then be below
    ``tol_factor * solver_tol * max(1, forcing_norm)``.

    Raises
    ------
    HypothesisViolation
        If the anchor means differ by more than ``mean_tol * (1 + |mean|)``.
    AuditInconsistency
        With ``strict``, if the verdict and the measured gap disagree.
    """
    if not u.grid.same_as(u_tilde.grid):
        raise GridMismatchError("audit_fields needs both fields on one grid")
    ma, mb = mean_over(u, omega), mean_over(u_tilde, omega)
    gap = ma - mb
    if np.max(np.abs(gap)) > mean_tol * (1.0 + np.max(np.abs(ma))):
        raise HypothesisViolation(
            f"anchor means differ by ({gap[0]:.3e}, {gap[1]:.3e}); "
            "the uniqueness statement compares solutions with equal mean on omega")
    if hardy is None:
        hardy = estimate_hardy_constant(u.grid, omega)
    delta = measure_decay_envelope(u_tilde, u_inf)
    factor = hardy.value * delta
    grad_d = dirichlet_norm(u - u_tilde)
    tol = tol_factor * solver_tol * max(1.0, forcing_norm)
    verdict = "unique-regime" if factor < 1.0 else "inconclusive"
    consistent = verdict != "unique-regime" or grad_d <= tol
    rep = UniquenessReport(delta, hardy.value, factor, grad_d, (float(gap[0]), float(gap[1])),
                           verdict, tol, consistent,
                           (float(np.asarray(u_inf)[0]), float(np.asarray(u_inf)[1])))
    if strict and not consistent:
        raise AuditInconsistency(
            f"unique-regime verdict but ||grad d|| = {grad_d:.3e} > {tol:.3e}", rep)
    return rep


def audit_pair(u: DiskSolution, u_tilde: DiskSolution, u_inf=None,
               omega: RegionSpec | None = None, **kwargs) -> UniquenessReport:
    """Audit two disk solutions; ``u_tilde`` is resampled onto ``u``'s grid.

    ``u_inf`` defaults to the boundary constant ``mu + c`` of ``u_tilde``.
    """
    omega = omega or u.config.omega
    strict = kwargs.pop("strict", True)
    if u_tilde.grid.radius < u.grid.radius * (1 - 1e-12) and not u.grid.same_as(u_tilde.grid):
        raise GridMismatchError("u_tilde must live on a disk at least as large as u's")
    if u_inf is None:
        u_inf = u_tilde.boundary_value
    delta_tilde = measure_decay_envelope(u_tilde.u, u_inf)
    ut = _on_grid(u.u, u_tilde)
    tol = max(u.config.picard_tol, u_tilde.config.picard_tol)
    rep = audit_fields(u.u, ut, omega, u_inf, tol, u.forcing_norm, strict=False, **kwargs)
    # delta is measured on u_tilde's own grid, not on the resampled copy
    factor = rep.hardy_constant * delta_tilde
    verdict = "unique-regime" if factor < 1.0 else "inconclusive"
    consistent = verdict != "unique-regime" or rep.grad_d_norm <= rep.tolerance
    rep = UniquenessReport(delta_tilde, rep.hardy_constant, factor, rep.grad_d_norm,
                           rep.mean_gap, verdict, rep.tolerance, consistent, rep.u_inf)
    if strict and not consistent:
        raise AuditInconsistency(
            f"unique-regime verdict but ||grad d|| = {rep.grad_d_norm:.3e} > {rep.tolerance:.3e}",
            rep)
    return rep


# ---------------------------------------------------------------------------
# skew-symmetry of the convection form
# ---------------------------------------------------------------------------

def _edge_flux(u: VectorField) -> np.ndarray:
    """Flux of ``u`` through each dual face, central average of the endpoints."""
    ed = u.grid.edges
    U = u.values.reshape(-1, 2)
    beta = 0.5 * np.sum((U[ed.a] + U[ed.b]) * ed.tangent, axis=1)
    return ed.weight * beta / ed.length


def discrete_flux_divergence(u: VectorField) -> np.ndarray:
    """Net outward flux of ``u`` from each dual cell (nodal, unnormalised)."""
    ed = u.grid.edges
    q = _edge_flux(u)
    out = np.zeros(u.grid.size)
    np.add.at(out, ed.a, q)
    np.add.at(out, ed.b, -q)
    return out


def check_skew_symmetry(u: VectorField, v_tilde: VectorField, relative: bool = True) -> float:
    """``|<u . grad v, v>|`` in the advective edge form.

    The sum is ``sum_e q_e (v_b - v_a) . (v_a + v_b) / 2`` with ``q_e`` the
    dual-face flux of ``u``; it equals ``-1/2 sum_i |v_i|^2 div_h(u)_i`` and
    vanishes exactly when ``u`` has zero discrete flux divergence.  With
    ``relative`` the value is divided by ``||grad v|| * ||u v||``.
    """
    if not u.grid.same_as(v_tilde.grid):
        raise GridMismatchError("u and v_tilde live on different grids")
    ed = u.grid.edges
    V = v_tilde.values.reshape(-1, 2)
    q = _edge_flux(u)
    val = abs(0.5 * np.dot(q, np.sum((V[ed.b] - V[ed.a]) * (V[ed.a] + V[ed.b]), axis=1)))
    if not relative or val == 0.0:
        return float(val)
    U = u.values.reshape(-1, 2)
    uv = math.sqrt(np.dot(u.grid.flat_weights, np.sum(U * U, axis=1) * np.sum(V * V, axis=1)))
    scale = dirichlet_norm(v_tilde) * uv
    return float(val / scale) if scale > 0 else float(val)
