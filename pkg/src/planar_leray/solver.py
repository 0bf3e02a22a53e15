"""Mean-anchored steady Navier-Stokes on one disk ``B_n``.

The unknown is the zero-trace correction ``v = grad_perp(phi)`` with a
clamped stream function (``phi = 0`` and ``d_r phi = 0`` on the boundary
ring), so ``v`` vanishes exactly on ``dB_n``.  The physical field is

    u = mu + v - mean_omega(v),    c = -mean_omega(v),

which has mean ``mu`` on ``omega`` and the constant trace ``mu + c``.

The discrete problem, for every discrete test field ``w`` and homotopy
parameter ``lam``::

    <grad v, grad w> + lam * s(b; v, w) = lam * <F, grad w>,   b = mu + v - mean(v)

where both pairings use the edge Dirichlet form of :mod:`.geometry` and ``s``
is the antisymmetrised central-flux convection.  Because ``s(b; v, v) = 0``
for any ``b``, every linear solve satisfies ``||grad v||^2 = lam <F, grad v>``
and hence ``||grad v|| <= ||F||`` along the whole continuation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import (
    PolarGrid,
    RegionSpec,
    ScalarField,
    TensorField,
    VectorField,
    dirichlet_norm,
    dirichlet_pairing,
    mean_weights,
    tensor_edge_norm,
    tensor_edge_values,
)

log = logging.getLogger(__name__)

__all__ = [
    "SolveConfig",
    "DiskSolution",
    "LinearizedSystem",
    "StreamSpace",
    "ConvergenceError",
    "stream_space",
    "assemble_linearized",
    "convection_matrix",
    "solve_disk",
    "weak_residual",
    "solenoidal_test_battery",
]


class ConvergenceError(RuntimeError):
    """Picard iteration stalled; ``trace`` holds the iterates seen so far."""

    def __init__(self, message: str, trace: list[dict]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolveConfig:
    mu: tuple[float, float]
    omega: RegionSpec
    homotopy_steps: int = 1
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    linear_tol: float = 1e-12
    damping: float = 1.0
    linear_solver: str = "direct"

    def __post_init__(self):
        object.__setattr__(self, "mu", (float(self.mu[0]), float(self.mu[1])))
        if self.homotopy_steps < 1:
            raise ValueError("homotopy_steps must be >= 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.picard_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be >= 1")
        if self.linear_solver not in ("direct", "gmres"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    def to_json(self) -> dict:
        return {"mu": list(self.mu), "omega": self.omega.to_json(),
                "homotopy_steps": self.homotopy_steps, "picard_tol": self.picard_tol,
                "picard_max_iter": self.picard_max_iter, "linear_tol": self.linear_tol,
                "damping": self.damping, "linear_solver": self.linear_solver}

    @classmethod
    def from_json(cls, d: dict) -> "SolveConfig":
        d = dict(d)
        d["omega"] = RegionSpec.from_json(d["omega"])
        d["mu"] = tuple(d["mu"])
        return cls(**d)


# ---------------------------------------------------------------------------
# discrete solenoidal space
# ---------------------------------------------------------------------------

class StreamSpace:
    """Clamped stream functions on a grid and the velocity map ``G``.

    Unknowns are the stream-function values on rings ``0 .. n_r - 3``.  The
    boundary ring is zero and ring ``n_r - 2`` is a quarter of ring
    ``n_r - 3``, which makes the one-sided radial derivative vanish on the
    boundary.
    """

    def __init__(self, grid: PolarGrid):
        self.grid = grid
        nt, nr = grid.n_theta, grid.n_r
        self.n_unknowns = (nr - 2) * nt
        n = grid.size
        rows = np.concatenate([np.arange(self.n_unknowns),
                               (nr - 2) * nt + np.arange(nt)])
        cols = np.concatenate([np.arange(self.n_unknowns),
                               (nr - 3) * nt + np.arange(nt)])
        vals = np.concatenate([np.ones(self.n_unknowns), np.full(nt, 0.25)])
        self.prolong = sp.csr_matrix((vals, (rows, cols)), shape=(n, self.n_unknowns))
        # v = (d_y phi, -d_x phi), components stacked: [v_x; v_y]
        self.velocity = sp.vstack([grid.d_y @ self.prolong,
                                   -(grid.d_x @ self.prolong)]).tocsr()

    @cached_property
    def stokes(self) -> sp.csc_matrix:
        K = self.grid.edges.stiffness
        KK = sp.block_diag([K, K], format="csr")
        return (self.velocity.T @ KK @ self.velocity).tocsc()

    @cached_property
    def stokes_lu(self):
        return spla.splu(self.stokes, permc_spec="COLAMD")

    def field(self, chi: np.ndarray) -> VectorField:
        v = self.velocity @ chi
        n = self.grid.size
        return VectorField.from_components(self.grid, v[:n], v[n:])

    def restrict(self, phi: np.ndarray) -> np.ndarray:
        """Unknown-ring part of a nodal stream function."""
        return np.asarray(phi, float).ravel()[: self.n_unknowns]

    def forcing(self, F: TensorField) -> np.ndarray:
        """Load vector ``G^T E^T W (F t)`` representing ``w -> <F, grad w>``."""
        ed = self.grid.edges
        Ft = tensor_edge_values(F) * ed.weight[:, None]
        r = np.concatenate([ed.matrix.T @ Ft[:, 0], ed.matrix.T @ Ft[:, 1]])
        return self.velocity.T @ r

    def dual_norm(self, residual: np.ndarray) -> float:
        """``sup_w residual(w)/||grad w||`` over the discrete space."""
        z = _refined_solve(self.stokes_lu, self.stokes, residual)
        return float(math.sqrt(abs(np.dot(residual, z))))

    def energy(self, chi: np.ndarray) -> float:
        """``||grad v||`` for ``v = G chi`` as a sum of squares over edges."""
        ed = self.grid.edges
        v = (self.velocity @ chi).reshape(2, -1)
        g = ed.matrix @ v.T
        return float(math.sqrt(np.dot(ed.weight, np.sum(g * g, axis=1))))


def accurate_residual(M: sp.spmatrix, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``M x - b`` accumulated in extended precision.

    Stream-function systems on polar grids have condition numbers near
    ``1e12`` at 128 rings, so a residual formed in double precision is
    dominated by cancellation and iterative refinement stalls.
    """
    M = M.tocsr()
    prod = M.data.astype(np.longdouble) * x.astype(np.longdouble)[M.indices]
    starts = M.indptr[:-1]
    nonempty = np.diff(M.indptr) > 0
    out = np.zeros(M.shape[0], dtype=np.longdouble)
    out[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return (out - b.astype(np.longdouble)).astype(float)


def _refined_solve(lu, M, b: np.ndarray, steps: int = 3) -> np.ndarray:
    x = lu.solve(b)
    for _ in range(steps):
        x = x - lu.solve(accurate_residual(M, x, b))
    return x


_SPACES: dict = {}


def stream_space(grid: PolarGrid) -> StreamSpace:
    key = (grid.radius, grid.n_r, grid.n_theta)
    sp_ = _SPACES.get(key)
    if sp_ is None:
        if len(_SPACES) > 8:
            _SPACES.clear()
        sp_ = _SPACES[key] = StreamSpace(grid)
    return sp_


def convection_matrix(grid: PolarGrid, advecting: np.ndarray) -> sp.csr_matrix:
    """Antisymmetric scalar matrix ``S`` with ``w^T S v = s(b; v, w)``.

    ``advecting`` is the nodal field ``b`` of shape ``(n, 2)``.  The central
    edge flux ``b_e . t_e`` weighted by the dual face gives the
    antisymmetrised form ``1/2 [<b.grad v, w> - <b.grad w, v>]``.
    """
    ed = grid.edges
    b = np.asarray(advecting, float).reshape(-1, 2)
    beta = 0.5 * np.sum((b[ed.a] + b[ed.b]) * ed.tangent, axis=1)
    c = ed.weight * beta / (2.0 * ed.length)
    rows = np.concatenate([ed.a, ed.b])
    cols = np.concatenate([ed.b, ed.a])
    vals = np.concatenate([c, -c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))


@dataclass
class LinearizedSystem:
    """Handle for one Oseen-type linear system in stream-function unknowns."""

    space: StreamSpace
    stokes: sp.csc_matrix
    convection: sp.csr_matrix  # G^T S G, antisymmetric
    rhs: np.ndarray
    lam: float

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        return (self.stokes + self.lam * self.convection).tocsc()

    def residual(self, chi: np.ndarray) -> np.ndarray:
        return accurate_residual(self.matrix, chi, self.rhs)

    def solve(self, method: str = "direct", tol: float = 1e-12) -> np.ndarray:
        if not np.any(self.rhs):
            return np.zeros_like(self.rhs)
        A = self.matrix
        if method == "direct":
            return _refined_solve(spla.splu(A, permc_spec="COLAMD"), A, self.rhs)
        # GMRES on the Stokes-preconditioned operator I + lam A^-1 N, which is
        # well conditioned; residuals are refreshed in extended precision
        lu = self.space.stokes_lu
        N = (self.lam * self.convection).tocsr()
        op = spla.LinearOperator(A.shape, lambda z: z + lu.solve(N @ z), dtype=float)
        x = np.zeros_like(self.rhs)
        for _ in range(3):
            r = -accurate_residual(A, x, self.rhs)
            dx, info = spla.gmres(op, lu.solve(r), rtol=tol, atol=0.0, restart=100,
                                  maxiter=20)
            if info != 0:
                raise ConvergenceError(f"GMRES failed (info={info})", [])
            x = x + dx
        return x


def assemble_linearized(grid: PolarGrid, F: TensorField, advecting: VectorField | None,
                        mu, omega: RegionSpec, lam: float,
                        space: StreamSpace | None = None) -> LinearizedSystem:
    """Linear system for ``v`` with frozen advecting correction.

    The wind is ``mu + advecting - mean_omega(advecting)``; the right side is
    scaled by ``lam`` so that ``lam = 0`` yields ``v = 0``.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    space = space or stream_space(grid)
    n = grid.size
    if advecting is None:
        adv = np.zeros((n, 2))
    else:
        adv = advecting.values.reshape(n, 2)
    m = mean_weights(grid, omega)
    wind = np.asarray(mu, float)[None, :] + adv - (m @ adv)[None, :]
    S = convection_matrix(grid, wind)
    SS = sp.block_diag([S, S], format="csr")
    N = (space.velocity.T @ SS @ space.velocity).tocsr()
    return LinearizedSystem(space, space.stokes, N, lam * space.forcing(F), lam)


# ---------------------------------------------------------------------------
# nonlinear solve
# ---------------------------------------------------------------------------

@dataclass
class DiskSolution:
    """Discrete solution on ``B_n`` together with its diagnostics.

    Attributes
    ----------
    u : VectorField
        Velocity ``mu + v - mean_omega(v)``.
    v : VectorField
        Zero-trace correction.
    c : numpy.ndarray
        Boundary shift; the trace of ``u`` on ``dB_n`` is ``mu + c``.
    trace : list of dict
        One entry per Picard iterate (``lambda``, ``iteration``,
        ``residual``, ``grad_norm``, ``candidate_grad_norm``).
    """

    grid: PolarGrid
    config: SolveConfig
    u: VectorField
    v: VectorField
    c: np.ndarray
    trace: list[dict]
    iterations: int
    grad_norm: float
    energy_pairing: float
    forcing_norm: float
    residual: float
    stream: np.ndarray = field(repr=False)

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.config.mu)

    @property
    def boundary_value(self) -> np.ndarray:
        return self.mu + self.c

    def checks(self) -> dict:
        """Invariant diagnostics; every entry should be at rounding level."""
        mean_u = mean_weights(self.grid, self.config.omega) @ self.u.values.reshape(-1, 2)
        bnd = self.u.values[-1] - self.boundary_value[None, :]
        scale = max(1.0, self.grad_norm ** 2)
        return {
            "mean_anchor_error": float(np.max(np.abs(mean_u - self.mu))),
            "boundary_constancy_error": float(np.max(np.abs(bnd))),
            "energy_identity_gap": abs(self.grad_norm ** 2 - self.energy_pairing) / scale,
            "a_priori_margin": self.forcing_norm - self.grad_norm,
        }

    def summary(self) -> dict:
        return {
            "mu": list(self.config.mu),
            "c": self.c.tolist(),
            "boundary_value": self.boundary_value.tolist(),
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "energy_pairing": self.energy_pairing,
            "forcing_norm": self.forcing_norm,
            "final_residual": self.residual,
            "checks": self.checks(),
        }


def solve_disk(grid: PolarGrid, F: TensorField, config: SolveConfig,
               initial: VectorField | None = None) -> DiskSolution:
    """Solve the anchored problem on ``grid`` with forcing ``F``.

    Damped Picard iteration along ``lam = k / homotopy_steps``, each rung warm
    started from the previous one.  A rung stops once the dual-norm residual
    is below ``picard_tol * max(1, ||F||)``; the returned field is one more
    undamped linear solve with the converged wind, so the discrete energy
    identity holds to rounding.

    Raises
    ------
    ConvergenceError
        If a rung exhausts ``picard_max_iter``.  ``err.trace`` lists all
        iterates.
    """
    if not grid.same_as(F.grid):
        raise ValueError("forcing lives on a different grid")
    space = stream_space(grid)
    Fnorm = tensor_edge_norm(F)
    tol = config.picard_tol * max(1.0, Fnorm)
    chi = np.zeros(space.n_unknowns)
    if initial is not None:
        # least-squares projection of a warm start onto the discrete space
        vi = np.concatenate([initial.component(0), initial.component(1)])
        K = grid.edges.stiffness
        load = space.velocity.T @ (sp.block_diag([K, K]) @ vi)
        chi = _refined_solve(space.stokes_lu, space.stokes, load)
    trace: list[dict] = []
    total = 0
    steps = config.homotopy_steps
    system = None
    for k in range(1, steps + 1):
        lam = k / steps
        for it in range(1, config.picard_max_iter + 1):
            total += 1
            system = assemble_linearized(grid, F, space.field(chi), config.mu,
                                         config.omega, lam, space)
            res = space.dual_norm(system.residual(chi))
            entry = {"lambda": lam, "iteration": it, "residual": res,
                     "grad_norm": space.energy(chi)}
            if res <= tol:
                trace.append(entry)
                break
            cand = system.solve(config.linear_solver, config.linear_tol)
            entry["candidate_grad_norm"] = space.energy(cand)
            trace.append(entry)
            log.debug("lam=%.3f it=%d residual=%.3e", lam, it, res)
            chi = (1.0 - config.damping) * chi + config.damping * cand
        else:
            raise ConvergenceError(
                f"Picard iteration did not converge at lambda={lam:.4g} "
                f"(residual {trace[-1]['residual']:.3e} > {tol:.3e})", trace)
    chi = system.solve(config.linear_solver, config.linear_tol)
    return _package(grid, F, config, space, chi, trace, total, Fnorm)


def _package(grid, F, config, space, chi, trace, total, Fnorm) -> DiskSolution:
    v = space.field(chi)
    m = mean_weights(grid, config.omega)
    vbar = m @ v.values.reshape(-1, 2)
    u = v + VectorField.constant(grid, np.asarray(config.mu) - vbar)
    final = assemble_linearized(grid, F, v, config.mu, config.omega, 1.0, space)
    return DiskSolution(
        grid=grid, config=config, u=u, v=v, c=np.zeros(2) - vbar, trace=trace, iterations=total,
        grad_norm=dirichlet_norm(v), energy_pairing=dirichlet_pairing(F, v),
        forcing_norm=Fnorm, residual=space.dual_norm(final.residual(chi)), stream=chi)


# ---------------------------------------------------------------------------
# weak-form diagnostics
# ---------------------------------------------------------------------------

def _bump(x, y, cx, cy, rho):
    q = ((x - cx) ** 2 + (y - cy) ** 2) / rho ** 2
    out = np.zeros_like(q)
    inside = q < 1.0
    out[inside] = np.exp(1.0 / (q[inside] - 1.0) + 1.0)
    return out


def solenoidal_test_battery(grid: PolarGrid, count: int = 12, seed: int = 0,
                            omega: RegionSpec | None = None) -> list[VectorField]:
    """Discrete solenoidal, compactly supported test fields.

    Each field is ``grad_perp`` of a smooth bump stream function supported
    well inside the clamped rings, normalised to ``||grad phi|| = 1``.  With
    ``omega`` given, two fixed helper fields are combined into every member
    so that its mean over ``omega`` vanishes.
    """
    space = stream_space(grid)
    X, Y = grid.coords
    reach = grid.radial_nodes[grid.n_r - 3]
    rng = np.random.default_rng(seed)
    out = []
    helpers = None
    if omega is not None:
        g = _bump(X, Y, 0.0, 0.0, 0.9 * reach)
        hs = [space.field(space.restrict(Y * g)), space.field(space.restrict(-X * g))]
        m = mean_weights(grid, omega)
        M = np.stack([m @ h.values.reshape(-1, 2) for h in hs], axis=1)
        if np.linalg.cond(M) > 1e8:
            raise ValueError("anchor region too small to build zero-mean test fields")
        helpers = (hs, M, m)
    while len(out) < count:
        rho = reach * rng.uniform(0.25, 0.45)
        cr = rng.uniform(0.0, 0.9 * reach - rho)
        ct = rng.uniform(0.0, 2 * math.pi)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
        phi = amp * _bump(X, Y, cr * math.cos(ct), cr * math.sin(ct), rho)
        phi = phi * (1.0 + rng.normal(0, 0.3) * X / reach + rng.normal(0, 0.3) * Y / reach)
        w = space.field(space.restrict(phi))
        if helpers is not None:
            hs, M, m = helpers
            coef = np.linalg.solve(M, m @ w.values.reshape(-1, 2))
            w = w - hs[0] * coef[0] - hs[1] * coef[1]
        nrm = dirichlet_norm(w)
        if nrm > 0:
            out.append(w * (1.0 / nrm))
    return out


def weak_residual(u: VectorField, F: TensorField, battery: list[VectorField],
                  form: str = "skew") -> float:
    """Largest normalised weak-form defect over the test battery.

    ``max |<grad u, grad phi> + <u . grad u, phi> - <F, grad phi>| / ||grad phi||``.
    The convection term uses the antisymmetrised edge form applied to
    ``u`` minus its boundary-ring mean (``form="skew"``, the form the solver
    enforces) or the plain advective edge form (``form="advective"``).
    """
    grid = u.grid
    if not grid.same_as(F.grid):
        raise ValueError("u and F live on different grids")
    n = grid.size
    U = u.values.reshape(n, 2)
    W = U - U[-grid.n_theta:].mean(axis=0)[None, :]
    ed = grid.edges
    Ft = tensor_edge_values(F)
    gW = ed.matrix @ W
    if form == "skew":
        S = convection_matrix(grid, U)
    elif form == "advective":
        beta = 0.5 * np.sum((U[ed.a] + U[ed.b]) * ed.tangent, axis=1)
        c = ed.weight * beta / (2.0 * ed.length)
        # <u.grad w, phi> = sum c_e (w_b - w_a)(phi_a + phi_b)
        S = sp.csr_matrix((np.concatenate([c, c, -c, -c]),
                           (np.concatenate([ed.a, ed.b, ed.a, ed.b]),
                            np.concatenate([ed.b, ed.b, ed.a, ed.a]))), shape=(n, n))
    else:
        raise ValueError(f"unknown form {form!r}")
    worst = 0.0
    for phi in battery:
        P = phi.values.reshape(n, 2)
        gP = ed.matrix @ P
        val = np.dot(ed.weight, np.sum(gW * gP, axis=1))
        val += P[:, 0] @ (S @ W[:, 0]) + P[:, 1] @ (S @ W[:, 1])
        val -= np.dot(ed.weight, np.sum(Ft * gP, axis=1))
        worst = max(worst, abs(val) / max(dirichlet_norm(phi), 1e-300))
    return float(worst)
