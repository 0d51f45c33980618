"""Time stepping for the Lamé and the coupled magnetoelastic system on a box.

Unknowns: displacement ``v`` (nodes, staggered half a step behind), velocity
``w = dv/dt`` (nodes) and magnetic perturbation ``h`` (faces). One step reads

    v^{n+1/2} = v^{n-1/2} + dt w^n
    (w^{n+1} - w^n)/dt = -A v^{n+1/2} - kappa S^T C hbar
    (h^{n+1} - h^n)/dt = -(1/beta) C^T C hbar + C^T S wbar

with ``A`` the elastic form, ``C`` the discrete curl, ``S w`` the edge average
of ``w x B`` and bars the ``theta`` averages (Crank-Nicolson for 1/2). The
implicit part is solved by conjugate gradients on the Schur complement in ``h``.
For ``theta = 1/2`` the discrete energy satisfies
``E^{n+1} - E^n = -dt (kappa/beta) |C hbar|^2`` exactly, so it never grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import CflViolation, LinearSolveFailure, ValidationError
from .grid import DIRICHLET, NODE, NODES, Grid, Operators
from .material import Material

CFL_FACTOR = 0.9


@dataclass
class FieldState:
    """Solver state at time ``t``.

    ``v`` is the displacement at ``t - dt/2`` (leapfrog stagger), ``vt`` the
    velocity at ``t`` and ``h`` the face-centred magnetic field at ``t``.
    """

    t: float
    v: np.ndarray
    vt: np.ndarray
    h: tuple
    step: int = 0

    def displacement(self, dt: float) -> np.ndarray:
        """Displacement at ``t`` (average of the two staggered values)."""
        return self.v + 0.5 * dt * self.vt

    def reversed(self, dt: float) -> "FieldState":
        """State whose forward Lamé evolution retraces this one backward."""
        return FieldState(self.t, self.v + dt * self.vt, -self.vt, tuple(-x for x in self.h), self.step)

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.v.copy(), self.vt.copy(), tuple(x.copy() for x in self.h), self.step)


@dataclass
class EnergyRecord:
    t: float
    E: float
    E_parts: dict
    dissipation_rate: float
    E_j: list = field(default_factory=list)

    def row(self) -> list:
        p = self.E_parts
        return [self.t, self.E, p["kinetic"], p["shear"], p["compressional"], p["magnetic"], self.dissipation_rate,
                *self.E_j]


def max_stable_dt(grid: Grid, material: Material) -> float:
    return CFL_FACTOR * grid.h_min / (material.c_L * math.sqrt(3.0))


class MagnetoSolver:
    def __init__(
        self,
        grid: Grid,
        material: Material,
        dt: Optional[float] = None,
        theta: float = 0.5,
        cg_rtol: float = 1e-12,
        cg_maxiter: int = 5000,
        tol_div: float = 1e-10,
    ):
        self.grid = grid
        self.material = material
        self.ops = Operators(grid)
        limit = max_stable_dt(grid, material)
        self.dt = float(dt) if dt is not None else limit
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.dt > limit * (1 + 1e-12):
            raise CflViolation(f"dt = {self.dt:.6g} exceeds the stability limit {limit:.6g} = 0.9 h / (c_L sqrt 3)")
        if not 0.5 <= theta <= 1.0:
            raise ValidationError("theta must lie in [1/2, 1]")
        self.theta = float(theta)
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        self.tol_div = tol_div
        self.cg_iterations: list[int] = []

    # -- operators ----------------------------------------------------------
    @property
    def coupled(self) -> bool:
        return self.material.B_mag > 0

    def A(self, v):
        return self.ops.elastic(v, self.material.lam, self.material.mu)

    def lame_apply(self, v) -> np.ndarray:
        """``mu Lap v + (lambda + mu) grad div v`` with homogeneous Dirichlet data."""
        return -self.A(v)

    def lorentz(self, h) -> np.ndarray:
        """``-kappa S^T C h``: the magnetic force on the displacement equation."""
        return -self.material.kappa * self.ops.couple_T(self.ops.curl(h), self.material.B)

    def generator(self, v, w, h):
        """Time derivative of the semi-discrete system at ``(v, w, h)``."""
        m, ops = self.material, self.ops
        dv = ops.mask_nodes(w)
        dw = -self.A(v) + self.lorentz(h)
        curl_h = ops.curl(h)
        source = ops.curl_T(ops.couple(w, m.B))
        dh = tuple(-ops.curl_T(curl_h)[c] / m.beta + source[c] for c in range(3))
        return dv, dw, dh

    # -- initial data -------------------------------------------------------
    def initial_state(self, v0, v1, h0=None, t0: float = 0.0, project: bool = True) -> FieldState:
        ops = self.ops
        v0 = ops.mask_nodes(np.asarray(v0, dtype=float))
        v1 = ops.mask_nodes(np.asarray(v1, dtype=float))
        h0 = ops.zeros_faces() if h0 is None else tuple(np.asarray(x, dtype=float) * m for x, m in zip(h0, ops.face_masks))
        if project:
            h0 = self.project_divergence(h0)
        a0 = -self.A(v0) + self.lorentz(h0)
        dt = self.dt
        v_lag = v0 - 0.5 * dt * v1 + 0.125 * dt * dt * a0
        return FieldState(float(t0), ops.mask_nodes(v_lag), v1, h0, 0)

    def divergence_residual(self, h) -> float:
        return math.sqrt(self.ops.norm2(self.ops.div_faces(h)))

    def project_divergence(self, h) -> tuple:
        """Remove the gradient part of ``h`` when its divergence exceeds ``tol_div``."""
        ops = self.ops
        q = ops.div_faces(h)
        scale = math.sqrt(ops.norm2(h)) / self.grid.h_min
        if math.sqrt(ops.norm2(q)) <= self.tol_div * max(scale, 1e-300):
            return h
        shape = q.shape

        def mv(x):
            return ops.div_faces(ops.div_faces_T(x.reshape(shape))).ravel()

        n = q.size
        op = LinearOperator((n, n), matvec=mv, dtype=float)
        psi, info = cg(op, q.ravel(), rtol=1e-13, atol=0.0, maxiter=self.cg_maxiter)
        if info > 0:
            raise LinearSolveFailure(f"divergence projection did not converge in {self.cg_maxiter} iterations")
        g = ops.div_faces_T(psi.reshape(shape))
        return tuple(x - y for x, y in zip(h, g))

    # -- stepping -----------------------------------------------------------
    def step_lame(self, s: FieldState) -> FieldState:
        """Leapfrog step of the pure Lamé system (``h`` untouched)."""
        dt = self.dt
        v_half = s.v + dt * s.vt
        w_new = s.vt - dt * self.A(v_half)
        return FieldState(s.t + dt, v_half, w_new, s.h, s.step + 1)

    def step_magneto(self, s: FieldState) -> FieldState:
        """One step of the coupled scheme described in the module docstring."""
        if not self.coupled:
            return self.step_lame(s)
        dt, th = self.dt, self.theta
        m, ops = self.material, self.ops
        v_half = s.v + dt * s.vt
        w_star = s.vt - dt * self.A(v_half)
        w_th = s.vt + th * (w_star - s.vt)
        src = ops.curl_T(ops.couple(w_th, m.B))
        rhs = ops.flatten_faces(tuple(x + th * dt * y for x, y in zip(s.h, src)))
        c1 = th * dt / m.beta
        c2 = th * th * dt * dt * m.kappa

        def mv(x):
            hf = ops.unflatten_faces(x)
            e = ops.curl(hf)
            t1 = ops.curl_T(e)
            t2 = ops.curl_T(ops.couple(ops.couple_T(e, m.B), m.B))
            return x + ops.flatten_faces(tuple(c1 * a + c2 * b for a, b in zip(t1, t2)))

        n = rhs.size
        op = LinearOperator((n, n), matvec=mv, dtype=float)
        precond = self._preconditioner(c1)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = cg(op, rhs, x0=ops.flatten_faces(s.h), rtol=self.cg_rtol, atol=0.0, maxiter=self.cg_maxiter,
                     M=precond, callback=cb)
        if info > 0:
            raise LinearSolveFailure(f"implicit magnetic solve did not converge in {self.cg_maxiter} iterations")
        self.cg_iterations.append(count[0])
        h_th = ops.unflatten_faces(x)
        h_new = tuple(h0 + (a - h0) / th for h0, a in zip(s.h, h_th))
        w_new = w_star + self.lorentz(h_th) * dt
        return FieldState(s.t + dt, v_half, ops.mask_nodes(w_new), h_new, s.step + 1)

    def _preconditioner(self, c1: float) -> LinearOperator:
        key = ("pc", c1)
        if getattr(self, "_pc_key", None) != key:
            ops = self.ops
            apply = ops.face_shifted_inverse(c1)
            n = sum(ops.face_sizes)
            self._pc = LinearOperator((n, n), matvec=lambda x: ops.flatten_faces(apply(ops.unflatten_faces(x))),
                                      dtype=float)
            self._pc_key = key
        return self._pc

    def step(self, s: FieldState, coupled: bool = True) -> FieldState:
        return self.step_magneto(s) if coupled else self.step_lame(s)

    # -- energy -------------------------------------------------------------
    def energy(self, s: FieldState, extra: Sequence[FieldState] = ()) -> EnergyRecord:
        """Discrete energy at ``s.t``; it is conserved (Lamé) or dissipated exactly by the scheme.

        The kinetic part carries the leapfrog correction ``-dt^2/8 <w, A w>``
        so that the parts sum to the conserved quantity
        ``1/2 |w|^2 + 1/2 kappa |h|^2 + 1/2 <v^{n-1/2}, A v^{n+1/2}>``.
        """
        m, ops, dt = self.material, self.ops, self.dt
        vbar = s.displacement(dt)
        w = s.vt
        parts = {
            "kinetic": 0.5 * ops.norm2(w) - 0.125 * dt * dt * ops.dot(w, self.A(w)),
            "shear": ops.shear_energy(vbar, m.mu),
            "compressional": ops.compressional_energy(vbar, m.lam, m.mu),
            "magnetic": 0.5 * m.kappa * ops.norm2(s.h),
        }
        E = parts["kinetic"] + parts["shear"] + parts["compressional"] + parts["magnetic"]
        rate = self.dissipation_rate(s)
        return EnergyRecord(s.t, E, parts, rate, [self.energy(x).E for x in extra])

    def dissipation_rate(self, s: FieldState) -> float:
        m = self.material
        if not self.coupled:
            return 0.0
        return m.kappa / m.beta * self.ops.norm2(self.ops.curl(s.h))

    # -- differentiated trajectories ----------------------------------------
    def derivative_data(self, v0, v1, h0, order: int) -> list:
        """Initial data of the first ``order`` time-differentiated trajectories."""
        ops = self.ops
        h0 = ops.zeros_faces() if h0 is None else h0
        out = []
        cur = (ops.mask_nodes(v0), ops.mask_nodes(v1), h0)
        for _ in range(order):
            cur = self.generator(*cur)
            out.append(cur)
        return out


def run(
    solver: MagnetoSolver,
    state: FieldState,
    t_end: float,
    coupled: bool = True,
    extra: Sequence[FieldState] = (),
    record_every: int = 1,
    callback: Optional[Callable[[FieldState, list], None]] = None,
) -> tuple[list, FieldState, list]:
    """Advance ``state`` (and the differentiated trajectories ``extra``) up to ``t_end``.

    Returns the energy records, the final state and the final extra states.
    ``callback(state, extra)`` runs after every step.
    """
    extra = list(extra)
    n_steps = int(round((t_end - state.t) / solver.dt))
    records = [solver.energy(state, extra)]
    for k in range(n_steps):
        state = solver.step(state, coupled)
        extra = [solver.step(x, coupled) for x in extra]
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            records.append(solver.energy(state, extra))
        if callback is not None:
            callback(state, extra)
    return records, state, extra


def dissipation_integral(records: Sequence[EnergyRecord], dissipated: float = 0.0) -> np.ndarray:
    """Running trapezoid integral of the dissipation rate, starting from ``dissipated``."""
    t = np.array([r.t for r in records])
    q = np.array([r.dissipation_rate for r in records])
    return np.cumsum(np.concatenate([[dissipated], 0.5 * (q[1:] + q[:-1]) * np.diff(t)]))


def balance_residual(records: Sequence[EnergyRecord], E_ref: Optional[float] = None,
                     dissipated: float = 0.0) -> np.ndarray:
    """``E(t) - E(0) + int_0^t dissipation`` with the trapezoid rule on the recorded samples.

    A restarted run passes the initial energy ``E_ref`` and the dissipation
    integral ``dissipated`` accumulated up to its first record, which gives the
    same floating-point values as the uninterrupted run.
    """
    E = np.array([r.E for r in records])
    return E - (E[0] if E_ref is None else E_ref) + dissipation_integral(records, dissipated)


# ---------------------------------------------------------------------------
# Smooth initial data
# ---------------------------------------------------------------------------


def mode_profile(grid: Grid, k: Sequence[int], loc=NODES) -> np.ndarray:
    """Product of 1D modes: ``sin(k pi x / L)`` on Dirichlet axes, ``cos(2 pi k x / L)`` on periodic ones."""
    X = grid.mesh(loc)
    out = np.ones(grid.shape(loc))
    for a in range(3):
        L = grid.extents[a]
        if grid.bc[a] == DIRICHLET:
            out = out * np.sin(k[a] * math.pi * X[a] / L)
        else:
            out = out * np.cos(2 * math.pi * k[a] * X[a] / L)
    return out


def modal_field(grid: Grid, modes: Sequence[dict]) -> np.ndarray:
    """Node vector field from ``[{"k": [kx, ky, kz], "amplitude": [ax, ay, az]}, ...]``."""
    out = np.zeros((3, *grid.n))
    for m in modes:
        prof = mode_profile(grid, m["k"])
        amp = np.asarray(m["amplitude"], dtype=float)
        out += amp[:, None, None, None] * prof[None]
    return out
