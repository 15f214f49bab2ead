"""Membership programs for local-hidden-state models with classical communication.

An assemblage sigma_{a|x} admits an LHS model augmented with a d-level
message exactly when there are PSD blocks sigma~_{lambda,c}, one per
(deterministic strategy, message value), with

    sigma_{a|x} = sum_{lambda,c} D_lambda(a,c|x) sigma~_{lambda,c}
    tr sigma~_{lambda,c} = tr sigma~_{lambda,c'}        (all c, c')
    sum_lambda tr sigma~_{lambda,c} = 1                 (all c).

Two program flavours are built here:

* visibility maximization for the affine family
  ``sigma(v) = v F + (1-v) G`` (with the cap v <= 1 as a slack ray), and
* a margin feasibility test for an externally supplied assemblage
  (maximize alpha with sigma~ >= alpha * 1), whose sign answers
  membership and whose dual is a Farkas-type steering functional.

The reproduction constraints, written per Pauli coordinate, make every
block a 4-dimensional Lorentz cone; the resulting constraint matrix has
an arrow structure (a thin dense row band from the reproduction
constraints over a huge diagonal family of trace-equality rows) which
the specialized KKT factorization below exploits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import CertificateUnavailableError, ResourceLimitError, SolverFailureError
from .quantum import (
    Assemblage,
    PAULI_BASIS,
    TwoQubitState,
    affine_assemblage,
    joint_distribution,
    matrix_from_pauli,
    pauli_coords,
)
from .solver import SdpProblem, SdpSolution, SolutionStatus, SolverOptions, solve
from .solver.cones import ConeLayout
from .solver.hsd import ConicData
from .solver.problem import LinearExpression, SdpConstraint, TermGroup
from .strategies import StrategySet, enumerate_strategies, quotient_by_message_relabeling


# --------------------------------------------------------------------------
# Program container and builders.


@dataclass
class LhscProgram:
    """Assembled membership program plus the index maps into its blocks."""

    kind: str  # "visibility" | "feasibility"
    d: int
    strategies: StrategySet
    problem: SdpProblem
    rep_row_index: np.ndarray  # (m, 2, 4) -> constraint index of (x, a, pauli i)
    f_coords: np.ndarray | None  # (m, 2, 4) Pauli coords of F_{a|x} (visibility)
    g_coords: np.ndarray | None  # (m, 2, 4) Pauli coords of G_{a|x}
    target_coords: np.ndarray | None  # (m, 2, 4) external assemblage (feasibility)

    @property
    def m(self) -> int:
        return self.strategies.m

    def block_index(self, lam: int, c: int) -> int:
        """Block id of sigma~_{lambda,c}."""
        return lam * self.d + c


@dataclass
class CriticalVisibilityReport:
    """Result of the visibility maximization at fixed measurements."""

    v_crit: float
    d: int
    measurements: np.ndarray  # (m, 3) Bloch directions
    certificate: "SteeringCertificate | None"
    solution: SdpSolution
    program: LhscProgram
    runtime: float

    @property
    def c_bits(self) -> float:
        return float(np.log2(self.d))


@dataclass
class FeasibilityResult:
    """Margin-program answer for an externally supplied assemblage."""

    feasible: bool
    margin: float
    model_blocks: np.ndarray | None  # (n_lambda, d, 2, 2) when feasible
    certificate: "SteeringCertificate | None"  # when infeasible
    solution: SdpSolution
    program: LhscProgram


@dataclass
class SteeringCertificate:
    """Communication-assisted steering inequality sum_ax tr(Z_{a|x} s_{a|x}) <= bound.

    Normalized so the functional evaluates to v on the program's affine
    family; the bound is recomputed by brute force over deterministic
    strategies and message states.
    """

    blocks: np.ndarray  # (m, 2, 2, 2) indexed [x, a]
    bound: float
    d: int

    def evaluate(self, assemblage: Assemblage) -> float:
        return float(np.real(np.einsum("xaij,xaji->", self.blocks, assemblage.entries)))


def _strategy_cap_check(m: int, d: int, cap: int) -> None:
    count = (2 * d) ** m
    if count > cap:
        raise ResourceLimitError(f"(2d)^m = {count} strategies exceed the cap of {cap}")


def _indicator_matrix(strategies: StrategySet, d: int) -> np.ndarray:
    """Dense P[(x,a) -> 2x+a, lambda*d+c] = D_lambda(a, c | x)."""
    n_lam = strategies.count
    m = strategies.m
    p = np.zeros((2 * m, n_lam * d))
    lam = np.arange(n_lam)
    for x in range(m):
        rows = 2 * x + strategies.outputs[:, x]
        cols = lam * d + strategies.messages[:, x]
        p[rows, cols] = 1.0
    return p


def _assemblage_coords(assemblage: Assemblage) -> np.ndarray:
    """Pauli coordinates (m, 2, 4) of the entries."""
    m = assemblage.m
    out = np.empty((m, 2, 4))
    for x in range(m):
        for a in (0, 1):
            out[x, a] = pauli_coords(assemblage.entries[x, a])
    return out


def _rep_row_mask(m: int, d: int) -> np.ndarray:
    """Which reproduction rows stay after structural presolve.

    For x >= 1 (0-based) the trace coordinate of the (a=1, x) row is a
    combination of the other reproduction rows and the trace-equality
    rows; for d = 1 the whole (a=1, x) group is.  Dropping them keeps
    the row set linearly independent, and the normalization rows
    sum_lambda tr sigma~_{lambda,c} = 1 are implied by what remains, so
    they are never emitted into the solver.
    """
    mask = np.ones((m, 2, 4), dtype=bool)
    for x in range(1, m):
        if d == 1:
            mask[x, 1, :] = False
        else:
            mask[x, 1, 0] = False
    return mask


def _build_program(
    kind: str,
    strategies: StrategySet,
    d: int,
    f_coords: np.ndarray | None,
    g_coords: np.ndarray | None,
    target_coords: np.ndarray | None,
) -> LhscProgram:
    m = strategies.m
    n_lam = strategies.count
    n_blocks = n_lam * d
    pmat = _indicator_matrix(strategies, d)
    mask = _rep_row_mask(m, d)

    with_cap = kind == "visibility"
    block_dims = tuple([2] * n_blocks + ([1] if with_cap else []))

    if kind == "visibility":
        kcoords = f_coords - g_coords
        rhs_rep = g_coords
        free_rep = -kcoords  # coefficient of v in each reproduction row
    else:
        rhs_rep = target_coords
        counts = pmat.sum(axis=1)  # matching blocks per (x, a); alpha rides on identity
        free_rep = np.zeros((m, 2, 4))
        for x in range(m):
            for a in (0, 1):
                free_rep[x, a, 0] = counts[2 * x + a]

    constraints: list[SdpConstraint] = []
    rep_row_index = np.full((m, 2, 4), -1, dtype=int)
    kept_rows: list[int] = []
    lam = np.arange(n_lam)

    for x in range(m):
        for a in (0, 1):
            match = strategies.outputs[:, x] == a
            blocks = (lam * d + strategies.messages[:, x])[match]
            for i in range(4):
                expr = LinearExpression(
                    (TermGroup(blocks, PAULI_BASIS[i] / 2),),
                    free=np.array([free_rep[x, a, i]]),
                )
                rep_row_index[x, a, i] = len(constraints)
                if mask[x, a, i]:
                    kept_rows.append(len(constraints))
                constraints.append(SdpConstraint(expr, float(rhs_rep[x, a, i])))

    trace_pos = []
    trace_neg = []
    for lam_i in range(n_lam):
        for c in range(1, d):
            expr = LinearExpression(
                (
                    TermGroup([lam_i * d + c], np.eye(2, dtype=complex) / 2),
                    TermGroup([lam_i * d + 0], -np.eye(2, dtype=complex) / 2),
                ),
                free=np.array([0.0]),
            )
            trace_pos.append(lam_i * d + c)
            trace_neg.append(lam_i * d + 0)
            kept_rows.append(len(constraints))
            constraints.append(SdpConstraint(expr, 0.0))

    # Normalization rows, recorded for faithfulness but implied by the rest.
    for c in range(d):
        expr = LinearExpression(
            (TermGroup(lam * d + c, np.eye(2, dtype=complex)),),
            free=np.array([0.0]),
        )
        constraints.append(SdpConstraint(expr, 1.0))

    if with_cap:
        expr = LinearExpression(
            (TermGroup([n_blocks], np.array([[1.0]], dtype=complex)),),
            free=np.array([1.0]),
        )
        kept_rows.append(len(constraints))
        constraints.append(SdpConstraint(expr, 1.0))

    objective = LinearExpression((), free=np.array([1.0]))
    problem = SdpProblem(
        block_dims=block_dims,
        n_free=1,
        constraints=constraints,
        objective=objective,
    )
    problem.structure = _LhscStructure(
        pmat=pmat,
        mask=mask,
        free_rep=free_rep,
        rhs_rep=rhs_rep,
        trace_pos=np.asarray(trace_pos, dtype=int),
        trace_neg=np.asarray(trace_neg, dtype=int),
        d=d,
        with_cap=with_cap,
        kept_rows=kept_rows,
    )
    return LhscProgram(
        kind=kind,
        d=d,
        strategies=strategies,
        problem=problem,
        rep_row_index=rep_row_index,
        f_coords=f_coords,
        g_coords=g_coords,
        target_coords=target_coords,
    )


# --------------------------------------------------------------------------
# Structured KKT backend.


class _LhscStructure:
    """ConicData factory exploiting the arrow structure of the programs."""

    def __init__(self, pmat, mask, free_rep, rhs_rep, trace_pos, trace_neg, d, with_cap, kept_rows):
        self.pmat = pmat
        self.mask = mask
        self.free_rep = free_rep
        self.rhs_rep = rhs_rep
        self.trace_pos = trace_pos
        self.trace_neg = trace_neg
        self.d = d
        self.with_cap = with_cap
        self.kept_rows = kept_rows
        self.m = mask.shape[0]
        self.n_blocks = pmat.shape[1]

    def conic_data(self) -> tuple[ConicData, list[int]]:
        layout = ConeLayout(n4=self.n_blocks, n1=1 if self.with_cap else 0)
        op = _LhscKkt(self)
        b_parts = [self.rhs_rep[self.mask]]
        b_parts.append(np.zeros(self.trace_pos.size))
        if self.with_cap:
            b_parts.append(np.ones(1))
        b = np.concatenate(b_parts)
        # minimize -v
        c = np.zeros(layout.dim + 1)
        c[-1] = -1.0
        return ConicData(layout=layout, operator=op, b=b, c=c), list(self.kept_rows)


class _LhscKkt:
    """KktOperator for the membership programs.

    Row order: kept reproduction rows (x-major, a, then Pauli coordinate),
    then trace-equality rows, then the optional cap row.  Cone coordinate
    order: 4 Pauli coordinates per block, then the cap slack.
    """

    def __init__(self, s: _LhscStructure):
        self.s = s
        self.n4 = s.n_blocks
        self.n1 = 1 if s.with_cap else 0
        self.n_cone = 4 * self.n4 + self.n1
        self.n_free = 1
        self.n_rep = int(s.mask.sum())
        self.n_trace = s.trace_pos.size
        self.p = self.n_rep + self.n_trace + self.n1
        self.mask_flat = s.mask.reshape(-1)  # length 8m, (x,a,i) order
        self.fvec = s.free_rep.reshape(-1)[self.mask_flat]
        # P with rows reordered to (x, a) -> 2x + a already matches mask order.
        self.pmat = s.pmat

    # -- linear operator ---------------------------------------------------

    def apply(self, x_cone: np.ndarray, x_free: np.ndarray) -> np.ndarray:
        s = self.s
        x4 = x_cone[: 4 * self.n4].reshape(self.n4, 4)
        rep_full = (self.pmat @ x4).reshape(-1)  # (8m,) in (x,a,i) order
        rep = rep_full[self.mask_flat] + self.fvec * x_free[0]
        trace = x4[s.trace_pos, 0] - x4[s.trace_neg, 0]
        parts = [rep, trace]
        if self.n1:
            parts.append(np.array([x_cone[-1] + x_free[0]]))
        return np.concatenate(parts)

    def apply_transpose(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.s
        y_rep = y[: self.n_rep]
        y_trace = y[self.n_rep : self.n_rep + self.n_trace]
        rep_full = np.zeros(self.mask_flat.size)
        rep_full[self.mask_flat] = y_rep
        rep_mat = rep_full.reshape(2 * s.m, 4)
        x4 = self.pmat.T @ rep_mat  # (n_blocks, 4)
        np.add.at(x4[:, 0], s.trace_pos, y_trace)
        np.add.at(x4[:, 0], s.trace_neg, -y_trace)
        x_cone = x4.reshape(-1)
        free = float(self.fvec @ y_rep)
        if self.n1:
            y_cap = y[-1]
            x_cone = np.concatenate([x_cone, [y_cap]])
            free += y_cap
        return x_cone, np.array([free])

    # -- factorization -----------------------------------------------------

    def factor(self, s4: np.ndarray, s1: np.ndarray, reg: float, refine: int = 1) -> "_LhscFactor":
        s = self.s
        two_m = 2 * s.m
        # Reproduction block of A_u S A_u^T: (2m,4,2m,4) over Pauli coordinates.
        m_rep = np.empty((two_m, 4, two_m, 4))
        for i in range(4):
            for j in range(i, 4):
                mij = (self.pmat * s4[:, i, j]) @ self.pmat.T
                m_rep[:, i, :, j] = mij
                if i != j:
                    m_rep[:, j, :, i] = mij.T
        m_rep = m_rep.reshape(4 * two_m, 4 * two_m)[np.ix_(self.mask_flat, self.mask_flat)]

        if self.n_trace:
            # Border to the trace rows and their (block-diagonal) Gram matrix.
            ppos = self.pmat[:, s.trace_pos]  # (2m, n_trace)
            pneg = self.pmat[:, s.trace_neg]
            spos = s4[s.trace_pos, :, 0]  # (n_trace, 4)
            sneg = s4[s.trace_neg, :, 0]
            border = (
                ppos[:, None, :] * spos.T[None, :, :] - pneg[:, None, :] * sneg.T[None, :, :]
            ).reshape(4 * two_m, self.n_trace)[self.mask_flat]
            tt_diag = s4[s.trace_pos, 0, 0] + reg
            tt_rank1 = s4[s.trace_neg, 0, 0]
        else:
            border = np.zeros((self.n_rep, 0))
            tt_diag = np.zeros(0)
            tt_rank1 = np.zeros(0)

        return _LhscFactor(self, m_rep, border, tt_diag, tt_rank1, s1, reg, refine)


class _LhscFactor:
    def __init__(self, op: _LhscKkt, m_rep, border, tt_diag, tt_rank1, s1, reg, refine):
        self.op = op
        self.m_rep = m_rep
        self.border = border
        self.tt_diag_exact = tt_diag - reg if op.n_trace else tt_diag
        self.tt_rank1 = tt_rank1
        self.s1 = s1
        self.reg = reg
        self.refine = refine
        d = op.s.d

        if op.n_trace:
            # M_tt per lambda is diag + w * ones ones^T with w from the shared
            # (lambda, c=0) block; invert via Sherman-Morrison, vectorized.
            self.inv_diag = 1.0 / tt_diag
            dm1 = d - 1
            inv_d = self.inv_diag.reshape(-1, dm1)
            w = tt_rank1.reshape(-1, dm1)[:, 0]
            self.sm_scale = w / (1.0 + w * inv_d.sum(axis=1))  # per lambda
            schur = m_rep - self._tt_solve_mat(border.T).T @ border.T
        else:
            schur = m_rep
        n_rep = op.n_rep
        size = n_rep + op.n1 + 1
        kkt = np.zeros((size, size))
        kkt[:n_rep, :n_rep] = schur + reg * np.eye(n_rep)
        kkt[:n_rep, -1] = op.fvec
        kkt[-1, :n_rep] = op.fvec
        kkt[-1, -1] = -reg
        if op.n1:
            kkt[n_rep, n_rep] = s1[0] + reg
            kkt[n_rep, -1] = 1.0
            kkt[-1, n_rep] = 1.0
        self.lu = sla.lu_factor(kkt)
        self.size = size

    def _tt_solve(self, q: np.ndarray) -> np.ndarray:
        """Solve M_tt t = q (vector)."""
        dm1 = self.op.s.d - 1
        qd = (q * self.inv_diag).reshape(-1, dm1)
        corr = self.sm_scale * qd.sum(axis=1)
        return (qd - corr[:, None] * self.inv_diag.reshape(-1, dm1)).reshape(-1)

    def _tt_solve_mat(self, qmat: np.ndarray) -> np.ndarray:
        """Solve M_tt T = Q columnwise; Q has shape (n_trace, k)."""
        dm1 = self.op.s.d - 1
        qd = qmat * self.inv_diag[:, None]
        sums = qd.reshape(-1, dm1, qmat.shape[1]).sum(axis=1)
        corr = self.sm_scale[:, None] * sums  # (n_lambda, k)
        corr_full = np.repeat(corr, dm1, axis=0) * self.inv_diag[:, None]
        return qd - corr_full

    def _tt_apply(self, t: np.ndarray) -> np.ndarray:
        """M_tt t (exact, without regularization)."""
        dm1 = self.op.s.d - 1
        w = self.tt_rank1.reshape(-1, dm1)[:, 0]
        sums = t.reshape(-1, dm1).sum(axis=1)
        return self.tt_diag_exact * t + np.repeat(w * sums, dm1)

    def _kkt_apply(self, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact bordered-system product [[M, A_w], [A_w^T, 0]] (y; w)."""
        op = self.op
        n_rep, n_trace = op.n_rep, op.n_trace
        y_rep = y[:n_rep]
        y_trace = y[n_rep : n_rep + n_trace]
        out_rep = self.m_rep @ y_rep + self.op.fvec * w[0]
        out_trace = np.zeros(0)
        if n_trace:
            out_rep = out_rep + self.border @ y_trace
            out_trace = self.border.T @ y_rep + self._tt_apply(y_trace)
        out_free = float(op.fvec @ y_rep)
        parts = [out_rep, out_trace]
        if op.n1:
            y_cap = y[-1]
            parts.append(np.array([self.s1[0] * y_cap + w[0]]))
            out_free += y_cap
        return np.concatenate(parts), np.array([out_free])

    def _solve_once(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        op = self.op
        n_rep, n_trace = op.n_rep, op.n_trace
        q_rep = r1[:n_rep]
        q_trace = r1[n_rep : n_rep + n_trace]
        rhs = np.zeros(self.size)
        if n_trace:
            rhs[:n_rep] = q_rep - self.border @ self._tt_solve(q_trace)
        else:
            rhs[:n_rep] = q_rep
        if op.n1:
            rhs[n_rep] = r1[-1]
        rhs[-1] = r2[0]
        sol = sla.lu_solve(self.lu, rhs)
        y_rep = sol[:n_rep]
        dw = sol[-1:].copy()
        if n_trace:
            y_trace = self._tt_solve(q_trace - self.border.T @ y_rep)
        else:
            y_trace = np.zeros(0)
        parts = [y_rep, y_trace]
        if op.n1:
            parts.append(sol[n_rep : n_rep + 1])
        return np.concatenate(parts), dw

    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y, w = self._solve_once(r1, r2)
        target = 1e-14 * (1.0 + np.linalg.norm(r1) + np.linalg.norm(r2))
        for _ in range(max(self.refine, 0)):
            k1, k2 = self._kkt_apply(y, w)
            res1 = r1 - k1
            res2 = r2 - k2
            if np.linalg.norm(res1) + np.linalg.norm(res2) <= target:
                break
            dy, dw = self._solve_once(res1, res2)
            y = y + dy
            w = w + dw
        return y, w


# --------------------------------------------------------------------------
# Public operations.


def build_feasibility(
    assemblage: Assemblage,
    d: int,
    quotient: bool = False,
    cap: int = 10**6,
) -> LhscProgram:
    """Margin program deciding LHS(log2 d) membership of an assemblage."""
    if d < 1:
        raise ValueError("message level count d must be >= 1")
    _strategy_cap_check(assemblage.m, d, cap)
    strategies = enumerate_strategies(assemblage.m, 2, d, cap=cap)
    if quotient:
        strategies = quotient_by_message_relabeling(strategies)
    coords = _assemblage_coords(assemblage)
    return _build_program("feasibility", strategies, d, None, None, coords)


def solve_feasibility(program: LhscProgram, options: SolverOptions | None = None) -> FeasibilityResult:
    """Solve the margin program; negative optimal margin means steering."""
    if program.kind != "feasibility":
        raise ValueError("expected a feasibility program")
    solution = solve(program.problem, options)
    if solution.status != SolutionStatus.OPTIMAL:
        raise SolverFailureError(f"margin program did not solve: {solution.message}")
    margin = float(solution.free_values[0])
    feasible = margin >= 0.0
    model = None
    certificate = None
    if feasible:
        n_lam = program.strategies.count
        model = np.empty((n_lam, program.d, 2, 2), dtype=complex)
        for lam in range(n_lam):
            for c in range(program.d):
                model[lam, c] = (
                    solution.block_values[program.block_index(lam, c)]
                    + margin * np.eye(2)
                )
    else:
        certificate = _certificate_from_duals(program, solution, normalize_family=False)
    return FeasibilityResult(
        feasible=feasible,
        margin=margin,
        model_blocks=model,
        certificate=certificate,
        solution=solution,
        program=program,
    )


def critical_visibility(
    pure: TwoQubitState,
    noise: TwoQubitState,
    measurements,
    d: int,
    quotient: bool = False,
    cap: int = 10**6,
    options: SolverOptions | None = None,
    want_certificate: bool = True,
) -> CriticalVisibilityReport:
    """Largest v with an LHS(log2 d) model for v*F + (1-v)*G at these measurements."""
    if d < 1:
        raise ValueError("message level count d must be >= 1")
    f_asm, g_asm = affine_assemblage(pure, noise, measurements)
    _strategy_cap_check(f_asm.m, d, cap)
    strategies = enumerate_strategies(f_asm.m, 2, d, cap=cap)
    if quotient:
        strategies = quotient_by_message_relabeling(strategies)
    program = _build_program(
        "visibility", strategies, d, _assemblage_coords(f_asm), _assemblage_coords(g_asm), None
    )
    start = time.perf_counter()
    solution = solve(program.problem, options)
    runtime = time.perf_counter() - start
    if solution.status != SolutionStatus.OPTIMAL:
        raise SolverFailureError(f"visibility program did not solve: {solution.message}")
    v_crit = float(solution.free_values[0])
    certificate = None
    if want_certificate and v_crit < 1.0 - 1e-6:
        certificate = extract_certificate(program, solution)
    directions = np.array(
        [np.asarray(mdir.direction.components if hasattr(mdir, "direction") else mdir, dtype=float)
         for mdir in measurements]
    )
    return CriticalVisibilityReport(
        v_crit=v_crit,
        d=d,
        measurements=directions,
        certificate=certificate,
        solution=solution,
        program=program,
        runtime=runtime,
    )


def _dual_rep_blocks(program: LhscProgram, solution: SdpSolution) -> np.ndarray:
    """Assemble the reproduction-row duals into Hermitian Z_{a|x}."""
    m = program.m
    z = np.zeros((m, 2, 2, 2), dtype=complex)
    for x in range(m):
        for a in (0, 1):
            coeffs = solution.duals[program.rep_row_index[x, a]]
            z[x, a] = matrix_from_pauli(coeffs / 2.0)
    return z


def _pairing(z: np.ndarray, mats: np.ndarray) -> float:
    """sum_ax tr(Z_{a|x} M_{a|x}) for Hermitian stacks indexed [x, a]."""
    return float(np.real(np.einsum("xaij,xaji->", z, mats)))


def _certificate_from_duals(
    program: LhscProgram, solution: SdpSolution, normalize_family: bool
) -> SteeringCertificate:
    z = _dual_rep_blocks(program, solution)
    if np.max(np.abs(z)) < 1e-12:
        raise CertificateUnavailableError("all dual multipliers vanish")
    if normalize_family:
        k = _coords_to_matrices(program.f_coords - program.g_coords)
        slope = _pairing(z, k)
        if abs(slope) < 1e-9 * np.max(np.abs(z)):
            raise CertificateUnavailableError("degenerate dual: no sensitivity to v")
        z = z / slope
        # Shift by a multiple of the identity on every effect so the
        # functional evaluates to exactly v on the affine family.
        offset = _pairing(z, _coords_to_matrices(program.g_coords))
        z = z - (offset / program.m) * np.eye(2)[None, None]
    else:
        # Orient the Farkas functional so the target assemblage violates it.
        target = _coords_to_matrices(program.target_coords)
        if _pairing(z, target) < certificate_classical_bound(z, program.d):
            z = -z
    bound = certificate_classical_bound(z, program.d)
    return SteeringCertificate(blocks=z, bound=bound, d=program.d)


def _coords_to_matrices(coords: np.ndarray) -> np.ndarray:
    m = coords.shape[0]
    out = np.empty((m, 2, 2, 2), dtype=complex)
    for x in range(m):
        for a in (0, 1):
            out[x, a] = matrix_from_pauli(coords[x, a])
    return out


def extract_certificate(program: LhscProgram, solution: SdpSolution) -> SteeringCertificate:
    """Dual certificate of the visibility program as a steering functional.

    Normalized so that evaluating it on the affine family gives exactly v,
    hence its classical bound equals v_crit and any v above it violates
    the inequality.
    """
    if program.kind != "visibility":
        raise ValueError("certificates are extracted from visibility programs")
    if solution.status != SolutionStatus.OPTIMAL:
        raise ValueError("certificate extraction needs an optimal solution")
    if float(solution.free_values[0]) >= 1.0 - 1e-6:
        raise CertificateUnavailableError("v_crit = 1: the family never leaves the model set")
    return _certificate_from_duals(program, solution, normalize_family=True)


def certificate_classical_bound(blocks: np.ndarray, d: int, cap: int = 10**6) -> float:
    """Brute-force LHS(log2 d) bound of the functional sum_ax tr(Z_{a|x} s_{a|x}).

    For each deterministic strategy the inner optimization over one qubit
    state per message value is the top eigenvalue of the summed
    coefficient operator.
    """
    blocks = np.asarray(blocks, dtype=complex)
    m = blocks.shape[0]
    _strategy_cap_check(m, d, cap)
    strategies = enumerate_strategies(m, 2, d, cap=cap)
    zc = np.empty((m, 2, 4))
    for x in range(m):
        for a in (0, 1):
            zc[x, a] = pauli_coords(blocks[x, a])

    picked = zc[np.arange(m)[None, :], strategies.outputs]  # (n_lam, m, 4)
    onehot = np.eye(d)[strategies.messages]  # (n_lam, m, d)
    summed = np.einsum("nmk,nmd->ndk", picked, onehot)  # (n_lam, d, 4)
    # top eigenvalue of t0*1 + t.sigma is t0 + |t|
    lam_max = summed[..., 0] + np.linalg.norm(summed[..., 1:], axis=-1)
    # messages never used by a strategy contribute a zero operator
    used = onehot.sum(axis=1) > 0
    lam_max = np.where(used, lam_max, 0.0)
    return float(lam_max.sum(axis=1).max())


def lhv_visibility(
    pure: TwoQubitState,
    noise: TwoQubitState,
    alice_measurements,
    bob_measurements,
    options: SolverOptions | None = None,
) -> float:
    """Largest v whose joint distribution admits a local-hidden-variable model.

    Solved as a linear program over the 2^mA * 2^mB deterministic strategy
    pairs, written in the correlator basis (normalization, both parties'
    marginals, and the joint correlators) so the equality rows are
    linearly independent.
    """
    pf = joint_distribution(pure, alice_measurements, bob_measurements)
    pg = joint_distribution(noise, alice_measurements, bob_measurements)
    m_a, m_b = pf.m_alice, pf.m_bob
    if m_a > 5 or m_b > 5:
        raise ResourceLimitError(f"LHV LP caps at 5 settings per side, got ({m_a}, {m_b})")

    def correlators(p):
        signs = np.array([1.0, -1.0])
        e_ab = np.einsum("xyab,a,b->xy", p.table, signs, signs)
        e_a = np.einsum("xyab,a->xy", p.table, signs)[:, 0]
        e_b = np.einsum("xyab,b->xy", p.table, signs)[0, :]
        return e_a, e_b, e_ab

    fa, fb, fab = correlators(pf)
    ga, gb, gab = correlators(pg)

    # Deterministic responses: alpha[s, x] = +-1 for the 2^m sign patterns.
    def sign_table(m):
        bits = ((np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1)
        return 1.0 - 2.0 * bits

    alpha = sign_table(m_a)
    beta = sign_table(m_b)
    n_pairs = alpha.shape[0] * beta.shape[0]
    pair_alpha = np.repeat(alpha, beta.shape[0], axis=0)  # (n_pairs, m_a)
    pair_beta = np.tile(beta, (alpha.shape[0], 1))  # (n_pairs, m_b)

    block_ids = np.arange(n_pairs)
    constraints = [
        SdpConstraint(
            LinearExpression((TermGroup(block_ids, np.ones((1, 1), dtype=complex)),), free=np.array([0.0])),
            1.0,
        )
    ]

    def add_rows(coeff_rows, f_vals, g_vals):
        for coeffs, fv, gv in zip(coeff_rows, f_vals, g_vals):
            constraints.append(
                SdpConstraint(
                    LinearExpression(
                        (TermGroup(block_ids, coeffs.reshape(-1, 1, 1).astype(complex)),),
                        free=np.array([-(fv - gv)]),
                    ),
                    float(gv),
                )
            )

    add_rows(pair_alpha.T, fa, ga)
    add_rows(pair_beta.T, fb, gb)
    joint_rows = pair_alpha[:, :, None] * pair_beta[:, None, :]
    add_rows(joint_rows.reshape(n_pairs, -1).T, fab.reshape(-1), gab.reshape(-1))

    # Cap v <= 1 with a slack ray.
    constraints.append(
        SdpConstraint(
            LinearExpression((TermGroup([n_pairs], np.ones((1, 1), dtype=complex)),), free=np.array([1.0])),
            1.0,
        )
    )
    problem = SdpProblem(
        block_dims=tuple([1] * n_pairs + [1]),
        n_free=1,
        constraints=constraints,
        objective=LinearExpression((), free=np.array([1.0])),
    )
    solution = solve(problem, options)
    if solution.status != SolutionStatus.OPTIMAL:
        raise SolverFailureError(f"LHV linear program did not solve: {solution.message}")
    return float(solution.free_values[0])
