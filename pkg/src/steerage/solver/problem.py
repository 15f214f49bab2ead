"""Public model for block-diagonal SDPs and the solve/verify entry points.

An :class:`SdpProblem` holds Hermitian PSD blocks of dimension 1 or 2, at
most one free scalar, real linear equality constraints written as
``sum_b tr(C_b X_b) + f*w = rhs``, and a linear objective of the same
shape which is always maximized.  Internally blocks are mapped to their
Pauli coordinates, turning every 2x2 block into a 4-dimensional Lorentz
cone, and solved with the homogeneous self-dual engine.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..quantum import matrix_from_pauli, pauli_coords
from .cones import ConeLayout, residual_to_cone
from .hsd import ConicData, ConicResult, SolverOptions, solve_conic
from .kkt import SparseKkt


class SolutionStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class TermGroup:
    """Coefficient matrix applied to one or more blocks of equal dimension.

    ``value = sum_k tr(coeff_k  X_{indices[k]})``; a single (d, d) ``coeff``
    broadcasts over all listed blocks.
    """

    indices: np.ndarray
    coeff: np.ndarray

    def __post_init__(self):
        idx = np.atleast_1d(np.asarray(self.indices, dtype=np.int64))
        coeff = np.asarray(self.coeff, dtype=complex)
        if coeff.ndim == 2:
            pass
        elif coeff.ndim == 3 and coeff.shape[0] == idx.size:
            pass
        elif coeff.ndim == 0:
            coeff = coeff.reshape(1, 1)
        else:
            raise ValueError("coeff must be (d,d) or (k,d,d)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeff", coeff)

    def iter_terms(self):
        if self.coeff.ndim == 2:
            for b in self.indices:
                yield int(b), self.coeff
        else:
            for b, mat in zip(self.indices, self.coeff):
                yield int(b), mat


@dataclass(frozen=True)
class LinearExpression:
    """Sparse real-valued linear functional of the block variables."""

    groups: tuple[TermGroup, ...] = ()
    free: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "free", np.atleast_1d(np.asarray(self.free, dtype=float)))

    def value(self, block_values: list[np.ndarray], free_values: np.ndarray) -> float:
        total = 0.0
        for group in self.groups:
            for b, mat in group.iter_terms():
                total += float(np.real(np.trace(mat @ np.atleast_2d(block_values[b]))))
        total += float(self.free @ free_values)
        return total


@dataclass(frozen=True)
class SdpConstraint:
    expr: LinearExpression
    rhs: float


@dataclass
class SdpProblem:
    """Block-diagonal SDP with equality constraints; sense is maximize."""

    block_dims: tuple[int, ...]
    n_free: int
    constraints: list[SdpConstraint]
    objective: LinearExpression
    structure: object | None = None  # optional specialized ConicData factory

    def __post_init__(self):
        if any(d not in (1, 2) for d in self.block_dims):
            raise ValueError("block dimensions must be 1 or 2")
        if self.n_free not in (0, 1):
            raise ValueError("at most one free scalar is supported")
        if not self.block_dims and not self.n_free:
            raise ValueError("problem needs at least one block or free scalar")
        for con in self.constraints:
            self._check_expr(con.expr)
        self._check_expr(self.objective)

    def _check_expr(self, expr: LinearExpression) -> None:
        if expr.free.size != self.n_free:
            raise ValueError("free-coefficient length does not match n_free")
        for group in expr.groups:
            dims = {self.block_dims[int(b)] for b in group.indices}
            if len(dims) > 1:
                raise ValueError("one term group cannot mix block dimensions")
            d = dims.pop()
            if group.coeff.shape[-1] != d:
                raise ValueError("coefficient matrix does not match block dimension")
            herm = group.coeff if group.coeff.ndim == 3 else group.coeff[None]
            if np.max(np.abs(herm - herm.conj().transpose(0, 2, 1))) > 1e-12:
                raise ValueError("coefficient matrices must be Hermitian")

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)


@dataclass
class SdpSolution:
    status: SolutionStatus
    block_values: list[np.ndarray]
    free_values: np.ndarray
    duals: np.ndarray
    primal_objective: float
    dual_objective: float
    max_residual: float
    duality_gap: float
    conic_gap: float
    iterations: int
    history: list
    message: str = ""
    certificate: dict | None = None
    dropped_rows: list[int] = field(default_factory=list)


# --------------------------------------------------------------------------
# Conversion to conic coordinates.


class _Layout:
    """Column layout: 4 coords per 2x2 block (in order), then 1x1 blocks, then free."""

    def __init__(self, block_dims: tuple[int, ...], n_free: int):
        self.block_dims = block_dims
        self.two_blocks = [i for i, d in enumerate(block_dims) if d == 2]
        self.one_blocks = [i for i, d in enumerate(block_dims) if d == 1]
        self.col_of_block = {}
        for pos, b in enumerate(self.two_blocks):
            self.col_of_block[b] = 4 * pos
        base = 4 * len(self.two_blocks)
        for pos, b in enumerate(self.one_blocks):
            self.col_of_block[b] = base + pos
        self.n_cone = base + len(self.one_blocks)
        self.n_free = n_free
        self.n_total = self.n_cone + n_free
        self.cones = ConeLayout(n4=len(self.two_blocks), n1=len(self.one_blocks))

    def expr_row(self, expr: LinearExpression) -> np.ndarray:
        row = np.zeros(self.n_total)
        for group in expr.groups:
            if group.coeff.ndim == 2 and group.coeff.shape == (2, 2):
                coords = 2.0 * pauli_coords(group.coeff)
                for b in group.indices:
                    row[self.col_of_block[int(b)] : self.col_of_block[int(b)] + 4] += coords
            elif group.coeff.ndim == 2 and group.coeff.shape == (1, 1):
                for b in group.indices:
                    row[self.col_of_block[int(b)]] += float(np.real(group.coeff[0, 0]))
            else:
                for b, mat in group.iter_terms():
                    if mat.shape == (2, 2):
                        row[self.col_of_block[b] : self.col_of_block[b] + 4] += 2.0 * pauli_coords(mat)
                    else:
                        row[self.col_of_block[b]] += float(np.real(mat[0, 0]))
        if self.n_free:
            row[self.n_cone :] = expr.free
        return row

    def blocks_from_coords(self, x: np.ndarray) -> list[np.ndarray]:
        values: list[np.ndarray] = [None] * len(self.block_dims)  # type: ignore[list-item]
        for pos, b in enumerate(self.two_blocks):
            values[b] = matrix_from_pauli(x[4 * pos : 4 * pos + 4])
        base = 4 * len(self.two_blocks)
        for pos, b in enumerate(self.one_blocks):
            values[b] = np.array([[x[base + pos]]], dtype=complex)
        return values


def _presolve(rows: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, list[int], np.ndarray | None]:
    """Return (kept row indices, dropped row indices, Farkas combination or None).

    Dependent rows are detected with a pivoted QR of A^T; an inconsistent
    dependent row yields a Farkas certificate instead.
    """
    p, n = rows.shape
    if p == 0:
        return np.arange(0), [], None
    if p > 1500 or float(n) * p * p > 4e9:
        return np.arange(p), [], None

    r, pivots = sla.qr(rows.T, mode="r", pivoting=True)
    diag = np.abs(np.diag(r[: min(p, n), : min(p, n)]))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diag > 1e-12 * diag[0]))
    kept = np.sort(pivots[:rank])
    dropped = sorted(int(i) for i in pivots[rank:])
    if not dropped:
        return kept, [], None

    combo, *_ = np.linalg.lstsq(rows[kept].T, rows[dropped].T, rcond=None)
    implied = combo.T @ rhs[kept]
    mismatch = np.abs(implied - rhs[dropped])
    bad = np.argmax(mismatch)
    if mismatch[bad] > 1e-9 * (1.0 + np.abs(rhs[dropped][bad])):
        farkas = np.zeros(p)
        farkas[kept] = combo[:, bad]
        farkas[dropped[bad]] = -1.0
        sign = np.sign(farkas @ rhs)
        return kept, dropped, sign * farkas / abs(farkas @ rhs)
    return kept, dropped, None


def _to_conic(problem: SdpProblem) -> tuple[ConicData, _Layout, np.ndarray, np.ndarray, list[int], np.ndarray | None]:
    layout = _Layout(problem.block_dims, problem.n_free)
    p = len(problem.constraints)
    rows = np.zeros((p, layout.n_total))
    rhs = np.zeros(p)
    for i, con in enumerate(problem.constraints):
        rows[i] = layout.expr_row(con.expr)
        rhs[i] = con.rhs

    # Row normalization makes convergence metrics invariant to row scaling.
    norms = np.linalg.norm(rows, axis=1)
    zero_rows = norms < 1e-14
    inconsistent_zero = zero_rows & (np.abs(rhs) > 1e-12)
    if np.any(inconsistent_zero):
        bad = int(np.argmax(inconsistent_zero))
        farkas = np.zeros(p)
        farkas[bad] = np.sign(rhs[bad])
        return None, layout, rhs, norms, [], farkas  # type: ignore[return-value]
    scales = np.where(zero_rows, 1.0, norms)
    rows_scaled = rows / scales[:, None]
    rhs_scaled = rhs / scales

    candidate = np.flatnonzero(~zero_rows)
    kept_rel, dropped_rel, farkas_rel = _presolve(rows_scaled[candidate], rhs_scaled[candidate])
    if farkas_rel is not None:
        farkas = np.zeros(p)
        farkas[candidate] = farkas_rel / scales[candidate]
        return None, layout, rhs, norms, [], farkas, 1.0, 1.0  # type: ignore[return-value]
    kept = candidate[kept_rel]
    dropped = sorted(set(range(p)) - set(int(i) for i in kept))

    c_vec = layout.expr_row(problem.objective)
    # Balance data magnitudes against the identity starting point.
    beta = max(1.0, float(np.linalg.norm(rhs_scaled[kept])))
    gamma = max(1.0, float(np.linalg.norm(c_vec)))
    op = SparseKkt(
        sp.csr_matrix(rows_scaled[kept]),
        n4=layout.cones.n4,
        n1=layout.cones.n1,
        n_free=layout.n_free,
    )
    data = ConicData(layout=layout.cones, operator=op, b=rhs_scaled[kept] / beta, c=-c_vec / gamma)
    return data, layout, rhs, scales, list(dropped), None, beta, gamma


# --------------------------------------------------------------------------
# Solve and verify.


def solve(problem: SdpProblem, options: SolverOptions | None = None) -> SdpSolution:
    """Solve the maximization problem; statuses carry validated certificates."""
    opts = options or SolverOptions()

    if problem.structure is not None:
        data, kept = problem.structure.conic_data()
        layout = _Layout(problem.block_dims, problem.n_free)
        scales = np.ones(len(problem.constraints))
        dropped = sorted(set(range(len(problem.constraints))) - set(kept))
        result = solve_conic(data, opts)
        return _interpret(problem, layout, result, np.array(kept), scales, dropped, opts)

    data, layout, rhs, scales, dropped, farkas, beta, gamma = _to_conic(problem)
    if farkas is not None:
        return _trivially_infeasible(problem, layout, farkas)
    if dropped:
        warnings.warn(f"presolve dropped {len(dropped)} dependent constraint rows", stacklevel=2)
    kept = np.array(sorted(set(range(len(problem.constraints))) - set(dropped)), dtype=int)
    result = solve_conic(data, opts)
    _unscale_result(result, beta, gamma)
    return _interpret(problem, layout, result, kept, scales, dropped, opts)


def _unscale_result(result: ConicResult, beta: float, gamma: float) -> None:
    """Undo the b/c equilibration applied in :func:`_to_conic`."""
    if beta == 1.0 and gamma == 1.0:
        return
    result.x *= beta
    result.y *= gamma
    result.z *= gamma
    for rec in result.history:
        rec.pobj *= beta * gamma
        rec.dobj *= beta * gamma


def _trivially_infeasible(problem: SdpProblem, layout: _Layout, farkas: np.ndarray) -> SdpSolution:
    return SdpSolution(
        status=SolutionStatus.INFEASIBLE,
        block_values=[np.zeros((d, d), dtype=complex) for d in problem.block_dims],
        free_values=np.zeros(problem.n_free),
        duals=np.zeros(len(problem.constraints)),
        primal_objective=np.nan,
        dual_objective=np.nan,
        max_residual=np.nan,
        duality_gap=np.nan,
        conic_gap=np.nan,
        iterations=0,
        history=[],
        message="inconsistent equality constraints",
        certificate={"farkas_dual": farkas},
    )


def _interpret(
    problem: SdpProblem,
    layout: _Layout,
    result: ConicResult,
    kept: np.ndarray,
    scales: np.ndarray,
    dropped: list[int],
    opts: SolverOptions,
) -> SdpSolution:
    p_orig = len(problem.constraints)

    # Engine history is in the internal minimization sense; flip to max.
    for rec in result.history:
        rec.pobj, rec.dobj = -rec.pobj, -rec.dobj

    def expand_duals(y_scaled: np.ndarray) -> np.ndarray:
        y = np.zeros(p_orig)
        y[kept] = y_scaled / scales[kept]
        return y

    if result.status == "optimal":
        x = result.x
        block_values = layout.blocks_from_coords(x[: layout.n_cone])
        free_values = x[layout.n_cone :]
        duals = expand_duals(-result.y)  # max-sense multipliers
        pobj = problem.objective.value(block_values, free_values)
        dobj = float(duals @ np.array([c.rhs for c in problem.constraints]))
        resid = _max_constraint_residual(problem, block_values, free_values)
        gap = abs(pobj - dobj)
        cgap = float(x[: layout.n_cone] @ result.z)
        status = SolutionStatus.OPTIMAL
        message = result.message
        resid_scale = 1.0 + float(np.max(scales)) if scales.size else 1.0
        if resid > 10 * opts.tol_feas * resid_scale or gap > 10 * opts.tol_gap * (1 + abs(pobj)):
            status = SolutionStatus.NUMERICAL_FAILURE
            message = f"converged iterate failed recomputed checks (resid={resid:.2e}, gap={gap:.2e})"
        return SdpSolution(
            status=status,
            block_values=block_values,
            free_values=free_values,
            duals=duals,
            primal_objective=pobj,
            dual_objective=dobj,
            max_residual=resid,
            duality_gap=gap,
            conic_gap=cgap,
            iterations=result.iterations,
            history=result.history,
            message=message,
            dropped_rows=dropped,
        )

    if result.status == "primal_infeasible":
        duals = expand_duals(result.y)
        return SdpSolution(
            status=SolutionStatus.INFEASIBLE,
            block_values=layout.blocks_from_coords(result.x[: layout.n_cone]),
            free_values=result.x[layout.n_cone :],
            duals=duals,
            primal_objective=np.nan,
            dual_objective=np.nan,
            max_residual=np.nan,
            duality_gap=np.nan,
            conic_gap=np.nan,
            iterations=result.iterations,
            history=result.history,
            message=result.message,
            certificate={"farkas_dual": duals},
            dropped_rows=dropped,
        )

    if result.status == "dual_infeasible":
        ray_blocks = layout.blocks_from_coords(result.x[: layout.n_cone])
        ray_free = result.x[layout.n_cone :]
        return SdpSolution(
            status=SolutionStatus.UNBOUNDED,
            block_values=ray_blocks,
            free_values=ray_free,
            duals=np.zeros(p_orig),
            primal_objective=np.inf,
            dual_objective=np.inf,
            max_residual=np.nan,
            duality_gap=np.nan,
            conic_gap=np.nan,
            iterations=result.iterations,
            history=result.history,
            message=result.message,
            certificate={"ray_blocks": ray_blocks, "ray_free": ray_free},
            dropped_rows=dropped,
        )

    return SdpSolution(
        status=SolutionStatus.NUMERICAL_FAILURE,
        block_values=layout.blocks_from_coords(result.x[: layout.n_cone]),
        free_values=result.x[layout.n_cone :],
        duals=expand_duals(-result.y),
        primal_objective=np.nan,
        dual_objective=np.nan,
        max_residual=np.nan,
        duality_gap=np.nan,
        conic_gap=np.nan,
        iterations=result.iterations,
        history=result.history,
        message=result.message,
        dropped_rows=dropped,
    )


def _max_constraint_residual(problem: SdpProblem, block_values, free_values) -> float:
    worst = 0.0
    for con in problem.constraints:
        worst = max(worst, abs(con.expr.value(block_values, free_values) - con.rhs))
    return worst


@dataclass
class VerificationReport:
    max_equality_residual: float
    min_block_eigenvalue: float
    min_dual_slack_eigenvalue: float
    max_dual_free_residual: float
    duality_gap: float
    equality_ok: bool
    psd_ok: bool
    dual_ok: bool
    gap_ok: bool

    @property
    def ok(self) -> bool:
        return self.equality_ok and self.psd_ok and self.dual_ok and self.gap_ok


def verify_solution(
    problem: SdpProblem,
    solution: SdpSolution,
    tolerance_factor: float = 10.0,
    options: SolverOptions | None = None,
) -> VerificationReport:
    """Recompute residuals, PSD margins and the gap of an optimal solution."""
    if solution.status != SolutionStatus.OPTIMAL:
        raise ValueError("verify_solution expects an optimal solution")
    opts = options or SolverOptions()

    resid = _max_constraint_residual(problem, solution.block_values, solution.free_values)
    min_eig = min(
        float(np.linalg.eigvalsh(np.atleast_2d(v))[0]) for v in solution.block_values
    ) if solution.block_values else 0.0

    # Dual slack per block: Z_b = sum_i y_i C_{i,b} - C_obj,b must lie in K*.
    slabs = [np.zeros((d, d), dtype=complex) for d in problem.block_dims]
    free_resid = np.zeros(problem.n_free)
    for y_i, con in zip(solution.duals, problem.constraints):
        for group in con.expr.groups:
            for b, mat in group.iter_terms():
                slabs[b] = slabs[b] + y_i * mat
        free_resid += y_i * con.expr.free
    for group in problem.objective.groups:
        for b, mat in group.iter_terms():
            slabs[b] = slabs[b] - mat
    free_resid -= problem.objective.free
    min_dual = min(float(np.linalg.eigvalsh(z)[0]) for z in slabs) if slabs else 0.0
    max_free = float(np.max(np.abs(free_resid))) if problem.n_free else 0.0

    pobj = problem.objective.value(solution.block_values, solution.free_values)
    dobj = float(solution.duals @ np.array([c.rhs for c in problem.constraints]))
    gap = abs(pobj - dobj)

    tol = tolerance_factor * opts.tol_feas
    tol_gap = tolerance_factor * opts.tol_gap * (1 + abs(pobj))
    return VerificationReport(
        max_equality_residual=resid,
        min_block_eigenvalue=min_eig,
        min_dual_slack_eigenvalue=min_dual,
        max_dual_free_residual=max_free,
        duality_gap=gap,
        equality_ok=resid <= tol,
        psd_ok=min_eig >= -tolerance_factor * 1e-9,
        dual_ok=min_dual >= -tol and max_free <= tol,
        gap_ok=gap <= tol_gap,
    )


def cone_membership_residual(problem: SdpProblem, block_values: list[np.ndarray]) -> float:
    """Most negative eigenvalue across blocks (diagnostic helper)."""
    layout = _Layout(problem.block_dims, problem.n_free)
    coords = np.zeros(layout.n_cone)
    for b, val in enumerate(block_values):
        if problem.block_dims[b] == 2:
            coords[layout.col_of_block[b] : layout.col_of_block[b] + 4] = pauli_coords(val)
        else:
            coords[layout.col_of_block[b]] = float(np.real(val[0, 0]))
    return residual_to_cone(layout.cones, coords)
