"""Generic sparse KKT backend for the interior-point engine.

Factors the quasi-definite bordered matrix

    [ A_u S A_u^T + reg*I    A_w      ]
    [ A_w^T                 -reg*I    ]

with SuperLU; S is the block-diagonal NT quadratic scaling (4x4 blocks
for Lorentz cones, scalars for rays).  One round of iterative refinement
against the unregularized matrix recovers the accuracy lost to the
static regularization.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SparseKkt:
    """KktOperator over an explicit scipy.sparse constraint matrix.

    Columns are ordered: 4-dim cone coordinates, then rays, then free
    variables.
    """

    def __init__(self, matrix: sp.spmatrix, n4: int, n1: int, n_free: int):
        self.matrix = sp.csr_matrix(matrix)
        self.p = self.matrix.shape[0]
        self.n_cone = 4 * n4 + n1
        self.n4 = n4
        self.n1 = n1
        self.n_free = n_free
        if self.matrix.shape[1] != self.n_cone + n_free:
            raise ValueError("constraint matrix width does not match the cone layout")
        self.a_cone = sp.csr_matrix(self.matrix[:, : self.n_cone])
        self.a_free = sp.csr_matrix(self.matrix[:, self.n_cone :])
        self._at = sp.csr_matrix(self.matrix.T)

    def apply(self, x_cone: np.ndarray, x_free: np.ndarray) -> np.ndarray:
        return self.matrix @ np.concatenate([x_cone, x_free])

    def apply_transpose(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        full = self._at @ y
        return full[: self.n_cone], full[self.n_cone :]

    def _scaling_matrix(self, s4: np.ndarray, s1: np.ndarray) -> sp.spmatrix:
        parts = []
        if self.n4:
            parts.append(
                sp.bsr_matrix(
                    (s4, np.arange(self.n4), np.arange(self.n4 + 1)),
                    shape=(4 * self.n4, 4 * self.n4),
                )
            )
        if self.n1:
            parts.append(sp.diags(s1))
        if len(parts) == 1:
            return parts[0]
        return sp.block_diag(parts)

    def factor(self, s4: np.ndarray, s1: np.ndarray, reg: float, refine: int = 1) -> "SparseKktFactor":
        s = self._scaling_matrix(s4, s1)
        m = (self.a_cone @ s) @ self.a_cone.T
        if self.n_free:
            kkt = sp.bmat(
                [
                    [m + reg * sp.eye(self.p), self.a_free],
                    [self.a_free.T, -reg * sp.eye(self.n_free)],
                ],
                format="csc",
            )
            kkt_exact = sp.bmat([[m, self.a_free], [self.a_free.T, None]], format="csc")
        else:
            kkt = sp.csc_matrix(m + reg * sp.eye(self.p))
            kkt_exact = sp.csc_matrix(m)
        return SparseKktFactor(spla.splu(kkt), kkt_exact, self.p, self.n_free, refine)


class SparseKktFactor:
    def __init__(self, lu, kkt_exact, p: int, n_free: int, refine: int = 1):
        self.lu = lu
        self.kkt_exact = kkt_exact
        self.p = p
        self.n_free = n_free
        self.refine = refine

    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([r1, r2]) if self.n_free else r1
        sol = self.lu.solve(rhs)
        target = 1e-14 * (1.0 + np.linalg.norm(rhs))
        for _ in range(max(self.refine, 1)):
            resid = rhs - self.kkt_exact @ sol
            if np.linalg.norm(resid) <= target:
                break
            sol = sol + self.lu.solve(resid)
        if self.n_free:
            return sol[: self.p], sol[self.p :]
        return sol, np.zeros(0)
