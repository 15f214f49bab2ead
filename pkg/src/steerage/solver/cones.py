"""Batched Jordan-algebra and Nesterov-Todd operations for Lorentz cones.

A cone point is stored as a flat vector holding first all 4-dimensional
Lorentz cones (``t >= ||w||`` with t the leading coordinate), then all
1-dimensional nonnegative rays.  All operations are vectorized across
cones of the same dimension.

The NT scaling for a second-order cone is the symmetric matrix
``W = eta * (2 wb wb^T - J)`` with ``J = diag(1, -1, -1, -1)`` and
``wb^T J wb = 1``; it satisfies ``W z = W^{-1} u`` for the current
primal-dual pair ``(u, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_J_SIGNS = np.array([1.0, -1.0, -1.0, -1.0])


@dataclass(frozen=True)
class ConeLayout:
    """Sizes of the cone product: n4 Lorentz cones of dim 4, then n1 rays."""

    n4: int
    n1: int

    @property
    def dim(self) -> int:
        return 4 * self.n4 + self.n1

    @property
    def count(self) -> int:
        return self.n4 + self.n1

    def split(self, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        head = vec[: 4 * self.n4].reshape(self.n4, 4)
        tail = vec[4 * self.n4 :]
        return head, tail

    def join(self, head: np.ndarray, tail: np.ndarray) -> np.ndarray:
        return np.concatenate([head.reshape(-1), tail])

    def identity(self) -> np.ndarray:
        head = np.zeros((self.n4, 4))
        head[:, 0] = 1.0
        return self.join(head, np.ones(self.n1))


def _jnorm2(head: np.ndarray) -> np.ndarray:
    """t^2 - ||w||^2 per 4-dim cone."""
    return head[:, 0] ** 2 - np.sum(head[:, 1:] ** 2, axis=1)


def residual_to_cone(layout: ConeLayout, vec: np.ndarray) -> float:
    """Most negative 'eigenvalue' of vec over all cones (>=0 means in cone)."""
    head, tail = layout.split(vec)
    worst = np.inf
    if layout.n4:
        lam_min = head[:, 0] - np.linalg.norm(head[:, 1:], axis=1)
        worst = min(worst, float(lam_min.min()))
    if layout.n1:
        worst = min(worst, float(tail.min()))
    return worst if worst != np.inf else 0.0


def jordan_product(layout: ConeLayout, u: np.ndarray, z: np.ndarray) -> np.ndarray:
    """u o z = (u.z, u0 z1 + z0 u1) per cone; plain product on rays."""
    uh, ut = layout.split(u)
    zh, zt = layout.split(z)
    out = np.empty((layout.n4, 4))
    out[:, 0] = np.sum(uh * zh, axis=1)
    out[:, 1:] = uh[:, :1] * zh[:, 1:] + zh[:, :1] * uh[:, 1:]
    return layout.join(out, ut * zt)


def jordan_solve(layout: ConeLayout, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve lam o x = d for x (lam interior)."""
    lh, lt = layout.split(lam)
    dh, dt = layout.split(d)
    x = np.empty((layout.n4, 4))
    if layout.n4:
        rho = _jnorm2(lh)
        l0 = lh[:, 0]
        lw = lh[:, 1:]
        x[:, 0] = (l0 * dh[:, 0] - np.sum(lw * dh[:, 1:], axis=1)) / rho
        x[:, 1:] = (dh[:, 1:] - x[:, 0][:, None] * lw) / l0[:, None]
    return layout.join(x, dt / lt)


@dataclass
class NTScaling:
    """Per-iteration NT scaling data.

    ``wb`` (n4, 4) is the normalized scaling point (wb^T J wb = 1) whose
    quadratic representation maps z to u: ``S = eta^2 (2 wb wb^T - J)``
    with ``S z = u``.  ``W = S^{1/2} = eta (2 vb vb^T - J)`` where
    ``vb = (wb + e) / sqrt(2 (wb_0 + 1))`` is the Jordan square root of wb.
    On the rays W = diag(w1) with ``w1 = sqrt(u/z)``.  ``lam = W z = W^{-1} u``.
    """

    layout: ConeLayout
    wb: np.ndarray
    vb: np.ndarray
    eta: np.ndarray
    w1: np.ndarray
    lam: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        """W x."""
        xh, xt = self.layout.split(x)
        dot = np.sum(self.vb * xh, axis=1)
        out = self.eta[:, None] * (2.0 * dot[:, None] * self.vb - _J_SIGNS * xh)
        return self.layout.join(out, self.w1 * xt)

    def apply_inv(self, x: np.ndarray) -> np.ndarray:
        """W^{-1} x, using W^{-1} = (1/eta) (2 (J vb)(J vb)^T - J)."""
        xh, xt = self.layout.split(x)
        jvb = _J_SIGNS * self.vb
        dot = np.sum(jvb * xh, axis=1)
        out = (2.0 * dot[:, None] * jvb - _J_SIGNS * xh) / self.eta[:, None]
        return self.layout.join(out, xt / self.w1)

    def quadratic(self) -> tuple[np.ndarray, np.ndarray]:
        """Explicit S = W^2 = eta^2 (2 wb wb^T - J) plus the ray weights w1^2."""
        outer = np.einsum("ki,kj->kij", self.wb, self.wb)
        jmat = np.broadcast_to(np.diag(_J_SIGNS), (self.layout.n4, 4, 4))
        s4 = (self.eta**2)[:, None, None] * (2.0 * outer - jmat)
        return s4, self.w1**2


def nt_scaling(layout: ConeLayout, u: np.ndarray, z: np.ndarray) -> NTScaling:
    """Compute the NT scaling point for interior (u, z)."""
    uh, ut = layout.split(u)
    zh, zt = layout.split(z)
    if layout.n4:
        rho_u = _jnorm2(uh)
        rho_z = _jnorm2(zh)
        if rho_u.min() <= 0 or rho_z.min() <= 0 or uh[:, 0].min() <= 0 or zh[:, 0].min() <= 0:
            raise FloatingPointError("iterate left the cone interior")
        ub = uh / np.sqrt(rho_u)[:, None]
        zb = zh / np.sqrt(rho_z)[:, None]
        gamma = np.sqrt(0.5 * (1.0 + np.sum(ub * zb, axis=1)))
        wb = (ub + _J_SIGNS * zb) / (2.0 * gamma)[:, None]
        vb = wb.copy()
        vb[:, 0] += 1.0
        vb /= np.sqrt(2.0 * (wb[:, 0] + 1.0))[:, None]
        eta = (rho_u / rho_z) ** 0.25
    else:
        wb = np.zeros((0, 4))
        vb = np.zeros((0, 4))
        eta = np.zeros(0)
    if layout.n1 and (ut.min() <= 0 or zt.min() <= 0):
        raise FloatingPointError("iterate left the cone interior")
    w1 = np.sqrt(ut / zt) if layout.n1 else np.zeros(0)
    scaling = NTScaling(layout=layout, wb=wb, vb=vb, eta=eta, w1=w1, lam=np.zeros(layout.dim))
    scaling.lam = scaling.apply(z)
    return scaling


def max_step(layout: ConeLayout, point: np.ndarray, direction: np.ndarray) -> float:
    """Largest alpha >= 0 with point + alpha*direction in the cone product.

    Returns np.inf when the full ray stays inside.
    """
    best = np.inf
    ph, pt = layout.split(point)
    dh, dt = layout.split(direction)
    if layout.n4:
        a = _jnorm2(dh)
        b = 2.0 * (ph[:, 0] * dh[:, 0] - np.sum(ph[:, 1:] * dh[:, 1:], axis=1))
        c = _jnorm2(ph)
        alpha = _smallest_positive_root(a, b, c)
        if alpha.size:
            best = min(best, float(alpha.min()))
    if layout.n1:
        neg = dt < 0
        if np.any(neg):
            best = min(best, float(np.min(-pt[neg] / dt[neg])))
    return best


def _smallest_positive_root(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Per cone: smallest alpha > 0 with a*alpha^2 + b*alpha + c = 0 (c > 0), inf if none."""
    out = np.full(a.shape, np.inf)
    lin = np.abs(a) < 1e-14 * np.maximum(1.0, np.abs(b))
    neg_b = b < 0
    mask = lin & neg_b
    out[mask] = -c[mask] / b[mask]

    quad = ~lin
    disc = b * b - 4.0 * a * c
    real = quad & (disc >= 0)
    if np.any(real):
        sq = np.sqrt(np.maximum(disc[real], 0.0))
        bb = b[real]
        aa = a[real]
        cc = c[real]
        qq = -0.5 * (bb + np.sign(bb) * sq)
        qq = np.where(np.abs(qq) < 1e-300, -0.5 * sq, qq)
        r1 = qq / aa
        r2 = np.divide(cc, qq, out=np.full_like(cc, np.inf), where=np.abs(qq) > 1e-300)
        roots = np.stack([r1, r2])
        roots[roots <= 0] = np.inf
        out[real] = roots.min(axis=0)
    # a < 0 with disc < 0 cannot happen for c > 0; a > 0, disc < 0 means no crossing.
    return out
