"""Qubit states, projective measurements, assemblages and joint distributions.

Conventions used throughout the package:

* computational basis ordering ``|00>, |01>, |10>, |11>`` with Alice's qubit
  first in every tensor product,
* ``sigma_z |0> = +|0>``,
* two-outcome effects ``M_b = (1 + (-1)**b  u.sigma) / 2`` for ``b in {0, 1}``,
* correlators ``E = P(00) + P(11) - P(01) - P(10)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFilterError

# Tolerances: physicality checks (PSD, traces, no-signalling) use ATOL_PHYS,
# exact algebraic identities use ATOL_ALG.
ATOL_PHYS = 1e-10
ATOL_ALG = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

#: Basis (1, sigma_x, sigma_y, sigma_z) used for the 4-real-coordinate
#: expansion of Hermitian 2x2 matrices.
PAULI_BASIS = np.stack([IDENTITY_2, PAULI_X, PAULI_Y, PAULI_Z])

# Two-qubit basis kets, Alice first.
KET_00 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
KET_01 = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)
KET_10 = np.array([0.0, 0.0, 1.0, 0.0], dtype=complex)
KET_11 = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)

SINGLET = (KET_01 - KET_10) / np.sqrt(2.0)
TRIPLET_PLUS = (KET_01 + KET_10) / np.sqrt(2.0)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HermitianBlock:
    """Complex Hermitian matrix of dimension 1, 2 or 4."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = _readonly(np.atleast_2d(self.matrix))
        if mat.shape[0] != mat.shape[1] or mat.shape[0] not in (1, 2, 4):
            raise ValueError(f"block dimension must be 1, 2 or 4, got shape {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > ATOL_ALG:
            raise ValueError("matrix is not Hermitian to 1e-12")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])


@dataclass(frozen=True)
class BlochVector:
    """Real 3-vector inside (or on) the Bloch ball."""

    components: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.components, dtype=float).reshape(3).copy()
        if np.linalg.norm(vec) > 1.0 + 1e-12:
            raise ValueError(f"Bloch vector norm {np.linalg.norm(vec)} exceeds 1")
        vec.setflags(write=False)
        object.__setattr__(self, "components", vec)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def is_unit(self, atol: float = 1e-9) -> bool:
        return abs(self.norm - 1.0) <= atol


@dataclass(frozen=True)
class ProjectiveMeasurement:
    """Two-outcome projective qubit measurement along a unit direction."""

    direction: BlochVector

    def __post_init__(self):
        if not self.direction.is_unit():
            raise ValueError("measurement direction must have unit norm")

    def effect(self, outcome: int) -> HermitianBlock:
        return bloch_to_effect(self.direction, outcome)

    def effects(self) -> tuple[HermitianBlock, HermitianBlock]:
        return self.effect(0), self.effect(1)


@dataclass(frozen=True)
class TwoQubitState:
    """Density matrix of a two-qubit system (PSD, unit trace)."""

    block: HermitianBlock

    def __post_init__(self):
        if self.block.dim != 4:
            raise ValueError("two-qubit state must be a 4x4 block")
        if self.block.min_eigenvalue() < -ATOL_PHYS:
            raise ValueError(f"state is not PSD (min eigenvalue {self.block.min_eigenvalue()})")
        if abs(self.block.trace() - 1.0) > ATOL_PHYS:
            raise ValueError(f"state trace {self.block.trace()} != 1")

    @property
    def matrix(self) -> np.ndarray:
        return self.block.matrix


@dataclass(frozen=True)
class Assemblage:
    """Family of unnormalized conditional states sigma_{a|x} on Bob's side.

    Stored as a complex array of shape ``(m, 2, 2, 2)`` indexed
    ``[x, a, row, col]``.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.entries)
        if arr.ndim != 4 or arr.shape[1:] != (2, 2, 2):
            raise ValueError(f"assemblage array must have shape (m, 2, 2, 2), got {arr.shape}")
        if np.max(np.abs(arr - arr.conj().transpose(0, 1, 3, 2))) > ATOL_ALG:
            raise ValueError("assemblage entries are not Hermitian")
        eigs = np.linalg.eigvalsh(arr.reshape(-1, 2, 2))
        if eigs.min() < -ATOL_PHYS:
            raise ValueError(f"assemblage entry not PSD (min eigenvalue {eigs.min()})")
        marginals = arr.sum(axis=1)
        if np.max(np.abs(marginals - marginals[0])) > ATOL_PHYS:
            raise ValueError("sum_a sigma_{a|x} depends on x (no-signalling violated)")
        total = float(np.real(np.trace(marginals[0])))
        if abs(total - 1.0) > ATOL_PHYS:
            raise ValueError(f"assemblage normalization {total} != 1")
        object.__setattr__(self, "entries", arr)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def block(self, a: int, x: int) -> HermitianBlock:
        return HermitianBlock(self.entries[x, a])

    def reduced_state(self) -> HermitianBlock:
        """Bob's reduced state ``sum_a sigma_{a|x}`` (independent of x)."""
        return HermitianBlock(self.entries[0].sum(axis=0))


@dataclass(frozen=True)
class JointDistribution:
    """Table P(ab|xy), stored as real array ``[x, y, a, b]``."""

    table: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.table, dtype=float).copy()
        if arr.ndim != 4 or arr.shape[2:] != (2, 2):
            raise ValueError(f"table must have shape (m_A, m_B, 2, 2), got {arr.shape}")
        if arr.min() < -ATOL_PHYS:
            raise ValueError("negative probability in table")
        sums = arr.sum(axis=(2, 3))
        if np.max(np.abs(sums - 1.0)) > ATOL_PHYS:
            raise ValueError("P(ab|xy) does not sum to 1 for some (x, y)")
        alice = arr.sum(axis=3)
        if np.max(np.abs(alice - alice[:, :1, :])) > ATOL_PHYS:
            raise ValueError("Alice's marginal signals to Bob's setting")
        bob = arr.sum(axis=2)
        if np.max(np.abs(bob - bob[:1, :, :])) > ATOL_PHYS:
            raise ValueError("Bob's marginal signals to Alice's setting")
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)

    @property
    def m_alice(self) -> int:
        return self.table.shape[0]

    @property
    def m_bob(self) -> int:
        return self.table.shape[1]

    def correlator(self, x: int, y: int) -> float:
        """E_{x,y} = P(00) + P(11) - P(01) - P(10)."""
        p = self.table[x, y]
        return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def pauli_coords(matrix: np.ndarray) -> np.ndarray:
    """Expand a Hermitian 2x2 matrix as ``x0*1 + x1*sx + x2*sy + x3*sz``."""
    mat = np.asarray(matrix, dtype=complex)
    return 0.5 * np.real(np.einsum("kij,ji->k", PAULI_BASIS, mat))


def matrix_from_pauli(coords: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pauli_coords`."""
    c = np.asarray(coords, dtype=float).reshape(4)
    return np.einsum("k,kij->ij", c, PAULI_BASIS)


def bloch_to_effect(direction: BlochVector | np.ndarray, outcome: int) -> HermitianBlock:
    """Rank-1 projector ``(1 + (-1)**outcome  u.sigma) / 2``."""
    if not isinstance(direction, BlochVector):
        direction = BlochVector(np.asarray(direction, dtype=float))
    if not direction.is_unit():
        raise ValueError("effect direction must have unit norm")
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome}")
    sign = 1.0 if outcome == 0 else -1.0
    u = direction.components
    mat = 0.5 * (IDENTITY_2 + sign * (u[0] * PAULI_X + u[1] * PAULI_Y + u[2] * PAULI_Z))
    return HermitianBlock(mat)


def werner_state(v: float) -> TwoQubitState:
    """Werner state: ``v |psi-><psi-| + (1-v) 1/4``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    mat = v * np.outer(SINGLET, SINGLET.conj()) + (1.0 - v) * np.eye(4) / 4.0
    return TwoQubitState(HermitianBlock(mat))


def reduced_w_state(p: float) -> TwoQubitState:
    """Two-qubit family ``p |psi+><psi+| + (1-p) |00><00|``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {p}")
    mat = p * np.outer(TRIPLET_PLUS, TRIPLET_PLUS.conj()) + (1.0 - p) * np.outer(KET_00, KET_00.conj())
    return TwoQubitState(HermitianBlock(mat))


def mixed_visibility_state(pure: TwoQubitState, noise: TwoQubitState, v: float) -> TwoQubitState:
    """One-parameter family ``v rho_pure + (1-v) rho_noise``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    return TwoQubitState(HermitianBlock(v * pure.matrix + (1.0 - v) * noise.matrix))


def partial_trace_alice(matrix: np.ndarray) -> np.ndarray:
    """Trace out the first qubit of a 4x4 matrix."""
    mat = np.asarray(matrix, dtype=complex).reshape(2, 2, 2, 2)
    return np.trace(mat, axis1=0, axis2=2)


def _as_measurements(measurements) -> list[ProjectiveMeasurement]:
    out = []
    for meas in measurements:
        if isinstance(meas, ProjectiveMeasurement):
            out.append(meas)
        elif isinstance(meas, BlochVector):
            out.append(ProjectiveMeasurement(meas))
        else:
            out.append(ProjectiveMeasurement(BlochVector(np.asarray(meas, dtype=float))))
    if not out:
        raise ValueError("measurement list must be nonempty")
    return out


def assemblage_of(state: TwoQubitState, measurements) -> Assemblage:
    """Steered assemblage ``sigma_{a|x} = tr_A(rho  M_{a|x} x 1)``."""
    meas = _as_measurements(measurements)
    rho = state.matrix
    entries = np.empty((len(meas), 2, 2, 2), dtype=complex)
    for x, mx in enumerate(meas):
        for a in (0, 1):
            op = np.kron(mx.effect(a).matrix, IDENTITY_2)
            entries[x, a] = partial_trace_alice(rho @ op)
    return Assemblage(entries)


def joint_distribution(state: TwoQubitState, alice_measurements, bob_measurements) -> JointDistribution:
    """P(ab|xy) = tr(rho  M_{a|x} x M_{b|y})."""
    alice = _as_measurements(alice_measurements)
    bob = _as_measurements(bob_measurements)
    rho = state.matrix
    table = np.empty((len(alice), len(bob), 2, 2), dtype=float)
    for x, mx in enumerate(alice):
        for y, my in enumerate(bob):
            for a in (0, 1):
                for b in (0, 1):
                    op = np.kron(mx.effect(a).matrix, my.effect(b).matrix)
                    table[x, y, a, b] = float(np.real(np.trace(rho @ op)))
    return JointDistribution(table)


def affine_assemblage(pure: TwoQubitState, noise: TwoQubitState, measurements) -> tuple[Assemblage, Assemblage]:
    """Fixed pair (F, G) with ``sigma_{a|x}(v) = v F_{a|x} + (1-v) G_{a|x}``."""
    return assemblage_of(pure, measurements), assemblage_of(noise, measurements)


def _filter_matrix(theta: float) -> np.ndarray:
    return np.array([[np.cos(theta), 0.0], [0.0, np.sin(theta)]], dtype=complex)


def apply_local_filter_unnormalized(state: TwoQubitState, theta: float) -> HermitianBlock:
    """``(1 x F_B) rho (1 x F_B)^dag`` without renormalization."""
    if not 0.0 < theta <= np.pi / 2.0:
        raise ValueError(f"filter angle must lie in (0, pi/2], got {theta}")
    op = np.kron(IDENTITY_2, _filter_matrix(theta))
    return HermitianBlock(op @ state.matrix @ op.conj().T)


def apply_local_filter(state: TwoQubitState, theta: float) -> TwoQubitState:
    """Bob's local filter ``F_B = cos(theta)|0><0| + sin(theta)|1><1|``, renormalized."""
    raw = apply_local_filter_unnormalized(state, theta)
    norm = raw.trace()
    if norm <= ATOL_PHYS:
        raise DegenerateFilterError(f"filter with theta={theta} produced trace {norm}")
    return TwoQubitState(HermitianBlock(raw.matrix / norm))
