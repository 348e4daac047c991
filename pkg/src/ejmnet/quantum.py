"""States, measurements and Born-rule statistics of the bilocality experiment.

Qubit order throughout is (Alice, Bob-left, Bob-right, Charlie): Bob's
two-qubit projector acts on the middle pair, where Bob-left belongs to
source 1 (shared with Alice) and Bob-right to source 2 (shared with Charlie).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .correlators import SIGNS, TETRA, CorrelatorSet, TripartiteDistribution
from .errors import DomainError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (X, Y, Z)

SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)

ATOL = 1e-12


@dataclass(frozen=True)
class TetraVertex:
    b: int
    m: tuple[int, int, int]


def tetra_vertices() -> list[TetraVertex]:
    """The four vertices m_1..m_4 of the regular tetrahedron, in order."""
    return [TetraVertex(b + 1, tuple(int(v) for v in TETRA[b])) for b in range(4)]


def bloch_vector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, psi.conj())
    return np.array([np.trace(rho @ s).real for s in PAULI])


def bloch_ket(v, sign: int = +1) -> np.ndarray:
    """Qubit ket pointing along ``sign * v`` on the Bloch sphere.

    Uses the cylindrical-coordinate form with eta = v3/|v| and
    phi = atan2(v2, v1); the phases e^{-+i phi/2} are kept as written there.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if v.shape != (3,) or norm == 0.0:
        raise DomainError("bloch_ket needs a nonzero real 3-vector")
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    phi = np.arctan2(v[1], v[0])
    # sqrt((1 + eta)/2) and sqrt((1 - eta)/2) as half-angle cos/sin, stable near the poles
    polar = np.arctan2(np.hypot(v[0], v[1]), sign * v[2])
    up = np.cos(polar / 2) * np.exp(-1j * phi / 2)
    down = sign * np.sin(polar / 2) * np.exp(1j * phi / 2)
    return np.array([up, down])


@dataclass(frozen=True, eq=False)
class EjmBasis:
    theta: float
    kets: np.ndarray  # shape (4, 4); row b-1 is |Phi_b>

    def projectors(self) -> np.ndarray:
        return np.einsum("bi,bj->bij", self.kets, self.kets.conj())

    def reduced_states(self, qubit: int) -> np.ndarray:
        """Reduced single-qubit states of the four kets (qubit 0 or 1)."""
        k = self.kets.reshape(4, 2, 2)
        if qubit == 0:
            return np.einsum("bij,bkj->bik", k, k.conj())
        return np.einsum("bji,bjk->bik", k, k.conj())

    def reduced_bloch(self, qubit: int) -> np.ndarray:
        rho = self.reduced_states(qubit)
        return np.einsum("bij,sji->bs", rho, np.array(PAULI)).real


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not (-ATOL <= theta <= np.pi / 2 + ATOL):
        raise DomainError(f"theta={theta} outside [0, pi/2]")
    return min(max(theta, 0.0), np.pi / 2)


def ejm_basis(theta: float) -> EjmBasis:
    theta = _check_theta(theta)
    c_plus = (np.sqrt(3) + np.exp(1j * theta)) / (2 * np.sqrt(2))
    c_minus = (np.sqrt(3) - np.exp(1j * theta)) / (2 * np.sqrt(2))
    kets = np.empty((4, 4), dtype=complex)
    for b in range(4):
        m = TETRA[b]
        up, down = bloch_ket(m, +1), bloch_ket(m, -1)
        kets[b] = c_plus * np.kron(up, down) + c_minus * np.kron(down, up)
    kets.setflags(write=False)
    return EjmBasis(theta, kets)


def bloch_radius(theta: float) -> float:
    """Length of the reduced Bloch vectors of the basis at ``theta``."""
    return float(np.sqrt(3) / 2 * np.cos(_check_theta(theta)))


BELL_STATES = {
    "phi+": np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2),
    "psi+": np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    "psi-": np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2),
}


def bsm_local_unitary() -> np.ndarray:
    """1 (x) exp(2 pi i/3 (s1+s2+s3)/sqrt3), mapping the theta=pi/2 basis to Bell states."""
    n = (X + Y + Z) / np.sqrt(3)
    # n is an involution, so exp(i a n) = cos a + i sin a n
    a = 2 * np.pi / 3
    u2 = np.cos(a) * I2 + 1j * np.sin(a) * n
    return np.kron(I2, u2)


@dataclass(frozen=True)
class BsmCheck:
    relabeling: dict  # b (1..4) -> Bell state name
    overlaps: tuple  # |<bell|U|Phi_b>| per b
    max_infidelity: float
    passed: bool


def bsm_local_unitary_check(theta: float = np.pi / 2, tol: float = 1e-10) -> BsmCheck:
    basis = ejm_basis(theta)
    u = bsm_local_unitary()
    names = list(BELL_STATES)
    bell = np.array([BELL_STATES[k] for k in names])
    overlap = np.abs(bell.conj() @ u @ basis.kets.T)  # [bell, b]
    best, best_score = None, -1.0
    for perm in permutations(range(4)):
        score = sum(overlap[perm[b], b] ** 2 for b in range(4))
        if score > best_score:
            best, best_score = perm, score
    mods = tuple(float(overlap[best[b], b]) for b in range(4))
    infid = 1.0 - min(m**2 for m in mods)
    return BsmCheck(
        relabeling={b + 1: names[best[b]] for b in range(4)},
        overlaps=mods,
        max_infidelity=float(infid),
        passed=bool(infid < tol),
    )


@dataclass(frozen=True, eq=False)
class WernerState:
    V: float
    rho: np.ndarray


def werner(V: float) -> WernerState:
    V = float(V)
    if not (0.0 <= V <= 1.0):
        raise DomainError(f"visibility V={V} outside [0, 1]")
    rho = V * np.outer(SINGLET, SINGLET.conj()) + (1 - V) / 4 * np.eye(4)
    rho.setflags(write=False)
    return WernerState(V, rho)


SETTING_PRESETS = {
    "pauli": np.eye(3),
    "rotated": np.array(
        [
            [1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)],
            [0.0, 1.0, 0.0],
            [-1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)],
        ]
    ),
}


def resolve_settings(settings) -> np.ndarray:
    """Turn a preset name or three Bloch directions into a (3, 3) array of unit rows."""
    if isinstance(settings, str):
        try:
            return SETTING_PRESETS[settings].copy()
        except KeyError:
            raise DomainError(f"unknown settings preset {settings!r}") from None
    arr = np.asarray(settings, dtype=float)
    if arr.shape != (3, 3):
        raise DomainError("settings must be a preset name or three Bloch 3-vectors")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > ATOL):
        raise DomainError(f"setting directions must be unit vectors, norms {norms}")
    return arr


def dichotomic_projectors(n) -> np.ndarray:
    """Projectors onto the +1 and -1 eigenspaces of n.sigma, shape (2, 2, 2)."""
    obs = sum(ni * s for ni, s in zip(n, PAULI))
    return np.array([(I2 + s * obs) / 2 for s in SIGNS])


def network_distribution(theta, V1, V2, settings_a="pauli", settings_c="pauli") -> TripartiteDistribution:
    """Born-rule distribution p(a, b, c | x, z) for two Werner sources and the EJM at Bob."""
    basis = ejm_basis(theta)
    rho1, rho2 = werner(V1).rho, werner(V2).rho
    na, nc = resolve_settings(settings_a), resolve_settings(settings_c)
    pa = np.array([dichotomic_projectors(n) for n in na])  # [x, a, i, j]
    pc = np.array([dichotomic_projectors(n) for n in nc])  # [z, c, i, j]
    pb = basis.projectors().reshape(4, 2, 2, 2, 2)  # [b, l, r, l', r']
    r1 = rho1.reshape(2, 2, 2, 2)  # [A, L, A', L']
    r2 = rho2.reshape(2, 2, 2, 2)  # [R, C, R', C']
    # Tr[(PA (x) PB (x) PC) (rho1 (x) rho2)]
    p = np.einsum(
        "xaij,blmkn,zcpq,jkil,nqmp->xzabc",
        pa, pb, pc, r1, r2,
        optimize=True,
    )
    return TripartiteDistribution(p.real)


def closed_form_correlators(theta, V1, V2) -> CorrelatorSet:
    """Analytic correlators for Pauli settings at both wings."""
    theta = _check_theta(theta)
    c, s = np.cos(theta), np.sin(theta)
    AB = -V1 / 2 * c * np.eye(3)
    BC = V2 / 2 * c * np.eye(3)
    ABC = np.zeros((3, 3, 3))
    for x, y, z in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        ABC[x, y, z] = -V1 * V2 / 2 * (1 + s)
    for x, y, z in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
        ABC[x, y, z] = -V1 * V2 / 2 * (1 - s)
    return CorrelatorSet(AB=AB, BC=BC, ABC=ABC)
