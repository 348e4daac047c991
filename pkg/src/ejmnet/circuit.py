"""A two-qubit circuit that rotates the generalised EJM basis onto the computational basis.

Gate order: CNOT, Hadamard on the control, controlled phase R_{pi/2 - theta},
then R_{pi/2} followed by H on each wire, then a computational-basis
measurement. Wire 0 is Bob's qubit from source 1, wire 1 from source 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .correlators import TripartiteDistribution
from .errors import UsageError
from .quantum import _check_theta, dichotomic_projectors, ejm_basis, resolve_settings, werner

PASS_TOL = 1e-10

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_P0 = np.diag([1, 0]).astype(complex)
_P1 = np.diag([0, 1]).astype(complex)


@dataclass(frozen=True, eq=False)
class TwoQubitUnitary:
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=complex)
        if u.shape != (4, 4):
            raise UsageError(f"two-qubit unitary must be 4x4, got {u.shape}")
        if not np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12, rtol=0):
            raise UsageError("matrix is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def __matmul__(self, other: "TwoQubitUnitary") -> "TwoQubitUnitary":
        return TwoQubitUnitary(self.u @ other.u)


def phase(phi: float) -> np.ndarray:
    """Single-qubit phase shift diag(1, e^{i phi})."""
    return np.diag([1.0, np.exp(1j * phi)])


def _on(u: np.ndarray, wire: int) -> np.ndarray:
    return np.kron(u, _I) if wire == 0 else np.kron(_I, u)


def _controlled(u: np.ndarray, control: int) -> np.ndarray:
    if control == 0:
        return np.kron(_P0, _I) + np.kron(_P1, u)
    return np.kron(_I, _P0) + np.kron(u, _P1)


GATES = ("CNOT", "H0", "H1", "R0", "R1", "CR")


def gate(name: str, phi: float = 0.0, control: int = 0) -> TwoQubitUnitary:
    """Named two-qubit gate.

    ``CNOT`` and ``CR`` (controlled phase) act with the given control wire;
    ``H0``/``H1`` and ``R0``/``R1`` are the Hadamard and phase shift on one wire.
    """
    if control not in (0, 1):
        raise UsageError("control wire must be 0 or 1")
    phi = float(phi)
    if name == "CNOT":
        u = _controlled(_X, control)
    elif name in ("H0", "H1"):
        u = _on(_H, int(name[1]))
    elif name in ("R0", "R1"):
        u = _on(phase(phi), int(name[1]))
    elif name == "CR":
        u = _controlled(phase(phi), control)
    else:
        raise UsageError(f"unknown gate {name!r}; choose from {', '.join(GATES)}")
    return TwoQubitUnitary(u)


def ejm_circuit(theta: float, control: int = 0) -> TwoQubitUnitary:
    theta = _check_theta(theta)
    steps = [
        gate("CNOT", control=control),
        gate(f"H{control}"),
        gate("CR", np.pi / 2 - theta, control=control),
        gate("R0", np.pi / 2),
        gate("R1", np.pi / 2),
        gate("H0"),
        gate("H1"),
    ]
    u = TwoQubitUnitary(np.eye(4))
    for g in steps:
        u = g @ u
    return u


@dataclass(frozen=True)
class CircuitVerdict:
    theta: float
    permutation: dict  # b (1..4) -> computational basis index (0..3)
    max_infidelity: float
    passed: bool
    control: int = 0

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "permutation": {str(b): f"{i:02b}" for b, i in self.permutation.items()},
            "max_infidelity": self.max_infidelity,
            "pass": self.passed,
            "control": self.control,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _verdict(theta: float, u: np.ndarray, control: int) -> CircuitVerdict:
    kets = ejm_basis(theta).kets
    weight = np.abs(u @ kets.T) ** 2  # [computational index, b]
    best = max(permutations(range(4)), key=lambda p: sum(weight[p[b], b] for b in range(4)))
    infid = 1.0 - min(weight[best[b], b] for b in range(4))
    infid = max(float(infid), 0.0)
    return CircuitVerdict(
        theta=float(theta),
        permutation={b + 1: int(best[b]) for b in range(4)},
        max_infidelity=infid,
        passed=infid <= PASS_TOL,
        control=control,
    )


def check_unitary(theta: float, u) -> CircuitVerdict:
    """Verdict for an arbitrary two-qubit unitary against the basis at ``theta``."""
    return _verdict(_check_theta(theta), TwoQubitUnitary(u).u, control=-1)


def verify_circuit(theta: float) -> CircuitVerdict:
    """Verdict for the circuit, trying control on wire 0 first and wire 1 if that fails."""
    theta = _check_theta(theta)
    first = _verdict(theta, ejm_circuit(theta, 0).u, 0)
    if first.passed:
        return first
    second = _verdict(theta, ejm_circuit(theta, 1).u, 1)
    return second if second.max_infidelity < first.max_infidelity else first


DEFAULT_THETAS = tuple(k * np.pi / 40 for k in range(21))


@dataclass(frozen=True)
class BatchVerdict:
    verdicts: tuple
    uniform_permutation: bool

    @property
    def passed(self) -> bool:
        return self.uniform_permutation and all(v.passed for v in self.verdicts)


def verify_batch(thetas=DEFAULT_THETAS) -> BatchVerdict:
    """Verdicts over several angles; the batch also demands one shared permutation and wiring."""
    verdicts = tuple(verify_circuit(t) for t in thetas)
    keys = {(tuple(sorted(v.permutation.items())), v.control) for v in verdicts}
    return BatchVerdict(verdicts, len(keys) == 1)


def circuit_network_distribution(theta, V1, V2, settings_a="pauli", settings_c="pauli") -> TripartiteDistribution:
    """The network statistics with Bob running the circuit and reading out the computational basis."""
    verdict = verify_circuit(theta)
    u = ejm_circuit(theta, verdict.control).u
    # full four-qubit state in the order (Alice, Bob-left, Bob-right, Charlie)
    rho = np.kron(werner(V1).rho, werner(V2).rho)
    w = np.kron(np.kron(_I, u), _I)
    rho = w @ rho @ w.conj().T
    na, nc = resolve_settings(settings_a), resolve_settings(settings_c)
    pa = np.array([dichotomic_projectors(n) for n in na])
    pc = np.array([dichotomic_projectors(n) for n in nc])
    basis = np.eye(4)
    p = np.empty((3, 3, 2, 4, 2))
    for b in range(4):
        i = verdict.permutation[b + 1]
        proj_b = np.outer(basis[i], basis[i])
        for x in range(3):
            for z in range(3):
                for ia in range(2):
                    for ic in range(2):
                        op = np.kron(np.kron(pa[x, ia], proj_b), pc[z, ic])
                        p[x, z, ia, b, ic] = np.trace(op @ rho).real
    return TripartiteDistribution(p)


def diagram(theta: float | None = None) -> str:
    """Plain-text sketch of the circuit."""
    phi = "pi/2-theta" if theta is None else f"{np.pi / 2 - float(theta):.4f}"
    top = "q0 (source 1) --*--[H]--*----------[R(pi/2)]--[H]--[measure]"
    mid = "                |        |"
    bot = f"q1 (source 2) --X-------[R({phi})]--[R(pi/2)]--[H]--[measure]"
    return "\n".join([top, mid, bot])
