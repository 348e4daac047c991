"""Bell expressions for the bilocality scenario.

Covers the linear expression S/3 - T with its Z-dependent bound, the twelve
(S, T)-slice facets, the square-root expression built from correlators
conditioned on Bob's output (``Bprime``) and its linearised companion.

The bilocal bounds used here (3 + 5Z, the slice facets, 12 sqrt3 + 2 sqrt15)
are numerically supported rather than proved for general models.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .bilocal import SymmetricModelParams
from .correlators import (
    SIGNS,
    SHAPE,
    TETRA,
    CorrelatorSet,
    TripartiteDistribution,
    distribution_to_correlators,
)
from .errors import NumericalError, SignallingError

BPRIME_BILOCAL_BOUND = 12 * np.sqrt(3) + 2 * np.sqrt(15)
# Quantum bound for uniform Bob outputs: sqrt(48 * 19.64) from a level-3 SDP
# relaxation computed externally; stored, never recomputed.
BPRIME_LIN_QUANTUM_BOUND = 19.64
BPRIME_QUANTUM_BOUND = 30.70

VIOLATION_EPS = 1e-12
RADICAND_EPS = 1e-12
SIGNALLING_TOL = 1e-9

EVEN = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
ODD = ((0, 2, 1), (1, 0, 2), (2, 1, 0))
DISTINCT = EVEN + ODD


# --- linear coefficient vectors over the 63 correlators ---------------------

def _index_map() -> dict:
    out, i = {}, 0
    for name, shape in CorrelatorSet._SHAPES.items():
        for idx in np.ndindex(*shape):
            out[(name, idx)] = i
            i += 1
    return out


_IDX = _index_map()


def _coeffs(terms) -> np.ndarray:
    v = np.zeros(63)
    for (name, idx), w in terms:
        v[_IDX[(name, idx)]] += w
    return v


S_AB_VEC = _coeffs(((("AB", (x, x)), 1.0) for x in range(3)))
S_BC_VEC = _coeffs(((("BC", (y, y)), 1.0) for y in range(3)))
R_PLUS_VEC = _coeffs(((("ABC", t), 1.0) for t in EVEN))
R_MINUS_VEC = _coeffs(((("ABC", t), 1.0) for t in ODD))
S_VEC = S_BC_VEC - S_AB_VEC
T_VEC = R_PLUS_VEC + R_MINUS_VEC
# everything outside S and T: 63 - 3 - 3 - 6 = 51 correlators
OTHER_MASK = (S_AB_VEC == 0) & (S_BC_VEC == 0) & (T_VEC == 0)
OTHER_LABELS = [lab for (lab, _), keep in zip(CorrelatorSet.zeros().labelled(), OTHER_MASK) if keep]


@dataclass(frozen=True)
class StzValues:
    S: float
    T: float
    Z: float
    S_AB: float
    S_BC: float
    R_plus: float
    R_minus: float


def stz(corr: CorrelatorSet) -> StzValues:
    v = corr.as_vector()
    return StzValues(
        S=float(S_VEC @ v),
        T=float(T_VEC @ v),
        Z=float(np.max(np.abs(v[OTHER_MASK]))),
        S_AB=float(S_AB_VEC @ v),
        S_BC=float(S_BC_VEC @ v),
        R_plus=float(R_PLUS_VEC @ v),
        R_minus=float(R_MINUS_VEC @ v),
    )


@dataclass(frozen=True)
class InequalityReport:
    name: str
    value: float
    bound: float
    violated: bool

    @property
    def margin(self) -> float:
        return self.bound - self.value

    def to_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        return d


def _report(name: str, value: float, bound: float) -> InequalityReport:
    return InequalityReport(name, float(value), float(bound), bool(value > bound + VIOLATION_EPS))


def eval_B(corr: CorrelatorSet) -> InequalityReport:
    """S/3 - T against the bilocal bound 3 + 5Z."""
    v = stz(corr)
    return _report("S/3-T", v.S / 3 - v.T, 3 + 5 * v.Z)


BILOCAL_FACETS = (
    ("+S/3-T", (1 / 3, -1.0), 3.0),
    ("-S/3-T", (-1 / 3, -1.0), 3.0),
    ("+S", (1.0, 0.0), 3.0),
    ("-S", (-1.0, 0.0), 3.0),
    ("+S+T", (1.0, 1.0), 3.0),
    ("-S+T", (-1.0, 1.0), 3.0),
)
LOCAL_FACETS = (
    ("+S", (1.0, 0.0), 3.0),
    ("-S", (-1.0, 0.0), 3.0),
    ("+T", (0.0, 1.0), 4.0),
    ("-T", (0.0, -1.0), 4.0),
    ("+S+T/2", (1.0, 0.5), 3.0),
    ("-S+T/2", (-1.0, 0.5), 3.0),
)


def slice_margins(corr: CorrelatorSet) -> dict:
    """Margins (bound - value) of the bilocal and local (S, T)-slice facets."""
    v = stz(corr)
    out = {"bilocal": {}, "local": {}}
    for key, facets in (("bilocal", BILOCAL_FACETS), ("local", LOCAL_FACETS)):
        for name, (cs, ct), bound in facets:
            out[key][name] = float(bound - (cs * v.S + ct * v.T))
    return out


def linear_expression(name: str) -> np.ndarray:
    """Coefficients over the 63 correlators of a named (S, T) facet expression."""
    for facet_name, (cs, ct), _ in BILOCAL_FACETS:
        if facet_name.lstrip("+") == name.lstrip("+"):
            return cs * S_VEC + ct * T_VEC
    raise KeyError(name)


# --- conditional correlators and the square-root expression -----------------

@dataclass(frozen=True, eq=False)
class ConditionalCorrelators:
    pB: np.ndarray  # [b]
    EA: np.ndarray  # [b, x]
    EC: np.ndarray  # [b, z]
    EAC: np.ndarray  # [b, x, z]


def _weighted(dist: TripartiteDistribution):
    """p(b), p(b) E_b^A(x), p(b) E_b^C(z), p(b) E_b^AC(x, z), with signalling checks."""
    p = dist.p
    s = SIGNS.astype(float)
    pb = p.sum(axis=(2, 4))  # [x, z, b]
    wa = np.einsum("xzabc,a->xzb", p, s)
    wc = np.einsum("xzabc,c->xzb", p, s)
    wac = np.einsum("xzabc,a,c->bxz", p, s, s)
    for name, arr, axes in (("p(b)", pb, (0, 1)), ("E^A", wa, (1,)), ("E^C", wc, (0,))):
        spread = np.max(arr.max(axis=axes) - arr.min(axis=axes))
        if spread > SIGNALLING_TOL:
            raise SignallingError(f"{name} depends on the remote setting (spread {spread:.3e})")
    return pb.mean(axis=(0, 1)), wa.mean(axis=1).T, wc.mean(axis=0).T, wac


def conditional_correlators(dist: TripartiteDistribution) -> ConditionalCorrelators:
    pb, wa, wc, wac = _weighted(dist)
    safe = np.where(pb > 0, pb, 1.0)
    live = (pb > 0).astype(float)
    return ConditionalCorrelators(
        pB=pb,
        EA=wa / safe[:, None] * live[:, None],
        EC=wc / safe[:, None] * live[:, None],
        EAC=wac / safe[:, None, None] * live[:, None, None],
    )


def _radicands(pb, wa, wc, wac) -> np.ndarray:
    t = TETRA.astype(float)  # t[b, x] = b^x
    ra = pb[:, None] - t * wa  # [b, x]
    rc = pb[:, None] + t * wc
    rac = pb[:, None, None] - t[:, :, None] * t[:, None, :] * wac  # [b, x, z]
    off = ~np.eye(3, dtype=bool)
    return np.concatenate([ra.ravel(), rc.ravel(), rac[:, off].ravel()])


def bprime_radicands(dist: TripartiteDistribution) -> np.ndarray:
    """The 48 radicands p(b)(1 -+ ...) of the square-root expression."""
    return _radicands(*_weighted(dist))


def _sqrt_clamped(r: np.ndarray) -> np.ndarray:
    if r.min() < -RADICAND_EPS:
        raise NumericalError(f"negative radicand {r.min():.3e}")
    return np.sqrt(np.maximum(r, 0.0))


@dataclass(frozen=True)
class BprimeReport:
    value: float
    bilocal_bound: float
    quantum_bound: float
    bilocal_violated: bool
    quantum_violated: bool
    quantum_bound_applies: bool

    def to_dict(self) -> dict:
        return asdict(self)


def eval_Bprime(dist: TripartiteDistribution) -> BprimeReport:
    r = bprime_radicands(dist)
    value = float(_sqrt_clamped(r).sum())
    pb = _weighted(dist)[0]
    uniform = bool(np.max(np.abs(pb - 0.25)) <= 1e-6)
    return BprimeReport(
        value=value,
        bilocal_bound=float(BPRIME_BILOCAL_BOUND),
        quantum_bound=BPRIME_QUANTUM_BOUND,
        bilocal_violated=bool(value > BPRIME_BILOCAL_BOUND + VIOLATION_EPS),
        quantum_violated=bool(uniform and value > BPRIME_QUANTUM_BOUND + VIOLATION_EPS),
        quantum_bound_applies=uniform,
    )


def bprime_value(dist: TripartiteDistribution) -> float:
    return float(_sqrt_clamped(bprime_radicands(dist)).sum())


def concavity_bound(lin_value: float) -> float:
    return float(np.sqrt(48 * lin_value))


def Bprime_lin(dist: TripartiteDistribution) -> tuple[float, float]:
    """Linearised expression and the concavity bound sqrt(48 * lin) on Bprime.

    Radicands are weighted by the observed p(b), which equals the fixed 1/4
    weighting whenever Bob's outputs are uniform and keeps the bound valid
    otherwise.
    """
    lin = float(bprime_radicands(dist).sum())
    return lin, concavity_bound(lin)


def Bprime_closed_form(theta: float, V1: float, V2: float) -> float:
    c, s = np.cos(theta), np.sin(theta)
    w = V1 * V2 / 2
    return float(
        6 * np.sqrt(1 + V1 / 2 * c)
        + 6 * np.sqrt(1 + V2 / 2 * c)
        + 6 * np.sqrt(1 + w * (1 + s))
        + 6 * np.sqrt(1 + w * (1 - s))
    )


def B_closed_form(theta: float, V1: float, V2: float) -> float:
    return float(3 * V1 * V2 + (V1 + V2) / 2 * np.cos(theta))


def B_violation_visibility(theta: float = 0.0) -> float:
    """Smallest symmetric V with 3V^2 + V cos(theta) > 3."""
    c = np.cos(theta)
    return float((-c + np.sqrt(c * c + 36)) / 6)


def Bprime_violation_visibility(theta: float = 0.0) -> float:
    """Symmetric visibility at which the closed-form Bprime meets its bilocal bound."""
    f = lambda v: Bprime_closed_form(theta, v, v) - BPRIME_BILOCAL_BOUND  # noqa: E731
    if f(1.0) <= 0:
        return float("nan")
    return float(brentq(f, 0.0, 1.0, xtol=1e-14))


def Bprime_violation_theta(V1: float = 1.0, V2: float = 1.0) -> float:
    """Largest theta for which the closed-form Bprime still exceeds the bilocal bound."""
    f = lambda t: Bprime_closed_form(t, V1, V2) - BPRIME_BILOCAL_BOUND  # noqa: E731
    if f(0.0) <= 0:
        return float("nan")
    if f(np.pi / 2) > 0:
        return float(np.pi / 2)
    return float(brentq(f, 0.0, np.pi / 2, xtol=1e-14))


def separating_example() -> CorrelatorSet:
    """A local correlation separating the two inequalities."""
    ABC = np.zeros((3, 3, 3))
    for t in DISTINCT:
        ABC[t] = -1 / 3
    return CorrelatorSet(AB=-0.5 * np.eye(3), BC=0.5 * np.eye(3), ABC=ABC)


def symmetric_B_brackets(params: SymmetricModelParams) -> np.ndarray:
    """The four per-sign-sector values whose weighted sum is S/3 - T.

    Ordered (++, +-, -+, --) over (tau_alpha, tau_gamma); the weights are
    ``params.source_weights``.
    """
    params.validate()
    qs, qa, qg = params.q_same, params.q_alpha, params.q_gamma
    u = (1 - qs) / 3
    return np.array(
        [
            2 * qa[0, 0] + 4 * qg[0, 0] - 1 - 2 * qs[0, 0],
            3 - 4 * u[0, 1] - 4 * qa[0, 1] - 4 * qg[0, 1],
            3 - 8 * u[1, 0] - 2 * qa[1, 0] - 2 * qg[1, 0],
            4 * qa[1, 1] + 2 * qg[1, 1] - 1 - 2 * qs[1, 1],
        ]
    )


def symmetric_B_value(params: SymmetricModelParams) -> float:
    return float(params.source_weights.ravel() @ symmetric_B_brackets(params))


# --- linear maps from probabilities, used by the optimiser -----------------

def correlator_matrix() -> np.ndarray:
    """(63, 144) matrix mapping a flattened distribution to its correlators."""
    eye = np.eye(int(np.prod(SHAPE)))
    cols = [distribution_to_correlators(TripartiteDistribution(e.reshape(SHAPE))).as_vector() for e in eye]
    return np.array(cols).T


def radicand_matrix() -> np.ndarray:
    """(48, 144) matrix of the Bprime radicands, averaged over remote settings."""
    s = SIGNS.astype(float)
    cols = []
    for e in np.eye(int(np.prod(SHAPE))):
        p = e.reshape(SHAPE)
        pb = p.sum(axis=(2, 4)).mean(axis=(0, 1))
        wa = np.einsum("xzabc,a->xzb", p, s).mean(axis=1).T
        wc = np.einsum("xzabc,c->xzb", p, s).mean(axis=0).T
        wac = np.einsum("xzabc,a,c->bxz", p, s, s)
        cols.append(_radicands(pb, wa, wc, wac))
    return np.array(cols).T
