"""Bilocal hidden-variable models.

Each source variable is one of the 8 triples in {+-1}^3, enumerated as
``m_1..m_4, -m_1..-m_4`` (see :data:`LAMBDA`). A model holds the two source
weight vectors and Bob's response table ``response[alpha, gamma, b]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .correlators import SIGNS, TETRA, CorrelatorSet, TripartiteDistribution
from .errors import DomainError, NumericalError, ValidityError

LAMBDA = np.concatenate([TETRA, -TETRA])
_ONE_HOT = (LAMBDA[:, :, None] == SIGNS[None, None, :]).astype(float)  # [lam, x, a]

TOL = 1e-10


def _lambda_label(i: int) -> str:
    return ("+" if i < 4 else "-") + f"m{i % 4 + 1}"


LAMBDA_LABELS = [_lambda_label(i) for i in range(8)]


@dataclass(frozen=True, eq=False)
class BilocalModel:
    q1: np.ndarray
    q2: np.ndarray
    response: np.ndarray  # [alpha, gamma, b]

    def __post_init__(self):
        for name, shape in (("q1", (8,)), ("q2", (8,)), ("response", (8, 8, 4))):
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def validate(self, tol: float = TOL) -> "BilocalModel":
        for name in ("q1", "q2", "response"):
            arr = getattr(self, name)
            if arr.min() < -tol:
                raise ValidityError(f"{name} has a negative entry {arr.min():.3e}")
        for name in ("q1", "q2"):
            s = getattr(self, name).sum()
            if abs(s - 1) > tol:
                raise ValidityError(f"{name} sums to {s:.12g}")
        rows = self.response.sum(axis=2)
        bad = np.argwhere(np.abs(rows - 1) > tol)
        if len(bad):
            a, g = bad[0]
            raise ValidityError(
                f"response row alpha={LAMBDA_LABELS[a]}, gamma={LAMBDA_LABELS[g]} sums to {rows[a, g]:.12g}"
            )
        return self

    def joint(self) -> np.ndarray:
        """Unobserved joint p(alpha, gamma, b) = q1 q2 p(b | alpha, gamma)."""
        return self.q1[:, None, None] * self.q2[None, :, None] * self.response

    def to_dict(self) -> dict:
        return {
            "lambda_order": LAMBDA_LABELS,
            "lambda_vectors": LAMBDA.tolist(),
            "q1": {LAMBDA_LABELS[i]: float(v) for i, v in enumerate(self.q1)},
            "q2": {LAMBDA_LABELS[i]: float(v) for i, v in enumerate(self.q2)},
            "response": [
                {
                    "alpha": LAMBDA_LABELS[a],
                    "gamma": LAMBDA_LABELS[g],
                    "p_b": [float(v) for v in self.response[a, g]],
                }
                for a in range(8)
                for g in range(8)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BilocalModel":
        idx = {lab: i for i, lab in enumerate(LAMBDA_LABELS)}
        try:
            q1 = np.array([data["q1"][lab] for lab in LAMBDA_LABELS])
            q2 = np.array([data["q2"][lab] for lab in LAMBDA_LABELS])
            resp = np.full((8, 8, 4), np.nan)
            for row in data["response"]:
                resp[idx[row["alpha"]], idx[row["gamma"]]] = row["p_b"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidityError(f"malformed bilocal model: {exc}") from exc
        if np.isnan(resp).any():
            raise ValidityError("response table is incomplete")
        return cls(q1, q2, resp)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "BilocalModel":
        return cls.from_dict(json.loads(text))


def distribution_from_joint(joint: np.ndarray) -> np.ndarray:
    """Map p(alpha, gamma, b) to the observed array p[x, z, a, b, c]."""
    return np.einsum("AGb,Axa,Gzc->xzabc", joint, _ONE_HOT, _ONE_HOT, optimize=True)


def eval_bilocal(model: BilocalModel) -> TripartiteDistribution:
    model.validate()
    return TripartiteDistribution(distribution_from_joint(model.joint()))


def _det3(u, v, w) -> int:
    return int(round(np.linalg.det(np.array([u, v, w], dtype=float))))


def bsm_bilocal_model(V1: float, V2: float) -> BilocalModel:
    """Explicit bilocal model reproducing the theta = pi/2 correlations with Pauli settings.

    alpha is uniform over the -m_b, gamma uniform over the m_b; Bob outputs b
    with weight (1 + 3 V1 V2)/4 when -alpha = b = gamma or det(-alpha, b, gamma) > 0,
    and (1 - V1 V2)/4 otherwise. Rows outside the support are left uniform.
    """
    for v in (V1, V2):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"visibility {v} outside [0, 1]")
    w = V1 * V2
    hi, lo = (1 + 3 * w) / 4, (1 - w) / 4
    q1 = np.r_[np.zeros(4), np.full(4, 0.25)]
    q2 = np.r_[np.full(4, 0.25), np.zeros(4)]
    resp = np.full((8, 8, 4), 0.25)
    for a in range(4, 8):
        for g in range(4):
            minus_alpha = -LAMBDA[a]
            for b in range(4):
                same = np.array_equal(minus_alpha, TETRA[b]) and np.array_equal(TETRA[b], LAMBDA[g])
                oriented = _det3(minus_alpha, TETRA[b], LAMBDA[g]) > 0
                resp[a, g, b] = hi if (same or oriented) else lo
    return BilocalModel(q1, q2, resp)


# --- tetrahedrally symmetric models -------------------------------------

TAU = (+1, -1)
_TAU_KEY = {+1: "+", -1: "-"}


@dataclass(frozen=True, eq=False)
class SymmetricModelParams:
    """The 14 parameters of a tetrahedrally symmetric bilocal model.

    ``q_same``, ``q_alpha`` and ``q_gamma`` are 2x2 arrays indexed by
    (tau_alpha, tau_gamma) with index 0 for ``+`` and 1 for ``-``:
    ``q_same`` is P(b = a~ = g~ | a~ = g~), ``q_alpha`` is P(b = a~ | a~ != g~)
    and ``q_gamma`` is P(b = g~ | a~ != g~), where a~ = tau_alpha * alpha.
    """

    q_plus1: float
    q_plus2: float
    q_same: np.ndarray
    q_alpha: np.ndarray
    q_gamma: np.ndarray

    def __post_init__(self):
        for name in ("q_same", "q_alpha", "q_gamma"):
            arr = np.array(getattr(self, name), dtype=float).reshape(2, 2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "q_plus1", float(self.q_plus1))
        object.__setattr__(self, "q_plus2", float(self.q_plus2))

    def validate(self, tol: float = TOL) -> "SymmetricModelParams":
        vals = np.r_[self.q_plus1, self.q_plus2, self.q_same.ravel(), self.q_alpha.ravel(), self.q_gamma.ravel()]
        if vals.min() < -tol or vals.max() > 1 + tol:
            raise ValidityError("symmetric model parameters must lie in [0, 1]")
        s = self.q_alpha + self.q_gamma
        if s.max() > 1 + tol:
            i, j = np.unravel_index(np.argmax(s), s.shape)
            raise ValidityError(
                f"q_alpha + q_gamma = {s[i, j]:.12g} > 1 for tau = ({_TAU_KEY[TAU[i]]}, {_TAU_KEY[TAU[j]]})"
            )
        return self

    @property
    def source_weights(self) -> np.ndarray:
        """2x2 array q^(1)_{tau_alpha} q^(2)_{tau_gamma}."""
        w1 = np.array([self.q_plus1, 1 - self.q_plus1])
        w2 = np.array([self.q_plus2, 1 - self.q_plus2])
        return np.outer(w1, w2)

    @classmethod
    def uniform(cls, q_plus1: float = 0.5, q_plus2: float = 0.5) -> "SymmetricModelParams":
        return cls(q_plus1, q_plus2, np.full((2, 2), 0.25), np.full((2, 2), 0.25), np.full((2, 2), 0.25))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "SymmetricModelParams":
        qa = np.empty((2, 2))
        qg = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                w = rng.dirichlet(np.ones(3))
                qa[i, j], qg[i, j] = w[0], w[1]
        return cls(rng.random(), rng.random(), rng.random((2, 2)), qa, qg)

    def to_dict(self) -> dict:
        out = {"q_plus1": self.q_plus1, "q_plus2": self.q_plus2}
        for name in ("q_same", "q_alpha", "q_gamma"):
            arr = getattr(self, name)
            for i, ta in enumerate(TAU):
                for j, tg in enumerate(TAU):
                    out[f"{name}_{_TAU_KEY[ta]}{_TAU_KEY[tg]}"] = float(arr[i, j])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SymmetricModelParams":
        arrs = {}
        for name in ("q_same", "q_alpha", "q_gamma"):
            arr = np.empty((2, 2))
            for i, ta in enumerate(TAU):
                for j, tg in enumerate(TAU):
                    arr[i, j] = data[f"{name}_{_TAU_KEY[ta]}{_TAU_KEY[tg]}"]
            arrs[name] = arr
        return cls(data["q_plus1"], data["q_plus2"], **arrs)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "SymmetricModelParams":
        return cls.from_dict(json.loads(text))


def expand_symmetric(params: SymmetricModelParams) -> BilocalModel:
    params.validate()
    q1 = np.r_[np.full(4, params.q_plus1 / 4), np.full(4, (1 - params.q_plus1) / 4)]
    q2 = np.r_[np.full(4, params.q_plus2 / 4), np.full(4, (1 - params.q_plus2) / 4)]
    resp = np.empty((8, 8, 4))
    for a in range(8):
        i, at = divmod(a, 4)  # tau index, vertex of alpha-tilde
        for g in range(8):
            j, gt = divmod(g, 4)
            if at == gt:
                qs = params.q_same[i, j]
                row = np.full(4, (1 - qs) / 3)
                row[at] = qs
            else:
                qa, qg = params.q_alpha[i, j], params.q_gamma[i, j]
                row = np.full(4, (1 - qa - qg) / 2)
                row[at], row[gt] = qa, qg
            resp[a, g] = row
    return BilocalModel(q1, q2, resp)


def symmetric_correlators(params: SymmetricModelParams) -> CorrelatorSet:
    """Correlators of a symmetric model, evaluated without expanding it."""
    params.validate()
    w = params.source_weights
    tau = np.array(TAU, dtype=float)
    u = (1 - params.q_same) / 3
    ab = np.sum(w * tau[:, None] * (params.q_alpha - u))
    bc = np.sum(w * tau[None, :] * (params.q_gamma - u))
    abc = np.sum(w * np.outer(tau, tau) * (0.5 - u - (params.q_alpha + params.q_gamma) / 2))
    ABC = np.zeros((3, 3, 3))
    for x, y, z in permutations(range(3)):
        ABC[x, y, z] = abc
    return CorrelatorSet(AB=ab * np.eye(3), BC=bc * np.eye(3), ABC=ABC)


def tetra_permutation_action(perm) -> np.ndarray:
    """Index map on the 8 source values induced by a vertex permutation.

    ``perm[b]`` is the image vertex of m_b; -m_b is sent to -m_{perm[b]}.
    """
    perm = list(perm)
    return np.array(perm + [p + 4 for p in perm])


# --- analytic boundary of the symmetric family ----------------------------

def _root(v1: float) -> float:
    r = 2 * v1 - 8 / 9
    if r < 0:
        raise DomainError(f"V1={v1} gives 2 V1 - 8/9 < 0")
    return np.sqrt(r)


def boundary_v2(v1: float) -> float:
    """Largest V2 reached by the corner family at a given V1 (V1 >= V2 branch)."""
    s = _root(v1)
    return (58 + 9 * v1 - 12 * s) / (27 * (1 + 2 * v1))


def symmetric_crit_visibility(tol: float = 1e-12) -> float:
    """Fixed point V = boundary_v2(V) on [4/9, 1], by bisection."""
    lo, hi = 4 / 9, 1.0
    g = lambda v: boundary_v2(v) - v  # noqa: E731
    if not (g(lo) > 0 > g(hi)):
        raise NumericalError("no sign change for the symmetric critical visibility")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def corner_params(q_plus: float, q0: float) -> SymmetricModelParams:
    """The corner assignment of the near-optimal strategies with free q_+ and q_0."""
    # rows: tau_alpha (+, -), cols: tau_gamma (+, -)
    q_same = np.array([[0.0, 1.0], [1.0, 0.0]])
    q_alpha = np.array([[0.0, 0.0], [0.0, 1.0]])
    q_gamma = np.array([[1.0, 0.0], [q0, 0.0]])
    return SymmetricModelParams(q_plus, q_plus, q_same, q_alpha, q_gamma)


def analytic_boundary(V1: float) -> tuple[SymmetricModelParams, float]:
    """Symmetric model and V2 on the analytic boundary, for V1 >= V_crit."""
    v1 = float(V1)
    vc = symmetric_crit_visibility()
    if not (vc - 1e-12 <= v1 <= 1.0):
        raise DomainError(f"V1={v1} outside [V_crit={vc:.6f}, 1] for the V1 >= V2 branch")
    s = _root(v1)
    v2 = boundary_v2(v1)
    q_plus = 2 / 3 - s / 2
    q0 = (6 * s + 9 * v2 - 9 * v1 - 2) / (3 * s + 8 - 9 * v1)
    if not (-1e-12 <= q0 <= 1 + 1e-12) or not (0 <= q_plus <= 1):
        raise DomainError(f"q0={q0:.6g}, q_plus={q_plus:.6g} outside [0, 1] at V1={v1}")
    return corner_params(q_plus, min(max(q0, 0.0), 1.0)), float(v2)


def analytic_v2crit(V1: float) -> float:
    """Analytic symmetric-model boundary V2(V1) on both branches.

    Below V_crit the roles of the sources are exchanged, so V2 solves
    boundary_v2(V2) = V1.
    """
    v1 = float(V1)
    vc = symmetric_crit_visibility()
    if v1 >= vc:
        return boundary_v2(v1)
    # boundary_v2 is decreasing on [vc, 1]
    if v1 <= boundary_v2(1.0):
        return 1.0
    lo, hi = vc, 1.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if boundary_v2(mid) > v1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
