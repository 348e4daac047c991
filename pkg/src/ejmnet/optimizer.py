"""Heuristic search over bilocal models.

The observed distribution is linear in the unobserved joint
J[alpha, gamma, b] = q1[alpha] q2[gamma] p(b | alpha, gamma), and the only
non-convex constraint is that the marginal of J over b factorises. Holding
one source's weights fixed makes that constraint linear in the other
source's weights and in J, so every half-sweep below is an exact linear
program (HiGHS through :func:`scipy.optimize.linprog`). Sweeps alternate
between the two sources; random Dirichlet restarts escape poor stationary
points.

Feasibility certificates are one-sided: a small residual proves a target
is bilocal up to that residual, a large one proves nothing.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .bilocal import BilocalModel, distribution_from_joint, eval_bilocal
from .correlators import SHAPE, TripartiteDistribution, distribution_to_correlators
from .errors import NumericalError, UsageError, ValidityError
from .inequalities import (
    OTHER_MASK,
    bprime_value,
    correlator_matrix,
    linear_expression,
    radicand_matrix,
    stz,
)
from .quantum import closed_form_correlators, network_distribution, resolve_settings

log = logging.getLogger(__name__)

WORKERS_ENV = "EJMNET_WORKERS"
N_P = int(np.prod(SHAPE))  # 144 observed probabilities
N_J = 8 * 8 * 4


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 16
    max_iters: int = 200
    tol_residual: float = 1e-5
    seed: int = 0
    parametrization: str = "direct"
    workers: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise UsageError("restarts must be >= 1")
        if self.max_iters < 1:
            raise UsageError("max_iters must be >= 1")
        if not self.tol_residual > 0:
            raise UsageError("tol_residual must be > 0")
        if self.parametrization not in PARAMETRIZATIONS:
            raise UsageError(f"unknown parametrization {self.parametrization!r}")

    @property
    def n_workers(self) -> int:
        return self.workers if self.workers else default_workers()


@dataclass(frozen=True, eq=False)
class FitResult:
    model: BilocalModel
    residual: float
    feasible: bool
    iters_used: int
    restarts_used: int
    parametrization: str = "direct"

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "feasible": self.feasible,
            "iters_used": self.iters_used,
            "restarts_used": self.restarts_used,
            "parametrization": self.parametrization,
            "model": self.model.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# --- parametrisations of (J, q1, q2) ------------------------------------------

@dataclass(frozen=True, eq=False)
class _Param:
    name: str
    basis: sp.csr_matrix  # (256, ny): J = basis @ y
    weights: np.ndarray  # (8, nw): q = weights @ w


def _direct() -> _Param:
    return _Param("direct", sp.identity(N_J, format="csr"), np.eye(8))


def _symmetric() -> _Param:
    """Orbits of (alpha, gamma, b) under the tetrahedral group: 4 sign sectors x 5 classes."""
    rows, cols = [], []
    for a in range(8):
        ta, at = divmod(a, 4)
        for g in range(8):
            tg, gt = divmod(g, 4)
            for b in range(4):
                if at == gt:
                    cls = 0 if b == at else 1
                else:
                    cls = 2 if b == at else 3 if b == gt else 4
                rows.append((a * 8 + g) * 4 + b)
                cols.append((ta * 2 + tg) * 5 + cls)
    basis = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N_J, 20))
    weights = np.zeros((8, 2))
    weights[:4, 0] = weights[4:, 1] = 0.25
    return _Param("symmetric14", basis, weights)


PARAMETRIZATIONS = ("direct", "symmetric14")


@lru_cache(maxsize=None)
def _param(name: str) -> _Param:
    return _direct() if name == "direct" else _symmetric()


@lru_cache(maxsize=None)
def _joint_to_p() -> sp.csr_matrix:
    cols = [distribution_from_joint(e.reshape(8, 8, 4)).ravel() for e in np.eye(N_J)]
    return sp.csr_matrix(np.array(cols).T)


@lru_cache(maxsize=None)
def _marginal() -> sp.csr_matrix:
    """(64, 256) sum over b."""
    return sp.kron(sp.identity(64), np.ones((1, 4)), format="csr")


@lru_cache(maxsize=None)
def _corr_matrix() -> np.ndarray:
    return correlator_matrix()


@lru_cache(maxsize=None)
def _rad_matrix() -> np.ndarray:
    return radicand_matrix()


@dataclass(frozen=True, eq=False)
class _Problem:
    """A target or objective expressed on the reduced variables y."""

    param: _Param
    G: sp.csr_matrix  # (144, ny) y -> p
    marg: sp.csr_matrix  # (64, ny)
    target: np.ndarray | None = None  # fit: flattened p
    objective: np.ndarray | None = None  # max: coefficients over p
    zcap: float | None = None


def _problem(param_name: str, **kw) -> _Problem:
    param = _param(param_name)
    G = (_joint_to_p() @ param.basis).tocsr()
    marg = (_marginal() @ param.basis).tocsr()
    return _Problem(param, G, marg, **kw)


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _coupling(prob: _Problem, which: int, w_other: np.ndarray) -> np.ndarray:
    W = prob.param.weights
    q_other = W @ w_other
    if which == 1:
        c = np.einsum("ak,g->agk", W, q_other)
    else:
        c = np.einsum("a,gk->agk", q_other, W)
    return c.reshape(64, W.shape[1])


def _block_lp(prob: _Problem, which: int, w_other: np.ndarray):
    """Solve for (y, w_which) with the other source fixed. Returns (value, y, w)."""
    ny = prob.G.shape[1]
    nw = prob.param.weights.shape[1]
    fit = prob.target is not None
    nt = 1 if fit else 0
    Cw = _coupling(prob, which, w_other)
    A_eq = sp.bmat(
        [
            [prob.marg, sp.csr_matrix(-Cw), sp.csr_matrix((64, nt)) if nt else None],
            [sp.csr_matrix((1, ny)), sp.csr_matrix(np.ones((1, nw))), sp.csr_matrix((1, nt)) if nt else None],
        ],
        format="csr",
    )
    b_eq = np.r_[np.zeros(64), 1.0]
    zero_w = sp.csr_matrix((N_P, nw))
    if fit:
        tcol = sp.csr_matrix(-np.ones((N_P, 1)))
        A_ub = sp.bmat([[prob.G, zero_w, tcol], [-prob.G, zero_w, tcol]], format="csr")
        b_ub = np.r_[prob.target, -prob.target]
        c = np.r_[np.zeros(ny + nw), 1.0]
    else:
        c = np.r_[-(prob.objective @ prob.G), np.zeros(nw)]
        A_ub = b_ub = None
        if prob.zcap is not None:
            Ko = _corr_matrix()[OTHER_MASK] @ prob.G
            Ko = sp.csr_matrix(Ko)
            zero_k = sp.csr_matrix((Ko.shape[0], nw))
            A_ub = sp.bmat([[Ko, zero_k], [-Ko, zero_k]], format="csr")
            b_ub = np.full(2 * Ko.shape[0], prob.zcap)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=_HIGHS)
    if res.status != 0:
        # tight tolerances occasionally stall HiGHS; the solver defaults are the fallback
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalError(f"block LP failed: {res.message}")
    x = res.x
    y, w = x[:ny], x[ny : ny + nw]
    value = x[-1] if fit else -res.fun
    return float(value), np.maximum(y, 0.0), _simplex_clean(w)


def _simplex_clean(w: np.ndarray) -> np.ndarray:
    w = np.maximum(w, 0.0)
    return w / w.sum()


def _model_from(param: _Param, y: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> BilocalModel:
    J = (param.basis @ y).reshape(8, 8, 4)
    q1 = _simplex_clean(param.weights @ w1)
    q2 = _simplex_clean(param.weights @ w2)
    mass = J.sum(axis=2, keepdims=True)
    resp = np.where(mass > 1e-14, J / np.where(mass > 1e-14, mass, 1.0), 0.25)
    return BilocalModel(q1, q2, resp)


def _model_weights(param: _Param, model: BilocalModel) -> tuple[np.ndarray, np.ndarray]:
    """Project a model's source weights onto the parametrisation (for warm starts)."""
    W = param.weights
    w1 = np.linalg.lstsq(W, model.q1, rcond=None)[0]
    w2 = np.linalg.lstsq(W, model.q2, rcond=None)[0]
    return _simplex_clean(w1 + 1e-12), _simplex_clean(w2 + 1e-12)


@dataclass
class _Run:
    value: float
    model: BilocalModel
    iters: int
    index: int


def _alternate(prob: _Problem, w2: np.ndarray, max_iters: int, minimize: bool, stop_at: float | None):
    """Alternating exact block solves from a given second-source start."""
    sign = 1.0 if minimize else -1.0
    best = np.inf
    stall = 0
    it = 0
    y = w1 = None
    for it in range(1, max_iters + 1):
        _, y, w1 = _block_lp(prob, 1, w2)
        val, y, w2 = _block_lp(prob, 2, w1)
        score = sign * val
        if stop_at is not None and val <= stop_at:
            break
        if best - score < 1e-10 * max(1.0, abs(score)):
            stall += 1
            if stall >= 3:
                break
        else:
            stall = 0
        best = min(best, score)
    return _model_from(prob.param, y, w1, w2), it


def _restart_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, index])


def _fit_one(args) -> _Run:
    target, opts, index, warm = args
    prob = _problem(opts.parametrization, target=target)
    nw = prob.param.weights.shape[1]
    rng = _restart_rng(opts.seed, index)
    if warm is not None and index == 0:
        w2 = warm
    else:
        w2 = rng.dirichlet(np.ones(nw))
    model, iters = _alternate(prob, w2, opts.max_iters, True, stop_at=opts.tol_residual * 1e-3)
    dist = distribution_from_joint(model.joint())
    return _Run(float(np.max(np.abs(dist.ravel() - target))), model, iters, index)


def _run_batches(fn, jobs, workers: int, done=None):
    """Evaluate jobs in index order, batch by batch; stop after a batch satisfying ``done``."""
    out = []
    if workers <= 1:
        for job in jobs:
            r = fn(job)
            out.append(r)
            if done is not None and done(r):
                break
        return out
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for i in range(0, len(jobs), workers):
            batch = list(ex.map(fn, jobs[i : i + workers]))
            out.extend(batch)
            if done is not None and any(done(r) for r in batch):
                break
    return out


def _pick_fit(runs: list[_Run], tol: float) -> _Run:
    feas = [r for r in runs if r.value <= tol]
    if feas:
        return min(feas, key=lambda r: r.index)
    return min(runs, key=lambda r: (r.value, r.index))


def fit_bilocal(
    target: TripartiteDistribution,
    opts: FitOptions = FitOptions(),
    warm_start: BilocalModel | None = None,
) -> FitResult:
    """Search for a bilocal model reproducing ``target`` within ``opts.tol_residual`` (L-inf)."""
    target.validate(neg_tol=1e-9, norm_tol=1e-9)
    p = target.p.ravel().copy()
    iters = 0
    restarts = 0
    warm = None
    if opts.parametrization == "direct" and stz(distribution_to_correlators(target)).Z <= 1e-9:
        sym = replace(opts, parametrization="symmetric14", restarts=min(opts.restarts, 4))
        res = _fit_restarts(p, sym, None)
        iters += res.iters_used
        restarts += res.restarts_used
        if res.feasible:
            return replace(res, iters_used=iters, restarts_used=restarts)
        warm_start = warm_start or res.model
    if warm_start is not None:
        warm = _model_weights(_param(opts.parametrization), warm_start)[1]
    res = _fit_restarts(p, opts, warm)
    return replace(res, iters_used=iters + res.iters_used, restarts_used=restarts + res.restarts_used)


def _fit_restarts(p: np.ndarray, opts: FitOptions, warm) -> FitResult:
    jobs = [(p, opts, i, warm) for i in range(opts.restarts)]
    runs = _run_batches(_fit_one, jobs, opts.n_workers, done=lambda r: r.value <= opts.tol_residual)
    best = _pick_fit(runs, opts.tol_residual)
    if best.value <= opts.tol_residual:
        # count only up to the chosen restart so the result does not depend on batch size
        runs = [r for r in runs if r.index <= best.index]
    # residual re-derived from the validated model, independent of the LP value
    resid = eval_bilocal(best.model).linf(TripartiteDistribution(p.reshape(SHAPE)))
    return FitResult(
        model=best.model,
        residual=resid,
        feasible=bool(resid <= opts.tol_residual),
        iters_used=sum(r.iters for r in runs),
        restarts_used=len(runs),
        parametrization=opts.parametrization,
    )


# --- critical visibilities and scans ----------------------------------------

@dataclass(frozen=True)
class CriticalVisibility:
    value: float
    flag: str  # "ok", "always feasible", "never feasible"
    bracket: tuple[float, float]
    residual: float


def quantum_target(theta, V1, V2, settings="pauli") -> TripartiteDistribution:
    if isinstance(settings, str) and settings == "pauli":
        from .correlators import correlators_to_distribution

        return correlators_to_distribution(closed_form_correlators(theta, V1, V2))
    return network_distribution(theta, V1, V2, settings, settings)


def _bisect(feasible_at, resolution: float) -> CriticalVisibility:
    ok_hi, res_hi, model = feasible_at(1.0, None)
    if ok_hi:
        return CriticalVisibility(1.0, "always feasible", (1.0, 1.0), res_hi)
    ok_lo, res_lo, model = feasible_at(0.0, None)
    if not ok_lo:
        return CriticalVisibility(0.0, "never feasible", (0.0, 0.0), res_lo)
    lo, hi = 0.0, 1.0
    warm = model
    best_res = res_lo
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        ok, res, m = feasible_at(mid, warm)
        log.debug("V=%.6f feasible=%s residual=%.3e", mid, ok, res)
        if ok:
            lo, warm, best_res = mid, m, res
        else:
            hi = mid
    return CriticalVisibility(0.5 * (lo + hi), "ok", (lo, hi), best_res)


def critical_visibility_symmetricV(
    theta: float,
    settings="pauli",
    opts: FitOptions = FitOptions(),
    resolution: float = 1e-3,
) -> CriticalVisibility:
    """Largest V = V1 = V2 at which the quantum correlation is found bilocal."""
    resolve_settings(settings)

    def feasible_at(v, warm):
        r = fit_bilocal(quantum_target(theta, v, v, settings), opts, warm_start=warm)
        return r.feasible, r.residual, r.model

    return _bisect(feasible_at, resolution)


@dataclass(frozen=True)
class ScanRow:
    theta: float
    settings: str
    V1: float
    V2crit: float
    residual: float
    feasible: bool
    flag: str
    analytic_V2: float | None = None

    @property
    def product(self) -> float:
        return self.V1 * self.V2crit

    def to_dict(self) -> dict:
        d = asdict(self)
        d["product"] = self.product
        return d


def _settings_name(settings) -> str:
    if isinstance(settings, str):
        return settings
    return json.dumps(np.asarray(settings, dtype=float).tolist())


def _scan_point(args) -> ScanRow:
    theta, settings, v1, opts, resolution = args
    name = _settings_name(settings)
    analytic = None
    if name == "pauli" and abs(theta) < 1e-15:
        from .bilocal import analytic_v2crit

        analytic = analytic_v2crit(v1)
    try:
        if not 0.0 <= v1 <= 1.0:
            raise ValidityError(f"V1={v1} outside [0, 1]")

        def feasible_at(v2, warm):
            r = fit_bilocal(quantum_target(theta, v1, v2, settings), opts, warm_start=warm)
            return r.feasible, r.residual, r.model

        cv = _bisect(feasible_at, resolution)
        return ScanRow(theta, name, v1, cv.value, cv.residual, cv.flag != "never feasible", cv.flag, analytic)
    except Exception as exc:  # recorded in-row, never aborts the scan
        return ScanRow(theta, name, v1, float("nan"), float("nan"), False, f"error: {exc}", analytic)


def boundary_scan(
    theta: float,
    settings,
    V1grid,
    opts: FitOptions = FitOptions(),
    resolution: float = 1e-3,
) -> list[ScanRow]:
    """For each V1, the largest V2 with a bilocal model found; rows in input order."""
    inner = replace(opts, workers=1)
    jobs = [(float(theta), settings, float(v1), inner, resolution) for v1 in V1grid]
    return _run_batches(_scan_point, jobs, opts.n_workers)


# --- maximising Bell expressions over bilocal models --------------------------

LINEAR_EXPRESSIONS = ("S/3-T", "-S/3-T", "S", "-S", "S+T", "-S+T")
EXPRESSIONS = LINEAR_EXPRESSIONS + ("Bprime",)


@dataclass(frozen=True, eq=False)
class MaxResult:
    expression: str
    value: float
    model: BilocalModel
    zcap: float | None
    Z: float
    restarts_used: int
    values: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "expression": self.expression,
            "value": self.value,
            "zcap": self.zcap,
            "Z": self.Z,
            "restarts_used": self.restarts_used,
            "model": self.model.to_dict(),
        }


def expression_value(expr: str, dist: TripartiteDistribution) -> float:
    """Evaluate a named expression on a distribution through the inequality module."""
    if expr == "Bprime":
        return bprime_value(dist)
    v = stz(distribution_to_correlators(dist))
    cs, ct = {
        "S/3-T": (1 / 3, -1),
        "-S/3-T": (-1 / 3, -1),
        "S": (1, 0),
        "-S": (-1, 0),
        "S+T": (1, 1),
        "-S+T": (-1, 1),
    }[expr]
    return float(cs * v.S + ct * v.T)


def _max_start(prob: _Problem, rng: np.random.Generator) -> np.ndarray:
    w2 = rng.dirichlet(np.ones(prob.param.weights.shape[1]))
    if prob.zcap is not None and prob.param.name == "direct":
        # antipodal symmetrisation zeroes the source marginals, keeping the first block feasible
        w2 = 0.5 * (w2 + np.roll(w2, 4))
    return w2


def _max_one(args) -> _Run:
    expr, zcap, opts, index = args
    rng = _restart_rng(opts.seed, index)
    if expr == "Bprime":
        prob = _problem(opts.parametrization, zcap=zcap)
        model, iters = _alternate_concave(prob, _max_start(prob, rng), opts.max_iters)
    else:
        coef = linear_expression(expr) @ _corr_matrix()
        prob = _problem(opts.parametrization, objective=coef, zcap=zcap)
        model, iters = _alternate(prob, _max_start(prob, rng), opts.max_iters, False, None)
    value = expression_value(expr, eval_bilocal(model))
    return _Run(value, model, iters, index)


def max_expression_over_bilocal(
    expr: str,
    opts: FitOptions = FitOptions(restarts=24),
    zero_Z: bool = False,
    zcap: float | None = None,
) -> MaxResult:
    """Best value found of a named expression over bilocal models (a lower bound on the supremum)."""
    if expr not in EXPRESSIONS:
        raise UsageError(f"unknown expression {expr!r}; choose from {', '.join(EXPRESSIONS)}")
    if zero_Z:
        zcap = 0.0
    if zcap is not None and zcap < 0:
        raise UsageError("zcap must be >= 0")
    jobs = [(expr, zcap, opts, i) for i in range(opts.restarts)]
    runs = _run_batches(_max_one, jobs, opts.n_workers)
    best = max(runs, key=lambda r: (r.value, -r.index))
    Z = stz(distribution_to_correlators(eval_bilocal(best.model))).Z
    return MaxResult(expr, best.value, best.model, zcap, Z, len(runs), tuple(r.value for r in runs))


def max_B_given_Z(Zcap: float, opts: FitOptions = FitOptions(restarts=24)) -> MaxResult:
    """Best S/3 - T over bilocal models whose off-pattern correlators lie in [-Zcap, Zcap]."""
    if Zcap < 0:
        raise UsageError("Zcap must be >= 0")
    return max_expression_over_bilocal("S/3-T", opts, zcap=float(Zcap))


def _alternate_concave(prob: _Problem, w2: np.ndarray, max_iters: int):
    """Alternating maximisation of the square-root expression (concave in each block)."""
    best = -np.inf
    stall = 0
    it = 0
    y = w1 = None
    for it in range(1, max_iters + 1):
        _, y, w1 = _block_concave(prob, 1, w2)
        val, y, w2 = _block_concave(prob, 2, w1)
        if val - best < 1e-7:
            stall += 1
            if stall >= 2:
                break
        else:
            stall = 0
        best = max(best, val)
    return _model_from(prob.param, y, w1, w2), it


def _block_concave(prob: _Problem, which: int, w_other: np.ndarray):
    import cvxpy as cp

    ny = prob.G.shape[1]
    nw = prob.param.weights.shape[1]
    Cw = _coupling(prob, which, w_other)
    y = cp.Variable(ny, nonneg=True)
    w = cp.Variable(nw, nonneg=True)
    R = sp.csr_matrix(_rad_matrix()) @ prob.G
    cons = [prob.marg @ y == Cw @ w, cp.sum(w) == 1]
    if prob.zcap is not None:
        Ko = sp.csr_matrix(_corr_matrix()[OTHER_MASK]) @ prob.G
        cons += [cp.abs(Ko @ y) <= prob.zcap]
    problem = cp.Problem(cp.Maximize(cp.sum(cp.sqrt(R @ y))), cons)
    problem.solve(solver=cp.CLARABEL)
    if y.value is None:
        raise NumericalError(f"concave block failed: {problem.status}")
    return float(problem.value), np.maximum(y.value, 0.0), _simplex_clean(np.asarray(w.value))

