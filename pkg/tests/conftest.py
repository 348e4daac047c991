import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ejmnet.bilocal import BilocalModel, eval_bilocal
from ejmnet.correlators import TripartiteDistribution

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_model(rng: np.random.Generator) -> BilocalModel:
    return BilocalModel(
        rng.dirichlet(np.ones(8)),
        rng.dirichlet(np.ones(8)),
        rng.dirichlet(np.ones(4), size=(8, 8)),
    )


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_density(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_quantum(rng: np.random.Generator) -> TripartiteDistribution:
    """Born-rule statistics for random sources, a random Bob basis and random Alice/Charlie bases."""
    r1 = random_density(rng, 4).reshape(2, 2, 2, 2)
    r2 = random_density(rng, 4).reshape(2, 2, 2, 2)
    ub = random_unitary(rng, 4)
    pb = np.einsum("ib,jb->bij", ub, ub.conj()).reshape(4, 2, 2, 2, 2)

    def qubit_povms():
        out = []
        for _ in range(3):
            u = random_unitary(rng, 2)
            out.append([np.outer(u[:, k], u[:, k].conj()) for k in range(2)])
        return np.array(out)

    pa, pc = qubit_povms(), qubit_povms()
    p = np.einsum("xaij,blmkn,zcpq,jkil,nqmp->xzabc", pa, pb, pc, r1, r2, optimize=True)
    return TripartiteDistribution(p.real)


def random_local(rng: np.random.Generator, n_lambda: int = 6) -> TripartiteDistribution:
    """A general (single shared variable) local model; no-signalling but not necessarily bilocal."""
    w = rng.dirichlet(np.ones(n_lambda))
    pa = rng.dirichlet(np.ones(2), size=(n_lambda, 3))  # [l, x, a]
    pbb = rng.dirichlet(np.ones(4), size=n_lambda)  # [l, b]
    pc = rng.dirichlet(np.ones(2), size=(n_lambda, 3))  # [l, z, c]
    p = np.einsum("l,lxa,lb,lzc->xzabc", w, pa, pbb, pc)
    return TripartiteDistribution(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_bilocal_dist(rng):
    return eval_bilocal(random_model(rng))
