from itertools import permutations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ejmnet.bilocal import SymmetricModelParams, corner_params, eval_bilocal, expand_symmetric
from ejmnet.correlators import TETRA, TripartiteDistribution, correlators_to_distribution, distribution_to_correlators
from ejmnet.errors import SignallingError
from ejmnet.inequalities import (
    BPRIME_BILOCAL_BOUND,
    BPRIME_LIN_QUANTUM_BOUND,
    BPRIME_QUANTUM_BOUND,
    OTHER_LABELS,
    B_closed_form,
    B_violation_visibility,
    Bprime_closed_form,
    Bprime_lin,
    Bprime_violation_theta,
    Bprime_violation_visibility,
    bprime_radicands,
    bprime_value,
    concavity_bound,
    conditional_correlators,
    correlator_matrix,
    eval_B,
    eval_Bprime,
    separating_example,
    radicand_matrix,
    slice_margins,
    stz,
    symmetric_B_brackets,
    symmetric_B_value,
)
from ejmnet.quantum import closed_form_correlators, network_distribution

from conftest import random_local, random_model, random_quantum

thetas = st.floats(min_value=0.0, max_value=np.pi / 2)
vis = st.floats(min_value=0.0, max_value=1.0)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
GRID = [(t, v1, v2) for t in (0, np.pi / 6, np.pi / 4, np.pi / 3, np.pi / 2) for v1 in (0, 0.5, 1) for v2 in (0, 0.5, 1)]


def test_other_correlator_inventory():
    assert len(OTHER_LABELS) == 51
    assert "A1B1" not in OTHER_LABELS and "A1B2" in OTHER_LABELS
    assert "A1B2C3" not in OTHER_LABELS and "A1B1C1" in OTHER_LABELS


@given(thetas, vis, vis)
def test_stz_of_quantum_correlation(theta, v1, v2):
    v = stz(closed_form_correlators(theta, v1, v2))
    assert v.S == pytest.approx(3 * (v1 + v2) / 2 * np.cos(theta), abs=1e-12)
    assert v.T == pytest.approx(-3 * v1 * v2, abs=1e-12)
    assert v.Z == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("theta,v1,v2", GRID)
def test_B_on_quantum_grid(theta, v1, v2):
    assert eval_B(closed_form_correlators(theta, v1, v2)).value == pytest.approx(B_closed_form(theta, v1, v2), abs=1e-12)


def test_B_frozen_values():
    full = eval_B(closed_form_correlators(0, 1, 1))
    assert full.value == pytest.approx(4) and full.violated
    bsm = eval_B(closed_form_correlators(np.pi / 2, 1, 1))
    assert bsm.value == pytest.approx(3, abs=1e-12) and not bsm.violated
    noisy = eval_B(closed_form_correlators(0, 0.8, 0.8))
    assert noisy.value == pytest.approx(2.72, abs=1e-12) and not noisy.violated


def test_B_threshold():
    assert B_violation_visibility(0) == pytest.approx((np.sqrt(37) - 1) / 6, abs=1e-15)
    v = B_violation_visibility(0)
    assert B_closed_form(0, v, v) == pytest.approx(3, abs=1e-12)


def test_separating_example_values():
    corr = separating_example()
    dist = correlators_to_distribution(corr)
    dist.validate()
    v = stz(corr)
    assert (v.S, v.T, v.Z) == pytest.approx((3, -2, 0), abs=1e-12)
    margins = slice_margins(corr)
    assert all(m >= -1e-12 for fam in margins.values() for m in fam.values())
    assert not eval_B(corr).violated
    assert bprime_value(dist) == pytest.approx(6 * np.sqrt(6) + 8 * np.sqrt(3), abs=1e-10)
    assert eval_Bprime(dist).bilocal_violated


def test_slice_margins_shape():
    m = slice_margins(closed_form_correlators(0, 1, 1))
    assert len(m["bilocal"]) == 6 and len(m["local"]) == 6
    assert m["bilocal"]["+S/3-T"] == pytest.approx(-1)


def test_bprime_closed_form_frozen():
    assert Bprime_closed_form(0, 1, 1) == pytest.approx(12 * np.sqrt(6), abs=1e-10)
    assert BPRIME_BILOCAL_BOUND == pytest.approx(28.5306, abs=1e-4)


@given(thetas, vis, vis)
def test_bprime_closed_form_matches_evaluation(theta, v1, v2):
    dist = network_distribution(theta, v1, v2)
    assert bprime_value(dist) == pytest.approx(Bprime_closed_form(theta, v1, v2), abs=1e-10)


def test_bprime_uniform_distribution():
    dist = TripartiteDistribution.uniform()
    assert bprime_value(dist) == pytest.approx(24)
    lin, bound = Bprime_lin(dist)
    assert lin == pytest.approx(12) and bound == pytest.approx(24)


def test_bprime_thresholds():
    assert Bprime_violation_visibility(0) == pytest.approx(0.880, abs=0.005)
    assert Bprime_violation_theta(1, 1) / np.pi == pytest.approx(0.254, abs=0.005)


def test_bprime_violation_implies_B_violation():
    for theta in np.linspace(0, np.pi / 2, 11):
        for v1 in np.linspace(0, 1, 11):
            for v2 in np.linspace(0, 1, 11):
                if Bprime_closed_form(theta, v1, v2) > BPRIME_BILOCAL_BOUND:
                    assert B_closed_form(theta, v1, v2) > 3


def test_quantum_bound_constant():
    assert concavity_bound(BPRIME_LIN_QUANTUM_BOUND) == pytest.approx(BPRIME_QUANTUM_BOUND, abs=0.01)


@given(seeds)
def test_concavity_bound_holds(seed):
    rng = np.random.default_rng(seed)
    dist = random_quantum(rng) if seed % 2 else random_local(rng)
    assert bprime_value(dist) <= Bprime_lin(dist)[1] + 1e-9


@given(seeds)
def test_bprime_invariant_under_joint_relabelling(seed):
    dist = random_quantum(np.random.default_rng(seed))
    ref = bprime_value(dist)
    for sigma in permutations(range(3)):
        # permuting setting labels permutes the tetrahedron vertices
        pi = [int(np.flatnonzero((TETRA[:, sigma] == TETRA[b]).all(axis=1))[0]) for b in range(4)]
        p = dist.p[np.ix_(sigma, sigma)][:, :, :, pi, :]
        assert bprime_value(TripartiteDistribution(p)) == pytest.approx(ref, abs=1e-12)


def test_signalling_rejected(rng):
    p = random_local(rng).p.copy()
    # make Alice's marginal depend on z
    p[0, 0] = 0.0
    p[0, 0, 0, 0, 0] = 1.0
    with pytest.raises(SignallingError):
        bprime_value(TripartiteDistribution(p))


def test_conditional_correlators_of_quantum_case():
    cc = conditional_correlators(network_distribution(0, 1, 1))
    assert np.allclose(cc.pB, 0.25)
    # E_b^A(x) = -b^x/2 and E_b^C(z) = +b^z/2 for Pauli settings at theta = 0
    assert np.allclose(cc.EA, -TETRA / 2, atol=1e-12)
    assert np.allclose(cc.EC, TETRA / 2, atol=1e-12)


def test_linear_maps_agree(rng):
    dist = eval_bilocal(random_model(rng))
    p = dist.p.ravel()
    assert np.allclose(correlator_matrix() @ p, distribution_to_correlators(dist).as_vector(), atol=1e-14)
    assert np.allclose(radicand_matrix() @ p, bprime_radicands(dist), atol=1e-14)


@given(seeds)
def test_symmetric_brackets_combine_to_B(seed):
    params = SymmetricModelParams.random(np.random.default_rng(seed))
    corr = distribution_to_correlators(eval_bilocal(expand_symmetric(params)))
    v = stz(corr)
    assert symmetric_B_value(params) == pytest.approx(v.S / 3 - v.T, abs=1e-12)


def test_symmetric_brackets_bounded_by_three():
    rng = np.random.default_rng(7)
    worst = max(symmetric_B_brackets(SymmetricModelParams.random(rng)).max() for _ in range(10_000))
    assert worst <= 3 + 1e-12


def test_corner_bracket_reaches_three():
    assert symmetric_B_brackets(corner_params(1.0, 0.3))[0] == pytest.approx(3)


def test_uniform_params_brackets():
    b = symmetric_B_brackets(SymmetricModelParams.uniform())
    assert np.all(b <= 3) and symmetric_B_value(SymmetricModelParams.uniform()) == pytest.approx(0, abs=1e-15)
