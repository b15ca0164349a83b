import math

import numpy as np
import pytest

from qnetopt import apps
from qnetopt import entropy as en
from qnetopt import linalg as la
from qnetopt import netmodel as nm
from qnetopt.errors import LayoutError
from qnetopt.layout import SystemLayout
from qnetopt.netmodel import LabeledOperator

OCB_VALUE = (1 + 1 / math.sqrt(2)) / 2


def local(layout, factors):
    """Tensor product of single-system operators placed by label."""
    labels = list(factors)
    return la.expand(la.kron_all(*[factors[k] for k in labels]), layout, labels)


def commutator_norm(op, x):
    return float(np.linalg.norm(op @ x - x @ op))


# projectors


def test_sym_antisym_qubits():
    pp = apps.sym_antisym(2)
    assert (pp.d_plus, pp.d_minus) == (3, 1)
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    assert np.allclose(pp.p_minus, np.outer(singlet, singlet), atol=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_projector_pair_invariants(d, rng):
    pp = apps.sym_antisym(d)
    assert np.allclose(pp.p_plus + pp.p_minus, np.eye(d * d))
    assert np.allclose(pp.p_plus @ pp.p_minus, 0)
    assert np.trace(pp.p_plus).real == pytest.approx(d * (d + 1) / 2)
    assert np.trace(pp.p_minus).real == pytest.approx(d * (d - 1) / 2)
    for _ in range(20):
        u = apps.haar_sample(d, rng)
        uu = la.kron(u, u)
        assert np.linalg.norm(pp.p_plus @ uu - uu @ pp.p_plus) <= 1e-10


@pytest.mark.parametrize("d", [2, 3])
def test_entangled_resources(d):
    res = apps.entangled_resources(d)
    assert np.allclose(res.e_projector @ res.e_projector, res.e_projector)
    assert np.linalg.matrix_rank(res.e_projector) == 1
    assert np.allclose(res.e_projector + res.e_perp, np.eye(d * d))
    assert res.d_perp == d * d - 1


def test_dimension_checked():
    with pytest.raises(LayoutError):
        apps.omega_inversion(1)


# performance operators


@pytest.mark.parametrize("builder", [apps.omega_inversion, apps.omega_conjugation, apps.omega_controlization])
@pytest.mark.parametrize("d", [2, 3])
def test_builders_psd(builder, d):
    om = builder(d)
    assert la.is_psd(om.op)
    expected = 0.5 if builder is apps.omega_controlization else 1.0
    assert np.trace(om.op).real == pytest.approx(expected, abs=1e-12)


def test_inversion_symmetry(rng):
    om = apps.omega_inversion(2)
    for _ in range(10):
        a, b = apps.haar_sample(2, rng), apps.haar_sample(2, rng)
        x = local(om.layout, {"3": a, "1": a, "2": b, "0": b})
        assert commutator_norm(om.op, x) <= 1e-10


def test_conjugation_symmetry(rng):
    om = apps.omega_conjugation(2)
    for _ in range(10):
        a, b = apps.haar_sample(2, rng), apps.haar_sample(2, rng)
        x = local(om.layout, {"3": a, "2": a, "1": b, "0": b})
        assert commutator_norm(om.op, x) <= 1e-10


def test_controlization_symmetry(rng):
    om = apps.omega_controlization(2)
    for _ in range(10):
        v = apps.haar_sample(2, rng)
        phase = np.diag([1.0, np.exp(1j * rng.uniform(0, 2 * np.pi))])
        x = local(om.layout, {"3": v, "0": v.conj(), "2": v.conj(), "1": v, "Q'": phase})
        assert commutator_norm(om.op, x) <= 1e-10


@pytest.mark.parametrize("builder", ["inversion", "conjugation", "controlization"])
def test_twirl_matches_analytic_operator(builder):
    d = 2
    mc = apps.mc_twirl(builder, d, 4000, seed=7)
    exact = apps.get_app(builder).omega(d)
    # Monte-Carlo error ~ 1/sqrt(samples); the norm of the operators is ~ 0.1-0.5
    assert np.linalg.norm(mc.op - exact.op) <= 0.05


def test_twirl_convergence_inversion():
    mc = apps.mc_twirl("inversion", 2, 20_000, seed=3)
    assert np.linalg.norm(mc.op - apps.omega_inversion(2).op) <= 0.02


# gate tasks


def test_inversion_qubit_optimum():
    om = apps.omega_inversion(2)
    r = en.max_score_causal(om, om.layout)
    assert r.omega_max == pytest.approx(0.5, abs=1e-6)
    assert r.dual_lambda == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_conjugation_explicit_comb(d):
    om = apps.omega_conjugation(d)
    comb = apps.conjugation_comb(d)
    rep = nm.validate(comb, nm.comb_constraints(comb.layout))
    assert rep.ok and rep.max_equality_residual <= 1e-9
    assert np.real(np.vdot(om.op, comb.op)) == pytest.approx(2 / (d * (d - 1)), abs=1e-12)
    tr = apps.transpose_comb(d)
    assert nm.validate(tr, nm.comb_constraints(tr.layout)).ok
    tr_value = float(np.real(np.vdot(om.op, tr.op)))
    assert tr_value == pytest.approx(2 / (d * (d + 1)), abs=1e-12)
    assert tr_value < 2 / (d * (d - 1))


@pytest.mark.parametrize("name,d", [("inversion", 2), ("inversion", 3), ("conjugation", 2), ("conjugation", 3),
                                    ("controlization", 2)])
def test_analytic_certificates(name, d):
    om = apps.get_app(name).omega(d)
    cert = {"inversion": apps.inversion_certificate, "conjugation": apps.conjugation_certificate,
            "controlization": apps.controlization_certificate}[name](d)
    assert cert.lam == pytest.approx(apps.get_app(name).reference(d), abs=1e-12)
    assert nm.validate(cert.gamma, nm.dual_comb_constraints(om.layout), tol=1e-9).ok
    assert la.psd_margin(cert.lam * cert.gamma.op - om.op) >= -1e-10


def test_controlization_optimum():
    om = apps.omega_controlization(2)
    r = en.max_score_causal(om, om.layout)
    assert r.omega_max == pytest.approx(0.5, abs=1e-6)
    assert r.dual_lambda == pytest.approx(0.5, abs=1e-6)


def test_classical_control_fidelity(rng):
    comb = apps.classical_control_comb(2)
    assert nm.validate(comb, nm.comb_constraints(comb.layout)).ok
    om = apps.omega_controlization(2)
    assert np.real(np.vdot(om.op, comb.op)) == pytest.approx(0.5, abs=1e-12)
    for _ in range(10):
        assert apps.controlization_fidelity(comb, apps.haar_sample(2, rng)) == pytest.approx(0.5, abs=1e-9)


def test_controlled_unitary_fidelity_is_one_for_ideal_gate(rng):
    # the channel that applies controlled-U itself has fidelity 1 with controlled-U
    u = apps.haar_sample(2, rng)
    v = apps.controlled_unitary_ket(u)
    assert np.vdot(v, v).real == pytest.approx(4.0)


# causal-order game


def test_ocb_blocks_share_max_eigenvalue():
    blocks = apps.ocb_blocks()
    assert len(blocks) == 8
    for b in blocks.values():
        assert np.linalg.eigvalsh(b)[-1] == pytest.approx((1 + 1 / math.sqrt(2)) / 8, abs=1e-9)


def test_ocb_operator_is_block_diagonal():
    t = apps.omega_ocb().op.reshape([2] * 8)
    for idx in np.ndindex(*([2] * 8)):
        x, a, _, k, x2, a2, _, k2 = idx
        if (x, a, k) != (x2, a2, k2):
            assert t[idx] == 0


def test_ocb_values_and_born_rule():
    game = apps.ocb_game()
    om = apps.omega_ocb(game)
    r = en.max_score_noncausal(om, apps.ocb_parties())
    assert r.omega_max == pytest.approx(OCB_VALUE, abs=1e-6)
    w = r.optimal_network
    # the score is the average payoff computed outcome by outcome
    total = 0.0
    for (x, y, a, b, b2), s in game.score.items():
        total += s * apps.ocb_probability(w, game, x, y, a, b, b2) / 8
    assert total == pytest.approx(r.omega_max, abs=1e-8)
    for order in ("AB", "BA"):
        assert en.max_score_definite_order(om, apps.ocb_layout(order)).omega_max == pytest.approx(0.75, abs=1e-6)


def test_ocb_certificate():
    cert = apps.ocb_certificate()
    om = apps.omega_ocb()
    assert cert.lam == pytest.approx(OCB_VALUE)
    assert nm.nosig_constraints(apps.ocb_parties()).contains(cert.gamma.op)
    assert la.psd_margin(cert.lam * cert.gamma.op - om.op) >= -1e-8


# search tester


@pytest.mark.parametrize("k", [2, 3, 4])
def test_grover_scores_table(k):
    scores = apps.grover_scores(k)
    assert sorted(scores) == list(range(-(k - 1), k))
    for x, w in scores.items():
        assert w == pytest.approx(1 - abs(x) / k)


def comb_hierarchy_residual(comb):
    """Largest violation of the causal trace hierarchy, by direct tensor contraction.

    Dense constraint rows grow with the fourth power of the dimension, so large
    search combs are checked this way instead.
    """
    layout = comb.layout
    labels = list(layout.labels)
    dims = [s.dim for s in layout.systems]
    x = comb.op.reshape(dims + dims)
    worst = 0.0
    for step in sorted({s.step for s in layout.systems}, reverse=True):
        for role in ("out", "in"):
            idx = [i for i, lab in enumerate(labels) if layout.system(lab).role == role and layout.system(lab).step == step]
            for i in sorted(idx, reverse=True):
                n = len(labels)
                reduced = np.trace(x, axis1=i, axis2=i + n)
                if role == "in":
                    expect = np.multiply.outer(np.eye(dims[i]), reduced) / dims[i]
                    expect = np.moveaxis(expect, [0, 1], [i, i + n])
                    worst = max(worst, float(np.max(np.abs(x - expect))))
                    reduced = reduced / dims[i]
                x = reduced
                del labels[i], dims[i]
    worst = max(worst, abs(complex(x).real - 1))
    return worst


def test_hierarchy_oracle_agrees_with_constraint_rows(rng):
    layout = apps.grover_layout(2, 2)
    cs = nm.comb_constraints(layout)
    good = nm.random_comb(layout, rng)
    bad = LabeledOperator(layout, la.random_state(layout.dim, rng) * 4)
    assert comb_hierarchy_residual(good) <= 1e-12 and cs.residual(good.op) <= 1e-10
    assert comb_hierarchy_residual(bad) > 1e-3 and cs.residual(bad.op) > 1e-3


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2)])
def test_grover_tester_valid(k, n):
    tester, _ = apps.grover_tester(k, n)
    rep = nm.validate(tester, nm.tester_constraints(apps.grover_layout(k, n), len(tester)))
    assert rep.ok and rep.max_equality_residual <= 1e-10


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2)])
def test_grover_born_rule_matches_simulation(k, n):
    tester, _ = apps.grover_tester(k, n)
    comb = apps.grover_search_comb(k, n)
    assert comb_hierarchy_residual(comb) <= 1e-12
    sim = apps.simulate_grover(k, n)
    for t, x in zip(tester, apps.grover_deviations(k)):
        assert nm.born_probability(t, comb) == pytest.approx(sim[x], abs=1e-10)
        assert nm.link_product(t, comb).scalar == pytest.approx(sim[x], abs=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_grover_always_answer_zero(k):
    layout = apps.grover_layout(k, 1)
    e0 = np.zeros((k, k))
    e0[0, 0] = 1.0
    comb = LabeledOperator(layout, local(layout, {"q1": e0, "r1": np.eye(k), "ans": e0}))
    assert nm.validate(comb, nm.comb_constraints(layout)).ok
    tester, omega = apps.grover_tester(k, 1)
    # exhaustive: the answer is 0 for every hidden position i, so x = -i
    expected = sum((1 / k) * (1 - i / k) for i in range(k))
    score = sum(apps.grover_scores(k)[x] * nm.born_probability(t, comb)
                for t, x in zip(tester, apps.grover_deviations(k)))
    assert score == pytest.approx(expected, abs=1e-12)
    assert np.real(np.vdot(omega.op, comb.op.T)) == pytest.approx(expected, abs=1e-12)


def test_grover_optimum_four_items():
    tester, omega = apps.grover_tester(4, 1)
    r = en.max_score_causal(omega.transpose(), omega.layout)
    assert r.omega_max == pytest.approx(1.0, abs=1e-6)
    comb = apps.grover_search_comb(4, 1)
    assert sum(apps.grover_scores(4)[x] * nm.born_probability(t, comb)
               for t, x in zip(tester, apps.grover_deviations(4))) == pytest.approx(1.0, abs=1e-12)


def test_grover_two_items_cannot_be_exact():
    # the two oracles differ only by a global sign, so no strategy beats a guess
    assert np.allclose(apps.grover_oracle(0, 2), -apps.grover_oracle(1, 2))
    _, omega = apps.grover_tester(2, 1)
    r = en.max_score_causal(omega.transpose(), omega.layout)
    assert r.omega_max == pytest.approx(0.75, abs=1e-6)


def test_grover_limits():
    with pytest.raises(LayoutError):
        apps.grover_tester(5, 1)


# Haar sampling and baselines


def test_haar_sample_unitary_and_deterministic():
    for s in range(100):
        u = apps.haar_sample(3, s)
        assert np.max(np.abs(u.conj().T @ u - np.eye(3))) <= 1e-12
    assert np.array_equal(apps.haar_sample(3, 42), apps.haar_sample(3, 42))


def test_haar_first_moment_vanishes():
    d, n = 2, 10_000
    rng = np.random.default_rng(11)
    total = sum(apps.haar_sample(d, rng) for _ in range(n)) / n
    sigma = math.sqrt(1 / (2 * d * n))  # each real part has variance 1/(2d)
    assert np.max(np.abs(total.real)) <= 3 * sigma
    assert np.max(np.abs(total.imag)) <= 3 * sigma


def test_estimation_baseline():
    assert apps.estimation_baseline(2) == 0.5
    assert apps.estimation_baseline(3) == pytest.approx(2 / 9)
    for d in (2, 3):
        assert apps.estimation_baseline(d) == apps.get_app("inversion").reference(d)


def test_estimation_baseline_monte_carlo():
    mc = apps.estimation_baseline_mc(2, 100_000, seed=5)
    assert abs(mc - 0.5) / 0.5 <= 0.02


def test_registry():
    assert set(apps.REGISTRY) == {"inversion", "conjugation", "controlization", "ocb", "grover"}
    with pytest.raises(KeyError):
        apps.get_app("teleportation")
    primal, dual = apps.feasible_sets("ocb", 2)
    assert (primal.kind, dual.kind) == ("DualNoSig", "NoSig")
