"""Self-check suites run by ``qnetopt verify``.

Each check returns ``(passed, detail)``; comparisons use the suite tolerance
so a tolerance of zero acts as a negative control.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import apps
from . import entropy as en
from . import linalg as la
from . import netmodel as nm
from .layout import SystemLayout
from .sdp import SdpProblem, solve_primal

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def _two_step_layout(d: int = 2) -> SystemLayout:
    return SystemLayout.of(("0", d, "in", 1), ("1", d, "out", 1), ("2", d, "in", 2), ("3", d, "out", 2))


def _random_labeled(rng, labels, dims) -> nm.LabeledOperator:
    layout = SystemLayout.from_dims(dims, labels)
    return nm.LabeledOperator(layout, la.random_hermitian(layout.dim, rng))


# core ----------------------------------------------------------------------


def check_link_associativity(rng, tol):
    worst = 0.0
    for _ in range(50):
        a = _random_labeled(rng, ["a", "x"], [2, 2])
        b = _random_labeled(rng, ["x", "b", "y"], [2, 3, 2])
        c = _random_labeled(rng, ["y", "c"], [2, 2])
        left = nm.link_product(nm.link_product(a, b), c)
        right = nm.link_product(a, nm.link_product(b, c))
        worst = max(worst, float(np.max(np.abs(left.op - right.aligned(left.layout)))))
    return worst <= min(tol, 1e-10), f"max deviation {worst:.2e}"


def check_link_commutativity(rng, tol):
    worst = 0.0
    for _ in range(50):
        a = _random_labeled(rng, ["a", "x"], [2, 3])
        b = _random_labeled(rng, ["x", "b"], [3, 2])
        ab = nm.link_product(a, b)
        ba = nm.link_product(b, a)
        worst = max(worst, float(np.max(np.abs(ab.op - ba.aligned(ab.layout)))))
    return worst <= min(tol, 1e-10), f"max deviation {worst:.2e}"


def check_choi_composition(rng, tol):
    worst = 0.0
    for _ in range(20):
        u = la.haar_unitary(2, rng)
        v = la.haar_unitary(2, rng)
        cu = nm.choi_unitary(u, "a", "b")
        cv = nm.choi_unitary(v, "b", "c")
        cvu = nm.choi_unitary(v @ u, "a", "c")
        worst = max(worst, float(np.max(np.abs(nm.link_product(cu, cv).aligned(cvu.layout) - cvu.op))))
    return worst <= min(tol, 1e-10), f"max deviation {worst:.2e}"


def check_comb_validation(rng, tol):
    layout = _two_step_layout()
    cs = nm.comb_constraints(layout)
    worst = max(nm.validate(nm.random_comb(layout, rng), cs).max_equality_residual for _ in range(10))
    return worst <= min(tol, 1e-10), f"max residual {worst:.2e}"


def check_dual_pairing(rng, tol):
    layout = _two_step_layout()
    worst = 0.0
    for _ in range(50):
        c = nm.random_comb(layout, rng)
        g = nm.random_dual_comb(layout, rng)
        worst = max(worst, abs(float(np.real(np.vdot(g.op, c.op))) - 1))
    return worst <= min(tol, 1e-9), f"max |<G,C> - 1| {worst:.2e}"


def check_tester_normalization(rng, tol):
    layout = _two_step_layout()
    worst = 0.0
    for _ in range(20):
        t = nm.random_tester(layout, 3, rng)
        c = nm.random_comb(layout, rng)
        worst = max(worst, abs(sum(nm.born_probability(x, c) for x in t) - 1))
    return worst <= min(tol, 1e-9), f"max |sum p - 1| {worst:.2e}"


def check_nosig_cross(rng, tol):
    parties = [("A_in", "A_out", 2, 2), ("B_in", "B_out", 2, 2)]
    a = nm.nosig_constraints(parties)
    b = nm.nosig_bipartite_constraints(parties)
    da, db = a.direction_basis(), b.direction_basis()
    same_dim = da.shape[1] == db.shape[1]
    cross = float(np.linalg.norm(da - db @ (db.T @ da)))
    ok = same_dim and cross <= min(tol, 1e-10) and a.residual(b.interior) <= 1e-10
    return ok, f"dims {da.shape[1]}/{db.shape[1]}, subspace mismatch {cross:.2e}"


def check_embedding(rng, tol):
    worst = 0.0
    for _ in range(10):
        h = la.random_hermitian(4, rng)
        w = np.sort(np.linalg.eigvalsh(h))
        e = np.sort(np.linalg.eigvalsh(la.embed_real(h)))
        worst = max(worst, float(np.max(np.abs(e - np.repeat(w, 2)))))
    return worst <= min(tol, 1e-10), f"max deviation {worst:.2e}"


# entropy -------------------------------------------------------------------


def _bell() -> np.ndarray:
    v = la.max_entangled(2) / math.sqrt(2)
    return np.outer(v, v)


def check_cond_min_entropy(rng, tol):
    layout = SystemLayout.from_dims([2, 2], ["A", "B"])
    h1 = en.cond_min_entropy_state(nm.LabeledOperator(layout, _bell()), "B").bits
    h2 = en.cond_min_entropy_state(nm.LabeledOperator(layout, np.eye(4) / 4), "B").bits
    ok = _close(h1, -1.0, tol) and _close(h2, 1.0, tol)
    return ok, f"Bell {h1:.9f}, mixed {h2:.9f}"


def check_recovery_route(rng, tol):
    layout = SystemLayout.from_dims([2, 2], ["A", "B"])
    rho = nm.LabeledOperator(layout, la.random_state(4, rng))
    h = en.cond_min_entropy_state(rho, "B")
    f = en.channel_recovery_fidelity(rho, "B").omega_max
    return _close(h.details["p_max"], f, tol), f"2^-H/d_A {h.details['p_max']:.9f}, recovery {f:.9f}"


def check_network_min_entropy(rng, tol):
    layout = SystemLayout.of(("0", 2, "in", 1), ("1", 2, "out", 1))
    ident = nm.choi_unitary(np.eye(2), "0", "1").with_layout(layout)
    dep = nm.LabeledOperator(layout, np.eye(4) / 2)
    a = en.network_min_entropy(ident, layout)
    b = en.network_min_entropy(dep, layout)
    ok = (_close(a.bits, -1, tol) and _close(a.details["f_max"], 1, tol)
          and _close(b.bits, 1, tol) and _close(b.details["f_max"], 0.25, tol))
    return ok, f"identity {a.bits:.9f}, depolarizing {b.bits:.9f}"


def check_test_min_entropy(rng, tol):
    layout = SystemLayout.of(("0", 2, "in", 1), ("1", 2, "out", 1))
    t = nm.LabeledOperator(layout, _bell() / 2)
    h = en.test_min_entropy(t, layout)
    return _close(h.bits, 0, tol) and _close(h.details["p_max"], 1, tol), f"bits {h.bits:.9f}"


def check_pinching(rng, tol):
    layout = SystemLayout.of(("0", 2, "in", 1), ("1", 2, "out", 1))
    cs = nm.comb_constraints(layout)
    worst_excess, worst_eq = -np.inf, 0.0
    for _ in range(20):
        # mixing in the maximally mixed comb keeps supports full
        c0 = nm.random_comb(layout, rng).op
        c1 = 0.7 * nm.random_comb(layout, rng).op + 0.3 * cs.interior
        base = en.d_max_pair(c0, c1).bits
        g = nm.random_dual_comb(layout, rng).op
        s = la.sqrt_psd(g)
        pinched = en.d_max_pair(s @ c0 @ s, s @ c1 @ s).bits
        worst_excess = max(worst_excess, pinched - base)
        val, e = en.network_dmax_witness(nm.LabeledOperator(layout, c0), nm.LabeledOperator(layout, c1), cs)
        worst_eq = max(worst_eq, abs(val.details["achieved_bits"] - base))
    ok = worst_excess <= 1e-8 and worst_eq <= max(min(tol, 1e-8), 0.0)
    return ok, f"max excess {worst_excess:.2e}, witness mismatch {worst_eq:.2e}"


def _slater_problem(rng, n: int = 4, m: int = 5) -> SdpProblem:
    rows = np.array([la.hvec(la.random_hermitian(n, rng)) for _ in range(m)] + [la.hvec(np.eye(n))])
    x0 = la.random_state(n, rng, rank=n)
    return SdpProblem.single(la.random_hermitian(n, rng), rows, rows @ la.hvec(x0))


def check_strong_duality(rng, tol):
    worst = 0.0
    statuses = set()
    for _ in range(20):
        s = solve_primal(_slater_problem(rng))
        statuses.add(s.status)
        worst = max(worst, s.gap)
    return statuses == {"optimal"} and worst <= min(tol, 1e-7), f"max gap {worst:.2e}, statuses {sorted(statuses)}"


def check_bridge(rng, tol):
    om = apps.omega_inversion(2)
    r = en.max_score_causal(om, om.layout)
    ent = en.d_max_to_set(om, nm.dual_comb_constraints(om.layout))
    return _close(2**ent.bits, r.omega_max, tol), f"2^Dmax {2**ent.bits:.9f}, score {r.omega_max:.9f}"


# apps ----------------------------------------------------------------------


def _causal(name: str, d: int, tol: float):
    spec = apps.get_app(name)
    om = spec.omega(d)
    r = en.max_score_causal(om, om.layout)
    ref = spec.reference(d)
    ok = _close(r.omega_max, ref, tol) and _close(r.dual_lambda, ref, tol)
    return ok, f"primal {r.omega_max:.9f}, dual {r.dual_lambda:.9f}, reference {ref:.9f}"


def check_inversion(rng, tol):
    res = [_causal("inversion", d, tol) for d in (2, 3)]
    return all(r[0] for r in res), "; ".join(r[1] for r in res)


def check_conjugation(rng, tol):
    res = [_causal("conjugation", d, tol) for d in (2, 3)]
    comb = apps.conjugation_comb(3)
    om = apps.omega_conjugation(3)
    val = float(np.real(np.vdot(om.op, comb.op)))
    valid = nm.validate(comb, nm.comb_constraints(comb.layout)).ok
    tr = float(np.real(np.vdot(om.op, apps.transpose_comb(3).op)))
    ok = all(r[0] for r in res) and valid and _close(val, 1 / 3, tol) and tr < val - 1e-3
    return ok, "; ".join(r[1] for r in res) + f"; explicit {val:.9f}, transpose {tr:.9f}"


def check_controlization(rng, tol):
    ok, detail = _causal("controlization", 2, tol)
    comb = apps.classical_control_comb(2)
    fids = [apps.controlization_fidelity(comb, la.haar_unitary(2, rng)) for _ in range(10)]
    worst = max(abs(f - 0.5) for f in fids)
    return ok and worst <= min(tol, 1e-9), detail + f"; classical control max deviation {worst:.2e}"


def check_ocb(rng, tol):
    om = apps.omega_ocb()
    target = (1 + 1 / math.sqrt(2)) / 2
    r = en.max_score_noncausal(om, apps.ocb_parties())
    cert = apps.ocb_certificate()
    margin = la.psd_margin(cert.lam * cert.gamma.op - om.op)
    blocks = [np.linalg.eigvalsh(b)[-1] for b in apps.ocb_blocks(om).values()]
    block_dev = max(abs(b - (1 + 1 / math.sqrt(2)) / 8) for b in blocks)
    causal = [en.max_score_definite_order(om, apps.ocb_layout(o)).omega_max for o in ("AB", "BA")]
    ok = (_close(r.omega_max, target, tol) and _close(r.dual_lambda, target, tol) and margin >= -1e-8
          and block_dev <= min(tol, 1e-9) and all(_close(c, 0.75, tol) for c in causal))
    return ok, f"noncausal {r.omega_max:.9f}, causal {causal[0]:.9f}/{causal[1]:.9f}, block dev {block_dev:.1e}"


def check_grover(rng, tol):
    tester, om = apps.grover_tester(2, 1)
    rep = nm.validate(tester, nm.tester_constraints(om.layout, len(tester)))
    comb = apps.grover_search_comb(2, 1)
    sim = apps.simulate_grover(2, 1)
    dev = max(abs(nm.link_product(t, comb).scalar - sim[x]) for t, x in zip(tester, apps.grover_deviations(2)))
    ok = rep.max_equality_residual <= min(tol, 1e-10) and dev <= min(tol, 1e-10)
    return ok, f"tester residual {rep.max_equality_residual:.1e}, Born deviation {dev:.1e}"


def check_estimation(rng, tol):
    exact = all(apps.estimation_baseline(d) == apps.get_app("inversion").reference(d) for d in (2, 3))
    mc = apps.estimation_baseline_mc(2, 100_000, seed=int(rng.integers(2**31)))
    rel = abs(mc - 0.5) / 0.5
    return exact and rel <= 0.02 and tol > 0, f"Monte-Carlo {mc:.5f} (relative error {rel:.3%})"


def check_mc_twirl(rng, tol):
    mc = apps.mc_twirl("inversion", 2, 20_000, seed=int(rng.integers(2**31)))
    dev = float(np.linalg.norm(mc.op - apps.omega_inversion(2).op))
    return dev <= 0.02 and tol > 0, f"Frobenius deviation {dev:.4f}"


SUITES: dict[str, list[tuple[str, Callable]]] = {
    "core": [
        ("link_associativity", check_link_associativity),
        ("link_commutativity", check_link_commutativity),
        ("choi_composition", check_choi_composition),
        ("comb_validation", check_comb_validation),
        ("dual_comb_pairing", check_dual_pairing),
        ("tester_normalization", check_tester_normalization),
        ("nosig_cross_check", check_nosig_cross),
        ("real_embedding", check_embedding),
    ],
    "entropy": [
        ("cond_min_entropy_reference", check_cond_min_entropy),
        ("recovery_fidelity_route", check_recovery_route),
        ("network_min_entropy", check_network_min_entropy),
        ("test_min_entropy", check_test_min_entropy),
        ("pinching", check_pinching),
        ("strong_duality", check_strong_duality),
        ("entropy_bridge", check_bridge),
    ],
    "apps": [
        ("inversion", check_inversion),
        ("conjugation", check_conjugation),
        ("controlization", check_controlization),
        ("ocb", check_ocb),
        ("grover", check_grover),
        ("estimation_baseline", check_estimation),
        ("mc_twirl", check_mc_twirl),
    ],
}


def run_suite(name: str, seed: int = 0, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    names = list(SUITES) if name == "all" else [name]
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {n!r}; choose from {sorted(SUITES) + ['all']}")
    out = []
    for suite in names:
        for i, (check_name, fn) in enumerate(SUITES[suite]):
            rng = np.random.default_rng([seed, list(SUITES).index(suite), i])
            t0 = time.perf_counter()
            try:
                ok, detail = fn(rng, tol)
            except Exception as exc:  # a crashing check is a failed check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            out.append(CheckResult(suite, check_name, bool(ok), detail, time.perf_counter() - t0))
    return out
