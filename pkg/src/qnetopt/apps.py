"""Performance operators, analytic optima and Haar Monte-Carlo oracles.

Gate tasks use four ``d``-dimensional systems labelled ``"3", "2", "1", "0"``.
The network receives the unknown gate between ``"1"`` (gate input) and ``"2"``
(gate output), and acts from ``"0"`` (its input) to ``"3"`` (its output).
Controlization adds a control qubit ``"Q"`` (input, first step) and its
output ``"Q'"`` (second step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg as la
from . import netmodel as nm
from .errors import LayoutError
from .layout import System, SystemLayout
from .netmodel import ConstraintSet, Instrument, LabeledOperator


# ---------------------------------------------------------------------------
# Building blocks


@dataclass(frozen=True, eq=False)
class ProjectorPair:
    p_plus: np.ndarray
    p_minus: np.ndarray
    d_plus: int
    d_minus: int


def swap_operator(d: int) -> np.ndarray:
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1.0
    return s


def sym_antisym(d: int) -> ProjectorPair:
    """Projectors ``(I +- SWAP)/2`` onto the symmetric and antisymmetric subspaces of ``d (x) d``."""
    _check_d(d)
    s = swap_operator(d)
    ident = np.eye(d * d)
    return ProjectorPair((ident + s) / 2, (ident - s) / 2, d * (d + 1) // 2, d * (d - 1) // 2)


@dataclass(frozen=True, eq=False)
class EntangledResources:
    max_ent_vector: np.ndarray
    e_projector: np.ndarray
    e_perp: np.ndarray
    d_perp: int


def entangled_resources(d: int) -> EntangledResources:
    """``|I>>``, ``E = |I>><<I|/d``, its complement and the complement's rank."""
    _check_d(d)
    v = la.max_entangled(d)
    e = np.outer(v, v) / d
    return EntangledResources(v, e, np.eye(d * d) - e, d * d - 1)


def _check_d(d: int) -> None:
    if int(d) != d or d < 2:
        raise LayoutError(f"dimension must be an integer >= 2, got {d!r}")


def _place(op: np.ndarray, order: list[str], layout: SystemLayout) -> np.ndarray:
    """Reorder an operator given on ``order`` into ``layout``'s factor order."""
    return la.permute_systems(op, layout.sub(order), layout.labels)


def gate_layout(d: int) -> SystemLayout:
    """Two-step comb ``0 -> 1``, ``2 -> 3`` listed as ``3, 2, 1, 0``."""
    _check_d(d)
    return SystemLayout.of(("3", d, "out", 2), ("2", d, "in", 2), ("1", d, "out", 1), ("0", d, "in", 1))


def controlization_layout(d: int) -> SystemLayout:
    _check_d(d)
    return SystemLayout.of(
        ("3", d, "out", 2), ("2", d, "in", 2), ("1", d, "out", 1), ("0", d, "in", 1),
        ("Q'", 2, "out", 2), ("Q", 2, "in", 1),
    )


def _twirl_pair(d: int, first: list[str], second: list[str], layout: SystemLayout) -> np.ndarray:
    pp = sym_antisym(d)
    op = (la.kron(pp.p_plus, pp.p_plus) / pp.d_plus + la.kron(pp.p_minus, pp.p_minus) / pp.d_minus) / d**2
    return _place(op, first + second, layout)


# ---------------------------------------------------------------------------
# Gate tasks


def omega_inversion(d: int) -> LabeledOperator:
    """Average entanglement fidelity of the output channel with ``U^dagger``.

    ``(1/d^2) sum_{+-} P_{+-}(3,1) (x) P_{+-}(2,0) / d_{+-}``.
    """
    layout = gate_layout(d)
    return LabeledOperator(layout, _twirl_pair(d, ["3", "1"], ["2", "0"], layout))


def omega_conjugation(d: int) -> LabeledOperator:
    """Average entanglement fidelity with the complex conjugate gate.

    ``(1/d^2) sum_{+-} P_{+-}(3,2) (x) P_{+-}(1,0) / d_{+-}``.
    """
    layout = gate_layout(d)
    return LabeledOperator(layout, _twirl_pair(d, ["3", "2"], ["1", "0"], layout))


def conjugation_comb(d: int) -> LabeledOperator:
    """Optimal disconnected network ``(d P_- / d_-)(3,2) (x) (d P_- / d_-)(1,0)``."""
    layout = gate_layout(d)
    pp = sym_antisym(d)
    k = d * pp.p_minus / pp.d_minus
    return LabeledOperator(layout, _place(la.kron(k, k), ["3", "2", "1", "0"], layout))


def transpose_comb(d: int) -> LabeledOperator:
    """Disconnected network built from symmetric projectors (the transpose strategy)."""
    layout = gate_layout(d)
    pp = sym_antisym(d)
    k = d * pp.p_plus / pp.d_plus
    return LabeledOperator(layout, _place(la.kron(k, k), ["3", "2", "1", "0"], layout))


def omega_controlization(d: int) -> LabeledOperator:
    """Average fidelity with controlled-``U`` on target ``0 -> 3`` and control ``Q -> Q'``.

    ``Omega0 (x) |00><00| + Omega1 (x) |11><11|`` on ``(Q', Q)`` with
    ``Omega0 = E(3,0) (x) I(2,1) / 4d^2`` and
    ``Omega1 = (E(3,2) (x) E(1,0) + Eperp(3,2) (x) Eperp(1,0) / d_perp) / 4d^2``.
    """
    layout = controlization_layout(d)
    res = entangled_resources(d)
    w0 = la.kron(res.e_projector, np.eye(d * d)) / (4 * d * d)
    w1 = (la.kron(res.e_projector, res.e_projector)
          + la.kron(res.e_perp, res.e_perp) / res.d_perp) / (4 * d * d)
    k0 = np.diag([1.0, 0.0])
    k1 = np.diag([0.0, 1.0])
    op = (_place(la.kron_all(w0, k0, k0), ["3", "0", "2", "1", "Q'", "Q"], layout)
          + _place(la.kron_all(w1, k1, k1), ["3", "2", "1", "0", "Q'", "Q"], layout))
    return LabeledOperator(layout, op)


def classical_control_comb(d: int, rho: np.ndarray | None = None) -> LabeledOperator:
    """Measure the control; on 0 route ``0 -> 3`` directly, on 1 route through the gate."""
    layout = controlization_layout(d)
    rho = np.eye(d) / d if rho is None else np.asarray(rho)
    ii = np.outer(la.max_entangled(d), la.max_entangled(d))
    k0 = np.diag([1.0, 0.0])
    k1 = np.diag([0.0, 1.0])
    branch0 = _place(la.kron_all(k0, k0, ii, rho, np.eye(d)), ["Q", "Q'", "3", "0", "1", "2"], layout)
    branch1 = _place(la.kron_all(k1, k1, ii, ii), ["Q", "Q'", "1", "0", "3", "2"], layout)
    return LabeledOperator(layout, branch0 + branch1)


def controlled_unitary_ket(u: np.ndarray) -> np.ndarray:
    """``|ctrl-U>>`` on ``(3, Q', 0, Q)`` for the target ``0 -> 3`` and control ``Q -> Q'``."""
    d = u.shape[0]
    cu = np.zeros((2 * d, 2 * d), dtype=complex)
    cu[:d, :d] = np.eye(d)
    cu[d:, d:] = u
    # cu acts on (Q, target); reorder the doubled ket to (target, Q', target_in, Q)
    v = la.double_ket(cu).reshape(2, d, 2, d)  # (Q', 3, Q, 0)
    return v.transpose(1, 0, 3, 2).reshape(-1)


def controlization_fidelity(comb: LabeledOperator, u: np.ndarray) -> float:
    """Entanglement fidelity of ``comb * U`` with controlled-``U``."""
    d = u.shape[0]
    layout = controlization_layout(d)
    gate = nm.choi_unitary(u, "1", "2")
    out = nm.link_product(comb, gate)
    order = ["3", "Q'", "0", "Q"]
    v = controlled_unitary_ket(u)
    m = out.aligned(layout.sub(order))
    return float(np.real(v.conj() @ m @ v)) / (4 * d * d)


# ---------------------------------------------------------------------------
# Causal-order game


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Fixed local instruments and a score table.

    ``alice[a]`` is indexed by Alice's input bit, ``bob[(b, b2)]`` by Bob's
    input bits; element ``x`` (resp. ``y``) of each instrument is the outcome.
    ``score[(x, y, a, b, b2)]`` is the payoff.  Inputs are uniform.
    """

    alice: dict
    bob: dict
    score: dict
    layout: SystemLayout


def ocb_layout(order: str | None = None) -> SystemLayout:
    """Qubits ``A_in, A_out, B_in, B_out``; ``order`` is ``"AB"``, ``"BA"`` or ``None`` (one step)."""
    sa, sb = {"AB": (1, 2), "BA": (2, 1), None: (1, 1)}[order]
    return SystemLayout.of(("A_in", 2, "in", sa), ("A_out", 2, "out", sa),
                           ("B_in", 2, "in", sb), ("B_out", 2, "out", sb))


def _ket(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.outer(v, v)


def ocb_game() -> GameSpec:
    """Alice measures and re-encodes her bit; Bob either reads Alice's bit or sends his own."""
    basis = [_ket([1, 0]), _ket([0, 1])]
    pm = [_ket([1, 1]) / 2, _ket([1, -1]) / 2]
    la_a = SystemLayout.of(("A_in", 2, "in", 1), ("A_out", 2, "out", 1))
    la_b = SystemLayout.of(("B_in", 2, "in", 1), ("B_out", 2, "out", 1))
    alice = {a: Instrument(la_a, tuple(LabeledOperator(la_a, la.kron(basis[x], basis[a])) for x in range(2)))
             for a in range(2)}
    bob = {}
    for b in range(2):
        bob[(b, 1)] = Instrument(la_b, tuple(LabeledOperator(la_b, la.kron(basis[y], np.eye(2) / 2))
                                             for y in range(2)))
        bob[(b, 0)] = Instrument(la_b, tuple(LabeledOperator(la_b, la.kron(pm[y], basis[b ^ y]))
                                             for y in range(2)))
    score = {}
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    score[(x, y, a, b, 0)] = float(x == b)
                    score[(x, y, a, b, 1)] = float(y == a)
    return GameSpec(alice, bob, score, ocb_layout())


def omega_ocb(game: GameSpec | None = None) -> LabeledOperator:
    """``(1/8) sum omega(x,y|a,b,b') M_x^a (x) N_y^{b,b'}``."""
    game = ocb_game() if game is None else game
    n_inputs = len(game.alice) * len(game.bob)
    op = np.zeros((16, 16))
    for (x, y, a, b, b2), w in game.score.items():
        if w:
            op = op + w * la.kron(game.alice[a][x].op.real, game.bob[(b, b2)][y].op.real)
    return LabeledOperator(game.layout, op / n_inputs)


def ocb_blocks(omega: LabeledOperator | None = None) -> dict[tuple[int, int, int], np.ndarray]:
    """Blocks on ``B_in`` for fixed ``A_in = x``, ``A_out = a``, ``B_out = k``."""
    omega = omega_ocb() if omega is None else omega
    t = omega.op.reshape([2] * 8)
    return {(x, a, k): t[x, a, :, k, x, a, :, k] for x in range(2) for a in range(2) for k in range(2)}


def ocb_parties() -> list[nm.Party]:
    return [nm.Party("A_in", "A_out", 2, 2), nm.Party("B_in", "B_out", 2, 2)]


def ocb_probability(process: LabeledOperator, game: GameSpec, x: int, y: int, a: int, b: int, b2: int) -> float:
    """``p(x, y | a, b, b')`` for a process matrix via the generalized Born rule."""
    m = nm.LabeledOperator(game.layout, la.kron(game.alice[a][x].op, game.bob[(b, b2)][y].op))
    return nm.born_probability(m, process)


# ---------------------------------------------------------------------------
# Search tester


def grover_layout(k: int, n: int) -> SystemLayout:
    """Computer comb: ``q1``; ``r1 -> q2``; ...; ``rN -> ans``."""
    _check_grover(k, n)
    systems = [System("q1", k, "out", 1)]
    for j in range(1, n + 1):
        systems.append(System(f"r{j}", k, "in", j + 1))
        systems.append(System(f"q{j + 1}" if j < n else "ans", k, "out", j + 1))
    return SystemLayout(tuple(systems))


def _check_grover(k: int, n: int) -> None:
    if k not in (2, 3, 4) or n not in (1, 2):
        raise LayoutError(f"search tester supports K in {{2,3,4}} and N in {{1,2}}, got K={k}, N={n}")


def grover_deviations(k: int) -> list[int]:
    """Outcomes ``x = j - i`` (answer minus position) for positions ``0..K-1``."""
    return list(range(-(k - 1), k))


def grover_scores(k: int) -> dict[int, float]:
    return {x: 1.0 - abs(x) / k for x in grover_deviations(k)}


def grover_oracle(i: int, k: int) -> np.ndarray:
    u = -np.eye(k)
    u[i, i] = 1.0
    return u


def grover_tester(k: int, n: int) -> tuple[list[LabeledOperator], LabeledOperator]:
    """Tester elements ``rho * W * ... * W * P_x^T`` and the performance operator.

    ``rho = I/K`` on the position register, ``W = sum_i |i><i| (x) U_i`` with
    ``U_i = 2|i><i| - I``, and ``P_x = sum_i |i><i| (x) |i+x><i+x|``.
    """
    layout = grover_layout(k, n)
    regs = [f"R{j}" for j in range(n + 1)]
    w = np.zeros((k * k, k * k))
    for i in range(k):
        proj = np.zeros((k, k))
        proj[i, i] = 1.0
        w += la.kron(proj, grover_oracle(i, k))
    parts = [LabeledOperator(SystemLayout.of((regs[0], k, "out", 1)), np.eye(k) / k)]
    for j in range(1, n + 1):
        ins = SystemLayout.of((regs[j - 1], k, "in", 1), (f"q{j}", k, "in", 1))
        outs = SystemLayout.of((regs[j], k, "out", 1), (f"r{j}", k, "out", 1))
        parts.append(nm.choi_from_kraus([w], ins, outs))
    head = nm.link_all(*parts)
    tester = []
    meas = SystemLayout.of((regs[-1], k, "in", 1), ("ans", k, "in", 1))
    for x in grover_deviations(k):
        p = np.zeros((k * k, k * k))
        for i in range(k):
            j = i + x
            if 0 <= j < k:
                p[i * k + j, i * k + j] = 1.0
        t = nm.link_product(head, LabeledOperator(meas, p.T))
        tester.append(LabeledOperator(layout, t.aligned(layout)))
    scores = grover_scores(k)
    omega = sum((scores[x] * t for x, t in zip(grover_deviations(k), tester)), start=0 * tester[0])
    return tester, omega


def grover_search_comb(k: int, n: int) -> LabeledOperator:
    """Query the uniform superposition, then apply ``2|s><s| - I`` after every oracle call."""
    layout = grover_layout(k, n)
    s = np.ones(k) / np.sqrt(k)
    diffusion = 2 * np.outer(s, s) - np.eye(k)
    parts = [LabeledOperator(SystemLayout.of(("q1", k, "out", 1)), np.outer(s, s))]
    for j in range(1, n + 1):
        out = f"q{j + 1}" if j < n else "ans"
        parts.append(nm.choi_from_kraus([diffusion], SystemLayout.of((f"r{j}", k, "in", 1)),
                                        SystemLayout.of((out, k, "out", 1))))
    c = nm.link_all(*parts)
    return LabeledOperator(layout, c.aligned(layout))


def simulate_grover(k: int, n: int, answer_unitaries: list[np.ndarray] | None = None,
                    query: np.ndarray | None = None) -> dict[int, float]:
    """Deviation probabilities by direct state-vector simulation of the test."""
    s = np.ones(k) / np.sqrt(k) if query is None else np.asarray(query)
    diffusion = 2 * np.outer(s, s) - np.eye(k)
    steps = [diffusion] * n if answer_unitaries is None else answer_unitaries
    probs = {x: 0.0 for x in grover_deviations(k)}
    for i in range(k):
        psi = s.astype(complex)
        for j in range(n):
            psi = steps[j] @ (grover_oracle(i, k) @ psi)
        for a in range(k):
            probs[a - i] += abs(psi[a]) ** 2 / k
    return probs


# ---------------------------------------------------------------------------
# Haar sampling and Monte-Carlo oracles


def haar_sample(d: int, seed) -> np.ndarray:
    """Haar-random unitary, deterministic in ``seed``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return la.haar_unitary(d, rng)


def _integrand_inversion(u: np.ndarray, layout: SystemLayout) -> np.ndarray:
    d = u.shape[0]
    target = la.double_ket(u.conj().T)
    gate = la.double_ket(u).conj()
    op = np.outer(la.kron(target, gate), la.kron(target, gate).conj()) / d**2
    return _place(op, ["3", "0", "2", "1"], layout)


def _integrand_conjugation(u: np.ndarray, layout: SystemLayout) -> np.ndarray:
    d = u.shape[0]
    target = la.double_ket(u.conj())
    gate = la.double_ket(u).conj()
    op = np.outer(la.kron(target, gate), la.kron(target, gate).conj()) / d**2
    return _place(op, ["3", "0", "2", "1"], layout)


def _integrand_controlization(u: np.ndarray, layout: SystemLayout) -> np.ndarray:
    d = u.shape[0]
    target = controlled_unitary_ket(u)
    gate = la.double_ket(u).conj()
    op = np.outer(la.kron(target, gate), la.kron(target, gate).conj()) / (4 * d * d)
    return _place(op, ["3", "Q'", "0", "Q", "2", "1"], layout)


_INTEGRANDS: dict[str, tuple[Callable, Callable]] = {
    "inversion": (_integrand_inversion, gate_layout),
    "conjugation": (_integrand_conjugation, gate_layout),
    "controlization": (_integrand_controlization, controlization_layout),
}


def mc_twirl(builder_id: str, d: int, samples: int, seed: int = 0) -> LabeledOperator:
    """Haar average of the score integrand behind the named performance operator."""
    if builder_id not in _INTEGRANDS:
        raise KeyError(f"no Monte-Carlo integrand for {builder_id!r}; choose from {sorted(_INTEGRANDS)}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    fn, lay = _INTEGRANDS[builder_id]
    layout = lay(d)
    rng = np.random.default_rng(seed)
    acc = np.zeros((layout.dim, layout.dim), dtype=complex)
    for _ in range(samples):
        acc += fn(la.haar_unitary(d, rng), layout)
    return LabeledOperator(layout, acc / samples)


def estimation_baseline(d: int) -> float:
    """Best average fidelity of measure-and-prepare gate estimation from one use: ``2/d^2``."""
    _check_d(d)
    return 2.0 / d**2


def estimation_baseline_mc(d: int, samples: int, seed: int = 0) -> float:
    """Monte-Carlo value of ``E |Tr(U^dagger V)|^4 / d^2`` over independent Haar ``U, V``.

    The optimal estimate is drawn with density ``|Tr(U^dagger V)|^2`` relative
    to the Haar measure, which turns the average fidelity into this fourth moment.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(samples):
        u = la.haar_unitary(d, rng)
        v = la.haar_unitary(d, rng)
        total += abs(np.trace(u.conj().T @ v)) ** 4
    return total / samples / d**2


# ---------------------------------------------------------------------------
# Analytic dual certificates and registry


@dataclass(frozen=True, eq=False)
class Certificate:
    lam: float
    gamma: LabeledOperator


def inversion_certificate(d: int) -> Certificate:
    """``I(3,1) (x) (P_+/(2 d_+) + P_-/(2 d_-))(2,0)`` with ``lambda = 2/d^2``."""
    layout = gate_layout(d)
    pp = sym_antisym(d)
    sigma = pp.p_plus / (2 * pp.d_plus) + pp.p_minus / (2 * pp.d_minus)
    g = _place(la.kron(np.eye(d * d), sigma), ["3", "1", "2", "0"], layout)
    return Certificate(2.0 / d**2, LabeledOperator(layout, g))


def conjugation_certificate(d: int) -> Certificate:
    layout = gate_layout(d)
    pp = sym_antisym(d)
    return Certificate(1.0 / pp.d_minus, LabeledOperator(layout, np.eye(layout.dim) / d**2))


def controlization_certificate(d: int) -> Certificate:
    layout = controlization_layout(d)
    return Certificate(0.5, LabeledOperator(layout, np.eye(layout.dim) / (2 * d * d)))


def ocb_certificate() -> Certificate:
    return Certificate((1 + 1 / math.sqrt(2)) / 2, LabeledOperator(ocb_layout(), np.eye(16) / 4))


@dataclass(frozen=True)
class AppSpec:
    name: str
    default_d: int
    omega: Callable[[int], LabeledOperator]
    reference: Callable[[int], float | None]
    kind: str  # "causal" or "noncausal"


def _grover_omega(k: int) -> LabeledOperator:
    return grover_tester(k, 1)[1]


def _grover_reference(k: int) -> float | None:
    return {2: 0.75, 4: 1.0}.get(k)


REGISTRY: dict[str, AppSpec] = {
    "inversion": AppSpec("inversion", 2, omega_inversion, lambda d: 2.0 / d**2, "causal"),
    "conjugation": AppSpec("conjugation", 2, omega_conjugation, lambda d: 2.0 / (d * (d - 1)), "causal"),
    "controlization": AppSpec("controlization", 2, omega_controlization, lambda d: 0.5, "causal"),
    "ocb": AppSpec("ocb", 2, lambda d: omega_ocb(), lambda d: (1 + 1 / math.sqrt(2)) / 2, "noncausal"),
    "grover": AppSpec("grover", 4, _grover_omega, _grover_reference, "causal"),
}

OCB_CAUSAL_VALUE = 0.75


def get_app(name: str) -> AppSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown application {name!r}; choose from {sorted(REGISTRY)}") from None


def feasible_sets(name: str, d: int) -> tuple[ConstraintSet, ConstraintSet]:
    """``(primal set, certificate set)`` for an application."""
    spec = get_app(name)
    omega = spec.omega(d)
    if spec.kind == "noncausal":
        nosig = nm.nosig_constraints(ocb_parties(), omega.layout)
        return nm.dual_constraints(nosig, "DualNoSig"), nosig
    return nm.comb_constraints(omega.layout), nm.dual_comb_constraints(omega.layout)
