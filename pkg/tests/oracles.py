"""Independent reference solvers built on cvxpy (test-only dependency)."""

import numpy as np
import pytest

cp = pytest.importorskip("cvxpy")


def _solve(prob):
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == cp.OPTIMAL, prob.status
    return prob.value


def cond_min_entropy_lambda(rho: np.ndarray, d_a: int, d_b: int) -> float:
    """min Tr(sigma) s.t. I_A (x) sigma >= rho on A (x) B."""
    sigma = cp.Variable((d_b, d_b), hermitian=True)
    cons = [cp.kron(np.eye(d_a), sigma) >> rho, sigma >> 0]
    return _solve(cp.Problem(cp.Minimize(cp.real(cp.trace(sigma))), cons))


def network_min_entropy_lambda(d: np.ndarray, dims=(2, 2, 2, 2)) -> float:
    """min lambda s.t. G (x) I_{in2 out2} >= D, Tr_out1 G = lambda I_in1 (layout in1, out1, in2, out2)."""
    d0, d1, d2, d3 = dims
    g = cp.Variable((d0 * d1, d0 * d1), hermitian=True)
    lam = cp.Variable()
    cons = [cp.kron(g, np.eye(d2 * d3)) >> d, g >> 0,
            cp.partial_trace(g, [d0, d1], axis=1) == lam * np.eye(d0)]
    return _solve(cp.Problem(cp.Minimize(lam), cons))
