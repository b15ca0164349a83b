import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnetopt import linalg as la
from qnetopt.errors import LayoutError, NotHermitianError, NotPSDError
from qnetopt.layout import SystemLayout

from conftest import bell_state

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)

seeds = st.integers(0, 2**32 - 1)
small_dims = st.lists(st.integers(1, 3), min_size=1, max_size=3)


def index_sum_partial_trace(h, dims, traced):
    """Reference partial trace by explicit summation over multi-indices."""
    keep = [i for i in range(len(dims)) if i not in traced]
    kd = [dims[i] for i in keep]
    m = int(np.prod(kd)) if kd else 1
    out = np.zeros((m, m), dtype=complex)
    for r in np.ndindex(*dims):
        for c in np.ndindex(*dims):
            if any(r[t] != c[t] for t in traced):
                continue
            ri = np.ravel_multi_index([r[i] for i in keep], kd) if kd else 0
            ci = np.ravel_multi_index([c[i] for i in keep], kd) if kd else 0
            out[ri, ci] += h[np.ravel_multi_index(r, dims), np.ravel_multi_index(c, dims)]
    return out


# kron


def test_kron_identities():
    assert np.array_equal(la.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.array_equal(la.kron(SZ, SZ), np.diag([1, -1, -1, 1]))


def test_kron_index_formula(rng):
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    k = la.kron(a, b)
    for i, j, p, q in np.ndindex(2, 2, 2, 2):
        assert abs(k[2 * i + p, 2 * j + q] - a[i, j] * b[p, q]) <= 1e-15 * abs(a[i, j] * b[p, q]) + 1e-300


# hermitian construction


def test_as_hermitian_symmetrizes_small_drift():
    h = np.array([[1, 1e-14j], [0, 2]])
    out = la.as_hermitian(h)
    assert np.allclose(out, out.conj().T, atol=0)


def test_as_hermitian_rejects_large_asymmetry():
    with pytest.raises(NotHermitianError):
        la.as_hermitian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(NotHermitianError):
        la.as_hermitian(np.ones((2, 3)))


# partial trace


def test_partial_trace_bell_marginal():
    assert np.allclose(la.partial_trace(bell_state(), [2, 2], [1]), np.eye(2) / 2, atol=1e-15)


def test_partial_trace_product_factorization(rng):
    a = la.random_hermitian(3, rng)
    b = la.random_hermitian(2, rng)
    out = la.partial_trace(la.kron(a, b), [3, 2], [1])
    assert np.allclose(out, np.trace(b) * a, atol=1e-12)


def test_partial_trace_against_index_sum(rng):
    dims = [2, 3, 2]
    h = la.random_hermitian(12, rng)
    for traced in ([0], [1], [2], [0, 2], [1, 2], [0, 1, 2]):
        ref = index_sum_partial_trace(h, dims, traced)
        assert np.linalg.norm(la.partial_trace(h, dims, traced) - ref) <= 1e-12


def test_partial_trace_by_label():
    lay = SystemLayout.from_dims([2, 3], ["a", "b"])
    h = la.kron(np.diag([1.0, 2.0]), np.eye(3))
    assert np.allclose(la.partial_trace(h, lay, ["b"]), 3 * np.diag([1.0, 2.0]))
    with pytest.raises(LayoutError):
        la.partial_trace(h, lay, ["c"])


@settings(max_examples=40, deadline=None)
@given(seed=seeds, dims=small_dims)
def test_partial_trace_preserves_trace(seed, dims):
    rng = np.random.default_rng(seed)
    h = la.random_hermitian(int(np.prod(dims)), rng)
    traced = [i for i in range(len(dims)) if rng.random() < 0.5]
    out = la.partial_trace(h, dims, traced)
    assert abs(np.trace(out) - np.trace(h)) <= 1e-10 * max(1, np.abs(h).sum())


@settings(max_examples=40, deadline=None)
@given(seed=seeds, da=st.integers(1, 4), db=st.integers(1, 4))
def test_partial_trace_kron_property(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = la.random_hermitian(da, rng), la.random_hermitian(db, rng)
    assert np.allclose(la.partial_trace(la.kron(a, b), [da, db], [1]), np.trace(b) * a, atol=1e-12)


# partial transpose


def test_partial_transpose_bell_negative_eigenvalue():
    pt = la.partial_transpose(bell_state(), [2, 2], [1])
    assert abs(np.linalg.eigvalsh(pt)[0] + 0.5) <= 1e-12


def test_partial_transpose_full_is_transpose(rng):
    h = la.random_hermitian(6, rng)
    assert np.array_equal(la.partial_transpose(h, [2, 3], [0, 1]), h.T)


def test_partial_transpose_product_case(rng):
    a, b = la.random_hermitian(2, rng), la.random_hermitian(3, rng)
    assert np.allclose(la.partial_transpose(la.kron(a, b), [2, 3], [1]), la.kron(a, b.T), atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, dims=small_dims)
def test_partial_transpose_involution_and_trace(seed, dims):
    rng = np.random.default_rng(seed)
    h = la.random_hermitian(int(np.prod(dims)), rng)
    sel = [i for i in range(len(dims)) if rng.random() < 0.5]
    once = la.partial_transpose(h, dims, sel)
    assert np.array_equal(la.partial_transpose(once, dims, sel), h)
    assert abs(np.trace(once) - np.trace(h)) <= 1e-12 * max(1, np.abs(h).sum())


# permutations


def test_permute_identity_and_swap(rng):
    a, b = la.random_hermitian(2, rng), la.random_hermitian(3, rng)
    lay = SystemLayout.from_dims([2, 3], ["a", "b"])
    ab = la.kron(a, b)
    assert np.array_equal(la.permute_systems(ab, lay, ["a", "b"]), ab)
    assert np.allclose(la.permute_systems(ab, lay, ["b", "a"]), la.kron(b, a), atol=0)


def test_permute_transposition_twice(rng):
    lay = SystemLayout.from_dims([2, 3, 2], ["a", "b", "c"])
    h = la.random_hermitian(12, rng)
    once = la.permute_systems(h, lay, ["c", "b", "a"])
    back = la.permute_systems(once, SystemLayout.from_dims([2, 3, 2], ["c", "b", "a"]), ["a", "b", "c"])
    assert np.array_equal(back, h)


def test_permute_rejects_non_permutation(rng):
    lay = SystemLayout.from_dims([2, 2], ["a", "b"])
    with pytest.raises(LayoutError):
        la.permute_systems(np.eye(4), lay, ["a", "a"])
    with pytest.raises(LayoutError):
        la.permute_systems(np.eye(4), lay, ["a"])


@settings(max_examples=40, deadline=None)
@given(seed=seeds, dims=st.lists(st.integers(1, 3), min_size=2, max_size=4))
def test_permute_preserves_spectrum(seed, dims):
    rng = np.random.default_rng(seed)
    h = la.random_hermitian(int(np.prod(dims)), rng)
    order = list(rng.permutation(len(dims)))
    p = la.permute_systems(h, dims, order)
    assert np.allclose(np.linalg.eigvalsh(p), np.linalg.eigvalsh(h), atol=1e-10)


# spectra


def test_eigh_examples():
    assert np.allclose(la.eigh(np.eye(3)).eigenvalues, [1, 1, 1])
    assert np.allclose(la.eigh(SX).eigenvalues, [1, -1])


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 12))
def test_eigh_reconstruction(seed, n):
    h = la.random_hermitian(n, np.random.default_rng(seed))
    s = la.eigh(h)
    assert np.all(np.diff(s.eigenvalues) <= 0)
    assert np.linalg.norm(h - s.reconstruct()) <= 1e-10 * max(np.linalg.norm(h), 1e-300)
    v = s.eigenvectors
    assert np.max(np.abs(v.conj().T @ v - np.eye(n))) <= 1e-10


def test_psd_margin_examples():
    assert la.psd_margin(np.eye(3)) == pytest.approx(1.0)
    assert la.psd_margin(SZ) == pytest.approx(-1.0)
    assert abs(la.psd_margin(bell_state())) <= 1e-12
    assert la.is_psd(bell_state())
    assert not la.is_psd(SZ)


def test_support_pinv_sqrt_examples(rng):
    inv, proj = la.support_pinv_sqrt(np.eye(3))
    assert np.allclose(inv, np.eye(3)) and np.allclose(proj, np.eye(3))
    inv, proj = la.support_pinv_sqrt(np.diag([4.0, 0.0]))
    assert np.allclose(inv, np.diag([0.5, 0])) and np.allclose(proj, np.diag([1.0, 0]))
    rho = la.random_state(5, rng, rank=3)
    inv, proj = la.support_pinv_sqrt(rho)
    s = la.sqrt_psd(rho)
    assert np.max(np.abs(s @ inv @ inv @ s - proj)) <= 1e-9
    assert np.max(np.abs(s @ inv - proj)) <= 1e-9


def test_support_pinv_sqrt_rejects_negative():
    with pytest.raises(NotPSDError):
        la.support_pinv_sqrt(SZ)


# coordinates and embeddings


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 6))
def test_hvec_is_isometric(seed, n):
    rng = np.random.default_rng(seed)
    a, b = la.random_hermitian(n, rng), la.random_hermitian(n, rng)
    assert np.allclose(la.hmat(la.hvec(a), n), a, atol=1e-14)
    assert la.hvec(a) @ la.hvec(b) == pytest.approx(np.real(np.trace(a @ b)), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 6))
def test_real_embedding_doubles_spectrum(seed, n):
    h = la.random_hermitian(n, np.random.default_rng(seed))
    e = la.embed_real(h)
    assert np.allclose(e, e.T)
    w = np.sort(np.linalg.eigvalsh(h))
    assert np.allclose(np.sort(np.linalg.eigvalsh(e)), np.repeat(w, 2), atol=1e-10)
    assert np.allclose(la.unembed_real(e), h, atol=1e-15)


def test_linear_map_matrix_matches_map(rng):
    lay = [2, 3]
    m = la.linear_map_matrix(lambda x: la.partial_trace(x, lay, [1]), 6)
    h = la.random_hermitian(6, rng)
    assert np.allclose(la.hmat(m @ la.hvec(h), 2), la.partial_trace(h, lay, [1]), atol=1e-12)


def test_expand_places_identity(rng):
    lay = SystemLayout.from_dims([2, 3, 2], ["a", "b", "c"])
    op = la.random_hermitian(4, rng)
    big = la.expand(op, lay, ["c", "a"])
    ref = la.permute_systems(la.kron(op, np.eye(3)), SystemLayout.from_dims([2, 2, 3], ["c", "a", "b"]), ["a", "b", "c"])
    assert np.allclose(big, ref, atol=0)


def test_haar_unitarity(rng):
    for _ in range(100):
        u = la.haar_unitary(3, rng)
        assert np.max(np.abs(u.conj().T @ u - np.eye(3))) <= 1e-12


def test_random_state_is_state(rng):
    rho = la.random_state(4, rng, rank=2)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.matrix_rank(rho, tol=1e-10) == 2
    assert la.is_psd(rho)
