"""Dense complex matrix kernel.

Every function accepts operators with optional leading batch axes, i.e. arrays
of shape ``(..., n, n)``.  Subsystems are addressed either by label (when a
:class:`~qnetopt.layout.SystemLayout` is given) or by position.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LayoutError, NotHermitianError, NotPSDError
from .layout import SystemLayout, as_dims

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-9


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(*ops: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def as_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity and return the symmetrized complex matrix.

    The asymmetry is measured relative to ``max(1, max|m|)``.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise NotHermitianError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotHermitianError("matrix has non-finite entries")
    mh = np.conj(np.swapaxes(m, -1, -2))
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = float(np.max(np.abs(m - mh))) if m.size else 0.0
    if asym > tol * scale:
        raise NotHermitianError(f"asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    return 0.5 * (m + mh)


def _positions(layout, which: Iterable) -> tuple[list[int], tuple[int, ...]]:
    dims, labels = as_dims(layout)
    pos = []
    for w in which:
        if isinstance(w, (int, np.integer)) and not isinstance(layout, SystemLayout):
            if not 0 <= int(w) < len(dims):
                raise LayoutError(f"subsystem index {w} out of range for {len(dims)} systems")
            pos.append(int(w))
        else:
            if w not in labels:
                raise LayoutError(f"unknown label {w!r}; layout has {list(labels)}")
            pos.append(labels.index(w))
    if len(set(pos)) != len(pos):
        raise LayoutError(f"repeated subsystems in {list(which)}")
    return pos, dims


def _as_tensor(h: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    n = prod(dims)
    if h.shape[-1] != n or h.shape[-2] != n:
        raise LayoutError(f"operator shape {h.shape[-2:]} does not match layout dimension {n}")
    return h.reshape(h.shape[:-2] + tuple(dims) + tuple(dims))


def partial_trace(h: np.ndarray, layout, traced: Iterable) -> np.ndarray:
    """Trace out the listed subsystems; the result keeps the remaining order."""
    h = np.asarray(h)
    pos, dims = _positions(layout, traced)
    k = len(dims)
    t = _as_tensor(h, dims)
    rows = list(range(k))
    cols = [k + i for i in range(k)]
    for p in pos:
        cols[p] = rows[p]
    keep = [i for i in range(k) if i not in pos]
    out_sub = [rows[i] for i in keep] + [cols[i] for i in keep]
    r = np.einsum(t, [Ellipsis] + rows + cols, [Ellipsis] + out_sub)
    m = prod(dims[i] for i in keep)
    return r.reshape(h.shape[:-2] + (m, m))


def partial_transpose(h: np.ndarray, layout, transposed: Iterable) -> np.ndarray:
    h = np.asarray(h)
    pos, dims = _positions(layout, transposed)
    k = len(dims)
    t = _as_tensor(h, dims)
    nb = h.ndim - 2
    perm = list(range(nb + 2 * k))
    for p in pos:
        perm[nb + p], perm[nb + k + p] = perm[nb + k + p], perm[nb + p]
    return np.transpose(t, perm).reshape(h.shape)


def permute_systems(h: np.ndarray, layout, new_order: Sequence) -> np.ndarray:
    """Reorder tensor factors so that ``new_order`` becomes the factor order."""
    h = np.asarray(h)
    pos, dims = _positions(layout, new_order)
    k = len(dims)
    if sorted(pos) != list(range(k)):
        raise LayoutError(f"{list(new_order)} is not a permutation of the layout")
    t = _as_tensor(h, dims)
    nb = h.ndim - 2
    perm = list(range(nb)) + [nb + p for p in pos] + [nb + k + p for p in pos]
    return np.transpose(t, perm).reshape(h.shape)


def expand(op: np.ndarray, layout: SystemLayout, labels: Sequence[str]) -> np.ndarray:
    """Embed ``op`` (acting on ``labels`` in that order) into ``layout``.

    The result is ``op`` tensored with the identity on every other system,
    with factors arranged in layout order.
    """
    op = np.asarray(op)
    labels = layout.check_labels(labels)
    rest = [lab for lab in layout.labels if lab not in labels]
    d_rest = layout.dim_of(rest)
    if op.shape[-1] != layout.dim_of(labels):
        raise LayoutError(f"operator dimension {op.shape[-1]} does not match systems {list(labels)}")
    ident = np.eye(d_rest)
    big = np.einsum("...ij,kl->...ikjl", op, ident)
    n = op.shape[-1] * d_rest
    big = big.reshape(op.shape[:-2] + (n, n))
    order_layout = layout.sub(list(labels) + rest)
    return permute_systems(big, order_layout, layout.labels)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def eigh(h: np.ndarray) -> Spectrum:
    """Eigendecomposition with eigenvalues in descending order."""
    h = as_hermitian(h)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigendecomposition failed: {exc}") from exc
    return Spectrum(w[::-1].copy(), v[:, ::-1].copy())


def psd_margin(h: np.ndarray) -> float:
    """Smallest eigenvalue."""
    return float(np.linalg.eigvalsh(as_hermitian(h))[0])


def is_psd(h: np.ndarray, tol: float = PSD_TOL) -> bool:
    w = np.linalg.eigvalsh(as_hermitian(h))
    return bool(w[0] >= -tol * max(1.0, float(w[-1])))


def sqrt_psd(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(as_hermitian(h))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def support_pinv_sqrt(h: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Inverse square root on the support, and the support projector.

    Eigenvalues at or below ``tol * lambda_max`` count as zero.  A negative
    eigenvalue below ``-PSD_TOL * max(1, lambda_max)`` is rejected.
    """
    w, v = np.linalg.eigh(as_hermitian(h))
    top = float(w[-1]) if w.size else 0.0
    if w.size and w[0] < -PSD_TOL * max(1.0, top):
        raise NotPSDError(f"negative eigenvalue {w[0]:.3e}")
    keep = w > tol * max(top, 0.0) if top > 0 else np.zeros_like(w, dtype=bool)
    vs = v[:, keep]
    inv = (vs / np.sqrt(w[keep])) @ vs.conj().T
    proj = vs @ vs.conj().T
    return inv, proj


# Orthonormal real coordinates on Herm(n) w.r.t. <A, B> = Tr(AB).

def _triu(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def hvec(h: np.ndarray) -> np.ndarray:
    """Coordinates of Hermitian ``h`` in an orthonormal basis of Herm(n)."""
    h = np.asarray(h)
    n = h.shape[-1]
    iu, ju = _triu(n)
    diag = np.real(np.diagonal(h, axis1=-2, axis2=-1))
    off = h[..., iu, ju]
    s = np.sqrt(2.0)
    return np.concatenate([diag, s * off.real, s * off.imag], axis=-1)


def hmat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`hvec`."""
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round(np.sqrt(v.shape[-1])))
    if n * n != v.shape[-1]:
        raise ValueError(f"vector length {v.shape[-1]} is not a square")
    iu, ju = _triu(n)
    p = len(iu)
    out = np.zeros(v.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    out[..., idx, idx] = v[..., :n]
    off = (v[..., n:n + p] + 1j * v[..., n + p:]) / np.sqrt(2.0)
    out[..., iu, ju] = off
    out[..., ju, iu] = np.conj(off)
    return out


def linear_map_matrix(fn: Callable[[np.ndarray], np.ndarray], n_in: int, chunk: int = 256) -> np.ndarray:
    """Matrix of a Hermiticity-preserving linear map in :func:`hvec` coordinates.

    ``fn`` must accept a batch of shape ``(b, n_in, n_in)``.  Returns an array
    of shape ``(n_out**2, n_in**2)``.
    """
    total = n_in * n_in
    cols = []
    for start in range(0, total, chunk):
        stop = min(total, start + chunk)
        e = np.zeros((stop - start, total))
        e[np.arange(stop - start), np.arange(start, stop)] = 1.0
        cols.append(hvec(fn(hmat(e, n_in))))
    return np.concatenate(cols, axis=0).T


def embed_real(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re, -Im], [Im, Re]]``."""
    h = np.asarray(h)
    re, im = h.real, h.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def unembed_real(z: np.ndarray) -> np.ndarray:
    """Hermitian matrix represented by a real symmetric ``2n x 2n`` matrix.

    Averages the two copies, which is exact for embedded matrices and
    projects arbitrary real symmetric input onto the embedded subspace.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1] // 2
    a, b = z[..., :n, :n], z[..., :n, n:]
    c, d = z[..., n:, :n], z[..., n:, n:]
    return 0.5 * (a + d) + 0.5j * (c - b)


def double_ket(k: np.ndarray) -> np.ndarray:
    """``|K>> = (K (x) I)|I>>`` with the output factor first."""
    return np.asarray(k, dtype=complex).reshape(-1)


def max_entangled(d: int) -> np.ndarray:
    """Unnormalized ``|I>> = sum_i |i>|i>``."""
    return np.eye(d, dtype=complex).reshape(-1)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR factorization of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed isometry ``C^d_in -> C^d_out`` (requires d_out >= d_in)."""
    if d_out < d_in:
        raise ValueError("an isometry needs d_out >= d_in")
    return haar_unitary(d_out, rng)[:, :d_in]


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)


def random_state(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
