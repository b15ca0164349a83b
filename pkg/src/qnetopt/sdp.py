"""Standard-form semidefinite programs over Hermitian variables.

Primal:  maximize  sum_b <A_b, X_b>  s.t.  sum_b <F_ib, X_b> = B_i,  X_b >= 0
Dual:    minimize  B . y             s.t.  sum_i y_i F_ib - A_b >= 0

Free scalar blocks replace ``X_b >= 0`` by ``X_b`` real and the dual
inequality by an equality.  The solver is a primal-dual path-following
interior-point method (HKM direction, Mehrotra predictor-corrector) acting
on the real symmetric embedding of each complex block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import linalg as la
from .errors import LayoutError

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
GAP_TOL = 1e-7
RANK_TOL = 1e-10


@dataclass(frozen=True)
class Block:
    dim: int
    kind: str = "psd"

    def __post_init__(self) -> None:
        if self.kind not in ("psd", "free"):
            raise LayoutError(f"block kind must be 'psd' or 'free', got {self.kind!r}")
        if self.kind == "free" and self.dim != 1:
            raise LayoutError("free blocks are scalars (dim 1)")

    @property
    def size(self) -> int:
        """Number of real coordinates."""
        return self.dim * self.dim


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """Constraint rows are stored per block in :func:`linalg.hvec` coordinates."""

    blocks: tuple[Block, ...]
    objective: tuple[np.ndarray, ...]
    rows: tuple[np.ndarray, ...]
    rhs: np.ndarray

    def __post_init__(self) -> None:
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in self.blocks)
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        m = rhs.shape[0]
        if not (len(blocks) == len(self.objective) == len(self.rows)):
            raise LayoutError("blocks, objective and rows differ in length")
        objective, rows = [], []
        for b, a, r in zip(blocks, self.objective, self.rows):
            a = la.as_hermitian(np.asarray(a, dtype=complex).reshape(b.dim, b.dim))
            r = np.asarray(r, dtype=float).reshape(m, b.size)
            if b.kind == "free":
                a = a.real.astype(complex)
            objective.append(a)
            rows.append(r)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "objective", tuple(objective))
        object.__setattr__(self, "rows", tuple(rows))
        object.__setattr__(self, "rhs", rhs)

    @classmethod
    def single(cls, objective: np.ndarray, rows: np.ndarray, rhs: np.ndarray) -> "SdpProblem":
        n = np.asarray(objective).shape[0]
        return cls((Block(n),), (objective,), (np.atleast_2d(rows),), rhs)

    @classmethod
    def from_operators(
        cls,
        blocks: Sequence[Block | tuple],
        objective: Sequence[np.ndarray],
        constraints: Sequence[tuple[Sequence[np.ndarray | float | None], float]],
    ) -> "SdpProblem":
        """Build from coefficient operators: ``constraints[i] = ([F_i1, F_i2, ...], B_i)``.

        ``None`` entries stand for a zero coefficient on that block.
        """
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in blocks)
        m = len(constraints)
        rows = [np.zeros((m, b.size)) for b in blocks]
        rhs = np.zeros(m)
        for i, (coeffs, value) in enumerate(constraints):
            rhs[i] = value
            for k, (b, f) in enumerate(zip(blocks, coeffs)):
                if f is None:
                    continue
                f = np.asarray(f, dtype=complex).reshape(b.dim, b.dim)
                rows[k][i] = la.hvec(la.as_hermitian(f))
        return cls(blocks, tuple(objective), tuple(rows), rhs)

    @property
    def num_constraints(self) -> int:
        return self.rhs.shape[0]

    def apply(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """The constraint map ``phi``."""
        out = np.zeros(self.num_constraints)
        for b, r, x in zip(self.blocks, self.rows, xs):
            out += r @ la.hvec(np.asarray(x).reshape(b.dim, b.dim))
        return out

    def adjoint(self, y: np.ndarray) -> tuple[np.ndarray, ...]:
        """The adjoint map ``phi^dagger``."""
        y = np.asarray(y, dtype=float)
        return tuple(la.hmat(r.T @ y, b.dim) for b, r in zip(self.blocks, self.rows))

    def objective_value(self, xs: Sequence[np.ndarray]) -> float:
        return float(sum(np.real(np.vdot(a, x)) for a, x in zip(self.objective, xs)))


@dataclass(frozen=True, eq=False)
class SdpSolution:
    status: str
    primal_value: float
    dual_value: float
    primal_point: tuple[np.ndarray, ...]
    dual_point: np.ndarray
    residual_primal: float
    residual_dual: float
    gap: float
    iterations: int = 0
    message: str = ""
    adjoint_error: float | None = field(default=None)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class CertificateReport:
    primal_value: float
    dual_value: float
    residual_primal: float
    residual_dual: float
    gap: float
    ok: bool


def verify_certificates(p: SdpProblem, s: SdpSolution) -> CertificateReport:
    """Recompute residuals and the duality gap from the returned points."""
    xs = [la.as_hermitian(np.asarray(x).reshape(b.dim, b.dim)) for b, x in zip(p.blocks, s.primal_point)]
    y = np.asarray(s.dual_point, dtype=float)
    pv = p.objective_value(xs)
    dv = float(p.rhs @ y)
    res_eq = float(np.linalg.norm(p.apply(xs) - p.rhs)) / (1.0 + float(np.linalg.norm(p.rhs)))
    res_p = res_eq
    res_d = 0.0
    slack = p.adjoint(y)
    for b, x, a, g in zip(p.blocks, xs, p.objective, slack):
        scale = 1.0 + float(np.linalg.norm(a))
        if b.kind == "psd":
            res_p = max(res_p, max(0.0, -float(np.linalg.eigvalsh(x)[0])))
            res_d = max(res_d, max(0.0, -float(np.linalg.eigvalsh(la.as_hermitian(g - a))[0])) / scale)
        else:
            res_d = max(res_d, abs(float(np.real(g - a)[0, 0])) / scale)
    gap = abs(dv - pv)
    ok = res_p <= FEAS_TOL and res_d <= FEAS_TOL and gap <= GAP_TOL * (1.0 + abs(pv))
    return CertificateReport(pv, dv, res_p, res_d, gap, ok)


# ---------------------------------------------------------------------------
# Real symmetric kernel


@dataclass
class _Kernel:
    """min <C, Z> s.t. <A_i, Z> = b_i, Z >= 0 over real symmetric blocks."""

    dims: list[int]
    c: list[np.ndarray]
    a: list[np.ndarray]  # per block (m, n, n)
    b: np.ndarray


def _embed_rows(rows: np.ndarray, n: int) -> np.ndarray:
    mats = la.hmat(rows, n)
    return np.stack([la.embed_real(f) / 2.0 for f in mats]) if len(mats) else np.zeros((0, 2 * n, 2 * n))


def _build_kernel(p: SdpProblem, rows: list[np.ndarray], b: np.ndarray) -> _Kernel:
    dims, cs, as_ = [], [], []
    for blk, a, r in zip(p.blocks, p.objective, rows):
        if blk.kind == "psd":
            dims.append(2 * blk.dim)
            cs.append(-la.embed_real(a) / 2.0)
            as_.append(_embed_rows(r, blk.dim))
        else:
            av = float(a[0, 0].real)
            for sign in (1.0, -1.0):
                dims.append(1)
                cs.append(np.array([[-sign * av]]))
                as_.append((sign * r).reshape(-1, 1, 1))
    return _Kernel(dims, cs, as_, b)


def _apply(k: _Kernel, zs: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(k.b.shape[0])
    for a, z in zip(k.a, zs):
        out += a.reshape(a.shape[0], -1) @ z.reshape(-1)
    return out


def _adjoint(k: _Kernel, y: np.ndarray) -> list[np.ndarray]:
    return [np.tensordot(y, a, axes=1) for a in k.a]


def _inner(xs, ys) -> float:
    return float(sum(np.vdot(x, y).real for x, y in zip(xs, ys)))


def _sym(x: np.ndarray) -> np.ndarray:
    return (x + x.T) / 2.0


def _max_step(l_chol: np.ndarray, dz: np.ndarray) -> float:
    """Largest alpha with L L^T + alpha dz >= 0."""
    w = sla.solve_triangular(l_chol, dz, lower=True)
    w = sla.solve_triangular(l_chol, w.T, lower=True)
    ev = np.linalg.eigvalsh(_sym(w))[0]
    return np.inf if ev >= 0 else -1.0 / ev


def _chol(x: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(x)


def _max_step_all(ls, ds) -> float:
    return min(_max_step(l, d) for l, d in zip(ls, ds))


def _initial_point(k: _Kernel):
    m = k.b.shape[0]
    zs, ss = [], []
    for n, c, a in zip(k.dims, k.c, k.a):
        anorms = np.linalg.norm(a.reshape(m, -1), axis=1) if m else np.zeros(1)
        xi = max(10.0, np.sqrt(n), float(n * np.max((1 + np.abs(k.b)) / (1 + anorms[: max(m, 1)]))) if m else 10.0)
        eta = max(10.0, np.sqrt(n), float(np.linalg.norm(c)), float(anorms.max()))
        zs.append(xi * np.eye(n))
        ss.append(eta * np.eye(n))
    return zs, ss, np.zeros(m)


def _solve_kernel(k: _Kernel, max_iter: int, tol: float):
    """Infeasible-start HKM predictor-corrector; returns (status, Z, y, iterations)."""
    m = k.b.shape[0]
    ntot = sum(k.dims)
    bnorm = float(np.linalg.norm(k.b))
    cnorm = float(np.sqrt(sum(np.sum(c * c) for c in k.c)))
    zs, ss, y = _initial_point(k)
    status = "inaccurate"
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        az = _apply(k, zs)
        rp = k.b - az
        rd = [c - g - s for c, g, s in zip(k.c, _adjoint(k, y), ss)]
        pobj = _inner(k.c, zs)
        dobj = float(k.b @ y)
        mu = _inner(zs, ss) / ntot
        pinf = float(np.linalg.norm(rp)) / (1 + bnorm)
        dinf = float(np.sqrt(sum(np.sum(r * r) for r in rd))) / (1 + cnorm)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        log.debug("it %d pobj %.10g dobj %.10g pinf %.2e dinf %.2e gap %.2e", it, pobj, dobj, pinf, dinf, relgap)
        score = max(pinf, dinf, relgap)
        if best is None or score < best[0]:
            best = (score, [z.copy() for z in zs], y.copy())
        if pinf < tol and dinf < tol and relgap < tol:
            status = "optimal"
            break
        if not (np.isfinite(pobj) and np.isfinite(dobj)):
            break
        # divergence: a Farkas-type ray dominates the iterate
        zmax = max(float(np.max(np.abs(z))) for z in zs)
        ymax = float(np.max(np.abs(y))) if m else 0.0
        if zmax > 1e8 * (1 + bnorm) and pinf < 1e-6 and -pobj / zmax > 1e-8:
            status = "unbounded"
            break
        if ymax > 1e10 * (1 + bnorm) and pinf > 1e-6 and dobj / ymax > 1e-8:
            status = "infeasible"
            break
        try:
            lz = [np.linalg.cholesky(z) for z in zs]
            ls = [np.linalg.cholesky(s) for s in ss]
        except np.linalg.LinAlgError:
            break
        lsi = [sla.solve_triangular(l, np.eye(l.shape[0]), lower=True).T for l in ls]
        sinv = [u @ u.T for u in lsi]
        mm = np.zeros((m, m))
        for a, l, u in zip(k.a, lz, lsi):
            bb = (l.T @ a @ u).reshape(m, -1)
            mm += bb @ bb.T
        try:
            mfac = sla.cho_factor(mm)

            def msolve(r):
                return sla.cho_solve(mfac, r)
        except np.linalg.LinAlgError:
            pinv = np.linalg.pinv(mm, rcond=1e-14)

            def msolve(r):
                return pinv @ r

        def direction(sigma, extra=None):
            w = []
            for j, (z, r, si) in enumerate(zip(zs, rd, sinv)):
                wj = sigma * mu * si - z @ r @ si
                if extra is not None:
                    wj = wj - extra[j] @ si
                w.append(wj)
            dy = msolve(rp + az - _apply(k, w)) if m else np.zeros(0)
            g = _adjoint(k, dy)
            ds = [r - gj for r, gj in zip(rd, g)]
            dz = [_sym(wj - z + z @ gj @ si) for wj, z, gj, si in zip(w, zs, g, sinv)]
            return dz, dy, ds

        dzp, _, dsp = direction(0.0)
        ap = min(1.0, _max_step_all(lz, dzp))
        ad = min(1.0, _max_step_all(ls, dsp))
        mu_aff = _inner([z + ap * d for z, d in zip(zs, dzp)], [s + ad * d for s, d in zip(ss, dsp)]) / ntot
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
        dz, dy, ds = direction(sigma, [a @ b for a, b in zip(dzp, dsp)])
        ap = _max_step_all(lz, dz)
        ad = _max_step_all(ls, ds)
        tau = 0.9 + 0.08 * min(1.0, ap, ad)
        ap = min(1.0, tau * ap)
        ad = min(1.0, tau * ad)
        zs = [z + ap * d for z, d in zip(zs, dz)]
        ss = [s + ad * d for s, d in zip(ss, ds)]
        y = y + ad * dy
        if max(ap, ad) < 1e-12:
            break
    if status == "inaccurate" and best is not None:
        _, zs, y = best
    return status, zs, y, it


def _reduce_rows(p: SdpProblem):
    """Orthonormalize the stacked constraint rows; drop dependent ones."""
    full = np.concatenate(p.rows, axis=1)
    m = full.shape[0]
    if m == 0:
        return [r for r in p.rows], np.zeros(0), np.zeros((0, 0)), True
    u, sv, vt = np.linalg.svd(full, full_matrices=False)
    r = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    u_r, s_r, vt_r = u[:, :r], sv[:r], vt[:r]
    coef = u_r.T @ p.rhs
    consistent = np.linalg.norm(p.rhs - u_r @ coef) <= 1e-9 * (1 + np.linalg.norm(p.rhs))
    b_red = coef / s_r
    back = u_r / s_r  # y_original = back @ y_reduced
    splits = np.cumsum([b.size for b in p.blocks])[:-1]
    return np.split(vt_r, splits, axis=1), b_red, back, consistent


def _zero_solution(p: SdpProblem, status: str, message: str) -> SdpSolution:
    xs = tuple(np.zeros((b.dim, b.dim), dtype=complex) for b in p.blocks)
    y = np.zeros(p.num_constraints)
    nan = float("nan")
    return SdpSolution(status, nan, nan, xs, y, nan, nan, nan, 0, message)


def solve_primal(p: SdpProblem, tol: float = 1e-10, max_iter: int = 100) -> SdpSolution:
    """Solve the primal/dual pair; certificates are always recomputed by :func:`verify_certificates`."""
    rows, b_red, back, consistent = _reduce_rows(p)
    if not consistent:
        return _zero_solution(p, "infeasible", "equality constraints are inconsistent")
    k = _build_kernel(p, rows, b_red)
    status, zs, y_red, iters = _solve_kernel(k, max_iter, tol)
    xs, j = [], 0
    for blk in p.blocks:
        if blk.kind == "psd":
            xs.append(la.as_hermitian(la.unembed_real(zs[j]), tol=1e-6))
            j += 1
        else:
            xs.append(np.array([[zs[j][0, 0] - zs[j + 1][0, 0]]], dtype=complex))
            j += 2
    y = -(back @ y_red) if back.size else np.zeros(p.num_constraints)
    if status in ("infeasible", "unbounded"):
        sol = SdpSolution(status, float("nan"), float("nan"), tuple(xs), y,
                          float("nan"), float("nan"), float("nan"), iters, "divergence detected")
        return sol
    rep = verify_certificates(p, SdpSolution(status, 0, 0, tuple(xs), y, 0, 0, 0))
    final = "optimal" if rep.ok else "inaccurate"
    msg = "" if rep.ok else f"kernel status {status}; certificate tolerances not met"
    return SdpSolution(final, rep.primal_value, rep.dual_value, tuple(xs), y,
                       rep.residual_primal, rep.residual_dual, rep.gap, iters, msg)


def adjoint_error(p: SdpProblem, rng: np.random.Generator | None = None, probes: int = 3) -> float:
    """Relative mismatch of ``<X, phi^dagger(y)> = <phi(X), y>`` on random probes."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(probes):
        xs = [la.random_hermitian(b.dim, rng) if b.kind == "psd" else np.array([[rng.normal()]]) for b in p.blocks]
        y = rng.normal(size=p.num_constraints)
        lhs = sum(np.real(np.vdot(x, g)) for x, g in zip(xs, p.adjoint(y)))
        rhs = float(p.apply(xs) @ y)
        scale = 1.0 + abs(lhs) + abs(rhs)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def solve_dual(p: SdpProblem, tol: float = 1e-10, max_iter: int = 100) -> SdpSolution:
    """Minimize ``B . y`` subject to ``phi^dagger(y) >= A``.

    Both problems are solved jointly by the primal-dual method; the adjoint
    relation used for the dual slack is checked on random probes.
    """
    err = adjoint_error(p)
    s = solve_primal(p, tol, max_iter)
    return SdpSolution(s.status, s.primal_value, s.dual_value, s.primal_point, s.dual_point,
                       s.residual_primal, s.residual_dual, s.gap, s.iterations, s.message, err)
