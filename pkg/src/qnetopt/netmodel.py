"""Labeled Choi operators, the link product and affine feasible sets.

Constraint sets store their equalities as rows in the orthonormal Hermitian
coordinates of :func:`qnetopt.linalg.hvec`.  A set may additionally carry an
*identity frame*: every member has the form ``I_T (x) Y`` for a fixed group of
labels ``T``.  The rows then act on the smaller core operator ``Y``, which
keeps span computations cheap for dual combs and conditioning sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from math import prod
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

from . import linalg as la
from .errors import DegenerateSetError, LayoutError, NotPSDError
from .layout import System, SystemLayout

RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# Labeled operators


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    """A Hermitian matrix bound to a :class:`SystemLayout`."""

    layout: SystemLayout
    op: np.ndarray

    def __post_init__(self) -> None:
        op = la.as_hermitian(self.op)
        if op.ndim != 2 or op.shape[0] != self.layout.dim:
            raise LayoutError(
                f"operator of shape {op.shape} does not match layout dimension {self.layout.dim}"
            )
        op.setflags(write=False)
        object.__setattr__(self, "op", op)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def scalar(self) -> float:
        if self.dim != 1:
            raise LayoutError("operator is not a scalar")
        return float(self.op[0, 0].real)

    def ptrace(self, labels: Iterable[str]) -> "LabeledOperator":
        labels = tuple(labels)
        return LabeledOperator(self.layout.without(labels), la.partial_trace(self.op, self.layout, labels))

    def ptranspose(self, labels: Iterable[str]) -> "LabeledOperator":
        return LabeledOperator(self.layout, la.partial_transpose(self.op, self.layout, tuple(labels)))

    def transpose(self) -> "LabeledOperator":
        return LabeledOperator(self.layout, self.op.T)

    def permute(self, order: Sequence[str]) -> "LabeledOperator":
        return LabeledOperator(self.layout.sub(order), la.permute_systems(self.op, self.layout, order))

    def aligned(self, layout: SystemLayout) -> np.ndarray:
        """Matrix in the factor order of ``layout`` (same label set and dims)."""
        if sorted(layout.labels) != sorted(self.labels):
            raise LayoutError(f"label sets differ: {list(self.labels)} vs {list(layout.labels)}")
        for s in layout:
            if self.layout.system(s.label).dim != s.dim:
                raise LayoutError(f"dimension mismatch on {s.label!r}")
        return la.permute_systems(self.op, self.layout, layout.labels)

    def expand(self, layout: SystemLayout) -> "LabeledOperator":
        """Tensor with identities so that the result lives on ``layout``."""
        return LabeledOperator(layout, la.expand(self.op, layout, self.labels))

    def relabel(self, mapping: dict) -> "LabeledOperator":
        return LabeledOperator(self.layout.relabel(mapping), self.op)

    def with_layout(self, layout: SystemLayout) -> "LabeledOperator":
        """Rebind to a layout with the same labels (e.g. different roles)."""
        return LabeledOperator(layout, self.aligned(layout))

    def __add__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.layout, self.op + other.aligned(self.layout))

    def __sub__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.layout, self.op - other.aligned(self.layout))

    def __mul__(self, c: float) -> "LabeledOperator":
        return LabeledOperator(self.layout, self.op * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "LabeledOperator":
        return LabeledOperator(self.layout, self.op / float(c))

    def __repr__(self) -> str:
        return f"LabeledOperator(labels={list(self.labels)}, dims={list(self.dims)})"


def link_product(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """``A * B = Tr_Y[A B^{T_Y}]`` contracting the labels shared by ``a`` and ``b``.

    The result lists ``a``'s remaining systems first, then ``b``'s.
    """
    shared = [lab for lab in a.labels if lab in b.layout]
    for lab in shared:
        if a.layout.system(lab).dim != b.layout.system(lab).dim:
            raise LayoutError(f"dimension mismatch on shared label {lab!r}")
    ka, kb = len(a.labels), len(b.labels)
    ta = a.op.reshape(a.dims + a.dims)
    tb = b.op.reshape(b.dims + b.dims)
    # integer subscripts: rows of a, cols of a, then b; shared rows/cols coincide
    sub_a_rows = list(range(ka))
    sub_a_cols = list(range(ka, 2 * ka))
    nxt = 2 * ka
    sub_b_rows, sub_b_cols = [], []
    for lab in b.labels:
        if lab in shared:
            i = a.labels.index(lab)
            sub_b_rows.append(sub_a_rows[i])
            sub_b_cols.append(sub_a_cols[i])
        else:
            sub_b_rows.append(nxt)
            sub_b_cols.append(nxt + 1)
            nxt += 2
    keep_a = [i for i, lab in enumerate(a.labels) if lab not in shared]
    keep_b = [j for j, lab in enumerate(b.labels) if lab not in shared]
    out = (
        [sub_a_rows[i] for i in keep_a]
        + [sub_b_rows[j] for j in keep_b]
        + [sub_a_cols[i] for i in keep_a]
        + [sub_b_cols[j] for j in keep_b]
    )
    r = np.einsum(ta, sub_a_rows + sub_a_cols, tb, sub_b_rows + sub_b_cols, out, optimize=True)
    systems = [a.layout.systems[i] for i in keep_a] + [b.layout.systems[j] for j in keep_b]
    layout = SystemLayout.compacted(systems)
    return LabeledOperator(layout, r.reshape(layout.dim, layout.dim))


def link_all(*ops: LabeledOperator) -> LabeledOperator:
    out = ops[0]
    for op in ops[1:]:
        out = link_product(out, op)
    return out


def choi_from_kraus(
    kraus: Sequence[np.ndarray], inputs: SystemLayout, outputs: SystemLayout
) -> LabeledOperator:
    """Choi operator ``sum_k |K_k>><<K_k|`` on ``outputs (x) inputs``."""
    d_in, d_out = inputs.dim, outputs.dim
    c = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (d_out, d_in):
            raise LayoutError(f"Kraus operator shape {k.shape} != ({d_out}, {d_in})")
        v = la.double_ket(k)
        c += np.outer(v, v.conj())
    return LabeledOperator(outputs.concat(inputs), c)


def choi_unitary(u: np.ndarray, in_label: str, out_label: str) -> LabeledOperator:
    d = np.asarray(u).shape[0]
    return choi_from_kraus(
        [u], SystemLayout.of((in_label, d, "in", 1)), SystemLayout.of((out_label, d, "out", 1))
    )


def state(rho: np.ndarray, label: str) -> LabeledOperator:
    rho = np.asarray(rho)
    return LabeledOperator(SystemLayout.of((label, rho.shape[0], "out", 1)), rho)


# ---------------------------------------------------------------------------
# Instruments and parties


@dataclass(frozen=True, eq=False)
class Instrument:
    """Choi operators of the CP maps of an instrument; roles come from the layout."""

    layout: SystemLayout
    elements: tuple[LabeledOperator, ...]

    def __post_init__(self) -> None:
        elements = tuple(e.with_layout(self.layout) for e in self.elements)
        object.__setattr__(self, "elements", elements)
        for x, e in enumerate(elements):
            if not la.is_psd(e.op):
                raise NotPSDError(f"instrument element {x} is not positive")
        ins = [s.label for s in self.layout if s.role == "in"]
        outs = [s.label for s in self.layout if s.role == "out"]
        total = sum(e.op for e in elements)
        reduced = la.partial_trace(total, self.layout, outs)
        err = float(np.max(np.abs(reduced - np.eye(self.layout.dim_of(ins)))))
        if err > 1e-9:
            raise LayoutError(f"instrument violates the channel condition by {err:.2e}")

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, x: int) -> LabeledOperator:
        return self.elements[x]


class Party(NamedTuple):
    in_label: str
    out_label: str
    d_in: int
    d_out: int


def _as_party(p) -> Party:
    if isinstance(p, Party):
        return p
    if len(p) == 3:
        in_label, out_label, dims = p
        if isinstance(dims, int):
            dims = (dims, dims)
        return Party(in_label, out_label, int(dims[0]), int(dims[1]))
    return Party(*p)


def parties_layout(parties: Sequence) -> SystemLayout:
    """Default layout ``in_1, out_1, in_2, out_2, ...`` with every system at step 1."""
    systems = []
    for p in map(_as_party, parties):
        systems.append(System(p.in_label, p.d_in, "in", 1))
        systems.append(System(p.out_label, p.d_out, "out", 1))
    return SystemLayout(tuple(systems))


# ---------------------------------------------------------------------------
# Constraint sets


def _null_space(rows: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis (columns) of ``{x : rows @ x = 0}`` in ``R^n``."""
    if rows.shape[0] == 0:
        return np.eye(n)
    q, r, _ = sla.qr(rows.T, mode="full", pivoting=True)
    diag = np.abs(np.diagonal(r))
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0
    return q[:, rank:]


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Affine feasible set ``{X >= 0 : <F_i, X> = b_i}`` with one inhomogeneous row.

    ``rows``/``rhs`` act on the core operator ``Y = Tr_T X / d_T`` where ``T``
    are the ``identity_labels``; members additionally satisfy ``X = I_T (x) Y``.
    """

    kind: str
    layout: SystemLayout
    rows: np.ndarray
    rhs: np.ndarray
    normalization_index: int
    identity_labels: tuple[str, ...] = ()
    outcomes: int = 1
    interior: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.layout.check_labels(self.identity_labels)
        rows = np.asarray(self.rows, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        nc = self.core_layout.dim
        if rows.ndim != 2 or rows.shape[1] != nc * nc or rows.shape[0] != rhs.shape[0]:
            raise LayoutError(f"rows of shape {rows.shape} do not fit core dimension {nc}")
        if not 0 <= self.normalization_index < rows.shape[0]:
            raise LayoutError("normalization_index out of range")
        others = np.delete(rhs, self.normalization_index)
        if np.any(others != 0) or rhs[self.normalization_index] == 0:
            raise LayoutError("exactly one equality must be inhomogeneous")
        rows.setflags(write=False)
        rhs.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "identity_labels", tuple(self.identity_labels))
        x0 = self._find_interior(self.interior)
        x0.setflags(write=False)
        object.__setattr__(self, "interior", x0)

    # frame helpers
    @cached_property
    def core_layout(self) -> SystemLayout:
        return self.layout.without(self.identity_labels)

    @property
    def frame_dim(self) -> int:
        return self.layout.dim_of(self.identity_labels)

    def core_of(self, x: np.ndarray) -> np.ndarray:
        if not self.identity_labels:
            return np.asarray(x)
        return la.partial_trace(x, self.layout, self.identity_labels) / self.frame_dim

    def frame(self, y: np.ndarray) -> np.ndarray:
        if not self.identity_labels:
            return np.asarray(y)
        return la.expand(y, self.layout, self.core_layout.labels)

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def rhs_norm(self) -> float:
        return float(self.rhs[self.normalization_index])

    # membership
    def residual(self, x: np.ndarray) -> float:
        """Largest violation over all equalities, including the frame."""
        x = np.asarray(x)
        y = self.core_of(x)
        r = float(np.max(np.abs(self.rows @ la.hvec(y) - self.rhs)))
        if self.identity_labels:
            r = max(r, float(np.max(np.abs(x - self.frame(y)))))
        return r

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return self.residual(x) <= tol and la.is_psd(x, tol)

    def _find_interior(self, hint) -> np.ndarray:
        n = self.layout.dim
        candidates = []
        if hint is not None:
            candidates.append(np.asarray(hint, dtype=complex))
        tr = np.trace(self.frame(la.hmat(self.rows[self.normalization_index], self.core_layout.dim)))
        ident = np.eye(n, dtype=complex)
        val = float(np.real(np.trace(self.frame(np.eye(self.core_layout.dim)) @ self.normalization_operator())))
        if abs(val) > 1e-14:
            candidates.append(ident * self.rhs_norm / val)
        del tr
        for c in candidates:
            if c.shape == (n, n) and self.residual(c) <= 1e-9:
                w = np.linalg.eigvalsh(la.as_hermitian(c))
                if w[0] > 1e-12 * max(1.0, w[-1]):
                    return la.as_hermitian(c)
        # minimum-norm feasible point as a last resort
        x = self._min_norm_point()
        w = np.linalg.eigvalsh(x)
        if w[0] > 1e-12 * max(1.0, w[-1]):
            return x
        raise DegenerateSetError(f"{self.kind}: no strictly positive feasible point found")

    def _min_norm_point(self) -> np.ndarray:
        y, *_ = np.linalg.lstsq(self.rows, self.rhs, rcond=None)
        return self.frame(la.hmat(y, self.core_layout.dim))

    # linear-algebraic views in full coordinates
    def normalization_operator(self) -> np.ndarray:
        """Operator ``F`` with ``<F, X> = rhs_norm`` for members ``X``."""
        f = la.hmat(self.rows[self.normalization_index], self.core_layout.dim)
        return self.frame(f) / self.frame_dim

    @cached_property
    def _core_homogeneous(self) -> np.ndarray:
        return np.delete(self.rows, self.normalization_index, axis=0)

    def _framed_columns(self, core_cols: np.ndarray) -> np.ndarray:
        if not self.identity_labels:
            return core_cols
        mats = la.hmat(core_cols.T, self.core_layout.dim)
        return la.hvec(self.frame(mats)).T / np.sqrt(self.frame_dim)

    def span_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the linear span of the set."""
        nc = self.core_layout.dim
        return self._framed_columns(_null_space(self._core_homogeneous, nc * nc))

    def direction_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the direction space of the affine hull."""
        nc = self.core_layout.dim
        return self._framed_columns(_null_space(self.rows, nc * nc))

    def span_dimension(self) -> int:
        nc = self.core_layout.dim
        return nc * nc - _rank(self._core_homogeneous)

    def homogeneous_rank(self) -> int:
        """Number of independent homogeneous equalities on the full variable."""
        n, nc = self.layout.dim, self.core_layout.dim
        return n * n - self.span_dimension() if self.identity_labels else _rank(self._core_homogeneous)

    def full_rows(self) -> tuple[np.ndarray, np.ndarray, int]:
        """Equalities on the full variable (frame rows included), normalization last."""
        hom = self._core_homogeneous
        mats = la.hmat(hom, self.core_layout.dim)
        d_t = self.frame_dim
        parts = [la.hvec(self.frame(mats)) / d_t] if hom.shape[0] else []
        if self.identity_labels:
            n = self.layout.dim

            def off_frame(x):
                return x - self.frame(self.core_of(x))

            m = la.linear_map_matrix(off_frame, n)
            q, r, _ = sla.qr(m.T, mode="economic", pivoting=True)
            diag = np.abs(np.diagonal(r))
            k = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0
            parts.append(q[:, :k].T)
        parts.append(la.hvec(self.normalization_operator())[None, :])
        rows = np.concatenate(parts, axis=0)
        rhs = np.zeros(rows.shape[0])
        rhs[-1] = self.rhs_norm
        return rows, rhs, rows.shape[0] - 1

    @property
    def equalities(self) -> list[tuple[np.ndarray, float]]:
        rows, rhs, _ = self.full_rows()
        n = self.layout.dim
        return [(la.hmat(r, n), float(b)) for r, b in zip(rows, rhs)]

    def __repr__(self) -> str:
        return (
            f"ConstraintSet(kind={self.kind!r}, labels={list(self.layout.labels)}, "
            f"rows={self.num_rows}, frame={list(self.identity_labels)})"
        )


def _rank(rows: np.ndarray) -> int:
    if rows.shape[0] == 0:
        return 0
    s = np.linalg.svd(rows, compute_uv=False)
    return int(np.sum(s > RANK_TOL * max(s[0], 1e-300)))


def _drop_zero_rows(m: np.ndarray) -> np.ndarray:
    return m[np.linalg.norm(m, axis=1) > 1e-13]


def _comb_rows(layout: SystemLayout, steps: Sequence[tuple[tuple[str, ...], tuple[str, ...]]]) -> np.ndarray:
    """Homogeneous comb equalities with the auxiliary operators eliminated.

    For step n (from last to first), with ``C^(n) = Tr_{later} C / d_{later, in}``:
    ``Tr_{out_n} C^(n) - I_{in_n} (x) Tr_{in_n out_n} C^(n) / d_{in_n} = 0``.
    """
    n = layout.dim
    blocks = []
    for k in reversed(range(len(steps))):
        ins, outs = steps[k]
        later = [lab for j in range(k + 1, len(steps)) for lab in steps[j][0] + steps[j][1]]
        d_later_in = prod(layout.dim_of(steps[j][0]) for j in range(k + 1, len(steps)))
        upto = layout.without(later)
        d_in = layout.dim_of(ins)
        target = upto.without(outs)
        prev = upto.without(tuple(ins) + tuple(outs))

        def fn(x, later=later, d_later_in=d_later_in, upto=upto, ins=ins, outs=outs,
               d_in=d_in, target=target, prev=prev):
            cn = la.partial_trace(x, layout, later) / d_later_in if later else x
            a = la.partial_trace(cn, upto, outs) if outs else cn
            b = la.partial_trace(cn, upto, tuple(ins) + tuple(outs)) / d_in
            return a - la.expand(b, target, prev.labels)

        blocks.append(_drop_zero_rows(la.linear_map_matrix(fn, n)))
    if not blocks:
        return np.zeros((0, n * n))
    return np.concatenate(blocks, axis=0)


def _with_trace_row(rows: np.ndarray, n: int, value: float) -> tuple[np.ndarray, np.ndarray, int]:
    tr = la.hvec(np.eye(n))[None, :]
    rows = np.concatenate([rows, tr], axis=0)
    rhs = np.zeros(rows.shape[0])
    rhs[-1] = value
    return rows, rhs, rows.shape[0] - 1


def _network_steps(layout: SystemLayout) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    steps = layout.steps()
    if not steps:
        raise LayoutError("layout has no time steps")
    return steps


def comb_constraints(layout: SystemLayout) -> ConstraintSet:
    """Quantum combs on ``layout`` (roles and steps define the causal order).

    A step may hold several input or output systems, or none.
    """
    steps = _network_steps(layout)
    rows = _comb_rows(layout, steps)
    d_in = prod(layout.dim_of(ins) for ins, _ in steps)
    d_out = prod(layout.dim_of(outs) for _, outs in steps)
    rows, rhs, k = _with_trace_row(rows, layout.dim, d_in)
    x0 = np.eye(layout.dim) / d_out
    return ConstraintSet("Comb", layout, rows, rhs, k, interior=x0)


def _dual_core(layout: SystemLayout):
    steps = _network_steps(layout)
    last_outs = steps[-1][1]
    core = layout.without(last_outs)
    core_steps = []
    prev_outs: tuple[str, ...] = ()
    for ins, outs in steps:
        core_steps.append((prev_outs, ins))
        prev_outs = outs
    rows = _comb_rows(core, core_steps)
    norm = prod(core.dim_of(c_in) for c_in, _ in core_steps)
    rows, rhs, k = _with_trace_row(rows, core.dim, norm)
    d_in = prod(layout.dim_of(ins) for ins, _ in steps)
    return last_outs, rows, rhs, k, np.eye(layout.dim) / d_in


def dual_comb_constraints(layout: SystemLayout) -> ConstraintSet:
    """Dual combs: ``G = I_{out_N} (x) G^(N)`` with the dual-comb recursion."""
    frame, rows, rhs, k, x0 = _dual_core(layout)
    return ConstraintSet("DualComb", layout, rows, rhs, k, identity_labels=frame, interior=x0)


def tester_constraints(layout: SystemLayout, outcomes: int) -> ConstraintSet:
    """Testers with ``outcomes`` elements; the equalities act on the sum of the elements."""
    if int(outcomes) != outcomes or outcomes < 1:
        raise LayoutError("outcomes must be a positive integer")
    frame, rows, rhs, k, x0 = _dual_core(layout)
    return ConstraintSet(
        "Tester", layout, rows, rhs, k, identity_labels=frame, outcomes=int(outcomes), interior=x0
    )


def framed_constraints(
    layout: SystemLayout, identity_labels: Sequence[str], core: ConstraintSet | None, kind: str
) -> ConstraintSet:
    """``{I_T (x) Y : Y in core}``; ``core=None`` means the scalar set ``{1}``."""
    identity_labels = tuple(identity_labels)
    if core is None:
        rows, rhs, k = np.ones((1, 1)), np.ones(1), 0
        x0 = np.eye(layout.dim)
    else:
        expected = layout.without(identity_labels).labels
        if core.layout.labels != expected or core.identity_labels:
            raise LayoutError("core set must live on the non-identity systems, in layout order")
        rows, rhs, k = core.rows, core.rhs, core.normalization_index
        x0 = la.expand(core.interior, layout, expected)
    return ConstraintSet(kind, layout, rows, rhs, k, identity_labels=identity_labels, interior=x0)


def nosig_constraints(parties: Sequence, layout: SystemLayout | None = None) -> ConstraintSet:
    """No-signalling channels between ``k <= 4`` parties.

    For every nonempty subset ``J``:
    ``Tr_{out_J} D = I_{in_J} (x) Tr_{in_J out_J} D / d_{in_J}``, plus
    ``Tr D = prod d_in``.
    """
    parties = [_as_party(p) for p in parties]
    if not parties:
        raise LayoutError("at least one party is required")
    if len(parties) > 4:
        raise LayoutError("at most 4 parties are supported")
    layout = parties_layout(parties) if layout is None else layout
    for p in parties:
        if layout.system(p.in_label).dim != p.d_in or layout.system(p.out_label).dim != p.d_out:
            raise LayoutError(f"party {p} disagrees with the layout dimensions")
    n = layout.dim
    covered = {lab for p in parties for lab in (p.in_label, p.out_label)}
    if covered != set(layout.labels):
        raise LayoutError("layout must consist exactly of the parties' systems")
    blocks = []
    for size in range(1, len(parties) + 1):
        for group in combinations(parties, size):
            ins = tuple(p.in_label for p in group)
            outs = tuple(p.out_label for p in group)
            d_in = prod(p.d_in for p in group)
            target = layout.without(outs)
            rest = layout.without(ins + outs)

            def fn(x, ins=ins, outs=outs, d_in=d_in, target=target, rest=rest):
                a = la.partial_trace(x, layout, outs)
                b = la.partial_trace(x, layout, ins + outs) / d_in
                return a - la.expand(b, target, rest.labels)

            blocks.append(_drop_zero_rows(la.linear_map_matrix(fn, n)))
    d_in = prod(p.d_in for p in parties)
    d_out = prod(p.d_out for p in parties)
    rows, rhs, k = _with_trace_row(np.concatenate(blocks, axis=0), n, d_in)
    return ConstraintSet("NoSig", layout, rows, rhs, k, interior=np.eye(n) / d_out)


def nosig_bipartite_constraints(parties: Sequence, layout: SystemLayout | None = None) -> ConstraintSet:
    """Two-party no-signalling written with explicit marginal channels.

    ``Tr_{A_out} D = I_{A_in} (x) B~`` with ``Tr_{B_out} B~ = I_{B_in}``, and the
    same with the roles of the parties exchanged; ``B~`` is eliminated as
    ``Tr_{A_in A_out} D / d_{A_in}``.
    """
    pa, pb = [_as_party(p) for p in parties]
    layout = parties_layout([pa, pb]) if layout is None else layout
    n = layout.dim
    blocks = []
    for p, q in ((pa, pb), (pb, pa)):
        target = layout.without([p.out_label])
        marg = layout.without([p.in_label, p.out_label])

        def fn1(x, p=p, target=target, marg=marg):
            a = la.partial_trace(x, layout, [p.out_label])
            b = la.partial_trace(x, layout, [p.in_label, p.out_label]) / p.d_in
            return a - la.expand(b, target, marg.labels)

        def fn2(x, p=p, q=q, marg=marg):
            b = la.partial_trace(x, layout, [p.in_label, p.out_label]) / p.d_in
            c = la.partial_trace(b, marg, [q.out_label])
            return c - np.eye(q.d_in) * np.trace(c, axis1=-2, axis2=-1)[..., None, None] / q.d_in

        blocks.append(_drop_zero_rows(la.linear_map_matrix(fn1, n)))
        blocks.append(_drop_zero_rows(la.linear_map_matrix(fn2, n)))
    rows, rhs, k = _with_trace_row(np.concatenate(blocks, axis=0), n, pa.d_in * pb.d_in)
    return ConstraintSet("NoSig", layout, rows, rhs, k, interior=np.eye(n) / (pa.d_out * pb.d_out))


_DUAL_KIND = {"Comb": "DualComb", "DualComb": "Comb", "NoSig": "DualNoSig", "DualNoSig": "NoSig"}


def _dual_geometry(cs: ConstraintSet):
    d = cs.direction_basis()
    x0 = la.hvec(cs.interior)
    r = x0 - d @ (d.T @ x0)
    scale = float(r @ x0)
    if scale <= 1e-14:
        raise DegenerateSetError("normalization is not independent of the direction space")
    return d, x0, r / scale


def dual_constraints(cs: ConstraintSet, kind: str | None = None) -> ConstraintSet:
    """The positive part of ``{G : <G, X> = 1 for every X in the affine hull of cs}``.

    Rows: orthogonality to the primal direction space, plus pairing 1 with a
    primal anchor point.
    """
    d, x0, anchor = _dual_geometry(cs)
    rows = np.concatenate([d.T, x0[None, :]], axis=0)
    rhs = np.zeros(rows.shape[0])
    rhs[-1] = 1.0
    n = cs.layout.dim
    tr = float(np.real(np.trace(cs.interior)))
    hint = np.eye(n) / tr if tr > 0 else la.hmat(anchor, n)
    kind = kind or _DUAL_KIND.get(cs.kind, "Dual" + cs.kind)
    try:
        return ConstraintSet(kind, cs.layout, rows, rhs, rows.shape[0] - 1, interior=hint)
    except DegenerateSetError:
        return ConstraintSet(kind, cs.layout, rows, rhs, rows.shape[0] - 1, interior=la.hmat(anchor, n))


def dual_nosig_constraints(parties: Sequence, layout: SystemLayout | None = None) -> ConstraintSet:
    """Process matrices: the dual affine set of no-signalling channels."""
    return dual_constraints(nosig_constraints(parties, layout), "DualNoSig")


def dual_affine_basis(cs: ConstraintSet) -> tuple[LabeledOperator, list[np.ndarray]]:
    """Anchor and orthonormal direction basis of the dual affine space of ``cs``.

    Every ``G = anchor + sum_k t_k B_k`` pairs to 1 with all members of the
    affine hull of ``cs``; the anchor is the minimum-norm such operator.
    """
    d, _, anchor = _dual_geometry(cs)
    n = cs.layout.dim
    a = anchor / np.linalg.norm(anchor)
    known = np.concatenate([d, a[:, None]], axis=1)
    q, _ = np.linalg.qr(known, mode="complete")
    comp = q[:, known.shape[1]:]
    basis = [la.hmat(c, n) for c in comp.T]
    return LabeledOperator(cs.layout, la.hmat(anchor, n)), basis


# ---------------------------------------------------------------------------
# Born rule and validation


def born_probability(tester_element: LabeledOperator, comb: LabeledOperator) -> float:
    """Generalized Born rule ``Tr[T C^T]``."""
    c = comb.aligned(tester_element.layout)
    val = np.trace(tester_element.op @ c.T)
    return float(val.real)


@dataclass(frozen=True)
class ValidationReport:
    max_equality_residual: float
    psd_margin: float
    ok: bool


def validate(op, cs: ConstraintSet, tol: float = 1e-9) -> ValidationReport:
    """Equality residual and positivity margin of ``op`` against ``cs``.

    For testers ``op`` is the list of elements; the equalities apply to their sum.
    """
    ops = list(op) if isinstance(op, (list, tuple)) else [op]
    mats = [o.aligned(cs.layout) if isinstance(o, LabeledOperator) else la.as_hermitian(o) for o in ops]
    total = sum(mats)
    res = cs.residual(total)
    margins = []
    ok_psd = True
    for m in mats:
        w = np.linalg.eigvalsh(la.as_hermitian(m))
        margins.append(float(w[0]))
        ok_psd &= bool(w[0] >= -tol * max(1.0, float(w[-1])))
    margin = min(margins)
    return ValidationReport(res, margin, bool(res <= tol and ok_psd))


# ---------------------------------------------------------------------------
# Random networks (test and verification helpers)


def _random_channel(d_in: int, d_out: int, rng: np.random.Generator, env: int = 2) -> list[np.ndarray]:
    env = max(env, -(-d_in // d_out))
    v = la.random_isometry(d_in, d_out * env, rng).reshape(d_out, env, d_in)
    return [v[:, e, :] for e in range(env)]


def random_comb(layout: SystemLayout, rng: np.random.Generator, memory: int = 2,
                keep_last_memory: bool = False) -> LabeledOperator:
    """Random comb on ``layout`` built from channels with a ``memory``-dimensional wire.

    With ``keep_last_memory`` the memory leaving the last step is kept as an
    extra output labelled ``"_mem"``.
    """
    steps = _network_steps(layout)
    parts = []
    prev_mem: tuple[str, int] | None = None
    for k, (ins, outs) in enumerate(steps):
        last = k == len(steps) - 1
        in_sys = [layout.system(lab) for lab in ins]
        out_sys = [layout.system(lab) for lab in outs]
        if prev_mem is not None:
            in_sys.append(System(prev_mem[0], prev_mem[1], "in", 1))
        mem = None
        if not last or keep_last_memory:
            mem = ("_mem" if last else f"_m{k + 1}", memory)
            out_sys.append(System(mem[0], mem[1], "out", 1))
        in_l = SystemLayout(tuple(System(s.label, s.dim, "in", 1) for s in in_sys))
        out_l = SystemLayout(tuple(System(s.label, s.dim, "out", 1) for s in out_sys))
        kraus = _random_channel(in_l.dim, out_l.dim, rng)
        parts.append(choi_from_kraus(kraus, in_l, out_l))
        prev_mem = mem
    c = link_all(*parts)
    order = list(layout.labels) + (["_mem"] if keep_last_memory else [])
    full = layout
    if keep_last_memory:
        full = SystemLayout(layout.systems + (System("_mem", memory, "out", max(layout.num_steps, 1)),))
    return LabeledOperator(full, c.aligned(full.sub(order)))


def _dual_core_layout(layout: SystemLayout) -> tuple[SystemLayout, tuple[str, ...]]:
    steps = _network_steps(layout)
    roles = {}
    prev_outs: tuple[str, ...] = ()
    for n, (ins, outs) in enumerate(steps, start=1):
        for lab in prev_outs:
            roles[lab] = ("in", n)
        for lab in ins:
            roles[lab] = ("out", n)
        prev_outs = outs
    core = layout.without(steps[-1][1])
    return core.with_roles(roles), steps[-1][1]


def random_dual_comb(layout: SystemLayout, rng: np.random.Generator, memory: int = 2) -> LabeledOperator:
    core, frame = _dual_core_layout(layout)
    y = random_comb(core, rng, memory)
    return LabeledOperator(layout, la.expand(y.op, layout, core.labels))


def random_tester(layout: SystemLayout, outcomes: int, rng: np.random.Generator,
                  memory: int = 2) -> list[LabeledOperator]:
    """Random tester: a dual-comb network keeping a memory, then a random POVM."""
    core, frame = _dual_core_layout(layout)
    net = random_comb(core, rng, memory, keep_last_memory=True)
    meas = SystemLayout(
        tuple(System(lab, layout.system(lab).dim, "in", 1) for lab in frame) + (System("_mem", memory, "in", 1),)
    )
    d = meas.dim
    v = la.random_isometry(d, d * outcomes, rng).reshape(outcomes, d, d)
    elements = []
    for x in range(outcomes):
        p = v[x].conj().T @ v[x]
        t = link_product(net, LabeledOperator(meas, p))
        elements.append(LabeledOperator(layout, t.aligned(layout)))
    return elements
