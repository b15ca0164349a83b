"""Labeled tensor-factor bookkeeping.

A :class:`SystemLayout` is an ordered list of finite-dimensional systems.  The
first system is the most significant Kronecker factor.  Each system carries a
role (``"in"`` or ``"out"``) and a time step, which the constraint generators
use to derive causal structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import LayoutError

ROLES = ("in", "out")


@dataclass(frozen=True)
class System:
    label: str
    dim: int
    role: str = "out"
    step: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.label, str) or not self.label:
            raise LayoutError(f"system label must be a non-empty string, got {self.label!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise LayoutError(f"system {self.label!r}: dim must be a positive integer, got {self.dim!r}")
        if self.role not in ROLES:
            raise LayoutError(f"system {self.label!r}: role must be 'in' or 'out', got {self.role!r}")
        if int(self.step) != self.step or self.step < 1:
            raise LayoutError(f"system {self.label!r}: step must be >= 1, got {self.step!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "step", int(self.step))


def _compact(systems: Sequence[System]) -> tuple[System, ...]:
    """Renumber steps to 1..N keeping their relative order."""
    used = sorted({s.step for s in systems})
    remap = {old: new for new, old in enumerate(used, start=1)}
    return tuple(System(s.label, s.dim, s.role, remap[s.step]) for s in systems)


@dataclass(frozen=True)
class SystemLayout:
    systems: tuple[System, ...] = ()

    def __post_init__(self) -> None:
        systems = tuple(self.systems)
        for s in systems:
            if not isinstance(s, System):
                raise LayoutError(f"expected System entries, got {type(s).__name__}")
        labels = [s.label for s in systems]
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise LayoutError(f"duplicate labels: {dup}")
        steps = sorted({s.step for s in systems})
        if steps and steps != list(range(1, len(steps) + 1)):
            raise LayoutError(f"steps must be contiguous from 1, got {steps}")
        object.__setattr__(self, "systems", systems)

    # construction helpers
    @classmethod
    def of(cls, *specs: tuple) -> "SystemLayout":
        """Build from tuples ``(label, dim[, role[, step]])``."""
        return cls(tuple(System(*spec) for spec in specs))

    @classmethod
    def from_dims(cls, dims: Sequence[int], labels: Sequence[str] | None = None) -> "SystemLayout":
        if labels is None:
            labels = [str(i) for i in range(len(dims))]
        if len(labels) != len(dims):
            raise LayoutError("labels and dims differ in length")
        return cls(tuple(System(lab, d) for lab, d in zip(labels, dims)))

    @classmethod
    def compacted(cls, systems: Iterable[System]) -> "SystemLayout":
        return cls(_compact(list(systems)))

    # basic queries
    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.systems)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @property
    def num_steps(self) -> int:
        return max((s.step for s in self.systems), default=0)

    def __len__(self) -> int:
        return len(self.systems)

    def __iter__(self) -> Iterator[System]:
        return iter(self.systems)

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {list(self.labels)}") from None

    def system(self, label: str) -> System:
        return self.systems[self.index(label)]

    def dim_of(self, labels: Iterable[str]) -> int:
        return prod(self.system(lab).dim for lab in labels)

    def inputs(self, step: int) -> tuple[str, ...]:
        return tuple(s.label for s in self.systems if s.step == step and s.role == "in")

    def outputs(self, step: int) -> tuple[str, ...]:
        return tuple(s.label for s in self.systems if s.step == step and s.role == "out")

    def steps(self) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
        """Per-step ``(input labels, output labels)`` for steps 1..N."""
        return [(self.inputs(n), self.outputs(n)) for n in range(1, self.num_steps + 1)]

    # derived layouts
    def check_labels(self, labels: Iterable[str]) -> tuple[str, ...]:
        labels = tuple(labels)
        for lab in labels:
            self.index(lab)
        if len(set(labels)) != len(labels):
            raise LayoutError(f"repeated labels in {list(labels)}")
        return labels

    def sub(self, labels: Iterable[str]) -> "SystemLayout":
        """Layout of the given systems, in the given order."""
        labels = self.check_labels(labels)
        return SystemLayout.compacted(self.system(lab) for lab in labels)

    def without(self, labels: Iterable[str]) -> "SystemLayout":
        drop = set(self.check_labels(labels))
        return SystemLayout.compacted(s for s in self.systems if s.label not in drop)

    def concat(self, other: "SystemLayout") -> "SystemLayout":
        return SystemLayout.compacted(self.systems + other.systems)

    def relabel(self, mapping: Mapping[str, str]) -> "SystemLayout":
        return SystemLayout(
            tuple(System(mapping.get(s.label, s.label), s.dim, s.role, s.step) for s in self.systems)
        )

    def with_roles(self, roles: Mapping[str, tuple[str, int]]) -> "SystemLayout":
        """Copy with ``label -> (role, step)`` overrides."""
        out = []
        for s in self.systems:
            role, step = roles.get(s.label, (s.role, s.step))
            out.append(System(s.label, s.dim, role, step))
        return SystemLayout(tuple(out))

    # serialization
    def to_dict(self) -> dict:
        return {
            "systems": [
                {"label": s.label, "dim": s.dim, "role": s.role, "step": s.step} for s in self.systems
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemLayout":
        if not isinstance(data, Mapping) or "systems" not in data:
            raise LayoutError("layout JSON must be an object with a 'systems' list")
        entries = data["systems"]
        if not isinstance(entries, list):
            raise LayoutError("layout.systems must be a list")
        systems = []
        for i, e in enumerate(entries):
            if not isinstance(e, Mapping):
                raise LayoutError(f"layout.systems[{i}] must be an object")
            missing = [k for k in ("label", "dim") if k not in e]
            if missing:
                raise LayoutError(f"layout.systems[{i}] missing {missing}")
            if isinstance(e["dim"], bool) or not isinstance(e["dim"], int):
                raise LayoutError(f"layout.systems[{i}].dim must be an integer")
            try:
                systems.append(System(e["label"], e["dim"], e.get("role", "out"), e.get("step", 1)))
            except LayoutError as exc:
                raise LayoutError(f"layout.systems[{i}]: {exc}") from None
        return cls(tuple(systems))


def as_dims(layout: SystemLayout | Sequence[int]) -> tuple[tuple[int, ...], tuple[str, ...]]:
    """Return ``(dims, labels)`` for a layout or a bare dimension list."""
    if isinstance(layout, SystemLayout):
        return layout.dims, layout.labels
    dims = tuple(int(d) for d in layout)
    return dims, tuple(str(i) for i in range(len(dims)))
