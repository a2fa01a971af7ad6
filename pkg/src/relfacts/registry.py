"""Named subsystems and their tensor ordering.

The first registered system is the most significant index of the composite
space (row-major multi-index). Every other module relies on this single
convention.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass

from .errors import ValidationError

ROLES = ("S", "F", "E", "W")


@dataclass(frozen=True)
class System:
    label: str
    dim: int
    role: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.label, str) or not self.label:
            raise ValidationError(f"system label must be a non-empty string, got {self.label!r}")
        if isinstance(self.dim, bool) or not isinstance(self.dim, int) or self.dim < 1:
            raise ValidationError(f"system {self.label!r}: dim must be a positive integer, got {self.dim!r}")
        if self.role is not None and self.role not in ROLES:
            raise ValidationError(f"system {self.label!r}: role must be one of {ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class SystemRegistry:
    systems: tuple[System, ...] = ()

    def __post_init__(self) -> None:
        labels = [s.label for s in self.systems]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValidationError(f"duplicate system label(s): {', '.join(dupes)}")

    @classmethod
    def of(cls, *entries: tuple) -> SystemRegistry:
        """``SystemRegistry.of(("S", 2, "S"), ("F", 2))``."""
        return cls(tuple(System(*e) for e in entries))

    def register(self, label: str, dim: int, role: str | None = None) -> SystemRegistry:
        if label in self:
            raise ValidationError(f"duplicate system label: {label!r}")
        return SystemRegistry(self.systems + (System(label, dim, role),))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.systems)

    @property
    def composite_dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.systems)

    def __iter__(self) -> Iterator[System]:
        return iter(self.systems)

    def __contains__(self, label: object) -> bool:
        return any(s.label == label for s in self.systems)

    def index(self, label: str) -> int:
        for i, s in enumerate(self.systems):
            if s.label == label:
                return i
        raise ValidationError(f"unknown system id: {label!r}")

    def system(self, label: str) -> System:
        return self.systems[self.index(label)]

    def dim(self, label: str) -> int:
        return self.system(label).dim

    def dims_of(self, labels: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.dim(x) for x in labels)

    def with_role(self, role: str) -> tuple[str, ...]:
        return tuple(s.label for s in self.systems if s.role == role)

    def check_targets(self, labels: Sequence[str]) -> tuple[str, ...]:
        """Validate an ordered, duplicate-free list of registered ids."""
        labels = tuple(labels)
        if not labels:
            raise ValidationError("target list is empty")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"targets must be distinct: {labels}")
        for x in labels:
            self.index(x)
        return labels

    def subset(self, labels: Iterable[str]) -> SystemRegistry:
        """Sub-registry of ``labels``, kept in registry order."""
        wanted = set(labels)
        for x in wanted:
            self.index(x)
        return SystemRegistry(tuple(s for s in self.systems if s.label in wanted))

    def complement(self, labels: Iterable[str]) -> tuple[str, ...]:
        drop = set(labels)
        return tuple(s.label for s in self.systems if s.label not in drop)


def register_system(registry: SystemRegistry, label: str, dim: int, role: str | None = None) -> SystemRegistry:
    return registry.register(label, dim, role)
