"""Lazy execution of a scenario over its *live* systems.

A system enters the live state the first time an operation touches it (its
whole initial factor enters with it) and is traced out once no later
operation uses it. Tracing out a system nothing will touch again is exact for
every later probability, so scenarios whose registry is far beyond the dense
cap (e.g. a pointer coupled to dozens of environment qubits, one at a time)
stay small.

The live state is a pure tensor while that is possible. A dead system that is
still entangled is traced out once the mixed representation is no larger than
the pure one; after that the state stays mixed.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ZeroBranchError
from .settings import dim_cap, tolerances
from .tensor import apply_local

# a dead system whose reduced state has purity deficit below this is dropped
# without converting the live state to a density matrix
_PRODUCT_TOL = 1e-14


@dataclass(frozen=True)
class Op:
    kind: str  # "unitary" | "project" | "dephase"
    targets: tuple[str, ...]
    matrices: tuple[np.ndarray, ...]


def _mixed_limit(cap: int) -> int:
    return min(cap, 16 * math.isqrt(cap))


class LiveState:
    def __init__(self, factors: Sequence, keep: Iterable[str] = ()):
        self.factors = list(factors)
        self.keep = set(keep)
        self.labels: list[str] = []
        self.data = np.ones((), dtype=complex)
        self.pure = True
        self.weight = 1.0
        self._entered: set[int] = set()

    # -- bookkeeping -----------------------------------------------------
    @property
    def dims(self) -> list[int]:
        return list(self.data.shape[: len(self.labels)])

    @property
    def live_dim(self) -> int:
        return math.prod(self.dims)

    def _axes(self, targets: Sequence[str]) -> list[int]:
        return [self.labels.index(t) for t in targets]

    def ensure(self, systems: Iterable[str], dead: set[str]) -> None:
        for system in systems:
            if system in self.labels:
                continue
            for i, factor in enumerate(self.factors):
                if i not in self._entered and system in factor.systems:
                    self._enter(i, dead)
                    break

    def _enter(self, i: int, dead: set[str]) -> None:
        factor = self.factors[i]
        fdims = list(factor.dims)
        fdim = math.prod(fdims)
        cap = dim_cap()
        limit = cap if self.pure else _mixed_limit(cap)
        if self.live_dim * fdim > limit and dead:
            self.trace_out(dead, force=True)
            limit = cap if self.pure else _mixed_limit(cap)
        new_dim = self.live_dim * fdim
        if new_dim > limit:
            rep = "pure" if self.pure else "mixed"
            raise CapacityError(
                f"live {rep} state over {self.labels + list(factor.systems)} has dimension "
                f"{new_dim}, above the limit {limit}"
            )
        amps = factor.amplitudes.reshape(fdims)
        if self.pure:
            self.data = np.multiply.outer(self.data, amps)
        else:
            n, m = len(self.labels), len(fdims)
            block = np.multiply.outer(amps, amps.conj())
            t = np.multiply.outer(self.data, block)
            order = list(range(n)) + list(range(2 * n, 2 * n + m)) + list(range(n, 2 * n)) + list(
                range(2 * n + m, 2 * n + 2 * m)
            )
            self.data = t.transpose(order)
        self.labels.extend(factor.systems)
        self._entered.add(i)

    # -- operations ------------------------------------------------------
    def _sandwich(self, data: np.ndarray, left: np.ndarray, right_conj: np.ndarray, axes: list[int]) -> np.ndarray:
        n = len(self.labels)
        out = apply_local(data, left, axes)
        return apply_local(out, right_conj, [n + a for a in axes])

    def apply(self, unitary: np.ndarray, targets: Sequence[str]) -> None:
        axes = self._axes(targets)
        if self.pure:
            self.data = apply_local(self.data, unitary, axes)
        else:
            self.data = self._sandwich(self.data, unitary, unitary.conj(), axes)

    def project(self, projector: np.ndarray, targets: Sequence[str]) -> float:
        axes = self._axes(targets)
        if self.pure:
            out = apply_local(self.data, projector, axes)
            p = float(np.vdot(out, out).real)
        else:
            out = self._sandwich(self.data, projector, projector.conj(), axes)
            d = self.live_dim
            p = float(np.trace(out.reshape(d, d)).real)
        threshold = tolerances().zero_branch
        if p <= threshold:
            raise ZeroBranchError(p, threshold)
        self.data = out / (math.sqrt(p) if self.pure else p)
        self.weight *= p
        return p

    def to_mixed(self) -> None:
        if not self.pure:
            return
        self.data = np.multiply.outer(self.data, self.data.conj())
        self.pure = False

    def dephase(self, projectors: Sequence[np.ndarray], targets: Sequence[str]) -> None:
        self.to_mixed()
        axes = self._axes(targets)
        self.data = sum(self._sandwich(self.data, p, p.conj(), axes) for p in projectors)

    def probabilities(self, projectors: Sequence[np.ndarray], targets: Sequence[str]) -> list[float]:
        axes = self._axes(targets)
        out = []
        for p in projectors:
            if self.pure:
                v = apply_local(self.data, p, axes)
                out.append(float(np.vdot(v, v).real))
            else:
                v = self._sandwich(self.data, p, p.conj(), axes)
                d = self.live_dim
                out.append(float(np.trace(v.reshape(d, d)).real))
        return out

    # -- tracing ---------------------------------------------------------
    def trace_out(self, systems: Iterable[str], force: bool = False) -> None:
        systems = [s for s in systems if s in self.labels and s not in self.keep]
        if not systems:
            return
        if self.pure:
            entangled = []
            for s in systems:
                if not self._drop_if_product(s):
                    entangled.append(s)
            if not entangled:
                return
            rest = self.live_dim // math.prod(self.data.shape[self.labels.index(s)] for s in entangled)
            if not force and rest * rest > self.live_dim:
                return
            axes = self._axes(entangled)
            self.data = np.tensordot(self.data, self.data.conj(), axes=(axes, axes))
            self.labels = [x for x in self.labels if x not in entangled]
            self.pure = False
            return
        n = len(self.labels)
        idx = self._axes(systems)
        rows = list(range(n))
        cols = [i if i in idx else n + i for i in range(n)]
        kept = [i for i in range(n) if i not in idx]
        self.data = np.einsum(self.data, rows + cols, kept + [n + i for i in kept])
        self.labels = [self.labels[i] for i in kept]

    def _drop_if_product(self, system: str) -> bool:
        ax = self.labels.index(system)
        others = [i for i in range(len(self.labels)) if i != ax]
        red = np.tensordot(self.data, self.data.conj(), axes=(others, others))
        vals, vecs = np.linalg.eigh(red)
        total = float(vals.sum())
        if total - vals[-1] > _PRODUCT_TOL * max(total, 1.0):
            return False
        v = vecs[:, -1]
        self.data = np.tensordot(v.conj(), self.data, axes=([0], [ax]))
        self.labels.pop(ax)
        return True

    def density(self, order: Sequence[str]) -> np.ndarray:
        """Density matrix over exactly the live systems, permuted to ``order``."""
        self.to_mixed()
        n = len(self.labels)
        perm = [self.labels.index(x) for x in order]
        t = self.data.transpose(perm + [n + p for p in perm])
        d = self.live_dim
        return np.ascontiguousarray(t).reshape(d, d)


def execute(factors: Sequence, program: Sequence[Op], keep: Iterable[str] = ()) -> LiveState:
    """Run ``program`` lazily; raises ZeroBranchError on a vanishing projection."""
    keep = set(keep)
    last_use: dict[str, int] = {}
    for k, op in enumerate(program):
        for t in op.targets:
            last_use[t] = k
    live = LiveState(factors, keep)
    all_systems = [s for f in factors for s in f.systems]

    def dead_after(k: int) -> set[str]:
        return {
            s for s in live.labels if s not in keep and last_use.get(s, -1) <= k
        }

    for k, op in enumerate(program):
        live.ensure(op.targets, dead_after(k - 1))
        if op.kind == "unitary":
            live.apply(op.matrices[0], op.targets)
        elif op.kind == "project":
            live.project(op.matrices[0], op.targets)
        elif op.kind == "dephase":
            live.dephase(op.matrices, op.targets)
        else:  # pragma: no cover - programs are built internally
            raise ValueError(op.kind)
        live.trace_out(dead_after(k))
    live.ensure([s for s in all_systems if s in keep], dead_after(len(program)))
    live.trace_out(dead_after(len(program)), force=True)
    return live
