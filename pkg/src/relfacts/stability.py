"""Branch structure of a state relative to a pointer variable.

A pure state is split along a pointer variable into branches
``Phi_i = (P_i (x) I)|psi>``. Each branch must factor as
``c_i |r_i> (x) |psi_i>`` across the cut between the *record* systems (the
pointer plus anything else an observer may look at) and the *environment*.
The overlaps ``<psi_i|psi_j>`` of the environment branch states control how
much interference an observer acting only on the records can see:

* ``epsilon`` is the largest squared overlap between distinct non-null
  branches;
* for a record-local measurement ``B`` with ``||B|| <= 1`` the interference
  term is at most ``sqrt(epsilon) * sum_{i != j} |c_i||c_j|``.

Branches are computed either from a full state vector (by SVD of each branch
across the cut) or from the reduced density matrix of the record systems (by
eigendecomposition of ``P_i rho P_i``). The second route never needs the
environment explicitly, which is how large environments are handled.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import BranchFormError, ValidationError
from .settings import tolerances
from .systems import Variable, _phase_fixed
from .tensor import DensityMatrix, StateVector, embed, partial_trace, trace_distance

# slack for overlaps computed from a reduced state, which carry rounding of
# order sqrt(machine eps) / |c_i c_j|
_OVERLAP_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class Branch:
    value: str
    amplitude: complex
    weight: float
    record: np.ndarray | None  # unit vector on the record systems
    env_state: np.ndarray | None  # unit vector on the environment, if known

    @property
    def null(self) -> bool:
        return self.record is None


@dataclass(frozen=True, eq=False)
class BranchDecomposition:
    """``|psi> = sum_i c_i |r_i> (x) |psi_i>`` along ``pointer``.

    ``overlaps[i, j] = <psi_i|psi_j>``; entries involving a null branch are
    NaN.
    """

    pointer: Variable
    records: tuple[str, ...]
    environment: tuple[str, ...]
    branches: tuple[Branch, ...]
    overlaps: np.ndarray
    registry: object = None

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([b.amplitude for b in self.branches])

    @property
    def weights(self) -> np.ndarray:
        return np.array([b.weight for b in self.branches])

    @property
    def live(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.branches) if not b.null)

    def reconstruct(self) -> StateVector:
        """Rebuild the state from the branches (state-vector route only)."""
        if self.registry is None or any(b.env_state is None for b in self.branches if not b.null):
            raise ValidationError("branch environment states are unknown for a reduced-state decomposition")
        reg = self.registry
        d_a = math.prod(reg.dims_of(self.records))
        d_e = math.prod(reg.dims_of(self.environment))
        m = np.zeros((d_a, d_e), dtype=complex)
        for b in self.branches:
            if not b.null:
                m += b.amplitude * np.outer(b.record, b.env_state)
        order = list(self.records) + list(self.environment)
        t = m.reshape(reg.dims_of(order))
        perm = [order.index(x) for x in reg.labels]
        return StateVector(reg, np.ascontiguousarray(t.transpose(perm)).reshape(-1))


def _check_branch_form(value: str, second: float, weight: float) -> None:
    tol = tolerances()
    if second > tol.branch_form * weight + tol.zero_branch:
        raise BranchFormError(
            f"branch {value!r} is entangled across the record/environment cut "
            f"(second Schmidt weight {second:.3e} of {weight:.3e})"
        )


def _decompose_vector(state: StateVector, pointer: Variable, environment) -> BranchDecomposition:
    reg = state.registry
    pointer.check(reg)
    env = tuple(x for x in reg.labels if x not in pointer.targets) if environment is None else tuple(environment)
    for x in env:
        reg.index(x)
    if set(env) & set(pointer.targets):
        raise ValidationError(f"environment {env} overlaps the pointer systems {pointer.targets}")
    records = reg.complement(env)
    sub = reg.subset(records)
    d_a, d_e = sub.composite_dim, math.prod(reg.dims_of(env))
    order = list(records) + list(env)
    perm = [reg.index(x) for x in order]
    psi = state.as_tensor().transpose(perm).reshape(d_a, d_e)
    null_tol = tolerances().null_branch
    branches = []
    for value, p in pointer.outcomes:
        m = embed(p, pointer.targets, sub) @ psi
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        weight = float(np.sum(s**2))
        if math.sqrt(weight) <= null_tol:
            branches.append(Branch(value, 0j, weight, None, None))
            continue
        _check_branch_form(value, float(np.sum(s[1:] ** 2)), weight)
        r = _phase_fixed(u[:, 0])
        e = _phase_fixed(vh[0])
        c = complex(np.vdot(np.kron(r, e), m.reshape(-1)))
        branches.append(Branch(value, c, weight, r, e))
    k = len(branches)
    overlaps = np.full((k, k), np.nan + 0j)
    for i, bi in enumerate(branches):
        for j, bj in enumerate(branches):
            if not bi.null and not bj.null:
                overlaps[i, j] = np.vdot(bi.env_state, bj.env_state)
    return BranchDecomposition(pointer, records, env, tuple(branches), overlaps, reg)


def _decompose_density(rho: DensityMatrix, pointer: Variable) -> BranchDecomposition:
    reg = rho.registry
    pointer.check(reg)
    null_tol = tolerances().null_branch
    branches = []
    for value, p in pointer.outcomes:
        pe = embed(p, pointer.targets, reg)
        sigma = pe @ rho.entries @ pe
        sigma = 0.5 * (sigma + sigma.conj().T)
        weight = float(max(0.0, np.trace(sigma).real))
        if math.sqrt(weight) <= null_tol:
            branches.append(Branch(value, 0j, weight, None, None))
            continue
        vals, vecs = np.linalg.eigh(sigma)
        _check_branch_form(value, float(max(0.0, vals[-2])) if len(vals) > 1 else 0.0, weight)
        r = _phase_fixed(vecs[:, -1])
        branches.append(Branch(value, complex(math.sqrt(max(vals[-1], 0.0))), weight, r, None))
    k = len(branches)
    overlaps = np.full((k, k), np.nan + 0j)
    for i, bi in enumerate(branches):
        for j, bj in enumerate(branches):
            if bi.null or bj.null:
                continue
            if i == j:
                overlaps[i, j] = 1.0
                continue
            val = np.vdot(bj.record, rho.entries @ bi.record) / (bi.amplitude.real * bj.amplitude.real)
            if abs(val) > 1.0 + _OVERLAP_SLACK:
                raise ValidationError(
                    "state is not the reduction of a pure branch-form state "
                    f"(overlap {abs(val):.6f} between {bi.value!r} and {bj.value!r})"
                )
            overlaps[i, j] = val
    return BranchDecomposition(pointer, reg.labels, (), tuple(branches), overlaps, None)


def branch_decompose(
    state: StateVector | DensityMatrix,
    pointer: Variable,
    environment: Sequence[str] | None = None,
) -> BranchDecomposition:
    """Split ``state`` into branches along ``pointer``.

    For a state vector the environment defaults to every system outside the
    pointer; pass ``environment=()`` to keep everything as a record (then all
    environment states are trivially equal). For a density matrix the
    matrix must be the reduced state of the record systems and
    ``environment`` must be omitted.

    Raises:
        BranchFormError: a non-null branch does not factor across the cut.
    """
    if isinstance(state, DensityMatrix):
        if environment:
            raise ValidationError("a reduced density matrix already excludes the environment")
        return _decompose_density(state, pointer)
    if not isinstance(state, StateVector):
        raise ValidationError(f"expected a StateVector or DensityMatrix, got {type(state).__name__}")
    return _decompose_vector(state, pointer, environment)


@dataclass(frozen=True, eq=False)
class EpsilonReport:
    epsilon: float
    pair: tuple[int, int] | None
    table: np.ndarray  # |<psi_i|psi_j>|^2, NaN on null rows/columns

    def as_record(self) -> dict:
        rec = {"epsilon": self.epsilon}
        if self.pair is not None:
            rec["pair_i"], rec["pair_j"] = self.pair
        return rec


def epsilon_of(dec: BranchDecomposition) -> EpsilonReport:
    table = np.abs(dec.overlaps) ** 2
    best, pair = 0.0, None
    live = dec.live
    for a, i in enumerate(live):
        for j in live[a + 1 :]:
            if pair is None or table[i, j] > best:
                best, pair = float(table[i, j]), (i, j)
    return EpsilonReport(min(1.0, best), pair, table)


def epsilon(
    state: StateVector | DensityMatrix, pointer: Variable, environment: Sequence[str] | None = None
) -> EpsilonReport:
    """Largest squared overlap between distinct non-null environment branches."""
    return epsilon_of(branch_decompose(state, pointer, environment))


def stability_bound(dec: BranchDecomposition, eps: float | None = None) -> float:
    """``sqrt(eps) * sum_{i != j} |c_i||c_j|`` over non-null branches."""
    eps = epsilon_of(dec).epsilon if eps is None else eps
    mags = np.abs(dec.amplitudes[list(dec.live)])
    total = float(mags.sum() ** 2 - np.sum(mags**2))
    return math.sqrt(eps) * max(0.0, total)


def reduced_pointer_state(state: StateVector | DensityMatrix, pointer: Variable) -> DensityMatrix:
    """The state of the pointer systems alone."""
    pointer.check(state.registry)
    return partial_trace(state, pointer.targets)


def pointer_coherences(rho: DensityMatrix, pointer: Variable) -> np.ndarray:
    """Matrix of ``||P_i rho P_j||`` (spectral norm); ``|rho_ij|`` for rank-one outcomes."""
    projs = [embed(p, pointer.targets, rho.registry) for p in pointer.projectors]
    k = len(projs)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            out[i, j] = np.linalg.norm(projs[i] @ rho.entries @ projs[j], 2)
    return out


@dataclass(frozen=True)
class EtaReport:
    eta: float
    dominant: str
    dominant_index: int
    trace_distance: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.trace_distance <= self.bound + tolerances().validation

    def as_record(self) -> dict:
        return {
            "eta": self.eta,
            "dominant": self.dominant,
            "trace_distance": self.trace_distance,
            "bound": self.bound,
        }


def eta_report(
    state: StateVector | DensityMatrix, pointer: Variable, environment: Sequence[str] | None = None
) -> EtaReport:
    """Distance of the reduced pointer state from its dominant branch.

    With ``eta = 1 - max_i |c_i|`` the distance never exceeds
    ``sqrt(2 * eta)``.
    """
    dec = branch_decompose(state, pointer, environment)
    mags = np.abs(dec.amplitudes)
    k = int(np.argmax(mags))
    eta = float(max(0.0, 1.0 - mags[k]))
    value = pointer.values[k]
    rho = reduced_pointer_state(state, pointer)
    perm_rho = _in_pointer_order(rho, pointer)
    p = pointer.projector(value)
    if pointer.rank(value) == 1:
        target = p
    else:
        t = p @ perm_rho @ p
        target = t / np.trace(t).real
    return EtaReport(eta, value, k, trace_distance(perm_rho, target), math.sqrt(2.0 * eta))


def _in_pointer_order(rho: DensityMatrix, pointer: Variable) -> np.ndarray:
    """``rho`` (over the pointer systems in registry order) reordered to ``pointer.targets``."""
    reg = rho.registry
    order = list(pointer.targets)
    if list(reg.labels) == order:
        return rho.entries
    n = len(order)
    perm = [list(reg.labels).index(x) for x in order]
    t = rho.entries.reshape(reg.dims + reg.dims).transpose(perm + [n + i for i in perm])
    d = reg.composite_dim
    return np.ascontiguousarray(t).reshape(d, d)
