"""Variables (projective decompositions), interactions and their builders.

A :class:`Variable` is a labeled family of orthogonal, complete projectors on
an ordered list of systems. An :class:`Interaction` is a unitary on a list of
systems, optionally tagged as establishing the value of a variable as a fact
relative to a context system.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .registry import SystemRegistry, register_system  # noqa: F401  (re-export)
from .settings import tolerances
from .tensor import _frozen, as_operator, is_projector, validate_unitary


def _phase_fixed(v: np.ndarray) -> np.ndarray:
    """Multiply by a global phase so the first nonzero component is real positive."""
    tol = tolerances().validation
    for z in v:
        if abs(z) > tol:
            return v * (abs(z) / z)
    return v


@dataclass(frozen=True, eq=False)
class Variable:
    label: str
    targets: tuple[str, ...]
    outcomes: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self) -> None:
        targets = tuple(self.targets)
        if not targets or len(set(targets)) != len(targets):
            raise ValidationError(f"variable {self.label!r}: targets must be distinct and non-empty")
        outcomes = tuple((str(v), as_operator(p, f"projector {v!r}")) for v, p in self.outcomes)
        if not outcomes:
            raise ValidationError(f"variable {self.label!r} has no outcomes")
        values = [v for v, _ in outcomes]
        if len(set(values)) != len(values):
            raise ValidationError(f"variable {self.label!r}: duplicate outcome labels {values}")
        dim = outcomes[0][1].shape[0]
        tol = tolerances().validation
        total = np.zeros((dim, dim), dtype=complex)
        for v, p in outcomes:
            if p.shape[0] != dim:
                raise ValidationError(f"variable {self.label!r}: projector sizes differ")
            if not is_projector(p, tol):
                raise ValidationError(f"variable {self.label!r}: outcome {v!r} is not a projector")
            total += p
        for i, (vi, pi) in enumerate(outcomes):
            for vj, pj in outcomes[i + 1:]:
                if np.max(np.abs(pi @ pj)) > tol:
                    raise ValidationError(
                        f"variable {self.label!r}: outcomes {vi!r} and {vj!r} are not orthogonal"
                    )
        if np.max(np.abs(total - np.eye(dim))) > tol:
            raise ValidationError(f"variable {self.label!r}: projectors do not sum to identity")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "outcomes", tuple((v, _frozen(p)) for v, p in outcomes))

    @property
    def values(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.outcomes)

    @property
    def dim(self) -> int:
        return self.outcomes[0][1].shape[0]

    @property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return tuple(p for _, p in self.outcomes)

    def index(self, value: str) -> int:
        for i, (v, _) in enumerate(self.outcomes):
            if v == value:
                return i
        raise ValidationError(f"variable {self.label!r} has no value {value!r} (values: {self.values})")

    def projector(self, value: str) -> np.ndarray:
        return self.outcomes[self.index(value)][1]

    def rank(self, value: str) -> int:
        return int(round(np.trace(self.projector(value)).real))

    def vector(self, value: str) -> np.ndarray:
        """The unit vector spanning a rank-1 outcome, phase fixed."""
        p = self.projector(value)
        if self.rank(value) != 1:
            raise ValidationError(f"outcome {value!r} of {self.label!r} is not rank one")
        col = p[:, int(np.argmax(np.linalg.norm(p, axis=0)))]
        return _phase_fixed(col / np.linalg.norm(col))

    def same_as(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Variable):
            return False
        return (
            self.label == other.label
            and self.targets == other.targets
            and self.values == other.values
            and all(np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(self.projectors, other.projectors))
        )

    def check(self, registry: SystemRegistry) -> None:
        registry.check_targets(self.targets)
        dims = registry.dims_of(self.targets)
        if math.prod(dims) != self.dim:
            raise ValidationError(
                f"variable {self.label!r}: projector dim {self.dim} does not match targets "
                f"{self.targets} (dim {math.prod(dims)})"
            )
        for t, d in zip(self.targets, dims):
            if d < 2:
                raise ValidationError(f"variable {self.label!r} sits on system {t!r} of dim {d} < 2")

    def __repr__(self) -> str:
        return f"Variable({self.label!r}, targets={self.targets}, values={self.values})"


def pvm_from_basis(
    targets: Sequence[str],
    vectors: Sequence,
    values: Sequence[str] | None = None,
    *,
    label: str = "L",
    completion: str | None = None,
) -> Variable:
    """Rank-1 variable ``{|v_i><v_i|}`` from orthonormal vectors.

    If the vectors do not span the space, ``completion`` names an extra
    coarse-grained outcome carrying the orthogonal complement.
    """
    vecs = [np.asarray(v, dtype=complex).reshape(-1) for v in vectors]
    if not vecs:
        raise ValidationError("pvm_from_basis needs at least one vector")
    dim = vecs[0].shape[0]
    if any(v.shape[0] != dim for v in vecs):
        raise ValidationError("basis vectors differ in length")
    gram = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
    if np.max(np.abs(gram - np.eye(len(vecs)))) > tolerances().validation:
        raise ValidationError("basis vectors are not orthonormal")
    values = [str(i) for i in range(len(vecs))] if values is None else [str(v) for v in values]
    if len(values) != len(vecs):
        raise ValidationError(f"{len(values)} value labels for {len(vecs)} vectors")
    outcomes = [(v, np.outer(vec, vec.conj())) for v, vec in zip(values, vecs)]
    if len(vecs) < dim:
        if completion is None:
            raise ValidationError(
                f"{len(vecs)} vectors do not span dim {dim}; pass completion= to coarse-grain the rest"
            )
        rest = np.eye(dim, dtype=complex) - sum(p for _, p in outcomes)
        outcomes.append((completion, rest))
    return Variable(label, tuple(targets), tuple(outcomes))


def computational_variable(
    target: str, dim: int = 2, *, label: str | None = None, values: Sequence[str] | None = None
) -> Variable:
    basis = np.eye(dim, dtype=complex)
    return pvm_from_basis([target], list(basis), values, label=label or f"Z_{target}")


def spin_basis(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Spin up/down along an axis at angle ``theta`` from z in the x-z plane."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([c, s], dtype=complex), np.array([-s, c], dtype=complex)


def spin_variable(target: str, theta: float, *, label: str | None = None) -> Variable:
    up, down = spin_basis(theta)
    return pvm_from_basis([target], [up, down], ["up", "down"], label=label or f"L_{target}")


def bell_variable(first: str, second: str, *, label: str | None = None) -> Variable:
    """Two-outcome variable: ``phi+`` (the Bell state) versus ``other``."""
    phi = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    return pvm_from_basis(
        [first, second], [phi], ["phi+"], label=label or f"Bell_{first}{second}", completion="other"
    )


def product_variable(a: Variable, b: Variable, *, label: str | None = None) -> Variable:
    """Joint variable on ``a.targets + b.targets`` with outcomes ``"va,vb"``."""
    if set(a.targets) & set(b.targets):
        raise ValidationError("product_variable needs variables on disjoint systems")
    outcomes = [
        (f"{va},{vb}", np.kron(pa, pb)) for va, pa in a.outcomes for vb, pb in b.outcomes
    ]
    return Variable(label or f"{a.label}*{b.label}", a.targets + b.targets, tuple(outcomes))


@dataclass(frozen=True, eq=False)
class Interaction:
    label: str
    targets: tuple[str, ...]
    unitary: np.ndarray
    fact_context: str | None = None
    fact_variable: Variable | None = None
    # constructor name and arguments, kept so scenario files can re-emit it
    origin: dict | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        targets = tuple(self.targets)
        if not targets or len(set(targets)) != len(targets):
            raise ValidationError(f"interaction {self.label!r}: targets must be distinct and non-empty")
        u = validate_unitary(self.unitary, f"interaction {self.label!r}")
        if (self.fact_context is None) != (self.fact_variable is None):
            raise ValidationError(
                f"interaction {self.label!r}: fact_context and fact_variable go together"
            )
        if self.fact_variable is not None and not set(self.fact_variable.targets) <= set(targets):
            raise ValidationError(
                f"interaction {self.label!r}: fact variable targets {self.fact_variable.targets} "
                f"are not among the interaction targets {targets}"
            )
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "unitary", _frozen(u))

    @property
    def establishes_fact(self) -> bool:
        return self.fact_context is not None

    def check(self, registry: SystemRegistry) -> None:
        registry.check_targets(self.targets)
        d = math.prod(registry.dims_of(self.targets))
        if d != self.unitary.shape[0]:
            raise ValidationError(
                f"interaction {self.label!r}: unitary dim {self.unitary.shape[0]} does not match "
                f"targets {self.targets} (dim {d})"
            )
        if self.fact_context is not None:
            registry.index(self.fact_context)
            self.fact_variable.check(registry)

    def inverse(self, label: str | None = None) -> Interaction:
        """The undoing unitary; never fact-establishing."""
        return Interaction(label or f"undo:{self.label}", self.targets, self.unitary.conj().T)

    def __repr__(self) -> str:
        ctx = f", fact {self.fact_variable.label}@{self.fact_context}" if self.fact_context else ""
        return f"Interaction({self.label!r}, targets={self.targets}{ctx})"


def cyclic_shift(dim: int) -> np.ndarray:
    """``|k> -> |k+1 mod dim>``."""
    return np.roll(np.eye(dim, dtype=complex), 1, axis=0)


def premeasurement_unitary(
    variable: Variable, pointer: str, registry: SystemRegistry, *, label: str | None = None
) -> Interaction:
    """Pointer-copy unitary ``sum_i P_i (x) Shift^i``.

    Maps ``|a_i>|ready>`` to ``|a_i>|i>`` with the pointer's ready state at
    basis index 0. Tagged as establishing ``variable`` relative to ``pointer``.
    """
    variable.check(registry)
    if pointer in variable.targets:
        raise ValidationError(f"pointer {pointer!r} is one of the measured systems")
    d_ptr = registry.dim(pointer)
    k = len(variable.outcomes)
    if d_ptr < k:
        raise ValidationError(
            f"pointer {pointer!r} has dim {d_ptr}, too small for {k} outcomes of {variable.label!r}"
        )
    shift = cyclic_shift(d_ptr)
    u = sum(np.kron(p, np.linalg.matrix_power(shift, i)) for i, p in enumerate(variable.projectors))
    return Interaction(
        label or f"premeasure:{variable.label}->{pointer}",
        variable.targets + (pointer,),
        u,
        fact_context=pointer,
        fact_variable=variable,
        origin={"type": "premeasure", "variable": variable, "pointer": pointer},
    )


def rotation(angle: float) -> np.ndarray:
    """Real rotation ``|0> -> cos(a)|0> + sin(a)|1>`` (a y-axis rotation by ``2a``)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def controlled_coupling(
    pointer: Variable,
    env: str,
    phi: float,
    registry: SystemRegistry,
    *,
    label: str | None = None,
) -> Interaction:
    """Rotate env qubit ``env`` by ``i * phi`` when the pointer reads outcome ``i``.

    The unitary is block diagonal in the pointer's outcomes, so it commutes
    with every pointer projector. Tagged as establishing the pointer value
    relative to ``env``.
    """
    pointer.check(registry)
    if env in pointer.targets:
        raise ValidationError(f"environment {env!r} is one of the pointer systems")
    if registry.dim(env) != 2:
        raise ValidationError(f"environment system {env!r} must be a qubit, has dim {registry.dim(env)}")
    u = sum(np.kron(p, rotation(i * phi)) for i, p in enumerate(pointer.projectors))
    return Interaction(
        label or f"couple:{pointer.label}->{env}",
        pointer.targets + (env,),
        u,
        fact_context=env,
        fact_variable=pointer,
        origin={"type": "couple", "pointer": pointer, "env": env, "angle": float(phi)},
    )


def unitary_interaction(
    label: str,
    targets: Sequence[str],
    matrix,
    registry: SystemRegistry,
    *,
    fact_context: str | None = None,
    fact_variable: Variable | None = None,
) -> Interaction:
    inter = Interaction(label, tuple(targets), matrix, fact_context, fact_variable)
    inter.check(registry)
    return inter
