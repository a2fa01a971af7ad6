"""Probabilities of facts relative to a context.

A scenario is an initial state followed by an ordered list of interactions.
The probability of a set of facts is computed along a single chain: every
interaction is applied unitarily, and at the step of each assigned fact the
state is projected onto the assigned value (Lüders rule) right after that
interaction's unitary. Interactions without an assigned fact stay unitary,
which is how a system outside the fact's context describes them.

Steps are positional. Step ``k < n_steps`` refers to the fact established by
interaction ``k``; step ``n_steps`` refers to the scenario's final query.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import _runner
from .errors import (
    UndefinedConditionalError,
    ValidationError,
    ZeroBranchError,
)
from .registry import SystemRegistry
from .settings import tolerances
from .systems import Interaction, Variable
from .tensor import DensityMatrix, StateVector, apply_local, check_capacity


@dataclass(frozen=True, eq=False)
class StateFactor:
    """A pure state on a group of systems, one tensor factor of the initial state."""

    systems: tuple[str, ...]
    amplitudes: np.ndarray
    dims: tuple[int, ...] = ()

    def resolved(self, registry: SystemRegistry) -> StateFactor:
        systems = registry.check_targets(self.systems)
        dims = registry.dims_of(systems)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != math.prod(dims):
            raise ValidationError(
                f"initial factor on {systems} has {amps.shape[0]} amplitudes, needs {math.prod(dims)}"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > tolerances().validation:
            raise ValidationError(f"initial factor on {systems} has norm {norm!r}")
        amps = amps.copy()
        amps.setflags(write=False)
        return StateFactor(systems, amps, dims)


@dataclass(frozen=True, eq=False)
class Query:
    """A variable read relative to a context after the last interaction."""

    variable: Variable
    context: str


def _factors_from(registry: SystemRegistry, initial) -> tuple[StateFactor, ...]:
    if isinstance(initial, StateVector):
        if initial.registry.labels != registry.labels or initial.registry.dims != registry.dims:
            raise ValidationError("initial state is defined over a different registry")
        groups = [StateFactor(registry.labels, initial.amplitudes)]
    elif initial is None:
        groups = []
    elif isinstance(initial, Mapping):
        groups = [
            StateFactor((key,) if isinstance(key, str) else tuple(key), amps)
            for key, amps in initial.items()
        ]
    else:
        groups = list(initial)
        for g in groups:
            if not isinstance(g, StateFactor):
                raise ValidationError(f"initial state factor must be a StateFactor, got {type(g).__name__}")
    factors = [g.resolved(registry) for g in groups]
    seen: set[str] = set()
    for f in factors:
        overlap = seen & set(f.systems)
        if overlap:
            raise ValidationError(f"system(s) {sorted(overlap)} appear in two initial factors")
        seen |= set(f.systems)
    for s in registry.systems:
        if s.label not in seen:
            ready = np.zeros(s.dim, dtype=complex)
            ready[0] = 1.0
            factors.append(StateFactor((s.label,), ready).resolved(registry))
    return tuple(factors)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Initial state, ordered interactions and an optional final query.

    ``initial_state`` may be a :class:`StateVector`, a sequence of
    :class:`StateFactor`, a mapping from a system label (or tuple of labels)
    to amplitudes, or ``None``. Systems not mentioned start in basis state 0.
    It is stored as a tuple of resolved factors.
    """

    registry: SystemRegistry
    initial_state: object = None
    interactions: tuple[Interaction, ...] = ()
    final_query: Query | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "initial_state", _factors_from(self.registry, self.initial_state))
        inters = tuple(self.interactions)
        for inter in inters:
            if not isinstance(inter, Interaction):
                raise ValidationError(f"expected an Interaction, got {type(inter).__name__}")
            inter.check(self.registry)
        object.__setattr__(self, "interactions", inters)
        q = self.final_query
        if q is not None:
            if not isinstance(q, Query):
                q = Query(*q)
            q.variable.check(self.registry)
            self.registry.index(q.context)
            object.__setattr__(self, "final_query", q)

    @property
    def factors(self) -> tuple[StateFactor, ...]:
        return self.initial_state  # type: ignore[return-value]

    @property
    def n_steps(self) -> int:
        return len(self.interactions)

    def initial_vector(self) -> StateVector:
        """The initial state as one dense vector (subject to the dimension cap)."""
        reg = self.registry
        check_capacity(reg.composite_dim)
        psi = np.ones((), dtype=complex)
        order: list[str] = []
        for f in self.factors:
            psi = np.multiply.outer(psi, f.amplitudes.reshape(f.dims))
            order.extend(f.systems)
        perm = [order.index(x) for x in reg.labels]
        return StateVector(reg, np.ascontiguousarray(psi.transpose(perm)).reshape(-1))

    def site(self, step: int) -> tuple[Variable, str]:
        """The (variable, context) established at ``step``."""
        if isinstance(step, bool) or not isinstance(step, (int, np.integer)):
            raise ValidationError(f"step must be an integer, got {step!r}")
        if step == self.n_steps and self.final_query is not None:
            return self.final_query.variable, self.final_query.context
        if not 0 <= step < self.n_steps:
            raise ValidationError(f"step {step} is outside the scenario (0..{self.n_steps})")
        inter = self.interactions[step]
        if not inter.establishes_fact:
            raise ValidationError(f"interaction {step} ({inter.label!r}) does not establish a fact")
        return inter.fact_variable, inter.fact_context

    def fact(self, step: int, value: str) -> RelativeFact:
        variable, context = self.site(step)
        return RelativeFact(variable, value, context, int(step))

    def partition(self, step: int) -> tuple[RelativeFact, ...]:
        """Every value of the fact established at ``step``."""
        variable, context = self.site(step)
        return tuple(RelativeFact(variable, v, context, int(step)) for v in variable.values)

    def fact_steps(self) -> tuple[int, ...]:
        steps = [k for k, i in enumerate(self.interactions) if i.establishes_fact]
        if self.final_query is not None:
            steps.append(self.n_steps)
        return tuple(steps)

    def truncated(self, steps: int) -> Scenario:
        """The first ``steps`` interactions, no final query."""
        return replace(self, initial_state=list(self.factors), interactions=self.interactions[:steps], final_query=None)

    def extended(self, interactions: Sequence[Interaction], final_query: Query | tuple | None = None) -> Scenario:
        return replace(
            self,
            initial_state=list(self.factors),
            interactions=self.interactions + tuple(interactions),
            final_query=final_query,
        )

    def with_query(self, final_query: Query | tuple | None) -> Scenario:
        return replace(self, initial_state=list(self.factors), final_query=final_query)


@dataclass(frozen=True, eq=False)
class RelativeFact:
    """``variable = value`` as a fact relative to ``context``, established at ``step``."""

    variable: Variable
    value: str
    context: str
    step: int

    def __post_init__(self) -> None:
        self.variable.index(self.value)

    def validate(self, scenario: Scenario) -> None:
        variable, context = scenario.site(self.step)
        if context != self.context or not variable.same_as(self.variable):
            raise ValidationError(
                f"step {self.step} establishes {variable.label!r} relative to {context!r}, "
                f"not {self.variable.label!r} relative to {self.context!r}"
            )

    def __repr__(self) -> str:
        return f"{self.variable.label}={self.value}@{self.context}[{self.step}]"


def evolve(scenario: Scenario) -> StateVector:
    """Apply every interaction unitarily to the dense initial state."""
    state = scenario.initial_vector()
    reg = scenario.registry
    psi = state.as_tensor()
    for inter in scenario.interactions:
        psi = apply_local(psi, inter.unitary, [reg.index(t) for t in inter.targets])
    return StateVector(reg, psi.reshape(-1))


def _by_step(scenario: Scenario, facts: Iterable[RelativeFact]) -> dict[int, RelativeFact]:
    out: dict[int, RelativeFact] = {}
    for f in facts:
        if not isinstance(f, RelativeFact):
            raise ValidationError(f"expected a RelativeFact, got {type(f).__name__}")
        f.validate(scenario)
        if f.step in out:
            raise ValidationError(f"two assignments at step {f.step}")
        out[f.step] = f
    return out


def _program(
    scenario: Scenario,
    facts: Iterable[RelativeFact] = (),
    dephase: Iterable[int] = (),
    upto: int | None = None,
) -> list[_runner.Op]:
    by_step = _by_step(scenario, facts)
    dephase = set(dephase)
    n = scenario.n_steps if upto is None else upto
    ops: list[_runner.Op] = []
    for k, inter in enumerate(scenario.interactions[:n]):
        ops.append(_runner.Op("unitary", inter.targets, (inter.unitary,)))
        if k in by_step:
            f = by_step[k]
            ops.append(_runner.Op("project", f.variable.targets, (f.variable.projector(f.value),)))
        elif k in dephase:
            v = inter.fact_variable
            ops.append(_runner.Op("dephase", v.targets, v.projectors))
    last = scenario.n_steps if upto is None else n - 1
    late = sorted(s for s in by_step if s > last)
    if late:
        raise ValidationError(f"fact at step {late[0]} lies beyond the first {n} interactions")
    if upto is None and scenario.n_steps in by_step:
        f = by_step[scenario.n_steps]
        ops.append(_runner.Op("project", f.variable.targets, (f.variable.projector(f.value),)))
    return ops


def _run(scenario: Scenario, program, keep: Iterable[str] = ()) -> _runner.LiveState:
    return _runner.execute(scenario.factors, program, keep)


def chain_probability(scenario: Scenario, assignments: Sequence[RelativeFact]) -> float:
    """Joint probability of ``assignments`` along the projection chain.

    Returns 0 when some step's outcome probability falls to the zero-branch
    threshold.
    """
    program = _program(scenario, assignments)
    try:
        live = _run(scenario, program)
    except ZeroBranchError:
        return 0.0
    return float(min(1.0, max(0.0, live.weight)))


def conditional_probability(
    scenario: Scenario, query: RelativeFact, conditions: Sequence[RelativeFact]
) -> float:
    """``P(query and conditions) / P(conditions)``."""
    conditions = list(conditions)
    p_cond = chain_probability(scenario, conditions)
    if p_cond <= tolerances().zero_branch:
        raise UndefinedConditionalError(
            f"conditions {conditions} have probability {p_cond:.3e}; the conditional is undefined"
        )
    query.validate(scenario)
    same = [c for c in conditions if c.step == query.step]
    if same:
        return 1.0 if same[0].value == query.value else 0.0
    joint = chain_probability(scenario, conditions + [query])
    return float(min(1.0, joint / p_cond))


def outcome_probabilities(
    scenario: Scenario,
    variable: Variable,
    conditions: Sequence[RelativeFact] = (),
    upto: int | None = None,
) -> tuple[float, ...]:
    """Joint probabilities ``P(conditions and variable = v)`` for every value.

    ``variable`` is read on the state after the first ``upto`` interactions
    (all of them by default, after any final-query projection).
    """
    variable.check(scenario.registry)
    program = _program(scenario, conditions, upto=upto)
    try:
        live = _run(scenario, program, keep=variable.targets)
    except ZeroBranchError:
        return tuple(0.0 for _ in variable.values)
    probs = live.probabilities(variable.projectors, variable.targets)
    return tuple(float(min(1.0, max(0.0, p * live.weight))) for p in probs)


def reduced_state(
    scenario: Scenario,
    keep: Iterable[str],
    upto: int | None = None,
    conditions: Sequence[RelativeFact] = (),
) -> DensityMatrix:
    """Normalized state of ``keep`` after ``upto`` interactions, given ``conditions``."""
    reg = scenario.registry
    keep = set(keep)
    if not keep:
        raise ValidationError("reduced_state needs a non-empty keep set")
    for x in keep:
        reg.index(x)
    program = _program(scenario, conditions, upto=upto)
    live = _run(scenario, program, keep=keep)
    order = [x for x in reg.labels if x in keep]
    rho = live.density(order)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(reg.subset(keep), rho / np.trace(rho).real)


@dataclass(frozen=True)
class StabilityReport:
    """One total-probability comparison for a fact ``b`` against a partition.

    ``lhs`` is the probability of ``b``; ``rhs`` sums ``P(b and a_i)`` over
    the partition. ``epsilon`` and ``bound`` are present when an environment
    was named and the interference bound applies to ``b``.
    """

    lhs: float
    rhs: float
    deviation: float
    epsilon: float | None = None
    bound: float | None = None
    b_context: str = ""
    partition_context: str = ""
    same_context: bool = False
    terms: tuple[float, ...] = field(default=(), repr=False)

    def as_record(self) -> dict:
        rec = {"lhs": self.lhs, "rhs": self.rhs, "deviation": self.deviation}
        if self.epsilon is not None:
            rec["epsilon"] = self.epsilon
        if self.bound is not None:
            rec["bound"] = self.bound
        rec.update(
            b_context=self.b_context,
            partition_context=self.partition_context,
            same_context=self.same_context,
        )
        return rec


def partition_facts(scenario: Scenario, partition) -> tuple[RelativeFact, ...]:
    """Normalize a partition given as a step, ``(variable, context, step)`` or facts."""
    if isinstance(partition, (int, np.integer)) and not isinstance(partition, bool):
        return scenario.partition(int(partition))
    if isinstance(partition, tuple) and len(partition) == 3 and isinstance(partition[0], Variable):
        variable, context, step = partition
        facts = scenario.partition(step)
        RelativeFact(variable, variable.values[0], context, step).validate(scenario)
        return facts
    facts = tuple(partition)
    if not facts:
        raise ValidationError("empty partition")
    for f in facts:
        if not isinstance(f, RelativeFact):
            raise ValidationError(f"partition entries must be RelativeFact, got {type(f).__name__}")
        f.validate(scenario)
    steps = {f.step for f in facts}
    if len(steps) != 1:
        raise ValidationError(f"partition facts span several steps: {sorted(steps)}")
    values = [f.value for f in facts]
    expected = facts[0].variable.values
    if len(set(values)) != len(values) or set(values) != set(expected):
        raise ValidationError(
            f"incomplete partition: values {values} do not cover {list(expected)} exactly once"
        )
    return facts


def _commutes(inter: Interaction, variable: Variable, registry: SystemRegistry) -> bool:
    if not set(inter.targets) & set(variable.targets):
        return True
    from .tensor import embed

    systems = [x for x in registry.labels if x in set(inter.targets) | set(variable.targets)]
    sub = registry.subset(systems)
    u = embed(inter.unitary, inter.targets, sub)
    tol = tolerances().validation
    for p in variable.projectors:
        pe = embed(p, variable.targets, sub)
        if np.max(np.abs(u @ pe - pe @ u)) > tol:
            return False
    return True


def _interference_bound(
    scenario: Scenario,
    b: RelativeFact,
    partition: Sequence[RelativeFact],
    environment: Sequence[str],
) -> tuple[float, float | None]:
    from .stability import branch_decompose, epsilon_of, stability_bound

    reg = scenario.registry
    env = set(environment)
    for x in env:
        reg.index(x)
    pvar = partition[0].variable
    if env & set(pvar.targets):
        raise ValidationError(f"environment {sorted(env)} overlaps the partition variable")
    step_a = partition[0].step
    upto = scenario.n_steps if b.step == scenario.n_steps else b.step + 1
    keep = reg.complement(env)
    rho = reduced_state(scenario, keep, upto=upto)
    dec = branch_decompose(rho, pvar)
    eps = epsilon_of(dec).epsilon
    applicable = not (env & set(b.variable.targets)) and all(
        _commutes(inter, pvar, reg) for inter in scenario.interactions[step_a + 1 : upto]
    )
    return eps, (stability_bound(dec, eps) if applicable else None)


def total_probability_audit(
    scenario: Scenario,
    b: RelativeFact,
    partition,
    environment: Sequence[str] | None = None,
) -> StabilityReport:
    """Compare ``P(b)`` with ``sum_i P(b and a_i)`` over the partition.

    When ``b`` and the partition share a context the left side is computed
    with the partition step dephased, which makes the two sides equal. When
    the contexts differ the left side is the plain unitary probability of
    ``b`` and the difference is the interference between branches.

    If ``environment`` names systems that ``b`` does not act on, the report
    also carries the branch overlap ``epsilon`` of the partition after
    tracing out the environment, and the interference bound when it applies.
    """
    facts = partition_facts(scenario, partition)
    b.validate(scenario)
    step_a = facts[0].step
    if b.step <= step_a:
        raise ValidationError(f"fact b at step {b.step} must come after the partition at step {step_a}")
    terms = tuple(chain_probability(scenario, [a, b]) for a in facts)
    rhs = math.fsum(terms)
    same = b.context == facts[0].context
    if same:
        try:
            lhs = _run(scenario, _program(scenario, [b], dephase=[step_a])).weight
        except ZeroBranchError:
            lhs = 0.0
    else:
        lhs = chain_probability(scenario, [b])
    lhs = float(min(1.0, max(0.0, lhs)))
    eps = bound = None
    if environment is not None:
        eps, bound = _interference_bound(scenario, b, facts, environment)
    return StabilityReport(
        lhs=lhs,
        rhs=rhs,
        deviation=abs(lhs - rhs),
        epsilon=eps,
        bound=bound,
        b_context=b.context,
        partition_context=facts[0].context,
        same_context=same,
        terms=terms,
    )


@dataclass(frozen=True)
class WitnessResult:
    """``lhs = P(b and (a_1 or ... or a_k))``, ``rhs = sum_i P(b and a_i)``."""

    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def as_record(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "gap": self.gap}


def quantum_logic_witness(scenario: Scenario, b: RelativeFact, *alternatives) -> WitnessResult:
    """Distributivity check for ``b`` against an exhaustive set of alternatives.

    Pass the alternatives as facts, or a single partition spec (a step or a
    ``(variable, context, step)`` triple). Since the alternatives exhaust the
    partition, ``b and (a_1 or ... or a_k)`` is just ``b`` and is evaluated
    without projecting at the partition step.
    """
    if len(alternatives) == 1 and not isinstance(alternatives[0], RelativeFact):
        facts = partition_facts(scenario, alternatives[0])
    else:
        facts = partition_facts(scenario, alternatives)
    b.validate(scenario)
    if b.step <= facts[0].step:
        raise ValidationError(f"fact b at step {b.step} must come after the partition at step {facts[0].step}")
    lhs = chain_probability(scenario, [b])
    rhs = math.fsum(chain_probability(scenario, [a, b]) for a in facts)
    return WitnessResult(lhs, rhs)
