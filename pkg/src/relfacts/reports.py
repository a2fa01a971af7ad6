"""Report plans: declarative descriptions of what to compute on a scenario.

A plan names its facts positionally (``FactRef(step, value)``) so it can be
written to and read from a scenario file. Running a plan gives a flat record
(a dict of numbers, strings and booleans) whose first two keys are the plan's
``name`` and ``kind``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from .errors import ValidationError
from .facts import (
    Query,
    RelativeFact,
    Scenario,
    conditional_probability,
    outcome_probabilities,
    quantum_logic_witness,
    reduced_state,
    total_probability_audit,
)
from .stability import branch_decompose, epsilon_of, eta_report, stability_bound
from .systems import Variable, product_variable


@dataclass(frozen=True)
class FactRef:
    step: int
    value: str

    def resolve(self, scenario: Scenario) -> RelativeFact:
        return scenario.fact(self.step, self.value)


@dataclass(frozen=True)
class View:
    """The first ``steps`` interactions of a scenario with a different final query."""

    steps: int
    query: Query

    def apply(self, scenario: Scenario) -> Scenario:
        if not 0 <= self.steps <= scenario.n_steps:
            raise ValidationError(f"view keeps {self.steps} of {scenario.n_steps} interactions")
        return scenario.truncated(self.steps).with_query(self.query)


def _viewed(scenario: Scenario, view: View | None) -> Scenario:
    return scenario if view is None else view.apply(scenario)


@dataclass(frozen=True)
class ConditionalPlan:
    name: str
    query: FactRef
    conditions: tuple[FactRef, ...]
    view: View | None = None
    kind = "conditional"

    def run(self, scenario: Scenario) -> dict:
        sc = _viewed(scenario, self.view)
        p = conditional_probability(sc, self.query.resolve(sc), [c.resolve(sc) for c in self.conditions])
        return {"probability": p}


@dataclass(frozen=True)
class DistributionPlan:
    """Probability of every value of the fact at ``step``."""

    name: str
    step: int
    view: View | None = None
    kind = "distribution"

    def run(self, scenario: Scenario) -> dict:
        sc = _viewed(scenario, self.view)
        variable, _ = sc.site(self.step)
        upto = None if self.step == sc.n_steps else self.step + 1
        probs = outcome_probabilities(sc, variable, upto=upto)
        return {f"p[{v}]": p for v, p in zip(variable.values, probs)}


@dataclass(frozen=True)
class AuditPlan:
    name: str
    b: FactRef
    partition: int
    environment: tuple[str, ...] | None = None
    view: View | None = None
    kind = "audit"

    def run(self, scenario: Scenario) -> dict:
        sc = _viewed(scenario, self.view)
        report = total_probability_audit(sc, self.b.resolve(sc), self.partition, self.environment)
        return report.as_record()


@dataclass(frozen=True)
class WitnessPlan:
    name: str
    b: FactRef
    partition: int
    view: View | None = None
    kind = "witness"

    def run(self, scenario: Scenario) -> dict:
        sc = _viewed(scenario, self.view)
        return quantum_logic_witness(sc, self.b.resolve(sc), self.partition).as_record()


@dataclass(frozen=True)
class EpsilonPlan:
    """Branch overlap of ``pointer`` after ``upto`` interactions, tracing out ``environment``."""

    name: str
    pointer: Variable
    environment: tuple[str, ...]
    upto: int | None = None
    kind = "epsilon"

    def run(self, scenario: Scenario) -> dict:
        keep = scenario.registry.complement(self.environment)
        rho = reduced_state(scenario, keep, upto=self.upto)
        dec = branch_decompose(rho, self.pointer)
        eps = epsilon_of(dec).epsilon
        return {"epsilon": eps, "bound": stability_bound(dec, eps)}


@dataclass(frozen=True)
class EtaPlan:
    name: str
    pointer: Variable
    environment: tuple[str, ...]
    upto: int | None = None
    kind = "eta"

    def run(self, scenario: Scenario) -> dict:
        keep = scenario.registry.complement(self.environment)
        rho = reduced_state(scenario, keep, upto=self.upto)
        return eta_report(rho, self.pointer).as_record()


@dataclass(frozen=True)
class AgreementPlan:
    """How often a later read of a fact matches the original fact.

    Values are matched by position in each variable's outcome list.
    ``p_match`` is the joint probability that the two agree; ``min_conditional``
    is the smallest ``P(read = i | source = i)`` over source values that occur.
    """

    name: str
    source: int
    read: int
    kind = "agreement"

    def run(self, scenario: Scenario) -> dict:
        src = scenario.partition(self.source)
        read = scenario.partition(self.read)
        if len(src) != len(read):
            raise ValidationError("agreement needs two variables with the same number of outcomes")
        if self.read <= self.source:
            raise ValidationError("the read must come after the source fact")
        read_var = read[0].variable
        upto = None if self.read == scenario.n_steps else self.read + 1
        matches, conds = [], []
        total = 0.0
        for i, a in enumerate(src):
            joint = outcome_probabilities(scenario, read_var, [a], upto=upto)
            p_a = math.fsum(joint)
            total += p_a
            matches.append(joint[i])
            if p_a > 1e-12:
                conds.append(joint[i] / p_a)
        return {"p_match": math.fsum(matches), "min_conditional": min(conds), "total": total}


@dataclass(frozen=True)
class ChshSetting:
    """One measurement choice: optionally undo the friend's interaction, then read ``variable``."""

    undo: bool
    variable: Variable


@dataclass(frozen=True)
class ChshParty:
    friend_step: int
    settings: tuple[ChshSetting, ChshSetting]


def _sign(i: int) -> float:
    return 1.0 if i == 0 else -1.0


def chsh_value(e: Sequence[Sequence[float]]) -> float:
    """Largest ``|E00 + E01 + E10 + E11 - 2 E_xy|`` over the four placements of the minus sign."""
    total = e[0][0] + e[0][1] + e[1][0] + e[1][1]
    return max(abs(total - 2 * e[x][y]) for x in (0, 1) for y in (0, 1))


@dataclass(frozen=True)
class ChshPlan:
    """CHSH value for two superobservers, each with a friend, computed two ways.

    ``quantum`` evolves everything unitarily up to the joint final reading.
    ``absoluteness`` treats both friends' facts as facts for everyone: the
    correlators are averaged over the friends' outcomes, projecting at the
    friends' steps.
    """

    name: str
    parties: tuple[ChshParty, ChshParty]
    context: str
    kind = "chsh"

    def correlators(self, scenario: Scenario) -> tuple[list[list[float]], list[list[float]]]:
        pa, pb = self.parties
        quantum = [[0.0, 0.0], [0.0, 0.0]]
        absolute = [[0.0, 0.0], [0.0, 0.0]]
        fa = scenario.partition(pa.friend_step)
        fb = scenario.partition(pb.friend_step)
        for x, sa in enumerate(pa.settings):
            for y, sb in enumerate(pb.settings):
                extra = []
                if sa.undo:
                    extra.append(scenario.interactions[pa.friend_step].inverse())
                if sb.undo:
                    extra.append(scenario.interactions[pb.friend_step].inverse())
                joint = product_variable(sa.variable, sb.variable)
                variant = scenario.extended(extra, Query(joint, self.context))
                nb = len(sb.variable.values)
                signs = [_sign(k // nb) * _sign(k % nb) for k in range(len(joint.values))]
                probs = outcome_probabilities(variant, joint)
                quantum[x][y] = math.fsum(s * p for s, p in zip(signs, probs))
                acc = []
                for a in fa:
                    for b in fb:
                        probs = outcome_probabilities(variant, joint, [a, b])
                        acc.extend(s * p for s, p in zip(signs, probs))
                absolute[x][y] = math.fsum(acc)
        return quantum, absolute

    def run(self, scenario: Scenario) -> dict:
        quantum, absolute = self.correlators(scenario)
        rec = {"quantum": chsh_value(quantum), "absoluteness": chsh_value(absolute)}
        for x in (0, 1):
            for y in (0, 1):
                rec[f"quantum_E{x + 1}{y + 1}"] = quantum[x][y]
        for x in (0, 1):
            for y in (0, 1):
                rec[f"absolute_E{x + 1}{y + 1}"] = absolute[x][y]
        return rec


Plan = (
    ConditionalPlan
    | DistributionPlan
    | AuditPlan
    | WitnessPlan
    | EpsilonPlan
    | EtaPlan
    | AgreementPlan
    | ChshPlan
)


def execute(scenario: Scenario, plan) -> dict:
    """Run one plan; the record starts with ``name`` and ``kind``."""
    record = {"name": plan.name, "kind": plan.kind}
    record.update(plan.run(scenario))
    return record


def execute_all(scenario: Scenario, plans: Sequence) -> list[dict]:
    return [execute(scenario, p) for p in plans]
