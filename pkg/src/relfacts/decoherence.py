"""Environment models and sweeps over environment size.

The reference setup is a qubit ``S`` prepared in ``cos(a/2)|0> + sin(a/2)|1>``,
premeasured by a pointer qubit ``F``, after which ``F`` is coupled to ``n``
environment qubits one at a time (one coupling per environment qubit). A
further system ``W`` then asks for the Bell-state projector on ``S`` and
``F``, the measurement most sensitive to interference between ``F``'s
branches. The environment size ``n`` plays the role of elapsed time.

With a uniform coupling angle ``phi`` the environment branch overlap is
``cos(phi)**n``, so ``epsilon(n) = cos(phi)**(2n)``.
"""

from __future__ import annotations

import contextvars
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NoConvergenceError, ValidationError
from .facts import Query, Scenario, StabilityReport, reduced_state, total_probability_audit
from .registry import SystemRegistry
from .stability import branch_decompose, epsilon_of
from .systems import (
    Interaction,
    Variable,
    bell_variable,
    computational_variable,
    controlled_coupling,
    premeasurement_unitary,
    spin_basis,
)


@dataclass(frozen=True)
class EnvironmentModel:
    """Coupling angles for ``n_qubits`` environment qubits.

    Either a fixed angle ``phi`` or a uniform range ``phi_range`` sampled with
    ``seed``. Sampled angles are prefix-consistent: the first ``k`` angles do
    not depend on how many are drawn.
    """

    n_qubits: int = 0
    phi: float | None = math.pi / 4
    phi_range: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.n_qubits, bool) or not isinstance(self.n_qubits, int) or self.n_qubits < 0:
            raise ValidationError(f"n_qubits must be a nonnegative integer, got {self.n_qubits!r}")
        if (self.phi is None) == (self.phi_range is None):
            raise ValidationError("give exactly one of phi or phi_range")
        if self.phi_range is not None:
            lo, hi = self.phi_range
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValidationError(f"phi_range must be a finite (min, max) pair, got {self.phi_range!r}")
        elif not math.isfinite(self.phi):
            raise ValidationError(f"phi must be finite, got {self.phi!r}")

    def angles_for(self, n: int) -> tuple[float, ...]:
        if n < 0:
            raise ValidationError(f"environment size must be nonnegative, got {n}")
        if self.phi is not None:
            return (float(self.phi),) * n
        lo, hi = self.phi_range
        rng = np.random.default_rng(self.seed)
        return tuple(float(x) for x in rng.uniform(lo, hi, size=n))

    @property
    def angles(self) -> tuple[float, ...]:
        return self.angles_for(self.n_qubits)

    def resized(self, n: int) -> EnvironmentModel:
        return EnvironmentModel(n, self.phi, self.phi_range, self.seed)


def env_labels(n: int) -> tuple[str, ...]:
    return tuple(f"E{k}" for k in range(1, n + 1))


def build_environment(
    model: EnvironmentModel,
    registry: SystemRegistry,
    pointer: Variable,
    env: Sequence[str] | None = None,
) -> list[Interaction]:
    """One controlled coupling from ``pointer`` to each environment qubit.

    ``env`` defaults to the registry's systems with role ``E``, in order.
    """
    env = registry.with_role("E") if env is None else tuple(env)
    if len(env) < model.n_qubits:
        raise ValidationError(
            f"registry has {len(env)} environment qubit(s), model needs {model.n_qubits}"
        )
    return [
        controlled_coupling(pointer, e, phi, registry)
        for e, phi in zip(env[: model.n_qubits], model.angles)
    ]


@dataclass(frozen=True)
class DecoherenceTemplate:
    """Builds the reference setup for a given list of coupling angles."""

    alpha: float = math.pi / 2

    def registry(self, n: int) -> SystemRegistry:
        entries = [("S", 2, "S"), ("F", 2, "F")]
        entries += [(e, 2, "E") for e in env_labels(n)]
        entries.append(("W", 2, "W"))
        return SystemRegistry.of(*entries)

    def build(self, angles: Sequence[float], extra: Iterable[Interaction] = ()) -> Scenario:
        """Scenario for ``len(angles)`` couplings, then ``extra``, then W's Bell query."""
        n = len(angles)
        reg = self.registry(n)
        pointer = computational_variable("F", label="Z_F")
        inters = [premeasurement_unitary(computational_variable("S", label="Z_S"), "F", reg)]
        inters += [controlled_coupling(pointer, e, phi, reg) for e, phi in zip(env_labels(n), angles)]
        inters += list(extra)
        query = Query(bell_variable("S", "F"), "W")
        return Scenario(reg, {"S": spin_basis(self.alpha)[0]}, tuple(inters), query)

    @staticmethod
    def pointer() -> Variable:
        return computational_variable("F", label="Z_F")

    def audit(self, scenario: Scenario, n: int) -> StabilityReport:
        b = scenario.fact(scenario.n_steps, "phi+")
        return total_probability_audit(scenario, b, 0, environment=env_labels(n))

    def epsilon(self, angles: Sequence[float]) -> float:
        """Branch overlap of F after the couplings, from the reduced state of S, F, W."""
        n = len(angles)
        scenario = self.build(angles)
        rho = reduced_state(scenario, ("S", "F", "W"), upto=1 + n)
        return epsilon_of(branch_decompose(rho, self.pointer())).epsilon


@dataclass(frozen=True)
class SweepRow:
    n: int
    epsilon: float
    bound: float
    deviation: float

    def as_record(self) -> dict:
        return {"n": self.n, "epsilon": self.epsilon, "bound": self.bound, "deviation": self.deviation}


def _row(template: DecoherenceTemplate, model: EnvironmentModel, n: int) -> SweepRow:
    try:
        scenario = template.build(model.angles_for(n))
        report = template.audit(scenario, n)
    except CapacityError as exc:
        raise CapacityError(f"environment size n={n}: {exc}") from exc
    return SweepRow(n, report.epsilon, report.bound, report.deviation)


def epsilon_sweep(
    template: DecoherenceTemplate,
    n_values: Iterable[int],
    model: EnvironmentModel,
    workers: int = 1,
) -> list[SweepRow]:
    """``epsilon``, interference bound and Bell-audit deviation for each size.

    Rows come back in ascending ``n`` whatever the completion order.
    """
    ns = sorted({int(n) for n in n_values})
    if any(n < 0 for n in ns):
        raise ValidationError("environment sizes must be nonnegative")
    if workers <= 1 or len(ns) <= 1:
        return [_row(template, model, n) for n in ns]
    # tolerance overrides live in a context variable that threads do not inherit
    ctx = contextvars.copy_context()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda n: ctx.copy().run(_row, template, model, n), ns))


def decoherence_threshold(
    template: DecoherenceTemplate,
    model: EnvironmentModel,
    tau: float,
    n_max: int = 4096,
) -> int:
    """Smallest environment size with ``epsilon < tau``.

    Doubles ``n`` until the threshold is crossed, then bisects. Each probe
    computes ``epsilon`` from the evolved state, not from a closed form.

    Raises:
        NoConvergenceError: ``epsilon`` stops decreasing, or ``n_max`` is hit.
    """
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {tau!r}")
    cache: dict[int, float] = {}

    def eps(n: int) -> float:
        if n not in cache:
            cache[n] = template.epsilon(model.angles_for(n))
        return cache[n]

    if eps(0) < tau:
        return 0
    lo, hi = 0, 1
    while eps(hi) >= tau:
        if eps(hi) >= eps(lo):
            raise NoConvergenceError(
                f"epsilon does not decrease between n={lo} and n={hi} ({eps(lo):.6g} -> {eps(hi):.6g})"
            )
        if hi >= n_max:
            raise NoConvergenceError(f"epsilon still {eps(hi):.6g} >= {tau} at n_max={n_max}")
        lo, hi = hi, min(2 * hi, n_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if eps(mid) < tau:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RelationalCheck:
    """Bell-audit deviations seen by an observer blind to the environment and by one probing it."""

    blind: float
    probing: float
    bound: float
    baseline: float
    epsilon: float

    def as_record(self) -> dict:
        return {
            "deviation_blind": self.blind,
            "deviation_probing": self.probing,
            "bound": self.bound,
            "baseline": self.baseline,
            "epsilon": self.epsilon,
        }


def relational_check(template: DecoherenceTemplate, model: EnvironmentModel) -> RelationalCheck:
    """Compare a blind observer with one who first undoes the environment couplings."""
    n = model.n_qubits
    angles = model.angles
    blind_scenario = template.build(angles)
    blind = template.audit(blind_scenario, n)
    couplings = blind_scenario.interactions[1 : 1 + n]
    undo = [c.inverse() for c in reversed(couplings)]
    probing_scenario = template.build(angles, extra=undo)
    probing = template.audit(probing_scenario, n)
    baseline = template.audit(template.build(()), 0)
    return RelationalCheck(blind.deviation, probing.deviation, blind.bound, baseline.deviation, blind.epsilon)
