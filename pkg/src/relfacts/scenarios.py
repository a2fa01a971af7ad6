"""Built-in scenarios, each with a report plan.

Every builder returns a :class:`NamedScenario`. The names and parameter
schemas in :data:`CATALOG` are the command-line vocabulary.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .facts import Query, Scenario
from .registry import SystemRegistry
from .reports import (
    AgreementPlan,
    AuditPlan,
    ChshParty,
    ChshPlan,
    ChshSetting,
    ConditionalPlan,
    DistributionPlan,
    EpsilonPlan,
    EtaPlan,
    FactRef,
    View,
    WitnessPlan,
    execute_all,
)
from .decoherence import EnvironmentModel, env_labels
from .systems import (
    bell_variable,
    computational_variable,
    controlled_coupling,
    premeasurement_unitary,
    spin_basis,
    spin_variable,
    unitary_interaction,
)


@dataclass(frozen=True, eq=False)
class NamedScenario:
    name: str
    parameters: dict
    scenario: Scenario
    report_plan: tuple = ()

    def run(self) -> list[dict]:
        return execute_all(self.scenario, self.report_plan)


@dataclass(frozen=True)
class Param:
    name: str
    kind: type  # int or float
    default: float | int
    description: str
    minimum: float | None = None


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    builder: Callable[..., NamedScenario]
    params: tuple[Param, ...] = field(default=())

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        known = ", ".join(p.name for p in self.params) or "none"
        raise ValidationError(f"scenario {self.name!r} has no parameter {name!r} (parameters: {known})")

    def coerce(self, name: str, value) -> float | int:
        p = self.param(name)
        try:
            if p.kind is int:
                if isinstance(value, str):
                    out = int(value)
                else:
                    if float(value) != int(value):
                        raise ValueError
                    out = int(value)
            else:
                out = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"parameter {name!r} expects {p.kind.__name__}, got {value!r}") from None
        if p.kind is float and not math.isfinite(out):
            raise ValidationError(f"parameter {name!r} must be finite, got {value!r}")
        if p.minimum is not None and out < p.minimum:
            raise ValidationError(f"parameter {name!r} must be >= {p.minimum}, got {out}")
        return out

    def build(self, overrides: Mapping[str, object] | None = None) -> NamedScenario:
        values = {p.name: p.default for p in self.params}
        for k, v in (overrides or {}).items():
            values[k] = self.coerce(k, v)
        return self.builder(**values)


def _check_angle(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return float(value)


def spin_measurement(theta: float = math.pi / 3) -> NamedScenario:
    """Spin measured along z, then along an axis at ``theta`` from z.

    The spin starts in ``|+>`` so that both z outcomes occur. The report is
    ``P(up along theta | up along z) = cos^2(theta / 2)``.
    """
    theta = _check_angle("theta", theta)
    if not 0.0 <= theta < 2 * math.pi:
        raise ValidationError(f"theta must lie in [0, 2*pi), got {theta!r}")
    reg = SystemRegistry.of(("S", 2, "S"), ("F1", 2, "F"), ("F2", 2, "F"))
    lz = spin_variable("S", 0.0, label="L_z")
    lt = spin_variable("S", theta, label="L_theta")
    scenario = Scenario(
        reg,
        {"S": spin_basis(math.pi / 2)[0]},
        (premeasurement_unitary(lz, "F1", reg), premeasurement_unitary(lt, "F2", reg)),
    )
    plan = (ConditionalPlan("conditional", FactRef(1, "up"), (FactRef(0, "up"),)),)
    return NamedScenario("spin", {"theta": theta}, scenario, plan)


def wigners_friend(alpha: float = math.pi / 2) -> NamedScenario:
    """Friend F premeasures S's z spin; W then asks whether S and F are in the Bell state.

    ``alpha`` sets S's preparation ``cos(alpha/2)|0> + sin(alpha/2)|1>``;
    the default gives ``|+>``, ``alpha = 0`` an eigenstate.
    """
    alpha = _check_angle("alpha", alpha)
    reg = SystemRegistry.of(("S", 2, "S"), ("F", 2, "F"), ("W", 2, "W"))
    scenario = Scenario(
        reg,
        {"S": spin_basis(alpha)[0]},
        (premeasurement_unitary(computational_variable("S", label="Z_S"), "F", reg),),
        Query(bell_variable("S", "F"), "W"),
    )
    plan = (
        AuditPlan("audit", FactRef(1, "phi+"), 0),
        WitnessPlan("witness", FactRef(1, "phi+"), 0),
    )
    return NamedScenario("wigners-friend", {"alpha": alpha}, scenario, plan)


def measurement_pipeline(
    n_env: int = 3,
    phi: float = math.pi / 4,
    alpha: float = math.pi / 2,
    phi_spread: float = 0.0,
    seed: int = 0,
) -> NamedScenario:
    """Premeasurement, environment couplings, then W reads the pointer.

    Stage 1 premeasures S's z spin onto F, stage 2 couples F to ``n_env``
    environment qubits, stage 3 copies F's pointer onto W. With
    ``phi_spread > 0`` each coupling angle is drawn uniformly from
    ``[phi - phi_spread, phi + phi_spread]`` using ``seed``.

    Reports: F's branch overlap after stage 2, the audit of a Bell-state
    question about S and F asked before stage 3, and how often W's read
    agrees with F's fact.
    """
    if n_env < 0:
        raise ValidationError(f"n_env must be nonnegative, got {n_env}")
    phi = _check_angle("phi", phi)
    alpha = _check_angle("alpha", alpha)
    if phi_spread < 0:
        raise ValidationError(f"phi_spread must be nonnegative, got {phi_spread}")
    if phi_spread > 0:
        model = EnvironmentModel(n_env, phi=None, phi_range=(phi - phi_spread, phi + phi_spread), seed=seed)
    else:
        model = EnvironmentModel(n_env, phi=phi, seed=seed)
    env = env_labels(n_env)
    reg = SystemRegistry.of(("S", 2, "S"), ("F", 2, "F"), *[(e, 2, "E") for e in env], ("W", 2, "W"))
    pointer = computational_variable("F", label="Z_F")
    inters = [premeasurement_unitary(computational_variable("S", label="Z_S"), "F", reg)]
    inters += [controlled_coupling(pointer, e, a, reg) for e, a in zip(env, model.angles)]
    inters.append(premeasurement_unitary(pointer, "W", reg))
    scenario = Scenario(reg, {"S": spin_basis(alpha)[0]}, tuple(inters))
    stage2 = 1 + n_env
    plan = (
        EpsilonPlan("epsilon", pointer, env, upto=stage2),
        AuditPlan(
            "audit",
            FactRef(stage2, "phi+"),
            0,
            environment=env,
            view=View(stage2, Query(bell_variable("S", "F"), "W")),
        ),
        AgreementPlan("agreement", 0, stage2),
    )
    params = {"n_env": n_env, "phi": phi, "alpha": alpha, "phi_spread": phi_spread, "seed": seed}
    return NamedScenario("pipeline", params, scenario, plan)


def ewfs_chsh(
    a1: float = 0.0,
    a2: float = math.pi / 2,
    b1: float = math.pi / 4,
    b2: float = 3 * math.pi / 4,
) -> NamedScenario:
    """Two friends share a singlet; two superobservers each pick one of two settings.

    Friend ``F1`` premeasures ``S1``'s spin along ``a1`` and ``F2`` premeasures
    ``S2`` along ``b1``. Setting 1 of a superobserver reads the friend's
    pointer; setting 2 undoes the friend's premeasurement and measures the
    spin along ``a2`` (or ``b2``).
    """
    a1, a2, b1, b2 = (_check_angle(n, v) for n, v in (("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2)))
    reg = SystemRegistry.of(
        ("S1", 2, "S"), ("S2", 2, "S"), ("F1", 2, "F"), ("F2", 2, "F"), ("W", 2, "W")
    )
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    scenario = Scenario(
        reg,
        {("S1", "S2"): singlet},
        (
            premeasurement_unitary(spin_variable("S1", a1, label="L_a1"), "F1", reg),
            premeasurement_unitary(spin_variable("S2", b1, label="L_b1"), "F2", reg),
        ),
    )
    party_a = ChshParty(
        0,
        (
            ChshSetting(False, computational_variable("F1", label="Z_F1")),
            ChshSetting(True, spin_variable("S1", a2, label="L_a2")),
        ),
    )
    party_b = ChshParty(
        1,
        (
            ChshSetting(False, computational_variable("F2", label="Z_F2")),
            ChshSetting(True, spin_variable("S2", b2, label="L_b2")),
        ),
    )
    plan = (ChshPlan("chsh", (party_a, party_b), "W"),)
    return NamedScenario("ewfs-chsh", {"a1": a1, "a2": a2, "b1": b1, "b2": b2}, scenario, plan)


def frauchiger_renner_structure(
    alpha: float = math.pi / 2, n_env: int = 0, phi: float = math.pi / 4
) -> NamedScenario:
    """F learns S's z value; W, with inverse access to F, undoes that and measures S along x.

    A prediction that treats F's fact as a fact for W (condition on it, then
    evolve) is compared with the unitary prediction. With ``n_env`` coupled
    environment qubits the two agree up to the interference bound.
    """
    alpha = _check_angle("alpha", alpha)
    phi = _check_angle("phi", phi)
    if n_env < 0:
        raise ValidationError(f"n_env must be nonnegative, got {n_env}")
    env = env_labels(n_env)
    reg = SystemRegistry.of(("S", 2, "S"), ("F", 2, "F"), *[(e, 2, "E") for e in env], ("W", 2, "W"))
    pointer = computational_variable("F", label="Z_F")
    pre = premeasurement_unitary(computational_variable("S", label="Z_S"), "F", reg)
    inters = [pre]
    inters += [controlled_coupling(pointer, e, phi, reg) for e in env]
    inters.append(unitary_interaction("undo:F", pre.targets, pre.unitary.conj().T, reg))
    x_s = spin_variable("S", math.pi / 2, label="X_S")
    scenario = Scenario(reg, {"S": spin_basis(alpha)[0]}, tuple(inters), Query(x_s, "W"))
    b = FactRef(len(inters), "up")
    plan = (
        DistributionPlan("friend", 0),
        AuditPlan("probe", b, 0, environment=env),
        EtaPlan("eta", pointer, env, upto=1 + n_env),
    )
    return NamedScenario("fr-structure", {"alpha": alpha, "n_env": n_env, "phi": phi}, scenario, plan)


CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in (
        CatalogEntry(
            "spin",
            "sequential z then theta spin measurements; conditional probability",
            spin_measurement,
            (Param("theta", float, math.pi / 3, "angle of the second axis from z (radians)", 0.0),),
        ),
        CatalogEntry(
            "wigners-friend",
            "friend premeasures S; W probes the S-F Bell state",
            wigners_friend,
            (Param("alpha", float, math.pi / 2, "preparation angle of S (radians)"),),
        ),
        CatalogEntry(
            "pipeline",
            "premeasurement, environment couplings, W reads the pointer",
            measurement_pipeline,
            (
                Param("n_env", int, 3, "number of environment qubits", 0),
                Param("phi", float, math.pi / 4, "coupling angle (radians)"),
                Param("alpha", float, math.pi / 2, "preparation angle of S (radians)"),
                Param("phi_spread", float, 0.0, "half-width of random coupling angles", 0.0),
                Param("seed", int, 0, "seed for random coupling angles"),
            ),
        ),
        CatalogEntry(
            "ewfs-chsh",
            "two friends on a singlet; CHSH value, unitary vs. absolute facts",
            ewfs_chsh,
            (
                Param("a1", float, 0.0, "first setting of party A (radians)"),
                Param("a2", float, math.pi / 2, "second setting of party A (radians)"),
                Param("b1", float, math.pi / 4, "first setting of party B (radians)"),
                Param("b2", float, 3 * math.pi / 4, "second setting of party B (radians)"),
            ),
        ),
        CatalogEntry(
            "fr-structure",
            "friend's fact used by W who can undo the friend",
            frauchiger_renner_structure,
            (
                Param("alpha", float, math.pi / 2, "preparation angle of S (radians)"),
                Param("n_env", int, 0, "number of environment qubits", 0),
                Param("phi", float, math.pi / 4, "coupling angle (radians)"),
            ),
        ),
    )
}


def get(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r} (known: {', '.join(CATALOG)})") from None


def build(name: str, **overrides) -> NamedScenario:
    return get(name).build(overrides)
