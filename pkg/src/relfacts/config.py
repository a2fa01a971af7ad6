"""Scenario files: a JSON description of systems, state, interactions and reports.

Layout (all keys other than ``systems`` optional)::

    {
      "format": "relfacts/scenario-1",
      "name": "my-scenario",
      "parameters": {"theta": 1.0},
      "systems": [{"label": "S", "dim": 2, "role": "S"}, ...],
      "variables": [
        {"label": "Z_S", "targets": ["S"],
         "outcomes": [{"value": "0", "projector": [[1, 0], [0, 0], [0, 0], [0, 0]]}, ...]},
        {"label": "L", "preset": "spin", "target": "S", "theta": 0.5},
        ...
      ],
      "initial_state": [{"systems": ["S"], "preset": "plus"}, ...],
      "interactions": [
        {"type": "premeasure", "variable": "Z_S", "pointer": "F"},
        {"type": "couple", "pointer": "Z_F", "env": "E1", "angle": 0.785},
        {"type": "unitary", "targets": ["S"], "matrix": [[re, im], ...]},
        ...
      ],
      "final_query": {"variable": "Bell", "context": "W"},
      "reports": [{"kind": "audit", "name": "audit", "b": {"step": 1, "value": "phi+"}, "partition": 0}, ...]
    }

Matrices and amplitudes are flat row-major lists of ``[re, im]`` pairs, with
the first listed system most significant. ``initial_state`` may also be one of
the strings ``"zero"`` or ``"|0…0⟩"``. Variable presets are ``computational``
(``target``, optional ``dim``), ``spin`` (``target``, ``theta``) and ``bell``
(``targets``). State presets are ``zero``, ``plus``, ``bell`` and
``singlet``.

Exported files always spell out projectors, amplitudes and unitary matrices,
so a scenario re-read from its own export computes the same numbers.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .facts import Query, Scenario, StateFactor
from .registry import System, SystemRegistry
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
)
from .scenarios import NamedScenario
from .systems import (
    Interaction,
    Variable,
    bell_variable,
    computational_variable,
    controlled_coupling,
    premeasurement_unitary,
    spin_variable,
)
from .tensor import from_pairs, to_pairs

FORMAT = "relfacts/scenario-1"
ZERO_PRESETS = ("zero", "|0…0⟩", "|0...0>")


def _keys(obj, where: str, required: Iterable[str] = (), optional: Iterable[str] = ()) -> dict:
    if not isinstance(obj, Mapping):
        raise ValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    required, optional = set(required), set(optional)
    missing = sorted(required - set(obj))
    if missing:
        raise ValidationError(f"{where}: missing key(s) {', '.join(missing)}")
    unknown = sorted(set(obj) - required - optional)
    if unknown:
        raise ValidationError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return dict(obj)


def _str_list(value, where: str) -> tuple[str, ...]:
    if isinstance(value, str) or not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ValidationError(f"{where}: expected a list of system labels")
    return tuple(value)


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{where}: expected an integer, got {value!r}")
    return value


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


# -- reading -----------------------------------------------------------------


def _state_preset(name: str, dims: tuple[int, ...], where: str) -> np.ndarray:
    d = math.prod(dims)
    if name in ZERO_PRESETS:
        out = np.zeros(d, dtype=complex)
        out[0] = 1.0
        return out
    if name == "plus":
        return np.ones(d, dtype=complex) / math.sqrt(d)
    if name in ("bell", "singlet"):
        if dims != (2, 2):
            raise ValidationError(f"{where}: preset {name!r} needs two qubits, got dims {dims}")
        vec = [1, 0, 0, 1] if name == "bell" else [0, 1, -1, 0]
        return np.array(vec, dtype=complex) / math.sqrt(2)
    raise ValidationError(f"{where}: unknown state preset {name!r}")


def _read_initial(doc, registry: SystemRegistry) -> list[StateFactor]:
    if doc is None:
        return []
    if isinstance(doc, str):
        if doc not in ZERO_PRESETS:
            raise ValidationError(f"initial_state: unknown preset {doc!r}")
        return []
    if not isinstance(doc, list):
        raise ValidationError("initial_state: expected a list of factors or a preset name")
    out = []
    for k, item in enumerate(doc):
        where = f"initial_state[{k}]"
        item = _keys(item, where, ["systems"], ["preset", "amplitudes"])
        systems = _str_list(item["systems"], where)
        dims = registry.dims_of(registry.check_targets(systems))
        if ("preset" in item) == ("amplitudes" in item):
            raise ValidationError(f"{where}: give exactly one of preset or amplitudes")
        if "preset" in item:
            amps = _state_preset(item["preset"], dims, where)
        else:
            amps = from_pairs(item["amplitudes"])
        out.append(StateFactor(systems, amps))
    return out


def _read_variable(doc, registry: SystemRegistry, k: int) -> Variable:
    where = f"variables[{k}]"
    if not isinstance(doc, Mapping):
        raise ValidationError(f"{where}: expected an object")
    if "preset" in doc:
        preset = doc["preset"]
        if preset == "computational":
            d = _keys(doc, where, ["label", "preset", "target"], ["dim"])
            var = computational_variable(d["target"], _int(d.get("dim", 2), where), label=d["label"])
        elif preset == "spin":
            d = _keys(doc, where, ["label", "preset", "target", "theta"])
            var = spin_variable(d["target"], _num(d["theta"], where), label=d["label"])
        elif preset == "bell":
            d = _keys(doc, where, ["label", "preset", "targets"])
            first, second = _str_list(d["targets"], where)
            var = bell_variable(first, second, label=d["label"])
        else:
            raise ValidationError(f"{where}: unknown variable preset {preset!r}")
    else:
        d = _keys(doc, where, ["label", "targets", "outcomes"])
        targets = _str_list(d["targets"], where)
        dim = math.prod(registry.dims_of(registry.check_targets(targets)))
        outcomes = []
        if not isinstance(d["outcomes"], list):
            raise ValidationError(f"{where}: outcomes must be a list")
        for j, o in enumerate(d["outcomes"]):
            o = _keys(o, f"{where}.outcomes[{j}]", ["value", "projector"])
            outcomes.append((str(o["value"]), from_pairs(o["projector"], (dim, dim))))
        var = Variable(str(d["label"]), targets, tuple(outcomes))
    var.check(registry)
    return var


class _Lookup:
    def __init__(self, variables: dict[str, Variable]):
        self.variables = variables

    def __call__(self, label, where: str) -> Variable:
        if not isinstance(label, str) or label not in self.variables:
            raise ValidationError(f"{where}: unknown variable {label!r}")
        return self.variables[label]


def _read_interaction(doc, registry: SystemRegistry, var: _Lookup, k: int) -> Interaction:
    where = f"interactions[{k}]"
    if not isinstance(doc, Mapping) or "type" not in doc:
        raise ValidationError(f"{where}: expected an object with a type")
    kind = doc["type"]
    if kind == "premeasure":
        d = _keys(doc, where, ["type", "variable", "pointer"], ["label"])
        return premeasurement_unitary(var(d["variable"], where), d["pointer"], registry, label=d.get("label"))
    if kind == "couple":
        d = _keys(doc, where, ["type", "pointer", "env", "angle"], ["label"])
        return controlled_coupling(
            var(d["pointer"], where), d["env"], _num(d["angle"], where), registry, label=d.get("label")
        )
    if kind == "unitary":
        d = _keys(doc, where, ["type", "targets", "matrix"], ["label", "fact_context", "fact_variable"])
        targets = _str_list(d["targets"], where)
        dim = math.prod(registry.dims_of(registry.check_targets(targets)))
        fv = var(d["fact_variable"], where) if d.get("fact_variable") is not None else None
        inter = Interaction(
            d.get("label") or f"unitary[{k}]",
            targets,
            from_pairs(d["matrix"], (dim, dim)),
            d.get("fact_context"),
            fv,
        )
        inter.check(registry)
        return inter
    raise ValidationError(f"{where}: unknown interaction type {kind!r} (premeasure, couple, unitary)")


def _read_fact(doc, where: str) -> FactRef:
    d = _keys(doc, where, ["step", "value"])
    return FactRef(_int(d["step"], where), str(d["value"]))


def _read_query(doc, var: _Lookup, where: str) -> Query:
    d = _keys(doc, where, ["variable", "context"])
    return Query(var(d["variable"], where), d["context"])


def _read_view(doc, var: _Lookup, where: str) -> View | None:
    if doc is None:
        return None
    d = _keys(doc, where, ["steps", "query"])
    return View(_int(d["steps"], where), _read_query(d["query"], var, where + ".query"))


def _env(value, where: str) -> tuple[str, ...] | None:
    return None if value is None else _str_list(value, where)


def _read_plan(doc, var: _Lookup, k: int):
    where = f"reports[{k}]"
    if not isinstance(doc, Mapping) or "kind" not in doc:
        raise ValidationError(f"{where}: expected an object with a kind")
    kind = doc["kind"]
    name = str(doc.get("name", kind))
    if kind == "conditional":
        d = _keys(doc, where, ["kind", "query", "conditions"], ["name", "view"])
        conds = d["conditions"]
        if not isinstance(conds, list):
            raise ValidationError(f"{where}: conditions must be a list")
        return ConditionalPlan(
            name,
            _read_fact(d["query"], where + ".query"),
            tuple(_read_fact(c, f"{where}.conditions[{j}]") for j, c in enumerate(conds)),
            _read_view(d.get("view"), var, where + ".view"),
        )
    if kind == "distribution":
        d = _keys(doc, where, ["kind", "step"], ["name", "view"])
        return DistributionPlan(name, _int(d["step"], where), _read_view(d.get("view"), var, where + ".view"))
    if kind in ("audit", "witness"):
        opt = ["name", "view"] + (["environment"] if kind == "audit" else [])
        d = _keys(doc, where, ["kind", "b", "partition"], opt)
        b = _read_fact(d["b"], where + ".b")
        view = _read_view(d.get("view"), var, where + ".view")
        if kind == "audit":
            return AuditPlan(name, b, _int(d["partition"], where), _env(d.get("environment"), where), view)
        return WitnessPlan(name, b, _int(d["partition"], where), view)
    if kind in ("epsilon", "eta"):
        d = _keys(doc, where, ["kind", "pointer", "environment"], ["name", "upto"])
        upto = d.get("upto")
        upto = None if upto is None else _int(upto, where)
        cls = EpsilonPlan if kind == "epsilon" else EtaPlan
        return cls(name, var(d["pointer"], where), _str_list(d["environment"], where), upto)
    if kind == "agreement":
        d = _keys(doc, where, ["kind", "source", "read"], ["name"])
        return AgreementPlan(name, _int(d["source"], where), _int(d["read"], where))
    if kind == "chsh":
        d = _keys(doc, where, ["kind", "parties", "context"], ["name"])
        parties = d["parties"]
        if not isinstance(parties, list) or len(parties) != 2:
            raise ValidationError(f"{where}: chsh needs exactly two parties")
        out = []
        for j, p in enumerate(parties):
            pw = f"{where}.parties[{j}]"
            p = _keys(p, pw, ["friend_step", "settings"])
            settings = p["settings"]
            if not isinstance(settings, list) or len(settings) != 2:
                raise ValidationError(f"{pw}: needs exactly two settings")
            sets = []
            for i, s in enumerate(settings):
                s = _keys(s, f"{pw}.settings[{i}]", ["undo", "variable"])
                if not isinstance(s["undo"], bool):
                    raise ValidationError(f"{pw}.settings[{i}]: undo must be true or false")
                sets.append(ChshSetting(s["undo"], var(s["variable"], pw)))
            out.append(ChshParty(_int(p["friend_step"], pw), tuple(sets)))
        return ChshPlan(name, tuple(out), d["context"])
    raise ValidationError(
        f"{where}: unknown report kind {kind!r} "
        "(audit, witness, epsilon, eta, chsh, conditional, distribution, agreement)"
    )


def _check_plan(plan, scenario: Scenario, where: str) -> None:
    """Resolve every reference in ``plan`` against ``scenario`` before running anything."""
    reg = scenario.registry
    sc = plan.view.apply(scenario) if getattr(plan, "view", None) is not None else scenario
    if isinstance(plan, ConditionalPlan):
        for f in (plan.query, *plan.conditions):
            f.resolve(sc)
    elif isinstance(plan, DistributionPlan):
        sc.site(plan.step)
    elif isinstance(plan, (AuditPlan, WitnessPlan)):
        plan.b.resolve(sc)
        sc.site(plan.partition)
        for x in getattr(plan, "environment", None) or ():
            reg.index(x)
    elif isinstance(plan, (EpsilonPlan, EtaPlan)):
        for x in plan.environment:
            reg.index(x)
        if plan.upto is not None and not 0 <= plan.upto <= scenario.n_steps:
            raise ValidationError(f"{where}: upto {plan.upto} outside 0..{scenario.n_steps}")
    elif isinstance(plan, AgreementPlan):
        sc.site(plan.source)
        sc.site(plan.read)
    elif isinstance(plan, ChshPlan):
        reg.index(plan.context)
        for party in plan.parties:
            sc.site(party.friend_step)
            for s in party.settings:
                s.variable.check(reg)


def from_dict(doc) -> NamedScenario:
    """Build a scenario and its report plan from a parsed scenario file."""
    doc = _keys(
        doc,
        "scenario file",
        ["systems"],
        ["format", "name", "parameters", "variables", "initial_state", "interactions", "final_query", "reports"],
    )
    if doc.get("format", FORMAT) != FORMAT:
        raise ValidationError(f"unsupported format {doc['format']!r} (expected {FORMAT!r})")
    if not isinstance(doc["systems"], list) or not doc["systems"]:
        raise ValidationError("systems: expected a non-empty list")
    systems = []
    for k, s in enumerate(doc["systems"]):
        s = _keys(s, f"systems[{k}]", ["label", "dim"], ["role"])
        systems.append(System(s["label"], _int(s["dim"], f"systems[{k}]"), s.get("role")))
    registry = SystemRegistry(tuple(systems))

    variables: dict[str, Variable] = {}
    raw_vars = doc.get("variables", [])
    if not isinstance(raw_vars, list):
        raise ValidationError("variables: expected a list")
    for k, v in enumerate(raw_vars):
        var = _read_variable(v, registry, k)
        if var.label in variables:
            raise ValidationError(f"variables[{k}]: duplicate label {var.label!r}")
        variables[var.label] = var
    lookup = _Lookup(variables)

    raw_inters = doc.get("interactions", [])
    if not isinstance(raw_inters, list):
        raise ValidationError("interactions: expected a list")
    inters = tuple(_read_interaction(x, registry, lookup, k) for k, x in enumerate(raw_inters))
    fq = doc.get("final_query")
    query = None if fq is None else _read_query(fq, lookup, "final_query")
    scenario = Scenario(registry, _read_initial(doc.get("initial_state"), registry), inters, query)

    raw_reports = doc.get("reports", [])
    if not isinstance(raw_reports, list):
        raise ValidationError("reports: expected a list")
    plans = tuple(_read_plan(p, lookup, k) for k, p in enumerate(raw_reports))
    names = [p.name for p in plans]
    if len(set(names)) != len(names):
        raise ValidationError(f"reports: duplicate report names {names}")
    for k, p in enumerate(plans):
        _check_plan(p, scenario, f"reports[{k}]")
    params = doc.get("parameters", {})
    if not isinstance(params, Mapping):
        raise ValidationError("parameters: expected an object")
    return NamedScenario(str(doc.get("name", "config")), dict(params), scenario, plans)


def load(path: str | Path) -> NamedScenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read scenario file {str(path)!r}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file {str(path)!r} is not valid JSON: {exc}") from None
    return from_dict(doc)


# -- writing -----------------------------------------------------------------


class _VarTable:
    """Assigns each distinct variable a unique label for export."""

    def __init__(self) -> None:
        self.entries: list[tuple[str, Variable]] = []

    def ref(self, var: Variable) -> str:
        for label, known in self.entries:
            if known is var or known.same_as(var):
                return label
        label, k = var.label, 1
        while any(lbl == label for lbl, _ in self.entries):
            k += 1
            label = f"{var.label}#{k}"
        self.entries.append((label, var))
        return label

    def dump(self) -> list[dict]:
        return [
            {
                "label": label,
                "targets": list(var.targets),
                "outcomes": [{"value": v, "projector": to_pairs(p)} for v, p in var.outcomes],
            }
            for label, var in self.entries
        ]


def _dump_interaction(inter: Interaction, vt: _VarTable) -> dict:
    origin = inter.origin or {}
    if origin.get("type") == "premeasure":
        return {
            "type": "premeasure",
            "label": inter.label,
            "variable": vt.ref(origin["variable"]),
            "pointer": origin["pointer"],
        }
    if origin.get("type") == "couple":
        return {
            "type": "couple",
            "label": inter.label,
            "pointer": vt.ref(origin["pointer"]),
            "env": origin["env"],
            "angle": origin["angle"],
        }
    out = {"type": "unitary", "label": inter.label, "targets": list(inter.targets), "matrix": to_pairs(inter.unitary)}
    if inter.establishes_fact:
        out["fact_context"] = inter.fact_context
        out["fact_variable"] = vt.ref(inter.fact_variable)
    return out


def _dump_query(q: Query, vt: _VarTable) -> dict:
    return {"variable": vt.ref(q.variable), "context": q.context}


def _dump_fact(f: FactRef) -> dict:
    return {"step": f.step, "value": f.value}


def _dump_plan(plan, vt: _VarTable) -> dict:
    out = {"kind": plan.kind, "name": plan.name}
    if isinstance(plan, ConditionalPlan):
        out["query"] = _dump_fact(plan.query)
        out["conditions"] = [_dump_fact(c) for c in plan.conditions]
    elif isinstance(plan, DistributionPlan):
        out["step"] = plan.step
    elif isinstance(plan, (AuditPlan, WitnessPlan)):
        out["b"] = _dump_fact(plan.b)
        out["partition"] = plan.partition
        if isinstance(plan, AuditPlan) and plan.environment is not None:
            out["environment"] = list(plan.environment)
    elif isinstance(plan, (EpsilonPlan, EtaPlan)):
        out["pointer"] = vt.ref(plan.pointer)
        out["environment"] = list(plan.environment)
        if plan.upto is not None:
            out["upto"] = plan.upto
    elif isinstance(plan, AgreementPlan):
        out["source"], out["read"] = plan.source, plan.read
    elif isinstance(plan, ChshPlan):
        out["context"] = plan.context
        out["parties"] = [
            {
                "friend_step": p.friend_step,
                "settings": [{"undo": s.undo, "variable": vt.ref(s.variable)} for s in p.settings],
            }
            for p in plan.parties
        ]
    else:  # pragma: no cover - every plan type is listed above
        raise ValidationError(f"cannot export report plan {type(plan).__name__}")
    view = getattr(plan, "view", None)
    if view is not None:
        out["view"] = {"steps": view.steps, "query": _dump_query(view.query, vt)}
    return out


def to_dict(named: NamedScenario) -> dict:
    """Export a scenario and its report plan; :func:`from_dict` inverts it."""
    sc = named.scenario
    vt = _VarTable()
    inters = [_dump_interaction(i, vt) for i in sc.interactions]
    query = None if sc.final_query is None else _dump_query(sc.final_query, vt)
    reports = [_dump_plan(p, vt) for p in named.report_plan]
    return {
        "format": FORMAT,
        "name": named.name,
        "parameters": dict(named.parameters),
        "systems": [
            {"label": s.label, "dim": s.dim, **({"role": s.role} if s.role else {})} for s in sc.registry
        ],
        "variables": vt.dump(),
        "initial_state": [
            {"systems": list(f.systems), "amplitudes": to_pairs(f.amplitudes)} for f in sc.factors
        ],
        "interactions": inters,
        "final_query": query,
        "reports": reports,
    }


def dumps(named: NamedScenario) -> str:
    return json.dumps(to_dict(named), indent=2, ensure_ascii=False) + "\n"
