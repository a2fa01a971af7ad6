from __future__ import annotations

import copy
import json
import math

import pytest

from relfacts import ValidationError
from relfacts import config
from relfacts import scenarios as catalog

HAND_WRITTEN = {
    "format": "relfacts/scenario-1",
    "name": "friend-by-hand",
    "systems": [
        {"label": "S", "dim": 2, "role": "S"},
        {"label": "F", "dim": 2, "role": "F"},
        {"label": "W", "dim": 2, "role": "W"},
    ],
    "variables": [
        {"label": "Z_S", "preset": "computational", "target": "S"},
        {"label": "Bell", "preset": "bell", "targets": ["S", "F"]},
    ],
    "initial_state": [{"systems": ["S"], "preset": "plus"}],
    "interactions": [{"type": "premeasure", "variable": "Z_S", "pointer": "F"}],
    "final_query": {"variable": "Bell", "context": "W"},
    "reports": [
        {"kind": "audit", "name": "audit", "b": {"step": 1, "value": "phi+"}, "partition": 0},
        {"kind": "distribution", "name": "friend", "step": 0},
    ],
}


def doc():
    return copy.deepcopy(HAND_WRITTEN)


def close(a, b, tol=1e-12):
    assert a.keys() == b.keys()
    for k in a:
        if isinstance(a[k], float):
            assert a[k] == pytest.approx(b[k], abs=tol), k
        else:
            assert a[k] == b[k], k


def test_hand_written_matches_builtin():
    named = config.from_dict(doc())
    audit = named.run()[0]
    builtin = catalog.build("wigners-friend").run()[0]
    for key in ("lhs", "rhs", "deviation"):
        assert audit[key] == pytest.approx(builtin[key], abs=1e-12)
    assert named.run()[1]["p[0]"] == pytest.approx(0.5)


@pytest.mark.parametrize("name", sorted(catalog.CATALOG))
def test_export_round_trip(name):
    named = catalog.build(name)
    again = config.from_dict(json.loads(config.dumps(named)))
    assert again.name == named.name
    for a, b in zip(named.run(), again.run()):
        close(a, b)


def test_round_trip_with_random_couplings():
    named = catalog.build("pipeline", n_env=3, phi_spread=0.4, seed=5)
    again = config.from_dict(config.to_dict(named))
    for a, b in zip(named.run(), again.run()):
        close(a, b)


def test_load_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(HAND_WRITTEN))
    assert config.load(path).name == "friend-by-hand"


def test_load_errors(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        config.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        config.load(bad)


@pytest.mark.parametrize("preset", ["zero", "|0…0⟩", "|0...0>"])
def test_zero_presets(preset):
    d = doc()
    d["initial_state"] = preset
    named = config.from_dict(d)
    assert named.run()[0]["deviation"] == pytest.approx(0.0, abs=1e-15)


def test_explicit_amplitudes_and_projectors():
    d = doc()
    c, s = math.cos(0.3), math.sin(0.3)
    d["initial_state"] = [{"systems": ["S"], "amplitudes": [[c, 0], [s, 0]]}]
    d["variables"][0] = {
        "label": "Z_S",
        "targets": ["S"],
        "outcomes": [
            {"value": "0", "projector": [[1, 0], [0, 0], [0, 0], [0, 0]]},
            {"value": "1", "projector": [[0, 0], [0, 0], [0, 0], [1, 0]]},
        ],
    }
    dist = config.from_dict(d).run()[1]
    assert dist["p[0]"] == pytest.approx(c * c)


def test_two_qubit_state_presets():
    d = doc()
    d["systems"].append({"label": "T", "dim": 2})
    d["initial_state"] = [{"systems": ["S", "T"], "preset": "singlet"}]
    assert config.from_dict(d).run()[1]["p[1]"] == pytest.approx(0.5)
    d["initial_state"] = [{"systems": ["S"], "preset": "bell"}]
    with pytest.raises(ValidationError, match="two qubits"):
        config.from_dict(d)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(extra=1), "unknown key"),
        (lambda d: d.pop("systems"), "missing key"),
        (lambda d: d.update(format="other/1"), "unsupported format"),
        (lambda d: d["systems"].append({"label": "S", "dim": 2}), "duplicate"),
        (lambda d: d["variables"][0].update(target="Q"), "unknown system"),
        (lambda d: d["variables"][0].update(preset="weird"), "unknown variable preset"),
        (lambda d: d["interactions"][0].update(variable="nope"), "unknown variable"),
        (lambda d: d["interactions"][0].update(type="teleport"), "unknown interaction type"),
        (lambda d: d["reports"][0].update(kind="histogram"), "unknown report kind"),
        (lambda d: d["reports"][0]["b"].update(step=0, value="phi+"), "no value"),
        (lambda d: d["reports"][1].update(step=7), "outside the scenario"),
        (lambda d: d["reports"].append(dict(d["reports"][0])), "duplicate report"),
        (lambda d: d.update(initial_state=[{"systems": ["S"], "preset": "plus", "amplitudes": []}]), "exactly one"),
        (lambda d: d.update(initial_state="random"), "unknown preset"),
        (
            lambda d: d["interactions"].append(
                {"type": "unitary", "targets": ["S"], "matrix": [[1, 0], [1, 0], [0, 0], [1, 0]]}
            ),
            "not unitary|unitary",
        ),
        (
            lambda d: d["interactions"].append(
                {"type": "unitary", "targets": ["S"], "matrix": [[1, 0], [0, 0], [0, 0]]}
            ),
            "cannot fill",
        ),
        (lambda d: d["interactions"][0].update(pointer=3), "unknown system|pointer"),
    ],
)
def test_rejects_malformed_documents(mutate, message):
    d = doc()
    mutate(d)
    with pytest.raises(ValidationError, match=message):
        config.from_dict(d)


def test_unitary_interaction_with_fact():
    d = doc()
    d["interactions"] = [
        {
            "type": "unitary",
            "label": "cnot",
            "targets": ["S", "F"],
            "matrix": [[1, 0], [0, 0], [0, 0], [0, 0],
                       [0, 0], [1, 0], [0, 0], [0, 0],
                       [0, 0], [0, 0], [0, 0], [1, 0],
                       [0, 0], [0, 0], [1, 0], [0, 0]],
            "fact_context": "F",
            "fact_variable": "Z_S",
        }
    ]
    assert config.from_dict(d).run()[0]["deviation"] == pytest.approx(0.5)
