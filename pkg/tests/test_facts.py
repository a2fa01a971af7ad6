from __future__ import annotations

import math

import numpy as np
import pytest
from _gen import branch_state, dense_chain, f_local_audit_scenario, random_pvm, random_scenario
from hypothesis import given
from hypothesis import strategies as st

from relfacts import (
    CapacityError,
    Interaction,
    Query,
    RelativeFact,
    Scenario,
    StateFactor,
    StateVector,
    SystemRegistry,
    UndefinedConditionalError,
    ValidationError,
    bell_variable,
    chain_probability,
    computational_variable,
    conditional_probability,
    embed,
    evolve,
    outcome_probabilities,
    partial_trace,
    branch_decompose,
    premeasurement_unitary,
    quantum_logic_witness,
    reduced_state,
    spin_variable,
    stability_bound,
    total_probability_audit,
    unitary_interaction,
)
from relfacts.sampling import random_unitary, random_vector

seeds = st.integers(min_value=0, max_value=2**32 - 1)
PLUS = np.array([1, 1]) / math.sqrt(2)


def friend_scenario(alpha=math.pi / 2):
    """S in cos(a/2)|0> + sin(a/2)|1>, F premeasures Z_S, W asks for the Bell state of S-F."""
    reg = SystemRegistry.of(("S", 2, "S"), ("F", 2, "F"), ("W", 2, "W"))
    u = premeasurement_unitary(computational_variable("S"), "F", reg)
    s0 = [math.cos(alpha / 2), math.sin(alpha / 2)]
    return Scenario(reg, {"S": s0}, (u,), Query(bell_variable("S", "F"), "W"))


def double_spin(theta, s0=(1, 0)):
    reg = SystemRegistry.of(("S", 2), ("F1", 2), ("F2", 2))
    z = spin_variable("S", 0.0, label="L_z")
    lt = spin_variable("S", theta, label="L_t")
    inters = (premeasurement_unitary(z, "F1", reg), premeasurement_unitary(lt, "F2", reg))
    return Scenario(reg, {"S": s0}, inters)


# -- scenario construction ---------------------------------------------------


def test_initial_factors_fill_missing_systems():
    sc = friend_scenario()
    psi = sc.initial_vector().amplitudes
    assert np.allclose(psi, np.kron(np.kron(PLUS, [1, 0]), [1, 0]))


def test_initial_factor_validation():
    reg = SystemRegistry.of(("A", 2), ("B", 2))
    with pytest.raises(ValidationError):
        Scenario(reg, {"A": [1, 0, 0]})
    with pytest.raises(ValidationError):
        Scenario(reg, {"A": [1, 1]})
    with pytest.raises(ValidationError):
        Scenario(reg, [StateFactor(("A",), [1, 0]), StateFactor(("A", "B"), [1, 0, 0, 0])])
    with pytest.raises(ValidationError):
        Scenario(reg, {"C": [1, 0]})
    with pytest.raises(ValidationError):
        Scenario(reg, None, (Interaction("u", ("A",), np.eye(3)),))


def test_multi_system_factor_order():
    reg = SystemRegistry.of(("A", 2), ("B", 3), ("C", 2))
    bc = np.arange(6, dtype=complex) / np.linalg.norm(np.arange(6))
    sc = Scenario(reg, {("C", "B"): bc, "A": [0, 1]})
    psi = sc.initial_vector().as_tensor()
    for b in range(3):
        for c in range(2):
            assert psi[1, b, c] == pytest.approx(bc[c * 3 + b])


def test_fact_sites():
    sc = friend_scenario()
    assert sc.fact_steps() == (0, 1)
    with pytest.raises(ValidationError):
        sc.fact(2, "0")
    with pytest.raises(ValidationError):
        sc.fact(0, "2")
    reg = SystemRegistry.of(("A", 2))
    plain = Scenario(reg, None, (Interaction("h", ("A",), np.eye(2)),))
    with pytest.raises(ValidationError):
        plain.fact(0, "0")


def test_fact_must_match_site():
    sc = friend_scenario()
    wrong = RelativeFact(computational_variable("F"), "0", "F", 0)
    with pytest.raises(ValidationError):
        chain_probability(sc, [wrong])
    with pytest.raises(ValidationError):
        chain_probability(sc, [sc.fact(0, "0"), sc.fact(0, "1")])


# -- evolution ---------------------------------------------------------------


def test_evolve_empty_is_initial():
    sc = friend_scenario().truncated(0)
    assert np.allclose(evolve(sc).amplitudes, sc.initial_vector().amplitudes)


def test_evolve_premeasurement_gives_bell():
    psi = evolve(friend_scenario())
    red = partial_trace(psi, ["S", "F"]).entries
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert np.allclose(red, np.outer(bell, bell))


def test_evolve_commuting_order(rng):
    reg = SystemRegistry.of(("A", 2), ("B", 3))
    ua = Interaction("a", ("A",), random_unitary(2, rng))
    ub = Interaction("b", ("B",), random_unitary(3, rng))
    psi0 = StateVector(reg, random_vector(6, rng))
    x = evolve(Scenario(reg, psi0, (ua, ub))).amplitudes
    y = evolve(Scenario(reg, psi0, (ub, ua))).amplitudes
    assert np.allclose(x, y, atol=1e-12)


def test_dense_capacity(monkeypatch):
    small = Scenario(SystemRegistry.of(*[(f"Q{k}", 2) for k in range(14)]))
    assert evolve(small).dim == 2**14
    with pytest.raises(CapacityError):
        evolve(Scenario(SystemRegistry.of(*[(f"Q{k}", 2) for k in range(15)])))
    monkeypatch.setenv("RELFACTS_DIM_CAP", "64")
    with pytest.raises(CapacityError):
        evolve(small)


# -- chain and conditional probabilities -------------------------------------


def test_chain_repeatable_record():
    sc = double_spin(0.0, PLUS)
    p = chain_probability(sc, [sc.fact(0, "up"), sc.fact(1, "up")])
    assert p == pytest.approx(0.5)
    assert chain_probability(sc, [sc.fact(0, "up"), sc.fact(1, "down")]) == 0.0


@pytest.mark.parametrize("theta", [0.0, 0.4, math.pi / 2, 2.0, math.pi])
def test_chain_spin_example(theta):
    sc = double_spin(theta)
    p = chain_probability(sc, [sc.fact(0, "up"), sc.fact(1, "up")])
    assert p == pytest.approx(math.cos(theta / 2) ** 2, abs=1e-12)


def test_chain_empty_is_one():
    assert chain_probability(friend_scenario(), []) == pytest.approx(1.0)


def test_bell_friends_disagree_never():
    reg = SystemRegistry.of(("A", 2), ("B", 2), ("F1", 2), ("F2", 2))
    inters = (
        premeasurement_unitary(computational_variable("A"), "F1", reg),
        premeasurement_unitary(computational_variable("B"), "F2", reg),
    )
    sc = Scenario(reg, {("A", "B"): np.array([1, 0, 0, 1]) / math.sqrt(2)}, inters)
    assert chain_probability(sc, [sc.fact(0, "0"), sc.fact(1, "1")]) == 0.0
    assert chain_probability(sc, [sc.fact(0, "0"), sc.fact(1, "0")]) == pytest.approx(0.5)


@pytest.mark.parametrize("theta", [0.3, math.pi / 3, 2.5])
def test_conditional_spin(theta):
    sc = double_spin(theta, PLUS)
    p = conditional_probability(sc, sc.fact(1, "up"), [sc.fact(0, "up")])
    assert p == pytest.approx(math.cos(theta / 2) ** 2, abs=1e-12)


def test_conditional_on_itself_and_same_step():
    sc = double_spin(0.7, PLUS)
    assert conditional_probability(sc, sc.fact(0, "up"), [sc.fact(0, "up")]) == 1.0
    assert conditional_probability(sc, sc.fact(0, "down"), [sc.fact(0, "up")]) == 0.0


def test_conditional_singlet():
    reg = SystemRegistry.of(("A", 2), ("B", 2), ("F1", 2), ("F2", 2))
    inters = (
        premeasurement_unitary(computational_variable("A"), "F1", reg),
        premeasurement_unitary(computational_variable("B"), "F2", reg),
    )
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    sc = Scenario(reg, {("A", "B"): singlet}, inters)
    assert conditional_probability(sc, sc.fact(1, "1"), [sc.fact(0, "0")]) == pytest.approx(1.0)


def test_conditional_on_impossible_event():
    sc = double_spin(0.0)
    with pytest.raises(UndefinedConditionalError):
        conditional_probability(sc, sc.fact(1, "up"), [sc.fact(0, "down")])


def test_outcome_probabilities():
    sc = friend_scenario(alpha=1.0)
    probs = outcome_probabilities(sc, computational_variable("F"))
    assert probs == pytest.approx((math.cos(0.5) ** 2, math.sin(0.5) ** 2))
    joint = outcome_probabilities(sc, computational_variable("F"), [sc.fact(0, "1")])
    assert joint == pytest.approx((0.0, math.sin(0.5) ** 2), abs=1e-12)


def test_late_fact_rejected_with_upto():
    sc = double_spin(0.5, PLUS)
    with pytest.raises(ValidationError):
        outcome_probabilities(sc, computational_variable("S"), [sc.fact(1, "up")], upto=1)


@given(seeds)
def test_chain_matches_dense_luders_oracle(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    va, vb = sc.site(a)[0], sc.site(b)[0]
    facts = [sc.fact(a, str(rng.choice(va.values))), sc.fact(b, str(rng.choice(vb.values)))]
    assert chain_probability(sc, facts) == pytest.approx(dense_chain(sc, facts), abs=1e-12)


@given(seeds)
def test_sum_rule(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    first = sc.fact(a, "v0")
    total = sum(chain_probability(sc, [first, f]) for f in sc.partition(b))
    assert total == pytest.approx(chain_probability(sc, [first]), abs=1e-12)


@given(seeds)
def test_identity_interaction_changes_nothing(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    facts = [sc.fact(a, "v0"), sc.fact(b, "v1") if "v1" in sc.site(b)[0].values else sc.fact(b, "v0")]
    ident = Interaction("id", (sc.registry.labels[0],), np.eye(sc.registry.dims[0]))
    padded = Scenario(
        sc.registry,
        list(sc.factors),
        sc.interactions[: a + 1] + (ident,) + sc.interactions[a + 1 :],
    )
    shifted = [facts[0], RelativeFact(facts[1].variable, facts[1].value, facts[1].context, b + 1)]
    assert chain_probability(padded, shifted) == pytest.approx(chain_probability(sc, facts), abs=1e-12)


@given(seeds)
def test_unitary_refinement(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    u1 = sc.interactions[2]
    # split u1 = v2 @ v1 into two interactions on the same targets
    v1 = random_unitary(u1.unitary.shape[0], rng)
    v2 = u1.unitary @ v1.conj().T
    split = (Interaction("v1", u1.targets, v1), Interaction("v2", u1.targets, v2))
    refined = Scenario(sc.registry, list(sc.factors), sc.interactions[:2] + split + sc.interactions[3:])
    facts = [sc.fact(a, "v0"), sc.fact(b, "v0")]
    fb = RelativeFact(facts[1].variable, "v0", facts[1].context, b + 1)
    assert chain_probability(refined, [facts[0], fb]) == pytest.approx(
        chain_probability(sc, facts), abs=1e-12
    )


@given(seeds)
def test_lazy_reduced_state_matches_dense(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    labels = list(sc.registry.labels)
    keep = [x for x in labels if rng.random() < 0.5] or labels[:1]
    got = reduced_state(sc, keep).entries
    expected = partial_trace(evolve(sc), keep).entries
    assert np.allclose(got, expected, atol=1e-12)


def test_lazy_runner_handles_wide_product_states():
    # 24 qubits would be 2^24 amplitudes densely; each only meets one partner
    n = 12
    labels = [f"A{k}" for k in range(n)] + [f"B{k}" for k in range(n)]
    reg = SystemRegistry.of(*[(x, 2) for x in labels])
    inters = tuple(
        premeasurement_unitary(computational_variable(f"A{k}"), f"B{k}", reg) for k in range(n)
    )
    sc = Scenario(reg, {f"A{k}": PLUS for k in range(n)}, inters)
    facts = [sc.fact(k, "0") for k in range(n)]
    assert chain_probability(sc, facts) == pytest.approx(0.5**n)


# -- total-probability audit ---------------------------------------------------


def test_audit_friend_example():
    sc = friend_scenario()
    rep = total_probability_audit(sc, sc.fact(1, "phi+"), 0)
    assert (rep.lhs, rep.rhs, rep.deviation) == pytest.approx((1.0, 0.5, 0.5))
    assert not rep.same_context


def test_audit_eigenstate_has_no_interference():
    rep = total_probability_audit(friend_scenario(0.0), friend_scenario(0.0).fact(1, "phi+"), 0)
    assert rep.deviation == pytest.approx(0.0, abs=1e-15)


def test_audit_b_must_come_later():
    sc = double_spin(0.3, PLUS)
    with pytest.raises(ValidationError):
        total_probability_audit(sc, sc.fact(0, "up"), 1)


def test_audit_incomplete_partition():
    sc = friend_scenario()
    with pytest.raises(ValidationError):
        total_probability_audit(sc, sc.fact(1, "phi+"), [sc.fact(0, "0")])
    with pytest.raises(ValidationError):
        total_probability_audit(sc, sc.fact(1, "phi+"), [sc.fact(0, "0"), sc.fact(0, "0")])


def test_audit_partition_as_triple():
    sc = friend_scenario()
    var = computational_variable("S")
    rep = total_probability_audit(sc, sc.fact(1, "phi+"), (var, "F", 0))
    assert rep.deviation == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        total_probability_audit(sc, sc.fact(1, "phi+"), (var, "W", 0))


@given(seeds)
def test_same_context_audit_closes(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng, same_context=True)
    rep = total_probability_audit(sc, sc.fact(b, "v0"), a)
    assert rep.same_context
    assert rep.deviation < 1e-10


@given(seeds)
def test_deviation_equals_cross_terms(seed):
    rng = np.random.default_rng(seed)
    sc, a, b = random_scenario(rng)
    reg = sc.registry
    psi = sc.initial_vector().amplitudes
    full = [embed(i.unitary, i.targets, reg) for i in sc.interactions]
    before = psi
    for u in full[: a + 1]:
        before = u @ before
    va, vb = sc.site(a)[0], sc.site(b)[0]
    branches = []
    for p in va.projectors:
        phi = embed(p, va.targets, reg) @ before
        for u in full[a + 1 : b + 1]:
            phi = u @ phi
        branches.append(phi)
    pb = embed(vb.projector("v0"), vb.targets, reg)
    cross = sum(
        np.vdot(branches[i], pb @ branches[j])
        for i in range(len(branches))
        for j in range(len(branches))
        if i != j
    )
    rep = total_probability_audit(sc, sc.fact(b, "v0"), a)
    assert rep.lhs - rep.rhs == pytest.approx(cross.real, abs=1e-12)


# -- witness -------------------------------------------------------------------


def test_witness_examples():
    sc = friend_scenario()
    w = quantum_logic_witness(sc, sc.fact(1, "phi+"), 0)
    assert (w.lhs, w.rhs) == pytest.approx((1.0, 0.5))
    own = Query(computational_variable("S"), "W")
    sc2 = sc.with_query(own)
    w2 = quantum_logic_witness(sc2, sc2.fact(1, "0"), sc2.fact(0, "0"), sc2.fact(0, "1"))
    assert (w2.lhs, w2.rhs) == pytest.approx((0.5, 0.5))


@given(seeds)
def test_witness_closes_for_commuting_b(seed):
    rng = np.random.default_rng(seed)
    reg = SystemRegistry.of(("S", 3, "S"), ("F", 3, "F"), ("W", 2, "W"))
    svar = random_pvm(("S",), 3, rng, label="A")
    u = premeasurement_unitary(svar, "F", reg)
    b = Query(computational_variable("F", 3), "W")
    sc = Scenario(reg, {"S": random_vector(3, rng)}, (u,), b)
    w = quantum_logic_witness(sc, sc.fact(1, "2"), 0)
    assert w.gap < 1e-12


def test_unitary_interaction_checks_registry():
    reg = SystemRegistry.of(("A", 2))
    with pytest.raises(ValidationError):
        unitary_interaction("u", ["A"], np.eye(4), reg)


def test_random_audit_bounds_are_not_vacuous():
    # the random F-local audits reach bounds well below the trivial value
    rng = np.random.default_rng(4004)
    bounds = []
    for _ in range(50):
        sc, env = f_local_audit_scenario(rng)
        b = sc.fact(sc.n_steps, sc.final_query.variable.values[0])
        bounds.append(total_probability_audit(sc, b, 0, environment=env).bound)
    assert min(bounds) < 0.5
    dec = branch_decompose(branch_state(rng, 2, 2)[1], computational_variable("F", 2))
    assert stability_bound(dec) <= 1.0 + 1e-12
