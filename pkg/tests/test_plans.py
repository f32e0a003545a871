"""Plan networks: structure checks, data-flow execution, chunking."""

import json
from fractions import Fraction

import pytest

from souschef import (
    InputError, PRIMITIVES, PlanCall, PlanNetwork, StructuralError,
    UnsupportedDirection, chunk, content_hash, execute_plan,
    expand_composites, find_recurrent_pairs, load_plan, plan_from_json,
    plan_to_json, verify_direction,
)
from souschef.features import Num, Sym, ValueSet, Var
from souschef.plans import inline
from conftest import DATA, fresh_kitchen


def call(cid, primitive, **slots):
    pairs = tuple((role.replace("_", "-"), term) for role, term in slots.items())
    return PlanCall(cid, primitive, pairs)


def tiny_network():
    return PlanNetwork([
        call("c0", "get-kitchen-state", kitchen_state_out=Var("ks0")),
        call("c1", "fetch-and-proportion", source_ks=Var("ks0"),
             concept=Sym("butter"), quantity=Num(Fraction(100)),
             unit=Sym("g"), target_container=Sym("medium-bowl"),
             output_ks=Var("ks1"), resultant=Var("pat")),
        call("c2", "melt", input_ks=Var("ks1"), item=Var("pat"),
             output_ks=Var("ks2"), resultant=Var("melted")),
    ])


def test_primitive_registry_contents():
    names = PRIMITIVES.names()
    assert "fetch-and-proportion" in names
    assert "serve" in names
    assert len(names) == 18
    spec = PRIMITIVES.get("bake")
    assert spec.outputs == {"output-ks", "baked"}
    assert "oven" in spec.optional
    with pytest.raises(InputError):
        PRIMITIVES.get("sous-vide")


def test_network_validate_catches_duplicates_and_cycles():
    net = tiny_network()
    net.validate()
    dup = PlanNetwork(net.calls + [call("c0", "get-kitchen-state",
                                        kitchen_state_out=Var("ksX"))])
    with pytest.raises(StructuralError):
        dup.validate()
    cyc = PlanNetwork([
        call("a", "melt", input_ks=Var("ks"), item=Var("y"),
             output_ks=Var("ksa"), resultant=Var("x")),
        call("b", "melt", input_ks=Var("ks"), item=Var("x"),
             output_ks=Var("ksb"), resultant=Var("y")),
    ])
    with pytest.raises(StructuralError):
        cyc.validate()


def test_single_assignment_of_producers():
    net = PlanNetwork([
        call("a", "get-kitchen-state", kitchen_state_out=Var("ks")),
        call("b", "get-kitchen-state", kitchen_state_out=Var("ks")),
    ])
    with pytest.raises(StructuralError):
        net.producers()


def test_open_input_slots_detected():
    net = PlanNetwork([
        call("c0", "melt", input_ks=Var("ghost"), item=Var("mystery"),
             output_ks=Var("ks1"), resultant=Var("out")),
    ])
    stuck = net.open_input_slots()
    assert ("c0", "input-ks", "ghost") in stuck
    assert ("c0", "item", "mystery") in stuck
    with pytest.raises(InputError):
        execute_plan(net, *_fresh_sim())


def _fresh_sim():
    from souschef import KitchenSimulator, Ontology

    ks, config = fresh_kitchen()
    ontology = Ontology.load(DATA / "ontology.json")
    return ks, KitchenSimulator(ontology, config)


def test_execute_simple_chain():
    ks, sim = _fresh_sim()
    outcome = execute_plan(tiny_network(), ks, sim)
    melted = outcome.bindings.substitute(Var("melted"))
    assert isinstance(melted, Num)
    entity = outcome.state.need(int(melted.value))
    assert entity.kind == "butter"
    assert entity.prop("temperature") == Fraction(40)
    assert outcome.trace.minutes == Fraction(3)  # fetch 1 + melt 2
    assert outcome.trace.final_hash == content_hash(outcome.state)


def test_execution_trace_serializes(tmp_path):
    ks, sim = _fresh_sim()
    outcome = execute_plan(tiny_network(), ks, sim)
    path = tmp_path / "trace.jsonl"
    outcome.trace.write_jsonl(path)
    lines = [json.loads(ln) for ln in path.read_text().splitlines()]
    assert lines[0] == {"initial-hash": outcome.trace.initial_hash}
    assert [r["call"] for r in lines[1:]] == ["c0", "c1", "c2"]
    assert lines[-1]["hash-after"] == outcome.trace.final_hash


def test_plan_json_round_trip(gold_almond, run_plan):
    data = plan_to_json(gold_almond)
    again = plan_from_json(data)
    assert [c.primitive for c in again.calls] == \
        [c.primitive for c in gold_almond.calls]
    assert content_hash(run_plan(again).state) == \
        content_hash(run_plan(gold_almond).state)
    # ids are canonicalized in file order
    assert [c.call_id for c in again.calls] == \
        [f"c{i}" for i in range(len(again.calls))]


def test_plan_from_json_rejects_unknown_primitive():
    with pytest.raises(InputError):
        plan_from_json({"calls": [{"id": "c0", "primitive": "teleport",
                                   "slots": {}}]})


def test_gold_plans_execute_clean(gold_names, run_plan):
    for name in gold_names:
        network = load_plan(DATA / "gold" / f"{name}.plan.json")
        outcome = run_plan(network)
        assert outcome.trace.minutes > 0
        assert outcome.state.entities


def test_executor_seed_choice_is_reproducible(gold_almond, run_plan):
    a = run_plan(gold_almond, seed=7)
    b = run_plan(gold_almond, seed=7)
    assert content_hash(a.state) == content_hash(b.state)
    assert [r.call_id for r in a.trace.records] == \
        [r.call_id for r in b.trace.records]


def test_verify_direction_needs_a_declared_direction():
    ks, sim = _fresh_sim()
    with pytest.raises(UnsupportedDirection):
        verify_direction("fetch-and-proportion", {"concept": Sym("butter")},
                         ks, sim)
    with pytest.raises(UnsupportedDirection):
        verify_direction("melt", {"item": Num(Fraction(3)),
                                  "resultant": Num(Fraction(3)),
                                  "input-ks": Var("k")}, ks, sim)


def test_verify_portion_direction():
    ks, sim = _fresh_sim()
    fetched = sim.apply("fetch-and-proportion",
                        {"concept": Sym("wheat-flour"),
                         "quantity": Num(Fraction(51)), "unit": Sym("g"),
                         "target-container": Sym("medium-bowl")}, ks)
    portioned = sim.apply("portion-and-arrange",
                          {"source-item": fetched.outputs["resultant"],
                           "portion-unit": Sym("tablespoon"),
                           "destination": Sym("counter-top")}, fetched.state)
    values = {"input-ks": Var("ks"),
              "source-item": fetched.outputs["resultant"],
              "portion-unit": Sym("tablespoon"),
              "portions": portioned.outputs["portions"]}
    report = verify_direction("portion-and-arrange", values,
                              portioned.state, sim)
    assert report.consistent and report.delta == 0
    report = verify_direction(
        "portion-and-arrange", {**values, "portion-unit": Sym("teaspoon")},
        portioned.state, sim)
    assert not report.consistent
    assert report.delta == Fraction(12)  # 17 g portions vs 5 g teaspoons


def _mix_shape(shapes):
    """The shape whose primitives are transfer-contents -> combine."""
    hits = [s for s in shapes
            if s[0] == ("transfer-contents", "combine-homogeneous")]
    assert len(hits) == 1
    return hits[0]


def test_find_recurrent_pairs_on_gold(gold_almond):
    shapes = find_recurrent_pairs(gold_almond)
    target = _mix_shape(shapes)
    assert [[c for c in occ] for occ in shapes[target]] == \
        [["c10", "c11"], ["c12", "c13"]]


def test_chunk_builds_composite_and_inline_restores(gold_almond, run_plan):
    shapes = find_recurrent_pairs(gold_almond)
    occurrences = shapes[_mix_shape(shapes)]
    composite, chunked = chunk(gold_almond, occurrences, "add-and-mix")
    assert len(chunked.calls) == len(gold_almond.calls) - 2
    composite_calls = [c for c in chunked.calls
                       if c.primitive == "composite:add-and-mix"]
    assert [c.call_id for c in composite_calls] == ["add-and-mix-0",
                                                    "add-and-mix-1"]
    baseline = run_plan(gold_almond)
    alt = run_plan(chunked)
    assert content_hash(alt.state) == content_hash(baseline.state)
    assert alt.trace.minutes == baseline.trace.minutes

    restored = inline(chunked)
    assert len(restored.calls) == len(gold_almond.calls)
    assert sorted(c.primitive for c in restored.calls) == \
        sorted(c.primitive for c in gold_almond.calls)
    again = run_plan(restored)
    assert content_hash(again.state) == content_hash(baseline.state)


def test_expand_composites_leaves_plain_calls_alone(gold_almond):
    assert expand_composites(gold_almond.calls) == gold_almond.calls
