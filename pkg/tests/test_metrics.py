"""Metric suite: plan overlap, goals, dish similarity, execution time."""

from fractions import Fraction

import pytest

from souschef import (
    InputError, PlanCall, PlanNetwork, SizeExceededError, build_report,
    dish_approximation_score, goal_condition_success, load_goals,
    plan_triples, recipe_execution_time, smatch_exact, smatch_plans,
    smatch_score,
)
from souschef.features import Num, Sym, ValueSet, Var


def call(cid, primitive, **slots):
    pairs = tuple((role.replace("_", "-"), term) for role, term in slots.items())
    return PlanCall(cid, primitive, pairs)


def two_step(prefix=""):
    return PlanNetwork([
        call(f"{prefix}a", "get-kitchen-state", kitchen_state_out=Var(f"{prefix}ks")),
        call(f"{prefix}b", "fetch-and-proportion", source_ks=Var(f"{prefix}ks"),
             concept=Sym("butter"), quantity=Num(Fraction(100)), unit=Sym("g"),
             target_container=Sym("medium-bowl"), output_ks=Var(f"{prefix}ks1"),
             resultant=Var(f"{prefix}out")),
    ])


def test_plan_triples_counts():
    triples = plan_triples(two_step())
    assert len(triples.instances) == 2
    # butter, 100, g, medium-bowl stay constants
    assert len(triples.attributes) == 4
    # the kitchen-state chain is the only variable link
    assert len(triples.relations) == 1
    assert triples.relations[0] == ("b", "source-ks", "a")
    assert len(triples) == 7


def test_smatch_is_invariant_under_call_renaming():
    a, b = two_step(), two_step("x-")
    score = smatch_score(plan_triples(a), plan_triples(b))
    assert score.f1 == Fraction(1)
    assert score.matched == 7
    assert smatch_plans(a, b).f1 == Fraction(1)


def test_smatch_detects_constant_differences():
    a = two_step()
    b = PlanNetwork([
        a.calls[0],
        a.calls[1].with_slot("concept", Sym("lard")),
    ])
    score = smatch_plans(a, b)
    assert score.matched == 6
    assert score.f1 == Fraction(6, 7)


def test_smatch_exact_agrees_and_guards_size():
    a, b = two_step(), two_step("x-")
    exact = smatch_exact(plan_triples(a), plan_triples(b))
    climbed = smatch_score(plan_triples(a), plan_triples(b))
    assert exact.f1 == climbed.f1 == Fraction(1)
    big = PlanNetwork([
        call(f"n{i}", "get-kitchen-state", kitchen_state_out=Var(f"k{i}"))
        for i in range(9)
    ])
    with pytest.raises(SizeExceededError):
        smatch_exact(plan_triples(big), plan_triples(big))


def test_smatch_empty_graph_scores_zero():
    empty = plan_triples(PlanNetwork([]))
    full = plan_triples(two_step())
    assert smatch_score(empty, full).f1 == Fraction(0)


def test_goal_predicates_against_final_state(almond_result, ontology):
    state = almond_result.state
    goals = [
        {"predicate": "entity-count-of-kind", "kind": "cookie", "count": 30},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "shape", "value": "crescent"},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "shape", "value": "ball"},
        {"predicate": "located-at", "kind": "cookie", "location": "plate"},
        {"predicate": "located-at", "kind": "cookie", "location": "freezer"},
        {"predicate": "amount-within", "kind": "butter", "grams": 500,
         "tolerance": 0},
        {"predicate": "amount-within", "kind": "butter", "grams": 499,
         "tolerance": 0},
        {"predicate": "amount-within", "kind": "butter", "grams": 499,
         "tolerance": 1},
    ]
    score, per_goal = goal_condition_success(state, goals, ontology)
    assert per_goal == [True, True, False, True, False, True, False, True]
    assert score == Fraction(5, 8)


def test_goal_condition_rejects_empty_and_unknown(almond_result, ontology):
    with pytest.raises(InputError):
        goal_condition_success(almond_result.state, [], ontology)
    with pytest.raises(InputError):
        goal_condition_success(almond_result.state,
                               [{"predicate": "smells-nice"}], ontology)


def test_load_goals_accepts_list_or_wrapper(tmp_path):
    plain = tmp_path / "plain.json"
    plain.write_text('[{"predicate": "entity-count-of-kind"}]')
    wrapped = tmp_path / "wrapped.json"
    wrapped.write_text('{"goals": [{"predicate": "entity-count-of-kind"}]}')
    assert load_goals(plain) == load_goals(wrapped)
    bad = tmp_path / "bad.json"
    bad.write_text('"nope"')
    with pytest.raises(InputError):
        load_goals(bad)


def test_dish_score_is_one_for_identical_states(almond_result, ontology):
    score, detail = dish_approximation_score(
        almond_result.state, almond_result.state, ontology)
    assert score == Fraction(1)
    assert detail["ingredient-f1"] == 1.0
    assert detail["property-agreement"] == 1.0
    assert detail["properties"]["shape"] == {"predicted": "crescent",
                                             "reference": "crescent"}
    assert detail["properties"]["arrangement"] == {"predicted": 30,
                                                   "reference": 30}


def test_dish_score_penalizes_property_differences(almond_result,
                                                   vanilla_result, ontology):
    score, detail = dish_approximation_score(
        vanilla_result.state, almond_result.state, ontology)
    assert score < Fraction(1)
    assert detail["properties"]["shape"] == {"predicted": "flattened",
                                             "reference": "crescent"}


def test_execution_time_reads_trace(almond_result):
    assert recipe_execution_time(almond_result.trace) == \
        almond_result.trace.minutes
    assert almond_result.trace.minutes == Fraction(113, 2)


def test_build_report_collects_sections(almond_result, ontology):
    smatch = smatch_plans(almond_result.network, almond_result.network)
    gcs = goal_condition_success(
        almond_result.state,
        [{"predicate": "entity-count-of-kind", "kind": "cookie", "count": 30}],
        ontology)
    das = dish_approximation_score(almond_result.state, almond_result.state,
                                   ontology)
    report = build_report(smatch=smatch, gcs=gcs, das=das,
                          minutes=almond_result.minutes)
    assert report["smatch"]["f1"] == 1.0
    assert report["goal-condition-success"] == {
        "score": 1.0, "goals-met": 1, "goals-total": 1, "per-goal": [True]}
    assert report["dish-approximation-score"]["score"] == 1.0
    assert report["time-minutes"] == 56.5
    assert report["time-minutes-exact"] == "113/2"
