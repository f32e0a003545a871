"""Recipe documents and the instruction-by-instruction understanding loop."""

from fractions import Fraction

import pytest

from souschef import (
    CookingSession, InputError, UnderstandingFailure, parse_recipe, run_recipe,
)
from souschef.features import Num, Var
from souschef.narrative import (
    SOURCE_LANGUAGE, SOURCE_ONTOLOGY, SOURCE_PDM, SOURCE_SIMULATION,
)
from souschef.plans import question_id
from conftest import fresh_kitchen


SAMPLE = """\
# Test Bake
Yield: 4 cookies

## Ingredients

- 100 g butter
- 70 g wheat flour

## Instructions

Melt the butter. Serve.
"""


def test_parse_recipe_sections_and_yield():
    doc = parse_recipe(SAMPLE)
    assert doc.title == "Test Bake"
    assert doc.yield_count == 4
    assert doc.yield_noun == "cookies"
    assert doc.ingredients == ["100 g butter", "70 g wheat flour"]
    assert doc.instructions == ["Melt the butter", "Serve"]
    assert doc.steps == ["100 g butter", "70 g wheat flour",
                         "Melt the butter", "Serve"]


def test_parse_recipe_rejects_bad_yield_and_empty_body():
    with pytest.raises(InputError):
        parse_recipe("# T\nYield: few cookies\n## Instructions\nServe.\n")
    with pytest.raises(InputError):
        parse_recipe("# T\n## Instructions\n\n")


def test_markdown_bullets_are_cosmetic(grammar, ontology):
    plain = parse_recipe(SAMPLE.replace("- 100", "100").replace("- 70", "70"))
    bullets = parse_recipe(SAMPLE)
    assert plain.steps == bullets.steps


def test_almond_run_reaches_closure(almond_result):
    closure = almond_result.inn.closure_status()
    assert closure["closed"] is True
    assert closure["open"] == 0
    assert closure["raised"] == closure["answered"]
    assert len(almond_result.document.steps) == 20
    assert len(almond_result.network.calls) == 23
    for step in almond_result.steps:
        assert step.unresolved_tokens == ()
        assert step.applied
    assert almond_result.closed


def test_almond_answers_draw_on_all_four_sources(almond_result):
    by_source = almond_result.inn.closure_status()["by-source"]
    for source in (SOURCE_LANGUAGE, SOURCE_SIMULATION, SOURCE_ONTOLOGY,
                   SOURCE_PDM):
        assert by_source[source] > 0, source


def test_yield_question_answered_by_simulation(almond_result, vanilla_result):
    for result, count in ((almond_result, 30), (vanilla_result, 15)):
        q = result.inn.question("q-recipe-yield")
        assert q.status == "answered"
        assert q.source == SOURCE_SIMULATION
        assert q.answer == Num(Fraction(count))


def test_zero_anaphora_binds_previous_resultant(almond_result):
    steps = almond_result.document.steps
    idx = steps.index("Mix thoroughly")
    combine = next(c for c in almond_result.network.calls
                   if c.provenance == idx
                   and c.primitive == "combine-homogeneous")
    target = combine.slot("target")
    assert isinstance(target, Var)
    producers = almond_result.network.producers()
    producer_call, role = producers[target.name]
    assert producer_call.provenance == idx - 1
    q = almond_result.inn.question(question_id(combine.call_id, "target"))
    assert q.source == SOURCE_PDM


def test_dough_resolves_to_mixing_resultant(almond_result):
    steps = almond_result.document.steps
    idx = steps.index("Take tablespoons of the dough and shape into crescents")
    portion = next(c for c in almond_result.network.calls
                   if c.provenance == idx
                   and c.primitive == "portion-and-arrange")
    source = portion.slot("source-item")
    assert isinstance(source, Var)
    producer_call, role = almond_result.network.producers()[source.name]
    assert producer_call.primitive == "combine-homogeneous"
    assert role == "resultant"
    q = almond_result.inn.question(question_id(portion.call_id, "source-item"))
    assert q.source == SOURCE_PDM


def test_ontology_fills_unstated_tool_and_destination(almond_result):
    network = almond_result.network
    beat = next(c for c in network.calls if c.primitive == "beat")
    q = almond_result.inn.question(question_id(beat.call_id, "tool"))
    assert q.source == SOURCE_ONTOLOGY
    portion = next(c for c in network.calls
                   if c.primitive == "portion-and-arrange")
    q = almond_result.inn.question(question_id(portion.call_id, "destination"))
    assert q.source == SOURCE_ONTOLOGY


def test_understanding_failure_names_the_unknown_token(grammar, ontology):
    ks, config = fresh_kitchen()
    session = CookingSession(grammar, ontology, ks, config)
    with pytest.raises(UnderstandingFailure) as err:
        session.run_step(0, "Defenestrate the butter vigorously.")
    assert "defenestrate" in str(err.value).lower()
    assert err.value.question_id is not None
    assert session.inn.has_question(err.value.question_id)


def test_session_runs_incrementally(grammar, ontology):
    ks, config = fresh_kitchen()
    session = CookingSession(grammar, ontology, ks, config)
    report = session.run_step(0, "100 g butter")
    assert report.applied
    assert report.call_ids
    report = session.run_step(1, "Melt the butter.")
    melt = [c for c in session.calls if c.primitive == "melt"]
    assert len(melt) == 1
    # state advanced: the fetched butter is already molten
    butter = [e for e in session.executor.state.entities.values()
              if e.kind == "butter" and e.grams == Fraction(100)]
    assert butter and butter[0].prop("temperature") == Fraction(40)


def test_vanilla_run_summary(vanilla_result):
    assert vanilla_result.minutes == Fraction(43)
    assert len(vanilla_result.network.calls) == 21
    closure = vanilla_result.inn.closure_status()
    assert closure["closed"] is True
