"""Shared fixtures: bundled data, cached recipe runs, fresh kitchens."""

from pathlib import Path

import pytest

from souschef import (
    KitchenSimulator, Ontology, execute_plan, load_grammar, load_kitchen,
    load_plan, load_recipe, run_recipe,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "souschef" / "data"

ALMOND = "almond-crescent-cookies"
VANILLA = "vanilla-butter-rounds"


def fresh_kitchen():
    """A brand-new default kitchen (state, config)."""
    return load_kitchen(DATA / "kitchen.json")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def ontology():
    return Ontology.load(DATA / "ontology.json")


@pytest.fixture(scope="session")
def grammar(ontology):
    return load_grammar(DATA / "grammar.cxn", ontology)


@pytest.fixture()
def kitchen():
    return fresh_kitchen()


def _run(name, grammar, ontology):
    ks, config = fresh_kitchen()
    document = load_recipe(DATA / "recipes" / f"{name}.txt")
    return run_recipe(document, grammar, ontology, ks, config, seed=0)


@pytest.fixture(scope="session")
def almond_result(grammar, ontology):
    """Full understanding run of the bundled almond recipe (read-only)."""
    return _run(ALMOND, grammar, ontology)


@pytest.fixture(scope="session")
def vanilla_result(grammar, ontology):
    return _run(VANILLA, grammar, ontology)


@pytest.fixture(scope="session")
def gold_almond():
    return load_plan(DATA / "gold" / f"{ALMOND}.plan.json")


@pytest.fixture(scope="session")
def gold_names():
    return (ALMOND, VANILLA, "small-a", "small-b", "small-c")


@pytest.fixture(scope="session")
def run_plan(ontology):
    """Execute a plan network against a fresh default kitchen."""

    def _run_plan(network, seed=None):
        ks, config = fresh_kitchen()
        sim = KitchenSimulator(ontology, config)
        return execute_plan(network, ks, sim, seed=seed)

    return _run_plan
