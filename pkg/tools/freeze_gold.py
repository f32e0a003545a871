"""Regenerate the bundled gold data under src/souschef/data/gold/.

Runs each bundled recipe through a fresh session, saves the resulting plan
network as the gold plan, writes the goal files, and emits a few small
hand-built plan graphs used to exercise exact plan alignment.

Usage: python3 tools/freeze_gold.py
"""

import json
import sys
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from souschef.features import Num, Sym, ValueSet, Var
from souschef.grammar import load_grammar
from souschef.kitchen import load_kitchen
from souschef.memory import Ontology
from souschef.metrics import goal_condition_success
from souschef.plans import PlanCall, PlanNetwork, save_plan
from souschef.session import load_recipe, run_recipe

DATA = ROOT / "src" / "souschef" / "data"
GOLD = DATA / "gold"

GOALS = {
    "almond-crescent-cookies": [
        {"predicate": "entity-count-of-kind", "kind": "cookie", "count": 30},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "shape", "value": "crescent"},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "baked", "value": "baked"},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "dusted-with", "value": "powdered-sugar"},
        {"predicate": "located-at", "kind": "cookie", "location": "plate"},
    ],
    "vanilla-butter-rounds": [
        {"predicate": "entity-count-of-kind", "kind": "cookie", "count": 15},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "shape", "value": "flattened"},
        {"predicate": "property-equals", "kind": "cookie",
         "property": "baked", "value": "baked"},
        {"predicate": "located-at", "kind": "cookie", "location": "plate"},
        {"predicate": "amount-within", "kind": "butter",
         "grams": 500, "tolerance": 0},
    ],
}


def freeze_recipes() -> None:
    ontology = Ontology.load(DATA / "ontology.json")
    grammar = load_grammar(DATA / "grammar.cxn", ontology)
    for stem, goals in GOALS.items():
        doc = load_recipe(DATA / "recipes" / f"{stem}.txt")
        state, config = load_kitchen(DATA / "kitchen.json")
        result = run_recipe(doc, grammar, ontology, state, config)
        if not result.closed:
            raise SystemExit(f"{stem}: narrative network did not close")
        score, flags = goal_condition_success(result.state, goals, ontology)
        if score != 1:
            raise SystemExit(f"{stem}: gold goals not all satisfied: {flags}")
        save_plan(result.network, GOLD / f"{stem}.plan.json")
        payload = {"goals": goals}
        (GOLD / f"{stem}.goals.json").write_text(
            json.dumps(payload, indent=2) + "\n")
        print(f"{stem}: {len(result.network.calls)} calls, "
              f"{result.minutes} min, goals ok")


def _call(cid: str, primitive: str, **slots) -> PlanCall:
    pairs = []
    for role, term in slots.items():
        pairs.append((role.replace("_", "-"), term))
    return PlanCall(cid, primitive, tuple(pairs))


def small_graphs() -> dict:
    a = PlanNetwork([
        _call("c0", "get-kitchen-state", kitchen_state_out=Var("ks0")),
        _call("c1", "fetch-and-proportion", source_ks=Var("ks0"),
              concept=Sym("butter"), quantity=Num(Fraction(100)),
              unit=Sym("g"), target_container=Sym("medium-bowl"),
              output_ks=Var("ks1"), resultant=Var("pat")),
        _call("c2", "melt", input_ks=Var("ks1"), item=Var("pat"),
              output_ks=Var("ks2"), resultant=Var("melted")),
        _call("c3", "fetch-container", input_ks=Var("ks2"),
              concept=Sym("small-bowl"), output_ks=Var("ks3"),
              fetched=Var("bowl")),
        _call("c4", "transfer-contents", input_ks=Var("ks3"),
              source=Var("melted"), destination=Var("bowl"),
              output_ks=Var("ks4"), resultant=Var("moved")),
    ])
    b = PlanNetwork([
        _call("c0", "get-kitchen-state", kitchen_state_out=Var("ks0")),
        _call("c1", "fetch-and-proportion", source_ks=Var("ks0"),
              concept=Sym("white-sugar"), quantity=Num(Fraction(50)),
              unit=Sym("g"), target_container=Sym("medium-bowl"),
              output_ks=Var("ks1"), resultant=Var("sugar")),
        _call("c2", "fetch-and-proportion", source_ks=Var("ks1"),
              concept=Sym("butter"), quantity=Num(Fraction(100)),
              unit=Sym("g"), target_container=Sym("medium-bowl"),
              output_ks=Var("ks2"), resultant=Var("fat")),
        _call("c3", "beat", input_ks=Var("ks2"),
              items=ValueSet([Var("sugar"), Var("fat")]),
              tool=Sym("mixer"), end_state=Sym("fluffy"),
              output_ks=Var("ks3"), resultant=Var("cream")),
        _call("c4", "serve", input_ks=Var("ks3"), items=Var("cream"),
              output_ks=Var("ks4"), served=Var("plated")),
    ])
    c = PlanNetwork([
        _call("c0", "get-kitchen-state", kitchen_state_out=Var("ks0")),
        _call("c1", "fetch-and-proportion", source_ks=Var("ks0"),
              concept=Sym("wheat-flour"), quantity=Num(Fraction(200)),
              unit=Sym("g"), target_container=Sym("medium-bowl"),
              output_ks=Var("ks1"), resultant=Var("flour")),
        _call("c2", "fetch-and-proportion", source_ks=Var("ks1"),
              concept=Sym("powdered-sugar"), quantity=Num(Fraction(20)),
              unit=Sym("g"), target_container=Sym("small-bowl"),
              output_ks=Var("ks2"), resultant=Var("topping")),
        _call("c3", "portion-and-arrange", input_ks=Var("ks2"),
              source_item=Var("flour"), portion_unit=Sym("tablespoon"),
              destination=Sym("counter-top"), output_ks=Var("ks3"),
              portions=Var("portions")),
        _call("c4", "sprinkle", input_ks=Var("ks3"), targets=Var("portions"),
              topping=Sym("powdered-sugar"), output_ks=Var("ks4"),
              dusted=Var("dusted")),
    ])
    return {"small-a": a, "small-b": b, "small-c": c}


def freeze_small() -> None:
    for name, network in small_graphs().items():
        network.validate()
        save_plan(network, GOLD / f"{name}.plan.json")
        print(f"{name}: {len(network.calls)} calls")


if __name__ == "__main__":
    GOLD.mkdir(parents=True, exist_ok=True)
    freeze_recipes()
    freeze_small()
