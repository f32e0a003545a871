"""Qualitative kitchen simulator.

The world is a tree of entities hanging off six fixed locations (pantry,
fridge, freezer, counter-top, oven, tool-drawer). Food carries an exact
per-concept composition in grams (Fractions, never floats), so conservation
is checkable to the gram. Primitive applications are pure: they return a
fresh state and never touch their input.

States are compared by a content hash that ignores entity serial numbers and
the clock; two kitchens that look alike hash alike, which is what the
confluence and replay tests rely on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .errors import InputError, SimulationError
from .features import Num, Struct, Sym, ValueSet, normalize_num
from .serialize import fv_to_json

LOCATIONS = ("pantry", "fridge", "freezer", "counter-top", "oven", "tool-drawer")

#: Search order when hunting for an ingredient stock.
STORAGE_ORDER = ("counter-top", "pantry", "fridge", "freezer")

PASSIVE_PRIMITIVES = frozenset({
    "preheat-oven", "bake", "cool-until", "set-timer/elapse",
})

#: Minutes of agent work per primitive; None = taken from the duration slot.
DEFAULT_DURATIONS: dict[str, Optional[int]] = {
    "get-kitchen-state": 0,
    "fetch-and-proportion": 1,
    "fetch-tool": 1,
    "fetch-container": 1,
    "transfer-contents": 1,
    "combine-homogeneous": 2,
    "beat": 3,
    "melt": 2,
    "shape": 3,
    "flatten": 2,
    "portion-and-arrange": 5,
    "line-with": 1,
    "preheat-oven": 12,
    "bake": None,
    "sprinkle": 1,
    "cool-until": None,
    "set-timer/elapse": None,
    "serve": 1,
}

#: One tunable table for every vague quantity in the domain.
DEFAULT_CONFIG: dict = {
    "portion-grams": {"tablespoon": 17, "teaspoon": 5},
    "durations": DEFAULT_DURATIONS,
    "burn-factor": Fraction(3, 2),
    "ambient-temperature": 20,
    "melt-temperature": 40,
    "default-cool-minutes": 5,
}


# ---------------------------------------------------------------------------
# Entities and states


@dataclass(frozen=True)
class KitchenEntity:
    serial: int
    kind: str
    container: bool = False
    composition: tuple = ()  # sorted ((concept, grams: Fraction)) — food only
    properties: tuple = ()   # sorted ((name, str | Fraction))
    contents: tuple = ()     # child serials (containers only)

    def prop(self, name: str):
        for k, v in self.properties:
            if k == name:
                return v
        return None

    def with_prop(self, name: str, value) -> "KitchenEntity":
        props = tuple(sorted([(k, v) for k, v in self.properties if k != name]
                             + [(name, value)]))
        return KitchenEntity(self.serial, self.kind, self.container,
                             self.composition, props, self.contents)

    def with_kind(self, kind: str) -> "KitchenEntity":
        return KitchenEntity(self.serial, kind, self.container,
                             self.composition, self.properties, self.contents)

    def with_composition(self, comp) -> "KitchenEntity":
        return KitchenEntity(self.serial, self.kind, self.container,
                             _norm_comp(comp), self.properties, self.contents)

    def with_contents(self, contents) -> "KitchenEntity":
        return KitchenEntity(self.serial, self.kind, self.container,
                             self.composition, self.properties, tuple(contents))

    @property
    def is_food(self) -> bool:
        return bool(self.composition)

    @property
    def grams(self) -> Fraction:
        return sum((g for _, g in self.composition), Fraction(0))


def _norm_comp(comp) -> tuple:
    acc: dict[str, Fraction] = {}
    for concept, g in (comp.items() if isinstance(comp, dict) else comp):
        g = Fraction(g)
        if g < 0:
            raise SimulationError("negative-amount", f"{concept}: {g}")
        if g > 0:
            acc[concept] = acc.get(concept, Fraction(0)) + g
    return tuple(sorted(acc.items()))


@dataclass(frozen=True, eq=False)
class KitchenState:
    state_id: str
    clock: Fraction
    locations: tuple          # ((name, serial)) in LOCATIONS order
    entities: dict            # serial -> KitchenEntity; copy-on-write only
    next_serial: int
    seq: int

    def entity(self, serial: int) -> Optional[KitchenEntity]:
        return self.entities.get(serial)

    def need(self, serial) -> KitchenEntity:
        try:
            serial = int(serial)
        except (TypeError, ValueError):
            raise SimulationError("missing-entity", f"not an entity id: {serial!r}")
        e = self.entities.get(serial)
        if e is None:
            raise SimulationError("missing-entity", f"no entity #{serial}")
        return e

    def location(self, name: str) -> KitchenEntity:
        for loc_name, serial in self.locations:
            if loc_name == name:
                return self.entities[serial]
        raise SimulationError("missing-entity", f"no location named {name}")

    def location_of(self, serial: int) -> Optional[str]:
        """Name of the location whose subtree contains the entity."""
        for name, loc_serial in self.locations:
            frontier = [loc_serial]
            while frontier:
                s = frontier.pop()
                if s == serial:
                    return name
                e = self.entities.get(s)
                if e is not None:
                    frontier.extend(e.contents)
        return None

    def parent_of(self, serial: int) -> Optional[KitchenEntity]:
        for e in self.entities.values():
            if serial in e.contents:
                return e
        return None

    def is_location(self, entity: KitchenEntity) -> bool:
        return any(entity.serial == s for _, s in self.locations)

    def is_container(self, entity: KitchenEntity) -> bool:
        return entity.container

    def food_children(self, entity: KitchenEntity) -> list[KitchenEntity]:
        return [self.entities[s] for s in entity.contents
                if s in self.entities and self.entities[s].is_food]

    def food_leaves(self, entity: KitchenEntity) -> list[KitchenEntity]:
        if entity.is_food:
            return [entity]
        out = []
        for s in entity.contents:
            child = self.entities.get(s)
            if child is not None:
                out.extend(self.food_leaves(child))
        return out

    def entities_of_kind(self, kind: str, ontology=None) -> list[KitchenEntity]:
        out = []
        for s in sorted(self.entities):
            e = self.entities[s]
            if e.kind == kind or (ontology is not None and ontology.is_a(e.kind, kind)):
                out.append(e)
        return out

    def total_composition(self) -> dict[str, Fraction]:
        totals: dict[str, Fraction] = {}
        for e in self.entities.values():
            for concept, g in e.composition:
                totals[concept] = totals.get(concept, Fraction(0)) + g
        return {k: v for k, v in totals.items() if v != 0}


def content_hash(ks: KitchenState) -> str:
    """Digest of the entity tree, blind to serial numbers and the clock."""

    def entity_digest(e: KitchenEntity) -> str:
        comp = ",".join(f"{c}:{g}" for c, g in e.composition)
        props = ",".join(f"{k}={v}" for k, v in e.properties)
        kids = sorted(entity_digest(ks.entities[s]) for s in e.contents
                      if s in ks.entities)
        payload = "|".join([e.kind, "c" if e.container else "f", comp, props]
                           + kids)
        return hashlib.sha256(payload.encode()).hexdigest()

    parts = [f"{name}={entity_digest(ks.entities[serial])}"
             for name, serial in ks.locations]
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


# --- copy-on-write helpers (module-private; all return fresh dicts) ---------


def _detach(entities: dict, serial: int) -> dict:
    out = dict(entities)
    for s, e in entities.items():
        if serial in e.contents:
            out[s] = e.with_contents(c for c in e.contents if c != serial)
    return out


def _attach(entities: dict, serial: int, parent: int) -> dict:
    out = dict(entities)
    out[parent] = out[parent].with_contents(out[parent].contents + (serial,))
    return out


def _move(entities: dict, serial: int, parent: int) -> dict:
    return _attach(_detach(entities, serial), serial, parent)


def _drop(entities: dict, serial: int) -> dict:
    out = _detach(entities, serial)
    del out[serial]
    return out


class _Builder:
    """Scratch pad for one primitive application; commits to a fresh state."""

    def __init__(self, ks: KitchenState):
        self.ks = ks
        self.entities = dict(ks.entities)
        self.next_serial = ks.next_serial

    def get(self, serial: int) -> KitchenEntity:
        try:
            serial = int(serial)
        except (TypeError, ValueError):
            raise SimulationError("missing-entity", f"not an entity id: {serial!r}")
        e = self.entities.get(serial)
        if e is None:
            raise SimulationError("missing-entity", f"no entity #{serial}")
        return e

    def put(self, e: KitchenEntity) -> None:
        self.entities[e.serial] = e

    def create(self, kind: str, parent: int, container=False,
               composition=(), properties=()) -> KitchenEntity:
        e = KitchenEntity(self.next_serial, kind, container,
                          _norm_comp(composition), tuple(sorted(properties)))
        self.next_serial += 1
        self.entities[e.serial] = e
        self.entities = _attach(self.entities, e.serial, parent)
        return e

    def move(self, serial: int, parent: int) -> None:
        self.entities = _move(self.entities, serial, parent)

    def drop(self, serial: int) -> None:
        self.entities = _drop(self.entities, serial)

    def commit(self, clock: Fraction) -> KitchenState:
        return KitchenState(f"ks-{self.ks.seq + 1}", clock, self.ks.locations,
                            self.entities, self.next_serial, self.ks.seq + 1)


# ---------------------------------------------------------------------------
# Initial kitchens

DEFAULT_SPEC: dict = {
    "locations": {
        "pantry": [
            {"kind": "white-sugar", "grams": 500},
            {"kind": "wheat-flour", "grams": 1000},
            {"kind": "almond-flour", "grams": 300},
            {"kind": "powdered-sugar", "grams": 200},
            {"kind": "almond-extract", "grams": 50},
            {"kind": "vanilla-extract", "grams": 50},
        ],
        "fridge": [
            {"kind": "butter", "grams": 500},
        ],
        "freezer": [],
        "counter-top": [],
        "oven": [],
        "tool-drawer": [
            {"kind": "medium-bowl", "count": 6, "container": True},
            {"kind": "small-bowl", "count": 3, "container": True},
            {"kind": "large-bowl", "count": 2, "container": True},
            {"kind": "baking-sheet", "count": 2, "container": True},
            {"kind": "plate", "count": 3, "container": True},
            {"kind": "parchment-paper", "count": 5},
            {"kind": "mixer", "count": 1},
            {"kind": "wooden-spoon", "count": 2},
            {"kind": "tablespoon", "count": 2},
            {"kind": "teaspoon", "count": 2},
        ],
    },
}


def _merge_config(overrides: Optional[dict]) -> dict:
    config = {
        "portion-grams": dict(DEFAULT_CONFIG["portion-grams"]),
        "durations": dict(DEFAULT_DURATIONS),
        "burn-factor": DEFAULT_CONFIG["burn-factor"],
        "ambient-temperature": DEFAULT_CONFIG["ambient-temperature"],
        "melt-temperature": DEFAULT_CONFIG["melt-temperature"],
        "default-cool-minutes": DEFAULT_CONFIG["default-cool-minutes"],
    }
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        else:
            config[key] = value
    return config


def initial_kitchen(spec: Optional[dict] = None) -> tuple[KitchenState, dict]:
    """Build the starting state (and config) from a spec dict or the default."""
    spec = spec if spec is not None else DEFAULT_SPEC
    loc_spec = spec.get("locations", {})
    for name in loc_spec:
        if name not in LOCATIONS:
            raise InputError(f"unknown location in kitchen spec: {name}")

    entities: dict[int, KitchenEntity] = {}
    locations = []
    serial = 1
    for name in LOCATIONS:
        entities[serial] = KitchenEntity(serial, name, container=True)
        locations.append((name, serial))
        serial += 1

    for name, loc_serial in locations:
        for entry in loc_spec.get(name, []):
            kind = entry.get("kind")
            if not kind:
                raise InputError(f"kitchen entry without kind in {name}")
            props = tuple(sorted(
                (k, Fraction(v) if isinstance(v, (int, float)) else str(v))
                for k, v in entry.get("properties", {}).items()
            ))
            if "grams" in entry:
                grams = Fraction(entry["grams"])
                if grams <= 0:
                    raise InputError(f"non-positive amount for {kind}: {grams}")
                entities[serial] = KitchenEntity(
                    serial, kind, composition=((kind, grams),), properties=props)
                entities = _attach(entities, serial, loc_serial)
                serial += 1
            else:
                count = int(entry.get("count", 1))
                if count <= 0:
                    raise InputError(f"non-positive count for {kind}: {count}")
                for _ in range(count):
                    entities[serial] = KitchenEntity(
                        serial, kind, container=bool(entry.get("container")),
                        properties=props)
                    entities = _attach(entities, serial, loc_serial)
                    serial += 1

    ks = KitchenState("ks-0", Fraction(0), tuple(locations), entities, serial, 0)
    return ks, _merge_config(spec.get("config"))


def load_kitchen(path: Path | str) -> tuple[KitchenState, dict]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise InputError("kitchen spec must be a JSON object")
    return initial_kitchen(data)


# ---------------------------------------------------------------------------
# Primitive semantics


@dataclass(frozen=True)
class ApplyResult:
    state: KitchenState
    outputs: dict            # role -> FeatureValue (entity ids, sets)
    dclock: Fraction
    warnings: tuple = ()


def _ids(value) -> list[int]:
    if isinstance(value, Num):
        return [int(value.value)]
    if isinstance(value, ValueSet):
        out = []
        for m in value:
            if not isinstance(m, Num):
                raise SimulationError("missing-entity", f"not an entity id: {m!r}")
            out.append(int(m.value))
        return sorted(out)
    raise SimulationError("missing-entity", f"not an entity reference: {value!r}")


def _id_set(serials) -> ValueSet:
    return ValueSet(Num(Fraction(s)) for s in sorted(serials))


def _minutes(value, what: str) -> Fraction:
    if isinstance(value, Num):
        dim, v = normalize_num(value)
        if dim not in (None, "time"):
            raise SimulationError("bad-duration", f"{what}: {value!r}")
        return v
    if isinstance(value, Struct):
        lo, hi = value.get("min"), value.get("max")
        if isinstance(lo, Num) and isinstance(hi, Num):
            return (normalize_num(lo)[1] + normalize_num(hi)[1]) / 2
    raise SimulationError("bad-duration", f"{what}: {value!r}")


class KitchenSimulator:
    """Mental-simulation engine: applies primitives to kitchen states."""

    def __init__(self, ontology=None, config: Optional[dict] = None):
        self.ontology = ontology
        self.config = _merge_config(config)
        self._extra_handlers: dict = {}
        self._extra_passive: set[str] = set()

    def register(self, name: str, handler, minutes: Optional[int] = None,
                 passive: bool = False) -> None:
        """Extend the primitive inventory with a user-supplied operation.

        The handler receives (simulator, builder, slots, preheat_required)
        and returns (outputs, warnings), like the built-in ones.
        """
        if name in _HANDLERS or name in self._extra_handlers:
            raise InputError(f"duplicate primitive name: {name}")
        self._extra_handlers[name] = handler
        self.config["durations"][name] = minutes
        if passive:
            self._extra_passive.add(name)

    # -- lookups -------------------------------------------------------------

    def _kind_matches(self, kind: str, concept: str) -> bool:
        if kind == concept:
            return True
        return self.ontology is not None and self.ontology.is_a(kind, concept)

    def _find_stock(self, ks: KitchenState, concept: str,
                    grams: Fraction) -> KitchenEntity:
        short = None
        for loc in STORAGE_ORDER:
            root = ks.location(loc)
            for e in sorted(ks.food_leaves(root), key=lambda e: e.serial):
                if self._kind_matches(e.kind, concept):
                    if e.grams >= grams:
                        return e
                    short = short or e
        if short is not None:
            raise SimulationError(
                "insufficient-amount",
                f"need {grams} g of {concept}, have {short.grams} g")
        raise SimulationError("missing-entity", f"no {concept} in stock")

    def _find_in_drawer(self, ks: KitchenState, concept: str,
                        container: Optional[bool] = None,
                        empty: bool = False) -> KitchenEntity:
        drawer = ks.location("tool-drawer")
        for s in drawer.contents:
            e = ks.entities[s]
            if not self._kind_matches(e.kind, concept):
                continue
            if container is not None and e.container != container:
                continue
            if empty and e.contents:
                continue
            return e
        raise SimulationError("missing-entity", f"no {concept} in tool drawer")

    def _entity_ref(self, ks: KitchenState, value) -> KitchenEntity:
        """Entity from a Num serial or a Sym naming a location."""
        if isinstance(value, Sym):
            if any(value.name == n for n, _ in ks.locations):
                return ks.location(value.name)
            raise SimulationError("missing-entity", f"no location {value.name}")
        return ks.need(_ids(value)[0])

    def _target_leaves(self, ks: KitchenState, value) -> list[KitchenEntity]:
        """Food entities behind an id, an id set, or a container id."""
        if isinstance(value, Sym):
            return ks.food_leaves(self._entity_ref(ks, value))
        leaves = []
        for s in _ids(value):
            e = ks.need(s)
            if e.is_food:
                leaves.append(e)
            else:
                leaves.extend(ks.food_leaves(e))
        return leaves

    def _mixture_kind(self, composition) -> str:
        if self.ontology is not None:
            for concept, _ in composition:
                if self.ontology.is_a(concept, "flour"):
                    return "dough"
        return "mixture"

    def _slot(self, slots: dict, role: str, primitive: str):
        if role not in slots:
            raise SimulationError("missing-slot", f"{primitive} needs {role}")
        return slots[role]

    def duration_of(self, name: str, slots: dict) -> Fraction:
        table = self.config["durations"]
        if name not in table:
            raise SimulationError("unknown-primitive", name)
        fixed = table[name]
        if fixed is not None:
            return Fraction(fixed)
        value = slots.get("duration")
        if value is None:
            if name == "cool-until":
                return Fraction(self.config["default-cool-minutes"])
            raise SimulationError("bad-duration", f"{name} needs a duration")
        return _minutes(value, name)

    def is_passive(self, name: str) -> bool:
        return name in PASSIVE_PRIMITIVES or name in self._extra_passive

    # -- entry point ----------------------------------------------------------

    def apply(self, name: str, slots: dict, ks: KitchenState,
              start: Optional[Fraction] = None,
              preheat_required: bool = False) -> ApplyResult:
        handler = _HANDLERS.get(name) or self._extra_handlers.get(name)
        if handler is None:
            raise SimulationError("unknown-primitive", name)
        dclock = self.duration_of(name, slots)
        start = ks.clock if start is None else start
        b = _Builder(ks)
        outputs, warnings = handler(self, b, slots, preheat_required)
        new_clock = max(ks.clock, start + dclock)
        if name == "get-kitchen-state":
            return ApplyResult(ks, outputs, dclock, tuple(warnings))
        return ApplyResult(b.commit(new_clock), outputs, dclock, tuple(warnings))

    # -- handlers ------------------------------------------------------------

    def _get_kitchen_state(self, b, slots, preheat_required):
        return {}, []

    def _fetch_and_proportion(self, b, slots, preheat_required):
        concept = self._slot(slots, "concept", "fetch-and-proportion")
        quantity = self._slot(slots, "quantity", "fetch-and-proportion")
        unit = self._slot(slots, "unit", "fetch-and-proportion")
        target = self._slot(slots, "target-container", "fetch-and-proportion")
        if not isinstance(concept, Sym) or not isinstance(quantity, Num):
            raise SimulationError("bad-slots", "fetch-and-proportion")
        unit_name = unit.name if isinstance(unit, Sym) else str(unit)
        grams = _grams(quantity, unit_name)

        source = self._find_stock(b.ks, concept.name, grams)
        counter = b.ks.location("counter-top")

        bowl = self._find_in_drawer(b.ks, target.name if isinstance(target, Sym)
                                    else str(target), container=True, empty=True)
        b.move(bowl.serial, counter.serial)

        share = grams / source.grams
        taken = [(c, g * share) for c, g in source.composition]
        left = [(c, g - g * share) for c, g in source.composition]
        if source.grams == grams:
            b.drop(source.serial)
        else:
            b.put(b.get(source.serial).with_composition(left))
        portion = b.create(source.kind, bowl.serial, composition=taken)
        return {"resultant": Num(Fraction(portion.serial))}, []

    def _fetch(self, b, slots, preheat_required, container: bool):
        concept = self._slot(slots, "concept",
                             "fetch-container" if container else "fetch-tool")
        if not isinstance(concept, Sym):
            raise SimulationError("bad-slots", "fetch needs a concept symbol")
        found = self._find_in_drawer(b.ks, concept.name, container=container)
        b.move(found.serial, b.ks.location("counter-top").serial)
        return {"fetched": Num(Fraction(found.serial))}, []

    def _fetch_tool(self, b, slots, preheat_required):
        return self._fetch(b, slots, preheat_required, container=False)

    def _fetch_container(self, b, slots, preheat_required):
        return self._fetch(b, slots, preheat_required, container=True)

    def _transfer_contents(self, b, slots, preheat_required):
        source = self._slot(slots, "source", "transfer-contents")
        destination = self._slot(slots, "destination", "transfer-contents")
        dest = self._entity_ref(b.ks, destination)
        if not dest.container:
            raise SimulationError("bad-slots", "transfer destination not a container")
        items = self._target_leaves(b.ks, source)
        if not items:
            raise SimulationError("missing-entity", "nothing to transfer")
        for item in items:
            if item.serial != dest.serial:
                b.move(item.serial, dest.serial)
        return {"resultant": Num(Fraction(dest.serial))}, []

    def _merge_foods(self, b, container: KitchenEntity,
                     foods: list[KitchenEntity], mixed_state: str) -> KitchenEntity:
        comp: dict[str, Fraction] = {}
        for f in foods:
            for c, g in f.composition:
                comp[c] = comp.get(c, Fraction(0)) + g
        if len(foods) == 1:
            # Nothing to fuse; record the new mixedness, upgrading a generic
            # mixture's kind when flour entered the composition earlier.
            survivor = foods[0].with_prop("mixed-state", mixed_state)
            if survivor.kind in ("mixture", "dough"):
                survivor = survivor.with_kind(self._mixture_kind(survivor.composition))
            b.put(survivor)
            return survivor
        for f in foods:
            b.drop(f.serial)
        return b.create(self._mixture_kind(tuple(comp.items())),
                        container.serial, composition=tuple(comp.items()),
                        properties=(("mixed-state", mixed_state),))

    def _require_tool(self, b, slots) -> None:
        """The tool slot must name something that exists; tools are not moved."""
        tool = slots.get("tool")
        if tool is None:
            return
        if not isinstance(tool, Sym):
            b.get(_ids(tool)[0])
            return
        for loc in ("tool-drawer", "counter-top"):
            for s in b.ks.location(loc).contents:
                if self._kind_matches(b.ks.entities[s].kind, tool.name):
                    return
        raise SimulationError("missing-entity", f"no {tool.name} available")

    def _beat(self, b, slots, preheat_required):
        items = self._slot(slots, "items", "beat")
        self._require_tool(b, slots)
        foods = self._target_leaves(b.ks, items)
        if not foods:
            raise SimulationError("missing-entity", "nothing to beat")
        end_state = slots.get("end-state")
        mixed = end_state.name if isinstance(end_state, Sym) else "mixed"
        container = b.ks.parent_of(foods[0].serial)
        if container is None or not container.container:
            raise SimulationError("bad-slots", "beat target not in a container")
        mixture = self._merge_foods(b, container, foods, mixed)
        return {"resultant": Num(Fraction(mixture.serial))}, []

    def _combine_homogeneous(self, b, slots, preheat_required):
        target = self._slot(slots, "target", "combine-homogeneous")
        self._require_tool(b, slots)
        container = self._entity_ref(b.ks, target)
        if container.is_food:
            parent = b.ks.parent_of(container.serial)
            if parent is None:
                raise SimulationError("bad-slots", "mix target not in a container")
            container = parent
        foods = b.ks.food_children(container)
        if not foods:
            raise SimulationError("missing-entity", "nothing to mix")
        mixture = self._merge_foods(b, container, foods, "homogeneous")
        return {"resultant": Num(Fraction(mixture.serial))}, []

    def _melt(self, b, slots, preheat_required):
        item = self._slot(slots, "item", "melt")
        foods = self._target_leaves(b.ks, item)
        if not foods:
            raise SimulationError("missing-entity", "nothing to melt")
        for f in foods:
            b.put(b.get(f.serial).with_prop(
                "temperature", Fraction(self.config["melt-temperature"])))
        return {"resultant": _one_or_set(foods)}, []

    def _shape(self, b, slots, preheat_required):
        items = self._slot(slots, "items", "shape")
        form = self._slot(slots, "shape", "shape")
        if not isinstance(form, Sym):
            raise SimulationError("bad-slots", "shape needs a shape symbol")
        foods = self._target_leaves(b.ks, items)
        if not foods:
            raise SimulationError("missing-entity", "nothing to shape")
        for f in foods:
            b.put(b.get(f.serial).with_prop("shape", form.name))
        return {"resultant": _one_or_set(foods)}, []

    def _flatten(self, b, slots, preheat_required):
        items = self._slot(slots, "items", "flatten")
        foods = self._target_leaves(b.ks, items)
        if not foods:
            raise SimulationError("missing-entity", "nothing to flatten")
        for f in foods:
            b.put(b.get(f.serial).with_prop("shape", "flattened"))
        return {"resultant": _one_or_set(foods)}, []

    def _portion_and_arrange(self, b, slots, preheat_required):
        source_ref = self._slot(slots, "source-item", "portion-and-arrange")
        unit = self._slot(slots, "portion-unit", "portion-and-arrange")
        destination = self._slot(slots, "destination", "portion-and-arrange")
        if not isinstance(unit, Sym):
            raise SimulationError("bad-slots", "portion-unit must be a symbol")
        per = self.config["portion-grams"].get(unit.name)
        if per is None:
            raise SimulationError("unsupported-unit", unit.name)
        per = Fraction(per)

        source = self._entity_ref(b.ks, source_ref)
        if not source.is_food:
            foods = b.ks.food_children(source)
            if len(foods) != 1:
                raise SimulationError("bad-slots", "ambiguous portioning source")
            source = foods[0]
        total = source.grams
        count = int(total / per)
        if count < 1:
            raise SimulationError("insufficient-amount",
                                  f"{total} g cannot fill one {unit.name}")
        dest = self._entity_ref(b.ks, destination)

        share = per / total
        portion_comp = [(c, g * share) for c, g in source.composition]
        serials = []
        for _ in range(count):
            portion = b.create(source.kind, dest.serial, composition=portion_comp)
            serials.append(portion.serial)
        remainder = total - per * count
        if remainder == 0:
            b.drop(source.serial)
        else:
            left = [(c, g * (remainder / total)) for c, g in source.composition]
            b.put(b.get(source.serial).with_composition(left))
        return {"portions": _id_set(serials)}, []

    def _line_with(self, b, slots, preheat_required):
        target = self._slot(slots, "container", "line-with")
        liner = self._slot(slots, "liner", "line-with")
        container = self._entity_ref(b.ks, target)
        if not container.container:
            raise SimulationError("bad-slots", "line-with target not a container")
        if isinstance(liner, Sym):
            piece = self._find_in_drawer(b.ks, liner.name)
            liner_kind = piece.kind
        else:
            piece = b.get(_ids(liner)[0])
            liner_kind = piece.kind
        b.drop(piece.serial)  # the liner becomes part of the lined container
        b.put(b.get(container.serial).with_prop("lined-with", liner_kind))
        return {"lined": Num(Fraction(container.serial))}, []

    def _preheat_oven(self, b, slots, preheat_required):
        device = self._slot(slots, "device", "preheat-oven")
        temperature = self._slot(slots, "temperature", "preheat-oven")
        oven = self._entity_ref(b.ks, device)
        if not isinstance(temperature, Num):
            raise SimulationError("bad-slots", "preheat temperature not a number")
        b.put(b.get(oven.serial).with_prop("temperature", temperature.value))
        return {"heated": Num(Fraction(oven.serial))}, []

    def _bake(self, b, slots, preheat_required):
        target = self._slot(slots, "target", "bake")
        oven_ref = slots.get("oven", Sym("oven"))
        duration = slots.get("duration")
        oven = self._entity_ref(b.ks, oven_ref)
        warnings = []
        temp = oven.prop("temperature")
        if temp is None:
            if preheat_required:
                raise SimulationError("oven-not-preheated",
                                      "bake before preheat-oven completed")
            warnings.append("bake: oven was never preheated")
            temp = Fraction(180)

        effective = self.duration_of("bake", slots)
        limit = self._bake_limit(b.ks, target, duration)
        burned = limit is not None and effective > self.config["burn-factor"] * limit

        foods = self._target_leaves(b.ks, target)
        if not foods:
            raise SimulationError("missing-entity", "nothing to bake")
        for f in foods:
            e = b.get(f.serial)
            e = e.with_prop("baked", "burned" if burned else "baked")
            e = e.with_prop("temperature", Fraction(temp))
            baked_form = None
            if self.ontology is not None and self.ontology.knows(e.kind):
                baked_form = self.ontology.feature(e.kind, "baked-form")
            if baked_form:
                e = e.with_kind(str(baked_form))
            b.put(e)
        out = (Num(Fraction(_ids(target)[0]))
               if isinstance(target, Num) else _id_set(f.serial for f in foods))
        return {"baked": out}, warnings

    def _bake_limit(self, ks, target, duration) -> Optional[Fraction]:
        if isinstance(duration, Struct):
            hi = duration.get("max")
            if isinstance(hi, Num):
                return normalize_num(hi)[1]
        if self.ontology is not None:
            for f in self._target_leaves(ks, target):
                if self.ontology.knows(f.kind):
                    limit = self.ontology.feature(f.kind, "max-bake-minutes")
                    if limit is not None:
                        return Fraction(limit)
        return None

    def _cool_until(self, b, slots, preheat_required):
        target = self._slot(slots, "target", "cool-until")
        foods = self._target_leaves(b.ks, target)
        if not foods:
            raise SimulationError("missing-entity", "nothing to cool")
        ambient = Fraction(self.config["ambient-temperature"])
        for f in foods:
            b.put(b.get(f.serial).with_prop("temperature", ambient))
        if isinstance(target, Num):
            out = Num(Fraction(_ids(target)[0]))
        else:
            out = _id_set(f.serial for f in foods)
        return {"cooled": out}, []

    def _sprinkle(self, b, slots, preheat_required):
        targets = self._slot(slots, "targets", "sprinkle")
        topping_ref = self._slot(slots, "topping", "sprinkle")
        foods = self._target_leaves(b.ks, targets)
        if not foods:
            raise SimulationError("missing-entity", "nothing to sprinkle on")
        if isinstance(topping_ref, Sym):
            counter = b.ks.location("counter-top")
            topping = None
            for e in sorted(b.ks.food_leaves(counter), key=lambda e: e.serial):
                if self._kind_matches(e.kind, topping_ref.name):
                    topping = e
                    break
            if topping is None:
                raise SimulationError("missing-entity",
                                      f"no {topping_ref.name} to sprinkle")
        else:
            topping = b.get(_ids(topping_ref)[0])
        if not topping.is_food:
            raise SimulationError("bad-slots", "topping is not food")
        foods = [f for f in foods if f.serial != topping.serial]
        if not foods:
            raise SimulationError("bad-slots",
                                  "cannot sprinkle the topping onto itself")
        n = len(foods)
        for f in foods:
            comp = dict(b.get(f.serial).composition)
            for c, g in topping.composition:
                comp[c] = comp.get(c, Fraction(0)) + g / n
            e = b.get(f.serial).with_composition(comp)
            b.put(e.with_prop("dusted-with", topping.kind))
        b.drop(topping.serial)
        return {"dusted": _id_set(f.serial for f in foods)}, []

    def _set_timer(self, b, slots, preheat_required):
        self._slot(slots, "duration", "set-timer/elapse")
        return {"elapsed": Sym("elapsed")}, []

    def _serve(self, b, slots, preheat_required):
        items = self._slot(slots, "items", "serve")
        foods = self._target_leaves(b.ks, items)
        if not foods:
            raise SimulationError("missing-entity", "nothing to serve")
        plate = self._find_in_drawer(b.ks, "plate", container=True)
        b.move(plate.serial, b.ks.location("counter-top").serial)
        for f in foods:
            b.move(f.serial, plate.serial)
        return {"served": Num(Fraction(plate.serial))}, []


def _one_or_set(foods: list[KitchenEntity]):
    if len(foods) == 1:
        return Num(Fraction(foods[0].serial))
    return _id_set(f.serial for f in foods)


def _grams(quantity: Num, unit_name: str) -> Fraction:
    probe = Num(quantity.value, unit_name)
    try:
        dim, grams = normalize_num(probe)
    except Exception:
        raise SimulationError("unsupported-unit", unit_name)
    if dim != "mass":
        raise SimulationError("unsupported-unit",
                              f"{unit_name} is not a mass unit")
    if grams <= 0:
        raise SimulationError("insufficient-amount", f"{grams} g requested")
    return grams


_HANDLERS = {
    "get-kitchen-state": KitchenSimulator._get_kitchen_state,
    "fetch-and-proportion": KitchenSimulator._fetch_and_proportion,
    "fetch-tool": KitchenSimulator._fetch_tool,
    "fetch-container": KitchenSimulator._fetch_container,
    "transfer-contents": KitchenSimulator._transfer_contents,
    "combine-homogeneous": KitchenSimulator._combine_homogeneous,
    "beat": KitchenSimulator._beat,
    "melt": KitchenSimulator._melt,
    "shape": KitchenSimulator._shape,
    "flatten": KitchenSimulator._flatten,
    "portion-and-arrange": KitchenSimulator._portion_and_arrange,
    "line-with": KitchenSimulator._line_with,
    "preheat-oven": KitchenSimulator._preheat_oven,
    "bake": KitchenSimulator._bake,
    "sprinkle": KitchenSimulator._sprinkle,
    "cool-until": KitchenSimulator._cool_until,
    "set-timer/elapse": KitchenSimulator._set_timer,
    "serve": KitchenSimulator._serve,
}

PRIMITIVE_NAMES = tuple(sorted(_HANDLERS))


# ---------------------------------------------------------------------------
# Execution traces


@dataclass(frozen=True)
class TraceRecord:
    call_id: str
    primitive: str
    inputs: dict             # role -> JSON-ready term
    outputs: dict
    start: Fraction
    end: Fraction
    dclock: Fraction
    state_before: str
    state_after: str
    hash_before: str
    hash_after: str
    warnings: tuple = ()

    def to_json(self) -> dict:
        return {
            "call": self.call_id,
            "primitive": self.primitive,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "start": str(self.start),
            "end": str(self.end),
            "dclock": str(self.dclock),
            "state-before": self.state_before,
            "state-after": self.state_after,
            "hash-before": self.hash_before,
            "hash-after": self.hash_after,
            "warnings": list(self.warnings),
        }


@dataclass
class ExecutionTrace:
    initial_hash: str
    records: list = field(default_factory=list)

    @property
    def final_hash(self) -> str:
        return self.records[-1].hash_after if self.records else self.initial_hash

    @property
    def minutes(self) -> Fraction:
        return max((r.end for r in self.records), default=Fraction(0))

    def write_jsonl(self, path: Path | str) -> None:
        lines = [json.dumps({"initial-hash": self.initial_hash}, sort_keys=True)]
        lines += [json.dumps(r.to_json(), sort_keys=True) for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")


def slot_values_to_json(slots: dict) -> dict:
    return {role: fv_to_json(value) for role, value in sorted(slots.items())}
