"""Ontology and personal dynamic memory (discourse state).

The ontology is a small is-a hierarchy with per-concept features; lookups
inherit features from ancestors, child entries overriding parents. The
personal dynamic memory tracks the unfolding recipe as a plot: one node per
executed instruction, each holding the accessible entities in recency order.
Zero anaphora and definite references resolve against that order: the most
recent type-compatible entity wins, and ambiguity is not an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .errors import InputError, UnknownConceptError
from .features import FAILURE, FALSE, TRUE, Num, ProcRegistry, Struct, Sym, Text

KITCHEN_STATE_CONCEPT = "kitchen-state"


# ---------------------------------------------------------------------------
# Ontology


class Ontology:
    """Acyclic is-a hierarchy of concepts with inheritable feature maps."""

    def __init__(self, concepts: dict[str, dict]):
        self._parents: dict[str, tuple[str, ...]] = {}
        self._features: dict[str, dict] = {}
        for name, entry in concepts.items():
            parents = tuple(entry.get("is-a", ()))
            self._parents[name] = parents
            self._features[name] = dict(entry.get("features", {}))
        for name, parents in self._parents.items():
            for p in parents:
                if p not in self._parents:
                    raise InputError(f"concept {name} names unknown parent {p}")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(c: str, trail: tuple[str, ...]) -> None:
            if state.get(c) == 2:
                return
            if state.get(c) == 1:
                raise InputError(f"is-a cycle through {c}: {' -> '.join(trail + (c,))}")
            state[c] = 1
            for p in self._parents[c]:
                visit(p, trail + (c,))
            state[c] = 2

        for c in self._parents:
            visit(c, ())

    @staticmethod
    def load(path: Path | str) -> "Ontology":
        data = json.loads(Path(path).read_text())
        if "concepts" not in data or not isinstance(data["concepts"], dict):
            raise InputError("ontology file must contain a 'concepts' map")
        return Ontology(data["concepts"])

    def knows(self, concept: str) -> bool:
        return concept in self._parents

    def concepts(self) -> list[str]:
        return sorted(self._parents)

    def is_a(self, concept: str, ancestor: str) -> bool:
        """True when concept reaches ancestor through is-a links (reflexive)."""
        if concept not in self._parents or ancestor not in self._parents:
            return False
        seen = set()
        frontier = [concept]
        while frontier:
            c = frontier.pop()
            if c == ancestor:
                return True
            if c in seen:
                continue
            seen.add(c)
            frontier.extend(self._parents[c])
        return False

    def lookup(self, concept: str) -> dict:
        """Merged feature map: ancestors first, the concept's own entries last."""
        if concept not in self._parents:
            raise UnknownConceptError(f"concept not in ontology: {concept}")
        merged: dict = {}

        def ancestors_first(c: str, seen: set[str]) -> None:
            if c in seen:
                return
            seen.add(c)
            for p in self._parents[c]:
                ancestors_first(p, seen)
            merged.update(self._features[c])

        ancestors_first(concept, set())
        return merged

    def feature(self, concept: str, name: str):
        return self.lookup(concept).get(name)


def _json_to_fv(value):
    if isinstance(value, bool):
        return TRUE if value else FALSE
    if isinstance(value, (int, float)):
        return Num(Fraction(value))
    if isinstance(value, str):
        return Sym(value)
    raise InputError(f"unsupported ontology feature value: {value!r}")


# ---------------------------------------------------------------------------
# Plot and accessible entities


@dataclass(frozen=True)
class AccessibleEntity:
    """One discourse-accessible referent: entity id(s) plus classifying concept."""

    ids: tuple[int, ...]
    concept: str
    introduced_by: int  # instruction index that (re)introduced it
    demoted: bool = False


@dataclass(frozen=True)
class PlotNode:
    index: int
    accessible: tuple[AccessibleEntity, ...]
    kitchen_state_id: str
    event: str = ""
    fragment_ref: Optional[int] = None  # instruction index of the plan fragment
    question_refs: tuple = ()           # ids of narrative questions raised here


@dataclass(frozen=True)
class Resolution:
    ids: tuple[int, ...]
    rank: int  # position scanned in the accessible list (0 = most recent)
    candidates: int  # how many entries satisfied the constraints
    concept: str


def initial_plot_node(kitchen_state_id: str) -> PlotNode:
    ks_entry = AccessibleEntity((), KITCHEN_STATE_CONCEPT, -1)
    return PlotNode(0, (ks_entry,), kitchen_state_id)


class PersonalDynamicMemory:
    """Ontology + plot + learned composites + archive of past narratives."""

    def __init__(self, ontology: Ontology, kitchen_state_id: str):
        self.ontology = ontology
        self.plot: list[PlotNode] = [initial_plot_node(kitchen_state_id)]
        self.composites: dict[str, object] = {}
        self.past_narratives: tuple = ()
        self.metadata: dict[str, object] = {}

    @property
    def current(self) -> PlotNode:
        return self.plot[-1]

    def archive(self, record: dict) -> None:
        frozen = tuple(sorted(record.items()))
        self.past_narratives = self.past_narratives + (frozen,)


def resolve_entity(node: PlotNode, kitchen_state, ontology: Ontology,
                   concept: Optional[str] = None,
                   properties: Optional[dict] = None,
                   exclude: Iterable[int] = ()) -> Optional[Resolution]:
    """Most recent accessible entity compatible with the constraints.

    Scans the accessible list front to back (most recent first; demoted
    entries naturally sit behind survivors). Compatibility: the entry's
    concept (or the entity's own kind) is-a the requested concept, and every
    requested property holds. A food entry also makes its enclosing container
    reachable ("the bowl of butter" is one discourse referent); when a
    container is requested and the entry itself is food, the parent container
    is the candidate. Multiple candidates are not an error; recency decides,
    and the report carries rank and candidate count.
    """
    properties = properties or {}
    exclude = set(exclude)
    hit: Optional[Resolution] = None
    candidates = 0
    for rank, entry in enumerate(node.accessible):
        if entry.ids and exclude.intersection(entry.ids):
            continue
        found = _candidate_ids(entry, kitchen_state, ontology, concept, properties)
        if found is None or (found and exclude.intersection(found)):
            continue
        candidates += 1
        if hit is None:
            hit = Resolution(found, rank, 0, entry.concept)
    if hit is None:
        return None
    return Resolution(hit.ids, hit.rank, candidates, hit.concept)


def _candidate_ids(entry: AccessibleEntity, ks, ontology: Ontology,
                   concept: Optional[str],
                   properties: dict) -> Optional[tuple[int, ...]]:
    if entry.concept == KITCHEN_STATE_CONCEPT:
        return () if concept == KITCHEN_STATE_CONCEPT else None
    if concept == KITCHEN_STATE_CONCEPT:
        return None

    direct = concept is None or ontology.is_a(entry.concept, concept)
    if not direct and ks is not None and concept is not None:
        kinds = [ks.entity(i).kind for i in entry.ids if ks.entity(i) is not None]
        direct = bool(kinds) and all(ontology.is_a(k, concept) for k in kinds)
    if direct and _properties_hold(entry.ids, ks, properties):
        return entry.ids

    # Promotion: a single food id stands in for the container holding it.
    if concept is not None and ks is not None and len(entry.ids) == 1:
        entity = ks.entity(entry.ids[0])
        if entity is not None and entity.is_food:
            parent = ks.parent_of(entity.serial)
            if (parent is not None and parent.container
                    and not ks.is_location(parent)
                    and ontology.is_a(parent.kind, concept)
                    and _properties_hold((parent.serial,), ks, properties)):
                return (parent.serial,)
    return None


def _properties_hold(ids: tuple[int, ...], ks, properties: dict) -> bool:
    if not properties:
        return True
    if ks is None:
        return False
    entities = [ks.entity(i) for i in ids]
    if any(e is None for e in entities) or not entities:
        return False
    min_contents = properties.get("min-contents")
    if min_contents is not None:
        if len(entities) != 1:
            return False
        if len(ks.food_children(entities[0])) < int(min_contents):
            return False
    want_shape = properties.get("shape")
    if want_shape is not None:
        leaves = []
        for e in entities:
            leaves.extend(ks.food_leaves(e))
        if not leaves or any(l.prop("shape") != want_shape for l in leaves):
            return False
    return True


def advance_plot(pdm: PersonalDynamicMemory, kitchen_state,
                 new_entities: list[tuple[tuple[int, ...], str]],
                 instruction_index: int, event: str = "",
                 fragment_ref: Optional[int] = None,
                 question_refs: tuple = ()) -> PlotNode:
    """Append a plot node: new resultants first, spent entries demoted.

    New entries are prepended most-recent-first (the last resultant of the
    instruction is the most salient). Old entries survive in order; entries
    whose entities all vanished from the state are dropped (nothing left to
    refer to); containers that ended up empty are demoted behind survivors.
    The kitchen-state handle stays pinned at the end.
    """
    prev = pdm.current
    fresh: list[AccessibleEntity] = []
    seen_ids: set[tuple[int, ...]] = set()
    for ids, concept in reversed(new_entities):
        ids = tuple(ids)
        if not ids or ids in seen_ids:
            continue
        seen_ids.add(ids)
        fresh.append(AccessibleEntity(ids, concept, instruction_index))

    survivors: list[AccessibleEntity] = []
    demoted: list[AccessibleEntity] = []
    for entry in prev.accessible:
        if entry.concept == KITCHEN_STATE_CONCEPT:
            continue
        if entry.ids in seen_ids:
            continue  # superseded by a fresh entry for the same referent
        entities = [kitchen_state.entity(i) for i in entry.ids]
        if all(e is None for e in entities):
            continue  # nothing left to refer to
        spent = all(
            e is not None and kitchen_state.is_container(e)
            and not kitchen_state.food_children(e)
            for e in entities
        )
        if spent:
            demoted.append(AccessibleEntity(entry.ids, entry.concept,
                                            entry.introduced_by, demoted=True))
        else:
            survivors.append(entry)

    ks_entry = AccessibleEntity((), KITCHEN_STATE_CONCEPT, -1)
    node = PlotNode(
        prev.index + 1,
        tuple(fresh) + tuple(survivors) + tuple(demoted) + (ks_entry,),
        kitchen_state.state_id,
        event,
        fragment_ref,
        tuple(question_refs),
    )
    pdm.plot.append(node)
    return node


# ---------------------------------------------------------------------------
# Standard procedures

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}


def parse_number_text(s: str) -> Optional[Fraction]:
    s = s.strip().lower()
    if s in _NUMBER_WORDS:
        return Fraction(_NUMBER_WORDS[s])
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def _as_text(fv) -> Optional[str]:
    if isinstance(fv, Text):
        return fv.text
    if isinstance(fv, Sym):
        return fv.name
    return None


def make_registry(ontology: Ontology) -> ProcRegistry:
    """Standard procedure set shared by grammar matching and merging."""
    reg = ProcRegistry(context=ontology)

    def lookup_in_ontology(args, ctx):
        if len(args) != 1 or not isinstance(args[0], Sym):
            raise InputError("lookup-in-ontology takes one concept symbol")
        feats = ctx.lookup(args[0].name)  # raises UnknownConceptError on miss
        return Struct([(k, _json_to_fv(v)) for k, v in sorted(feats.items())])

    def is_a(args, ctx):
        if len(args) != 2:
            raise InputError("is-a takes concept and ancestor")
        c, a = (_as_text(x) for x in args)
        if c is None or a is None:
            return FALSE
        return TRUE if ctx.is_a(c, a) else FALSE

    def parse_number(args, ctx):
        del ctx
        s = _as_text(args[0]) if args else None
        if s is None:
            return FAILURE
        value = parse_number_text(s)
        return Num(value) if value is not None else FAILURE

    def parse_range(args, ctx):
        del ctx
        s = _as_text(args[0]) if args else None
        if s is None or "-" not in s:
            return FAILURE
        lo, _, hi = s.partition("-")
        lo_v, hi_v = parse_number_text(lo), parse_number_text(hi)
        if lo_v is None or hi_v is None:
            return FAILURE
        return Struct([("min", Num(lo_v)), ("max", Num(hi_v))])

    reg.register("lookup-in-ontology", lookup_in_ontology)
    reg.register("is-a", is_a)
    reg.register("parse-number", parse_number)
    reg.register("parse-range", parse_range)
    return reg
