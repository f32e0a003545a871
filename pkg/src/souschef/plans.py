"""Cooking plan representation: primitives, networks, completion, execution.

A comprehension step yields a fragment: primitive calls over shared logic
variables, with open slots. Completion binds every input slot from one of
the knowledge sources (discourse memory, ontology defaults, simulator
lookups) and leaves output slots for execution to compute. Execution is
data-flow driven: any call whose inputs are bound may run; the simulated
clock advances along the critical path, because passive operations (oven
work, cooling) hand control back to the agent immediately.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .errors import (
    DataflowDeadlock, DuplicateNameError, InputError, StructuralError,
    UnderstandingFailure, UnsupportedDirection,
)
from .features import Bindings, Num, Sym, ValueSet, Var, normalize_num
from .kitchen import (
    ExecutionTrace, KitchenSimulator, KitchenState, TraceRecord,
    content_hash, slot_values_to_json,
)
from .memory import PlotNode, resolve_entity
from .serialize import fv_from_json, fv_to_json

# ---------------------------------------------------------------------------
# Primitive inventory

KS = "kitchen-state"


@dataclass(frozen=True)
class PrimitiveSpec:
    name: str
    slots: tuple                  # ordered (role, semantic-type)
    outputs: frozenset            # roles computed by the primitive
    optional: frozenset = frozenset()
    inverse: tuple = ()           # alternative input-role sets for verification

    @property
    def roles(self) -> tuple:
        return tuple(r for r, _ in self.slots)

    @property
    def inputs(self) -> tuple:
        return tuple(r for r, _ in self.slots if r not in self.outputs)

    def slot_type(self, role: str) -> Optional[str]:
        for r, t in self.slots:
            if r == role:
                return t
        return None

    @property
    def ks_in(self) -> Optional[str]:
        for r, t in self.slots:
            if t == KS and r not in self.outputs:
                return r
        return None

    @property
    def ks_out(self) -> Optional[str]:
        for r, t in self.slots:
            if t == KS and r in self.outputs:
                return r
        return None

    @property
    def directions(self) -> tuple:
        """Legal input configurations; the canonical forward one comes first."""
        return (frozenset(self.inputs),) + tuple(frozenset(s) for s in self.inverse)


def _spec(name, slots, outputs, optional=(), inverse=()):
    spec = PrimitiveSpec(name, tuple(slots), frozenset(outputs),
                         frozenset(optional), tuple(inverse))
    if not spec.outputs:
        raise StructuralError(f"primitive {name} computes nothing")
    return spec


_CORE_PRIMITIVES = [
    _spec("get-kitchen-state",
          [("kitchen-state-out", KS)], {"kitchen-state-out"}),
    _spec("fetch-and-proportion",
          [("source-ks", KS), ("concept", "ingredient-concept"),
           ("quantity", "quantity"), ("unit", "unit"),
           ("target-container", "container"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"},
          optional={"target-container"},
          inverse=[{"source-ks", "concept", "quantity", "unit", "resultant"}]),
    _spec("fetch-tool",
          [("input-ks", KS), ("concept", "tool"),
           ("output-ks", KS), ("fetched", "entity-set")],
          {"output-ks", "fetched"}),
    _spec("fetch-container",
          [("input-ks", KS), ("concept", "container"),
           ("output-ks", KS), ("fetched", "entity-set")],
          {"output-ks", "fetched"}),
    _spec("transfer-contents",
          [("input-ks", KS), ("source", "entity-set"),
           ("destination", "container"),
           ("output-ks", KS), ("resultant", "container")],
          {"output-ks", "resultant"}),
    _spec("combine-homogeneous",
          [("input-ks", KS), ("target", "container"), ("tool", "tool"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"}, optional={"tool"}),
    _spec("beat",
          [("input-ks", KS), ("items", "entity-set"), ("tool", "tool"),
           ("end-state", "condition"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"}, optional={"tool", "end-state"}),
    _spec("melt",
          [("input-ks", KS), ("item", "entity-set"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"}),
    _spec("shape",
          [("input-ks", KS), ("items", "entity-set"), ("shape", "shape"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"}),
    _spec("flatten",
          [("input-ks", KS), ("items", "entity-set"),
           ("output-ks", KS), ("resultant", "entity-set")],
          {"output-ks", "resultant"}),
    _spec("portion-and-arrange",
          [("input-ks", KS), ("source-item", "entity-set"),
           ("portion-unit", "unit"), ("destination", "container"),
           ("output-ks", KS), ("portions", "entity-set")],
          {"output-ks", "portions"},
          optional={"destination"},
          inverse=[{"input-ks", "source-item", "portion-unit", "portions"}]),
    _spec("line-with",
          [("input-ks", KS), ("container", "container"),
           ("liner", "ingredient-concept"),
           ("output-ks", KS), ("lined", "container")],
          {"output-ks", "lined"}),
    _spec("preheat-oven",
          [("input-ks", KS), ("device", "device"),
           ("temperature", "temperature"),
           ("output-ks", KS), ("heated", "device")],
          {"output-ks", "heated"}),
    _spec("bake",
          [("input-ks", KS), ("target", "entity-set"), ("oven", "device"),
           ("duration", "duration"),
           ("output-ks", KS), ("baked", "entity-set")],
          {"output-ks", "baked"}, optional={"oven"}),
    _spec("sprinkle",
          [("input-ks", KS), ("targets", "entity-set"),
           ("topping", "entity-set"),
           ("output-ks", KS), ("dusted", "entity-set")],
          {"output-ks", "dusted"}),
    _spec("cool-until",
          [("input-ks", KS), ("target", "entity-set"),
           ("condition", "condition"), ("duration", "duration"),
           ("output-ks", KS), ("cooled", "entity-set")],
          {"output-ks", "cooled"}, optional={"condition", "duration"}),
    _spec("set-timer/elapse",
          [("input-ks", KS), ("duration", "duration"),
           ("output-ks", KS), ("elapsed", "condition")],
          {"output-ks", "elapsed"}),
    _spec("serve",
          [("input-ks", KS), ("items", "entity-set"),
           ("output-ks", KS), ("served", "container")],
          {"output-ks", "served"}),
]


class PrimitiveRegistry:
    def __init__(self):
        self._specs: dict[str, PrimitiveSpec] = {}
        for spec in _CORE_PRIMITIVES:
            self.register(spec)

    def register(self, spec: PrimitiveSpec) -> None:
        if spec.name in self._specs:
            raise DuplicateNameError(f"primitive already registered: {spec.name}")
        self._specs[spec.name] = spec

    def get(self, name: str) -> PrimitiveSpec:
        if name not in self._specs:
            raise InputError(f"unknown primitive: {name}")
        return self._specs[name]

    def knows(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> tuple:
        return tuple(sorted(self._specs))


def register_primitives() -> PrimitiveRegistry:
    """Fresh registry holding the core inventory."""
    return PrimitiveRegistry()


PRIMITIVES = register_primitives()


# ---------------------------------------------------------------------------
# Calls, fragments, networks


@dataclass(frozen=True)
class PlanCall:
    call_id: str
    primitive: str
    slots: tuple            # ordered (role, term); term = Var | constant value
    provenance: int = -1    # source instruction index
    meta: tuple = ()        # bookkeeping, e.g. composite var-maps

    def slot(self, role: str):
        for r, t in self.slots:
            if r == role:
                return t
        return None

    def with_slot(self, role: str, term) -> "PlanCall":
        slots = list(self.slots)
        for i, (r, _) in enumerate(slots):
            if r == role:
                slots[i] = (role, term)
                break
        else:
            slots.append((role, term))
        return replace(self, slots=tuple(slots))

    def slot_map(self) -> dict:
        return dict(self.slots)


@dataclass
class PlanFragment:
    """Partial meaning: calls with open variables plus discourse annotations."""

    calls: list = field(default_factory=list)
    discourse: dict = field(default_factory=dict)  # var -> (category, props)
    locate: dict = field(default_factory=dict)     # var -> entity kind
    unresolved_tokens: list = field(default_factory=list)

    def vars_produced(self) -> set[str]:
        out = set()
        for call in self.calls:
            spec = PRIMITIVES.get(call.primitive)
            for role in spec.outputs:
                term = call.slot(role)
                if isinstance(term, Var):
                    out.add(term.name)
        return out


@dataclass(frozen=True)
class OpenSlot:
    variable: Optional[str]
    call_id: str
    role: str
    tag: str  # discourse-resolvable | ontology-resolvable | simulation-computable


def call_outputs(call: PlanCall) -> frozenset:
    """Output roles of a call; composite calls export their out-* slots."""
    if call.primitive.startswith("composite:"):
        return frozenset(r for r, _ in call.slots if r.startswith("out-"))
    return PRIMITIVES.get(call.primitive).outputs


@dataclass
class PlanNetwork:
    calls: list = field(default_factory=list)

    def call(self, call_id: str) -> PlanCall:
        for c in self.calls:
            if c.call_id == call_id:
                return c
        raise InputError(f"no call {call_id}")

    def producers(self) -> dict:
        """var name -> (call, role) that outputs it; validates single assignment."""
        out: dict[str, tuple] = {}
        for c in self.calls:
            for role in call_outputs(c):
                term = c.slot(role)
                if isinstance(term, Var):
                    if term.name in out:
                        raise StructuralError(
                            f"variable ?{term.name} produced twice")
                    out[term.name] = (c, role)
        return out

    def consumers(self) -> list:
        """(consumer call, role, producer call) edges over shared variables."""
        prod = self.producers()
        edges = []
        for c in self.calls:
            outputs = call_outputs(c)
            for role, term in c.slots:
                if role in outputs:
                    continue
                for v in _term_vars(term):
                    if v in prod:
                        edges.append((c, role, prod[v][0]))
        return edges

    def validate(self) -> None:
        seen = set()
        for c in self.calls:
            if c.call_id in seen:
                raise StructuralError(f"duplicate call id {c.call_id}")
            seen.add(c.call_id)
        self.producers()
        # acyclicity over producer -> consumer edges
        deps: dict[str, set[str]] = {c.call_id: set() for c in self.calls}
        for consumer, _, producer in self.consumers():
            deps[consumer.call_id].add(producer.call_id)
        state: dict[str, int] = {}

        def visit(cid: str) -> None:
            if state.get(cid) == 2:
                return
            if state.get(cid) == 1:
                raise StructuralError(f"plan cycle through {cid}")
            state[cid] = 1
            for d in deps[cid]:
                visit(d)
            state[cid] = 2

        for cid in deps:
            visit(cid)

    def open_input_slots(self) -> list:
        """Input slots whose variable no call produces (incomplete plan)."""
        prod = self.producers()
        out = []
        for c in self.calls:
            outputs = call_outputs(c)
            for role, term in c.slots:
                if role in outputs:
                    continue
                for v in _term_vars(term):
                    if v not in prod:
                        out.append((c.call_id, role, v))
        return out


def _term_vars(term) -> list[str]:
    if isinstance(term, Var):
        return [term.name]
    if isinstance(term, ValueSet):
        out = []
        for m in term:
            out.extend(_term_vars(m))
        return out
    return []


# ---------------------------------------------------------------------------
# Slot classification (shared by question raising and completion)

SOURCE_LANGUAGE = "language"
SOURCE_SIMULATION = "mental-simulation"
SOURCE_ONTOLOGY = "ontology"
SOURCE_PDM = "discourse-pdm"

#: ontology feature consulted for each defaultable role, on the concept named
#: after the primitive itself.
_ROLE_DEFAULT_FEATURE = {
    "tool": "default-tool",
    "end-state": "default-end-state",
    "destination": "default-destination",
    "oven": "default-device",
    "condition": "default-condition",
}


@dataclass(frozen=True)
class SlotStatus:
    call_id: str
    role: str
    variable: Optional[str]
    bound_by_language: bool
    tag: Optional[str]  # resolution tag when open


def normalize_fragment(fragment: PlanFragment, next_index) -> None:
    """Assign call ids and materialize output/ks variables in place."""
    for call in list(fragment.calls):
        spec = PRIMITIVES.get(call.primitive)
        idx = next_index()
        updated = replace(call, call_id=f"c{idx}")
        for role in spec.roles:
            if updated.slot(role) is None and role in spec.outputs:
                updated = updated.with_slot(role, Var(f"v{idx}-{role}"))
        ks_in = spec.ks_in
        if ks_in is not None and updated.slot(ks_in) is None:
            updated = updated.with_slot(ks_in, Var(f"v{idx}-{ks_in}"))
        fragment.calls[fragment.calls.index(call)] = updated


def classify_slots(fragment: PlanFragment, ontology,
                   linked_vars: set[str]) -> list[SlotStatus]:
    """Status of every declared slot of every call in the fragment.

    linked_vars: variables produced by some call (this fragment or earlier in
    the session); a slot consuming one was bound by parsing, i.e. language.
    """
    produced = fragment.vars_produced() | set(linked_vars)
    out = []
    for call in fragment.calls:
        spec = PRIMITIVES.get(call.primitive)
        for role in spec.roles:
            term = call.slot(role)
            is_output = role in spec.outputs
            if term is None:
                if is_output:
                    continue  # normalize_fragment materializes these
                feature = _ROLE_DEFAULT_FEATURE.get(role)
                has_default = (
                    feature is not None and ontology is not None
                    and ontology.knows(call.primitive)
                    and ontology.feature(call.primitive, feature) is not None)
                if role == "target-container" or has_default:
                    out.append(SlotStatus(call.call_id, role, None, False,
                                          "ontology-resolvable"))
                # silent omission for defaultless optional slots
                continue
            term_vars = _term_vars(term)
            if not term_vars:
                out.append(SlotStatus(call.call_id, role, None, True, None))
                continue
            if is_output:
                v = term_vars[0]
                out.append(SlotStatus(call.call_id, role, v, False,
                                      "simulation-computable"))
                continue
            if all(v in produced for v in term_vars):
                out.append(SlotStatus(call.call_id, role, term_vars[0], True, None))
                continue
            v = next(x for x in term_vars if x not in produced)
            if v in fragment.locate:
                tag = "simulation-computable"
            elif v in fragment.discourse or spec.slot_type(role) == KS:
                tag = "discourse-resolvable"
            else:
                tag = "ontology-resolvable"
            out.append(SlotStatus(call.call_id, role, v, False, tag))
    return out


# ---------------------------------------------------------------------------
# Plan completion


@dataclass(frozen=True)
class SlotAnswer:
    call_id: str
    role: str
    variable: Optional[str]
    source: str
    value: object
    rank: Optional[int] = None
    candidates: Optional[int] = None


@dataclass
class CompletionResult:
    calls: list
    answers: list            # SlotAnswer per slot bound here
    ks_out_var: Optional[str]


def question_id(call_id: str, role: str) -> str:
    return f"q-{call_id}-{role}"


def complete_plan(fragment: PlanFragment, node: PlotNode, ks: KitchenState,
                  ontology, producer_of: dict, chain_var: Optional[str],
                  ) -> CompletionResult:
    """Bind every open input slot of the fragment's calls.

    producer_of maps entity serials to the variable name that produced them
    in earlier calls, so discourse resolutions re-enter the data flow as
    variable links rather than opaque constants. chain_var is the variable
    carrying the current kitchen state (output of the previous call).
    """
    order = _topological(fragment.calls)
    bound_vars = fragment.vars_produced()
    bound_vars.update(producer_of.values())
    if chain_var is not None:
        bound_vars.add(chain_var)
    answers: list[SlotAnswer] = []
    calls_out = []
    substitutions: dict[str, object] = {}

    for call in order:
        spec = PRIMITIVES.get(call.primitive)
        # chain the kitchen state first
        ks_in = spec.ks_in
        if ks_in is not None:
            term = call.slot(ks_in)
            if isinstance(term, Var) and term.name not in bound_vars:
                if chain_var is None:
                    raise UnderstandingFailure(
                        "no kitchen state available",
                        question_id=question_id(call.call_id, ks_in))
                call = call.with_slot(ks_in, Var(chain_var))
                answers.append(SlotAnswer(call.call_id, ks_in, term.name,
                                          SOURCE_PDM, Var(chain_var)))
        resolved_ids: set[int] = set()
        for zero_pass in (False, True):
            for role in spec.roles:
                if role in spec.outputs or spec.slot_type(role) == KS:
                    continue
                term = call.slot(role)
                binding = _complete_slot(call, spec, role, term, fragment,
                                         node, ks, ontology, producer_of,
                                         bound_vars, resolved_ids,
                                         zero_pass, substitutions)
                if binding is None:
                    continue
                new_term, answer = binding
                call = call.with_slot(role, new_term)
                if answer is not None:
                    answers.append(answer)
        if spec.ks_out is not None:
            out_term = call.slot(spec.ks_out)
            if isinstance(out_term, Var):
                chain_var = out_term.name
        calls_out.append(call)
    return CompletionResult(calls_out, answers, chain_var)


def _complete_slot(call, spec, role, term, fragment, node, ks, ontology,
                   producer_of, bound_vars, resolved_ids, zero_pass,
                   substitutions):
    """One slot's completion step; returns (new term, answer) or None.

    Every open variable in the term that the current pass may handle is
    resolved here (locate and plain discourse variables on the first pass,
    zero-anaphora variables on the second); variables belonging to the other
    pass stay open and the slot is revisited. A slot raises one narrative
    question, so multiple resolutions fold into a single combined answer.
    """
    if term is None:
        if zero_pass:
            return None
        return _fill_default(call, spec, role, ontology)

    if not [v for v in _term_vars(term) if v not in bound_vars]:
        return None

    changed = False
    resolved: list[SlotAnswer] = []
    combined_ids: list[int] = []
    while True:
        open_vars = [v for v in _term_vars(term) if v not in bound_vars]
        progress = False
        for v in open_vars:
            if v in substitutions:
                term = _substitute_var(term, v, substitutions[v])
                changed = True
                progress = True
                break
            if v in fragment.locate:
                if zero_pass:
                    continue
                kind = fragment.locate[v]
                found = ks.entities_of_kind(kind, ontology)
                if not found:
                    raise UnderstandingFailure(
                        f"no {kind} present in the kitchen",
                        question_id=question_id(call.call_id, role))
                value = Num(Fraction(found[0].serial))
                substitutions[v] = value
                term = _substitute_var(term, v, value)
                combined_ids.append(found[0].serial)
                resolved.append(SlotAnswer(call.call_id, role, v,
                                           SOURCE_SIMULATION, value))
                progress = True
                break
            if v in fragment.discourse:
                category, props = fragment.discourse[v]
                if bool(props.get("zero")) != zero_pass:
                    continue
                resolution = resolve_entity(
                    node, ks, ontology, concept=category,
                    properties={k: val for k, val in props.items()
                                if k != "zero"},
                    exclude=resolved_ids if zero_pass else ())
                if resolution is None:
                    raise UnderstandingFailure(
                        f"cannot resolve '{category}' in the current context",
                        question_id=question_id(call.call_id, role))
                resolved_ids.update(resolution.ids)
                combined_ids.extend(resolution.ids)
                value = _ids_term(resolution.ids, producer_of)
                substitutions[v] = value
                term = _substitute_var(term, v, value)
                resolved.append(SlotAnswer(call.call_id, role, v, SOURCE_PDM,
                                           _ids_term(resolution.ids, {}),
                                           rank=resolution.rank,
                                           candidates=resolution.candidates))
                progress = True
                break
            if zero_pass:
                continue
            filled = _fill_default(call, spec, role, ontology)
            if filled is not None and isinstance(term, Var):
                new_term, answer = filled
                substitutions[v] = new_term
                return (new_term, SlotAnswer(call.call_id, role, v,
                                             answer.source, answer.value))
            raise UnderstandingFailure(
                f"no knowledge source can fill {role} of {call.primitive}",
                question_id=question_id(call.call_id, role))
        if not progress:
            break

    if not resolved:
        return (term, None) if changed else None
    if len(resolved) == 1:
        return (term, resolved[0])
    first = resolved[0]
    combined = SlotAnswer(call.call_id, role, first.variable, first.source,
                          _ids_term(tuple(combined_ids), {}),
                          rank=first.rank, candidates=first.candidates)
    return (term, combined)


def _fill_default(call, spec, role, ontology):
    if ontology is None:
        return None
    if role == "target-container":
        concept = call.slot("concept")
        if isinstance(concept, Sym) and ontology.knows(concept.name):
            preferred = ontology.feature(concept.name, "preferred-container")
            if preferred is not None:
                value = Sym(str(preferred))
                return (value, SlotAnswer(call.call_id, role, None,
                                          SOURCE_ONTOLOGY, value))
        return None
    feature = _ROLE_DEFAULT_FEATURE.get(role)
    if feature is None or not ontology.knows(call.primitive):
        return None
    default = ontology.feature(call.primitive, feature)
    if default is None:
        return None
    value = Sym(str(default))
    return (value, SlotAnswer(call.call_id, role, None, SOURCE_ONTOLOGY, value))


def _ids_term(ids: tuple, producer_of: dict):
    def one(serial: int):
        var_name = producer_of.get(serial)
        return Var(var_name) if var_name else Num(Fraction(serial))

    members = ValueSet(one(s) for s in sorted(ids))
    if len(members) == 1:
        # One producer covers the whole group (or a single constant).
        return members.members[0]
    return members


def _substitute_var(term, name: str, value):
    if isinstance(term, Var):
        return value if term.name == name else term
    if isinstance(term, ValueSet):
        return ValueSet(_substitute_var(m, name, value) for m in term)
    return term


def _topological(calls: list) -> list:
    """Stable topological order over intra-fragment variable dependencies."""
    produced: dict[str, PlanCall] = {}
    for c in calls:
        spec = PRIMITIVES.get(c.primitive)
        for role in spec.outputs:
            t = c.slot(role)
            if isinstance(t, Var):
                produced[t.name] = c
    deps: dict[str, set[str]] = {c.call_id: set() for c in calls}
    for c in calls:
        spec = PRIMITIVES.get(c.primitive)
        for role, term in c.slots:
            if role in spec.outputs:
                continue
            for v in _term_vars(term):
                p = produced.get(v)
                if p is not None and p.call_id != c.call_id:
                    deps[c.call_id].add(p.call_id)
    out, done = [], set()

    def visit(c: PlanCall):
        if c.call_id in done:
            return
        done.add(c.call_id)
        for other in calls:
            if other.call_id in deps[c.call_id]:
                visit(other)
        out.append(c)

    for c in calls:
        visit(c)
    return out


# ---------------------------------------------------------------------------
# Execution


@dataclass
class ExecutionOutcome:
    state: KitchenState
    bindings: Bindings
    trace: ExecutionTrace
    answers: list  # SlotAnswer for outputs (mental simulation)


class Executor:
    """Incremental data-flow executor with critical-path timing."""

    def __init__(self, sim: KitchenSimulator, ks: KitchenState,
                 preheat_required: bool = False,
                 rng: Optional[random.Random] = None):
        self.sim = sim
        self.state = ks
        self.bindings = Bindings()
        self.trace = ExecutionTrace(content_hash(ks))
        self.preheat_required = preheat_required
        self.rng = rng
        self.agent = Fraction(0)
        self.var_ready: dict[str, Fraction] = {}
        self.entity_ready: dict[int, Fraction] = {}

    # -- readiness ---------------------------------------------------------

    def _term_ready(self, term) -> bool:
        for v in _term_vars(term):
            if self.bindings.lookup(v) is None:
                return False
        return True

    def _ready(self, call: PlanCall) -> bool:
        spec = PRIMITIVES.get(call.primitive)
        for role, term in call.slots:
            if role in spec.outputs:
                continue
            if not self._term_ready(term):
                return False
        return True

    def _start_time(self, call: PlanCall, values: dict) -> Fraction:
        start = self.agent
        spec = PRIMITIVES.get(call.primitive)
        for role, term in call.slots:
            if role in spec.outputs:
                continue
            for v in _term_vars(term):
                start = max(start, self.var_ready.get(v, Fraction(0)))
            for serial in _serials_in(values.get(role)):
                start = max(start, self.entity_ready.get(serial, Fraction(0)))
        return start

    # -- running -----------------------------------------------------------

    def run(self, calls: list) -> list:
        """Execute the given calls to completion; returns output answers."""
        pending = list(calls)
        answers = []
        while pending:
            ready = [c for c in pending if self._ready(c)]
            if not ready:
                raise DataflowDeadlock([c.call_id for c in pending])
            chosen = ready[0] if self.rng is None else self.rng.choice(ready)
            pending.remove(chosen)
            answers.extend(self._run_call(chosen))
        return answers

    def _run_call(self, call: PlanCall) -> list:
        spec = PRIMITIVES.get(call.primitive)
        values = {}
        for role, term in call.slots:
            if role in spec.outputs:
                continue
            values[role] = _flatten_sets(self.bindings.substitute(term))
        start = self._start_time(call, values)
        before = self.state

        result = self.sim.apply(call.primitive, values, before, start=start,
                                preheat_required=self.preheat_required)
        passive = self.sim.is_passive(call.primitive)
        end = start + result.dclock
        self.agent = start if passive else end
        self.state = result.state

        answers = []
        outputs_json = {}
        for role in spec.roles:
            if role not in spec.outputs:
                continue
            term = call.slot(role)
            if spec.slot_type(role) == KS:
                value = Sym(f"ks:{self.state.state_id}")
                ready_at = start if passive else end
            elif role in result.outputs:
                value = result.outputs[role]
                ready_at = end
            else:
                continue
            outputs_json[role] = fv_to_json(value)
            if isinstance(term, Var):
                nb = self.bindings.bind(term.name, value)
                if nb is None:
                    raise StructuralError(f"occurs check on output ?{term.name}")
                self.bindings = nb
                self.var_ready[term.name] = ready_at
                answers.append(SlotAnswer(call.call_id, role, term.name,
                                          SOURCE_SIMULATION, value))
            for serial in _serials_in(value):
                self.entity_ready[serial] = max(
                    self.entity_ready.get(serial, Fraction(0)), end)

        self.trace.records.append(TraceRecord(
            call_id=call.call_id,
            primitive=call.primitive,
            inputs=slot_values_to_json(values),
            outputs=outputs_json,
            start=start,
            end=end,
            dclock=result.dclock,
            state_before=before.state_id,
            state_after=self.state.state_id,
            hash_before=content_hash(before),
            hash_after=content_hash(self.state),
            warnings=result.warnings,
        ))
        return answers


def _flatten_sets(value):
    """Collapse nested value sets (a set member bound to a set of ids)."""
    if not isinstance(value, ValueSet):
        return value
    members = []
    for m in value:
        m = _flatten_sets(m)
        if isinstance(m, ValueSet):
            members.extend(m)
        else:
            members.append(m)
    return ValueSet(members)


def _serials_in(value) -> list[int]:
    if isinstance(value, Num) and value.unit is None and value.value.denominator == 1:
        return [int(value.value)]
    if isinstance(value, ValueSet):
        out = []
        for m in value:
            out.extend(_serials_in(m))
        return out
    return []


def execute_plan(network: PlanNetwork, ks: KitchenState, sim: KitchenSimulator,
                 seed: Optional[int] = None) -> ExecutionOutcome:
    """Run a complete network from scratch against a kitchen state."""
    network.validate()
    stuck = network.open_input_slots()
    if stuck:
        raise InputError(
            "plan has open slots: "
            + ", ".join(f"{cid}.{role}(?{v})" for cid, role, v in stuck))
    preheat = any(c.primitive == "preheat-oven" for c in network.calls)
    rng = random.Random(seed) if seed is not None else None
    executor = Executor(sim, ks, preheat_required=preheat, rng=rng)
    calls = expand_composites(network.calls)
    answers = executor.run(calls)
    return ExecutionOutcome(executor.state, executor.bindings, executor.trace,
                            answers)


# ---------------------------------------------------------------------------
# Bidirectional verification


@dataclass(frozen=True)
class VerificationReport:
    status: str              # "consistent" | "inconsistent"
    delta: Optional[Fraction] = None
    detail: str = ""

    @property
    def consistent(self) -> bool:
        return self.status == "consistent"


def verify_direction(primitive: str, values: dict, ks: KitchenState,
                     sim: KitchenSimulator) -> VerificationReport:
    """Check already-known outputs against the recipe's stated inputs."""
    spec = PRIMITIVES.get(primitive)
    known = frozenset(r for r in values if r in {s for s, _ in spec.slots})
    usable = [d for d in spec.directions[1:] if d <= known]
    if not usable:
        raise UnsupportedDirection(
            f"{primitive} declares no direction over {sorted(known)}")

    if primitive == "fetch-and-proportion":
        concept = values["concept"]
        quantity = values["quantity"]
        unit = values["unit"]
        stated = quantity.value * normalize_num(
            Num(Fraction(1), unit.name if isinstance(unit, Sym) else str(unit)))[1]
        total = Fraction(0)
        for serial in _serials_in(values["resultant"]):
            entity = ks.need(serial)
            for c, g in entity.composition:
                if c == concept.name or (
                        sim.ontology is not None
                        and sim.ontology.is_a(c, concept.name)):
                    total += g
        delta = abs(total - stated)
        if delta == 0:
            return VerificationReport("consistent", Fraction(0))
        return VerificationReport(
            "inconsistent", delta,
            f"found {total} g of {concept.name}, recipe says {stated} g")

    if primitive == "portion-and-arrange":
        unit = values["portion-unit"]
        per = sim.config["portion-grams"].get(
            unit.name if isinstance(unit, Sym) else str(unit))
        if per is None:
            return VerificationReport("inconsistent", None, "unknown portion unit")
        per = Fraction(per)
        worst = Fraction(0)
        for serial in _serials_in(values["portions"]):
            entity = ks.need(serial)
            worst = max(worst, abs(entity.grams - per))
        if worst == 0:
            return VerificationReport("consistent", Fraction(0))
        return VerificationReport("inconsistent", worst,
                                  f"portion mass off by {worst} g")

    raise UnsupportedDirection(f"no verifier for {primitive}")


# ---------------------------------------------------------------------------
# Chunking into composite operations


@dataclass(frozen=True)
class CompositeOperation:
    name: str
    body: tuple              # template PlanCalls (canonical variable names)
    params: tuple            # formal parameter variable names, in order
    returns: tuple           # (template var, role) pairs exported
    occurrences: int


def _occurrence_shape(network: PlanNetwork, call_ids: list) -> tuple:
    """(primitive names, internal edges) signature used for isomorphism."""
    calls = [network.call(cid) for cid in call_ids]
    pos = {cid: i for i, cid in enumerate(call_ids)}
    produced = {}
    for i, c in enumerate(calls):
        spec = PRIMITIVES.get(c.primitive)
        for role in spec.outputs:
            t = c.slot(role)
            if isinstance(t, Var):
                produced[t.name] = (i, role)
    edges = []
    for i, c in enumerate(calls):
        spec = PRIMITIVES.get(c.primitive)
        for role, term in c.slots:
            if role in spec.outputs:
                continue
            for v in _term_vars(term):
                if v in produced:
                    edges.append((produced[v][0], produced[v][1], i, role))
    names = tuple(c.primitive for c in calls)
    return (names, tuple(sorted(edges)))


def chunk(network: PlanNetwork, occurrences: list, name: str) -> tuple:
    """Store a recurrent subgraph as a composite; returns (composite, network').

    occurrences: list of call-id lists, positionally aligned. All must be
    isomorphic over primitive names and internal data-flow edges.
    """
    if len(occurrences) < 2:
        raise InputError("chunking needs at least two occurrences")
    shapes = [_occurrence_shape(network, occ) for occ in occurrences]
    if any(s != shapes[0] for s in shapes[1:]):
        raise InputError("occurrences are not isomorphic")

    ref = [network.call(cid) for cid in occurrences[0]]
    internal = set()
    for c in ref:
        spec = PRIMITIVES.get(c.primitive)
        for role in spec.outputs:
            t = c.slot(role)
            if isinstance(t, Var):
                internal.add(t.name)

    # Template: internal vars renamed canonically; everything else a parameter.
    params: list[tuple[int, str]] = []   # (call position, role)
    body = []
    canon = {v: f"b{i}" for i, v in enumerate(sorted(internal))}
    for i, c in enumerate(ref):
        spec = PRIMITIVES.get(c.primitive)
        slots = []
        for role, term in c.slots:
            tvars = _term_vars(term)
            if tvars and all(v in internal for v in tvars):
                slots.append((role, _rename_term(term, canon)))
            elif role in spec.outputs:
                slots.append((role, _rename_term(term, canon)))
            else:
                params.append((i, role))
                slots.append((role, Var(f"p{len(params) - 1}")))
        body.append(PlanCall(f"t{i}", c.primitive, tuple(slots)))

    # Exported outputs: internal vars consumed outside any occurrence.
    consumed_outside = set().union(*_external_consumption(network, occurrences))
    returns = []
    for i, c in enumerate(ref):
        spec = PRIMITIVES.get(c.primitive)
        for role in spec.outputs:
            t = c.slot(role)
            if isinstance(t, Var) and t.name in consumed_outside:
                returns.append((canon[t.name], role))

    composite = CompositeOperation(name, tuple(body),
                                   tuple(f"p{i}" for i in range(len(params))),
                                   tuple(returns), len(occurrences))

    # Replace each occurrence with one composite call.
    new_calls = []
    replaced = {cid for occ in occurrences for cid in occ}
    comp_calls = {}
    for k, occ in enumerate(occurrences):
        calls = [network.call(cid) for cid in occ]
        slots = []
        var_map = []
        for j, (pos, role) in enumerate(params):
            slots.append((f"p{j}", calls[pos].slot(role)))
        for tvar, _ in returns:
            orig = next(v for v, cv in canon.items() if cv == tvar)
            actual = _occurrence_var(ref, calls, orig)
            slots.append((f"out-{tvar}", Var(actual)))
        for orig, cv in sorted(canon.items()):
            var_map.append((cv, _occurrence_var(ref, calls, orig)))
        comp_calls[occ[0]] = PlanCall(
            f"{name}-{k}", f"composite:{name}", tuple(slots),
            provenance=calls[0].provenance,
            meta=(("composite", composite), ("var-map", tuple(var_map)),
                  ("call-ids", tuple(occ))))
    for c in network.calls:
        if c.call_id in comp_calls:
            new_calls.append(comp_calls[c.call_id])
        elif c.call_id not in replaced:
            new_calls.append(c)
    return composite, PlanNetwork(new_calls)


def _occurrence_var(ref_calls, occ_calls, ref_var: str) -> str:
    """The occurrence's variable aligned with ref_var in the reference."""
    for rc, oc in zip(ref_calls, occ_calls):
        spec = PRIMITIVES.get(rc.primitive)
        for role in spec.outputs:
            rt, ot = rc.slot(role), oc.slot(role)
            if isinstance(rt, Var) and rt.name == ref_var and isinstance(ot, Var):
                return ot.name
    raise InputError(f"variable {ref_var} not aligned across occurrences")


def _external_consumption(network: PlanNetwork, occurrences: list) -> list:
    out = []
    for occ in occurrences:
        inside = set(occ)
        produced = set()
        for cid in occ:
            c = network.call(cid)
            spec = PRIMITIVES.get(c.primitive)
            for role in spec.outputs:
                t = c.slot(role)
                if isinstance(t, Var):
                    produced.add(t.name)
        consumed = set()
        for c in network.calls:
            if c.call_id in inside:
                continue
            for role, term in c.slots:
                for v in _term_vars(term):
                    if v in produced:
                        consumed.add(v)
        ref_c = [network.call(cid) for cid in occurrences[0]]
        occ_c = [network.call(cid) for cid in occ]
        ref_names = set()
        for v in consumed:
            for rc, oc in zip(ref_c, occ_c):
                spec = PRIMITIVES.get(rc.primitive)
                for role in spec.outputs:
                    ot = oc.slot(role)
                    if isinstance(ot, Var) and ot.name == v:
                        rt = rc.slot(role)
                        if isinstance(rt, Var):
                            ref_names.add(rt.name)
        out.append(ref_names)
    return out


def expand_composites(calls: list) -> list:
    """Inline composite calls; plain calls pass through untouched."""
    out = []
    for c in calls:
        if not c.primitive.startswith("composite:"):
            out.append(c)
            continue
        meta = dict(c.meta)
        composite: CompositeOperation = meta["composite"]
        var_map = dict(meta.get("var-map", ()))
        args = {}
        for role, term in c.slots:
            if role.startswith("p"):
                args[role] = term
        rename = {}
        for tvar, actual in var_map.items():
            rename[tvar] = actual
        ids = meta.get("call-ids", tuple(f"{c.call_id}.{i}"
                                         for i in range(len(composite.body))))
        for i, b in enumerate(composite.body):
            slots = []
            for role, term in b.slots:
                tvars = _term_vars(term)
                if len(tvars) == 1 and tvars[0] in args:
                    slots.append((role, args[tvars[0]]))
                else:
                    slots.append((role, _rename_term(term, rename)))
            out.append(PlanCall(ids[i], b.primitive, tuple(slots),
                                provenance=c.provenance))
    return out


def inline(network: PlanNetwork) -> PlanNetwork:
    return PlanNetwork(expand_composites(network.calls))


def find_recurrent_pairs(network: PlanNetwork) -> dict:
    """Connected two-call patterns appearing at least twice, by signature."""
    groups: dict[tuple, list] = {}
    seen = set()
    for consumer, role, producer in network.consumers():
        if PRIMITIVES.get(consumer.primitive).slot_type(role) == KS:
            continue
        pair = (producer.call_id, consumer.call_id)
        if pair in seen:
            continue
        seen.add(pair)
        sig = _occurrence_shape(network, list(pair))
        groups.setdefault(sig, []).append(list(pair))
    return {sig: occs for sig, occs in groups.items() if len(occs) >= 2}


def _rename_term(term, mapping: dict):
    if isinstance(term, Var):
        new = mapping.get(term.name)
        return Var(new) if new is not None else term
    if isinstance(term, ValueSet):
        return ValueSet(_rename_term(m, mapping) for m in term)
    return term


# ---------------------------------------------------------------------------
# Plan JSON


def plan_to_json(network: PlanNetwork) -> dict:
    calls = []
    provenance = []
    for c in network.calls:
        slots = {}
        for role, term in c.slots:
            if isinstance(term, Var):
                slots[role] = {"var": term.name}
            elif isinstance(term, ValueSet) and _term_vars(term):
                slots[role] = {"terms": [
                    {"var": m.name} if isinstance(m, Var) else {"const": fv_to_json(m)}
                    for m in term]}
            else:
                slots[role] = {"const": fv_to_json(term)}
        calls.append({"primitive": c.primitive, "slots": slots})
        provenance.append(c.provenance)
    return {"calls": calls, "provenance": provenance}


def plan_from_json(data: dict) -> PlanNetwork:
    if not isinstance(data, dict) or "calls" not in data:
        raise InputError("plan file must contain a 'calls' list")
    provenance = data.get("provenance", [])
    calls = []
    for i, entry in enumerate(data["calls"]):
        slots = []
        for role, term in entry.get("slots", {}).items():
            slots.append((role, _term_from_json(term)))
        prov = provenance[i] if i < len(provenance) else -1
        calls.append(PlanCall(f"c{i}", entry["primitive"], tuple(slots), prov))
    network = PlanNetwork(calls)
    network.validate()
    return network


def _term_from_json(term) -> object:
    if not isinstance(term, dict):
        raise InputError(f"malformed slot term: {term!r}")
    if "var" in term:
        return Var(term["var"])
    if "const" in term:
        return fv_from_json(term["const"])
    if "terms" in term:
        return ValueSet(_term_from_json(t) for t in term["terms"])
    raise InputError(f"malformed slot term: {term!r}")


def save_plan(network: PlanNetwork, path: Path | str) -> None:
    Path(path).write_text(json.dumps(plan_to_json(network), indent=2,
                                     sort_keys=True) + "\n")


def load_plan(path: Path | str) -> PlanNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"plan file is not valid JSON: {exc}")
    return plan_from_json(data)
