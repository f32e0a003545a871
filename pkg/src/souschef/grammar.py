"""Construction grammar: grammar files, comprehension search, meaning extraction.

A grammar is an ordered inventory of constructions, each a conditional pole
(matched against the transient structure) and a contributing pole (merged
into it). Comprehending an utterance is a search over construction
applications; the goal is a state no construction can change in which every
content token has been consumed. The winning state's meaning predicates are
read off into a plan fragment.

Grammar file syntax (s-expressions, ';' comments):

    (function-words "the" "a" ...)

    (cxn butter-word
      :kind lexical
      :score 0.5
      (conditional
        (root (form (lemma ?t "butter"))))
      (contributing
        (?u (lex-class noun) (cat butter) (referent ?x) (lb ?t) (rb ?t))))

Feature values: ?x is a variable, "..." is text, numbers are exact rationals,
(num 175 degrees-C) attaches a unit, bare names are symbols, any other list
is a compound term; compounds named after registered procedures evaluate
during matching and merging (procedural attachment).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .errors import (
    DuplicateNameError, GrammarSyntaxError, InputError, MergeFailure,
    StructuralError, UnknownProcedureError,
)
from .features import (
    FORM_FEATURE, GUARD_FEATURE, ROOT, Bindings, Compound, Num, PatternUnit,
    ProcRegistry, Struct, Sym, Text, TransientStructure, Unit, ValueSet, Var,
    fact, match, merge, rename_fresh,
)
from .memory import make_registry
from .plans import PRIMITIVES, PlanCall, PlanFragment

CONSTRUCTION_KINDS = (
    "lemmatization", "lexical", "idiomatic", "semi-schematic", "abstract",
)


# ---------------------------------------------------------------------------
# Tokenization


@dataclass(frozen=True)
class Token:
    index: int
    word: str
    token_id: str


_STRIP = ".,;:!?\"'()[]"


def tokenize(text: str) -> list:
    """Lowercased whitespace tokens, outer punctuation stripped.

    Internal hyphens survive ("15-20" stays one token); empty residues drop.
    """
    tokens = []
    for raw in text.lower().split():
        word = raw.strip(_STRIP)
        if not word:
            continue
        i = len(tokens)
        tokens.append(Token(i, word, f"t{i}-{word}"))
    return tokens


def split_sentences(text: str) -> list:
    """Period-separated sentences, whitespace-trimmed, empties dropped."""
    out = []
    for part in text.split("."):
        part = part.strip()
        if part:
            out.append(part)
    return out


# ---------------------------------------------------------------------------
# Transient structure initialization


def initialize_transient(tokens: list, accessible: tuple = (),
                         ontology=None) -> TransientStructure:
    """Root unit with token form facts plus one context unit per accessible
    discourse entry (class, ids, recency rank)."""
    if not tokens:
        raise InputError("cannot comprehend an empty utterance")
    facts = []
    for tok in tokens:
        facts.append(fact("string", Sym(tok.token_id), Text(tok.word)))
        facts.append(fact("lemma", Sym(tok.token_id), Text(tok.word)))
    for a, b in zip(tokens, tokens[1:]):
        facts.append(fact("meets", Sym(a.token_id), Sym(b.token_id)))
    units = [Unit.build(ROOT, [(FORM_FEATURE, ValueSet(facts))])]
    for i, entry in enumerate(accessible):
        units.append(Unit.build(f"context-{i}", [
            ("class", Sym(entry.concept)),
            ("rank", Num(Fraction(i))),
            ("ids", ValueSet(Num(Fraction(s)) for s in entry.ids)),
        ]))
    return TransientStructure(tuple(units))


# ---------------------------------------------------------------------------
# Grammar files


@dataclass(frozen=True)
class Construction:
    name: str
    kind: str
    score: Fraction
    conditional: tuple
    contributing: tuple


@dataclass
class _Node:
    """One read s-expression: nested lists of _Node, or an atom."""
    kind: str       # "list" | "atom" | "string"
    value: object
    line: int


def _read_sexprs(text: str) -> list:
    nodes = []
    stack: list[_Node] = []
    i, line = 0, 1
    n = len(text)

    def emit(node: _Node):
        if stack:
            stack[-1].value.append(node)
        else:
            nodes.append(node)

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
        elif c in " \t\r":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(":
            node = _Node("list", [], line)
            if stack:
                stack[-1].value.append(node)
            else:
                nodes.append(node)
            stack.append(node)
            i += 1
        elif c == ")":
            if not stack:
                raise GrammarSyntaxError("unbalanced ')'", line=line)
            stack.pop()
            i += 1
        elif c == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise GrammarSyntaxError("newline inside string", line=line)
                if text[j] == "\\" and j + 1 < n:
                    j += 1
                buf.append(text[j])
                j += 1
            if j >= n:
                raise GrammarSyntaxError("unterminated string", line=line)
            emit(_Node("string", "".join(buf), line))
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n();"':
                j += 1
            emit(_Node("atom", text[i:j], line))
            i = j
    if stack:
        raise GrammarSyntaxError("unbalanced '('", line=stack[-1].line)
    return nodes


def _atom_value(s: str, line: int):
    if s.startswith("?"):
        if len(s) == 1:
            raise GrammarSyntaxError("bare '?' is not a variable", line=line)
        return Var(s[1:])
    try:
        return Num(Fraction(s))
    except (ValueError, ZeroDivisionError):
        return Sym(s)


def _parse_value(node: _Node):
    if node.kind == "atom":
        return _atom_value(node.value, node.line)
    if node.kind == "string":
        return Text(node.value)
    items = node.value
    if not items or items[0].kind != "atom":
        raise GrammarSyntaxError("compound term needs a leading name",
                                 line=node.line)
    head = items[0].value
    rest = items[1:]
    if head == "num":
        if len(rest) not in (1, 2) or any(r.kind != "atom" for r in rest):
            raise GrammarSyntaxError("(num VALUE [UNIT])", line=node.line)
        try:
            value = Fraction(rest[0].value)
        except (ValueError, ZeroDivisionError):
            raise GrammarSyntaxError(f"not a number: {rest[0].value}",
                                     line=node.line)
        unit = rest[1].value if len(rest) == 2 else None
        return Num(value, unit)
    if head == "struct":
        fields = []
        for r in rest:
            if r.kind != "list" or len(r.value) != 2 or r.value[0].kind != "atom":
                raise GrammarSyntaxError("(struct (key value) ...)", line=node.line)
            fields.append((r.value[0].value, _parse_value(r.value[1])))
        return Struct(fields)
    args, kwargs = [], []
    k = 0
    while k < len(rest):
        r = rest[k]
        if r.kind == "atom" and r.value.startswith(":"):
            if k + 1 >= len(rest):
                raise GrammarSyntaxError(f"keyword {r.value} lacks a value",
                                         line=r.line)
            kwargs.append((r.value[1:], _parse_value(rest[k + 1])))
            k += 2
        else:
            if kwargs:
                raise GrammarSyntaxError(
                    "positional value after keyword", line=r.line)
            args.append(_parse_value(r))
            k += 1
    return Compound(head, tuple(args), tuple(kwargs))


def _parse_feature(node: _Node) -> tuple:
    if node.kind != "list" or not node.value or node.value[0].kind != "atom":
        raise GrammarSyntaxError("feature must be (name value ...)",
                                 line=node.line)
    fname = node.value[0].value
    values = [_parse_value(v) for v in node.value[1:]]
    if not values:
        raise GrammarSyntaxError(f"feature {fname} has no value", line=node.line)
    if fname in (FORM_FEATURE, "meaning", GUARD_FEATURE) or len(values) > 1:
        return fname, ValueSet(values)
    return fname, values[0]


def _parse_pattern_unit(node: _Node) -> PatternUnit:
    if node.kind != "list" or not node.value:
        raise GrammarSyntaxError("pole unit must be (name (feature ...) ...)",
                                 line=node.line)
    head = node.value[0]
    if head.kind != "atom":
        raise GrammarSyntaxError("unit name must be a symbol or variable",
                                 line=head.line)
    name = _atom_value(head.value, head.line)
    if not isinstance(name, (Sym, Var)):
        raise GrammarSyntaxError(f"bad unit name: {head.value}", line=head.line)
    features = [_parse_feature(f) for f in node.value[1:]]
    try:
        return PatternUnit.build(name, features)
    except StructuralError as exc:
        raise GrammarSyntaxError(str(exc), line=node.line)


def _parse_cxn(node: _Node) -> Construction:
    items = node.value
    if len(items) < 2 or items[1].kind != "atom":
        raise GrammarSyntaxError("(cxn NAME ...)", line=node.line)
    name = items[1].value
    kind, score = None, None
    poles: dict[str, tuple] = {}
    k = 2
    while k < len(items):
        it = items[k]
        if it.kind == "atom" and it.value == ":kind":
            if k + 1 >= len(items) or items[k + 1].kind != "atom":
                raise GrammarSyntaxError(":kind needs a value", line=it.line)
            kind = items[k + 1].value
            k += 2
        elif it.kind == "atom" and it.value == ":score":
            if k + 1 >= len(items) or items[k + 1].kind != "atom":
                raise GrammarSyntaxError(":score needs a value", line=it.line)
            try:
                score = Fraction(items[k + 1].value)
            except (ValueError, ZeroDivisionError):
                raise GrammarSyntaxError(
                    f"bad score: {items[k + 1].value}", line=it.line)
            k += 2
        elif it.kind == "list" and it.value and it.value[0].kind == "atom" \
                and it.value[0].value in ("conditional", "contributing"):
            pole = it.value[0].value
            if pole in poles:
                raise GrammarSyntaxError(f"duplicate {pole} pole", line=it.line)
            poles[pole] = tuple(_parse_pattern_unit(u) for u in it.value[1:])
            k += 1
        else:
            raise GrammarSyntaxError(
                f"unexpected form in construction {name}", line=it.line)
    if kind not in CONSTRUCTION_KINDS:
        raise GrammarSyntaxError(
            f"construction {name}: kind must be one of {CONSTRUCTION_KINDS}, "
            f"got {kind}", line=node.line)
    if score is None or not (0 <= score <= 1):
        raise GrammarSyntaxError(
            f"construction {name}: score must lie in [0, 1]", line=node.line)
    if "conditional" not in poles or not poles["conditional"]:
        raise GrammarSyntaxError(
            f"construction {name}: missing conditional pole", line=node.line)
    if "contributing" not in poles or not poles["contributing"]:
        raise GrammarSyntaxError(
            f"construction {name}: missing contributing pole", line=node.line)
    return Construction(name, kind, score,
                        poles["conditional"], poles["contributing"])


def parse_grammar(text: str, procs: Optional[ProcRegistry] = None) -> tuple:
    """(constructions, function_words); validates names, kinds, guards."""
    constructions: list[Construction] = []
    names = set()
    function_words: set[str] = set()
    for node in _read_sexprs(text):
        if node.kind != "list" or not node.value or node.value[0].kind != "atom":
            raise GrammarSyntaxError(
                "top level allows only (cxn ...) and (function-words ...)",
                line=node.line)
        head = node.value[0].value
        if head == "cxn":
            cxn = _parse_cxn(node)
            if cxn.name in names:
                raise DuplicateNameError(
                    f"construction defined twice: {cxn.name} (line {node.line})")
            names.add(cxn.name)
            if procs is not None:
                _validate_guards(cxn, procs, node.line)
            constructions.append(cxn)
        elif head == "function-words":
            for w in node.value[1:]:
                if w.kind != "string":
                    raise GrammarSyntaxError(
                        "function words must be quoted strings", line=w.line)
                function_words.add(w.value)
        else:
            raise GrammarSyntaxError(f"unknown top-level form: {head}",
                                     line=node.line)
    return tuple(constructions), frozenset(function_words)


def _validate_guards(cxn: Construction, procs: ProcRegistry, line: int) -> None:
    for pu in cxn.conditional + cxn.contributing:
        for fname, value in pu.features:
            if fname != GUARD_FEATURE:
                continue
            members = value if isinstance(value, ValueSet) else ValueSet([value])
            for g in members:
                if not isinstance(g, Compound):
                    raise GrammarSyntaxError(
                        f"construction {cxn.name}: guard must be a compound",
                        line=line)
                if g.name == "equals":
                    for a in g.args:
                        if isinstance(a, Compound) and not procs.knows(a.name):
                            raise UnknownProcedureError(
                                f"construction {cxn.name}: unknown procedure "
                                f"{a.name}")
                elif not procs.knows(g.name):
                    raise UnknownProcedureError(
                        f"construction {cxn.name}: unknown guard procedure "
                        f"{g.name}")


# ---------------------------------------------------------------------------
# Application and search


@dataclass
class ComprehensionResult:
    structure: TransientStructure
    applied: tuple            # construction names in application order
    score: Fraction
    tokens: list
    unresolved_tokens: list   # Token objects never consumed
    succeeded: bool


def apply_construction(cxn: Construction, ts: TransientStructure,
                       procs: ProcRegistry, counter) -> list:
    """Every transient structure one application of cxn can produce."""
    renamed = rename_fresh(list(cxn.conditional) + list(cxn.contributing),
                           set(), counter)
    cond = renamed[:len(cxn.conditional)]
    contrib = renamed[len(cxn.conditional):]
    out = []
    for mr in match(cond, ts, procs=procs):
        anchor = ",".join(sorted(mr.touched_tokens))
        targets = ",".join(sorted(n for _, n in mr.unit_map if n))
        instance = f"{cxn.name}@{anchor}|{targets}"
        if instance in ts.applied:
            continue  # this exact application already happened
        try:
            outcome = merge(contrib, ts, mr.bindings, procs)
        except MergeFailure:
            continue
        result = TransientStructure(
            outcome.structure.units,
            ts.applied + (instance,),
            ts.consumed | mr.touched_tokens,
            outcome.structure.counter,
        )
        out.append(result)
    return out


def applied_names(ts: TransientStructure) -> tuple:
    return tuple(inst.split("@", 1)[0] for inst in ts.applied)


class Grammar:
    def __init__(self, constructions: tuple, function_words: frozenset = frozenset(),
                 procs: Optional[ProcRegistry] = None, ontology=None):
        self.constructions = tuple(constructions)
        by_name = {}
        for c in self.constructions:
            if c.name in by_name:
                raise DuplicateNameError(f"construction defined twice: {c.name}")
            by_name[c.name] = c
        self.by_name = by_name
        self.function_words = frozenset(function_words)
        self.ontology = ontology
        self.procs = procs if procs is not None else make_registry(ontology)
        if not self.procs.knows("with-unit"):
            self.procs.register("with-unit", _with_unit)
        self._counter = itertools.count(1)

    def comprehend(self, utterance, accessible: tuple = (),
                   max_states: int = 4000) -> ComprehensionResult:
        """Search construction applications for a covering analysis.

        utterance: a string or a pre-tokenized list. A state is terminal when
        no construction changes it; the best terminal state covering every
        content token wins (higher score, then fewer loose ends, then fewer
        applications). Without a covering state the closest terminal state is
        returned with its unconsumed tokens listed.
        """
        tokens = tokenize(utterance) if isinstance(utterance, str) else list(utterance)
        ts0 = initialize_transient(tokens, accessible, self.ontology)
        content = {t.token_id for t in tokens
                   if t.word not in self.function_words}

        states: dict[str, TransientStructure] = {}
        children_cache: dict[str, list] = {}
        terminal: list[str] = []
        k0 = ts0.content_key()
        states[k0] = ts0
        work = [k0]
        while work and len(states) < max_states:
            key = work.pop()
            ts = states[key]
            if key in children_cache:
                continue
            children = []
            for cxn in self.constructions:
                for child in apply_construction(cxn, ts, self.procs,
                                                self._counter):
                    ck = child.content_key()
                    if ck == key:
                        continue
                    children.append(ck)
                    if ck not in states:
                        states[ck] = child
                        work.append(ck)
                    elif _better_path(child, states[ck]):
                        states[ck] = child
                        children_cache.pop(ck, None)
                        work.append(ck)
            children_cache[key] = children
            if not children:
                terminal.append(key)

        if not terminal:  # state cap hit on a pathological grammar
            terminal = list(states)

        goals = [k for k in terminal if content <= states[k].consumed]
        pool = goals or terminal
        ranked = sorted(pool, key=lambda k: self._rank(states[k], content))
        best = states[ranked[0]]
        unresolved = [t for t in tokens
                      if t.token_id in content - best.consumed]
        return ComprehensionResult(
            structure=best,
            applied=applied_names(best),
            score=_path_score(self, best),
            tokens=tokens,
            unresolved_tokens=unresolved,
            succeeded=bool(goals),
        )

    def _rank(self, ts: TransientStructure, content: set) -> tuple:
        missing = len(content - ts.consumed)
        score = _path_score(self, ts)
        dangling = _count_dangling(ts)
        return (missing, -score, dangling, len(ts.applied),
                applied_names(ts), ts.content_key())


def _better_path(a: TransientStructure, b: TransientStructure) -> bool:
    """Prefer more consumed tokens, then fewer applications."""
    if a.consumed != b.consumed:
        return len(a.consumed) > len(b.consumed)
    return len(a.applied) < len(b.applied)


def _path_score(grammar: Grammar, ts: TransientStructure) -> Fraction:
    total = Fraction(0)
    for name in applied_names(ts):
        total += grammar.by_name[name].score
    return total


def _with_unit(args, _context):
    """(with-unit NUM SYMBOL) tags a number (or a min/max range) with a unit."""
    from .features import FAILURE
    if len(args) != 2 or not isinstance(args[1], Sym):
        return FAILURE
    value, unit = args[0], args[1].name
    if isinstance(value, Num):
        return Num(value.value, unit)
    if isinstance(value, Struct):
        fields = []
        for k, v in value.fields:
            if not isinstance(v, Num):
                return FAILURE
            fields.append((k, Num(v.value, unit)))
        return Struct(fields)
    return FAILURE


# ---------------------------------------------------------------------------
# Meaning extraction


def _meaning_facts(ts: TransientStructure) -> list:
    out = []
    for u in ts.units:
        meaning = u.get("meaning")
        if meaning is None:
            continue
        members = meaning if isinstance(meaning, ValueSet) else ValueSet([meaning])
        for m in members:
            if isinstance(m, Compound):
                out.append(m)
    return out


class _Aliases:
    """Union-find over variable names for (same ?a ?b) links."""

    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, name: str) -> str:
        self.parent.setdefault(name, name)
        while self.parent[name] != name:
            self.parent[name] = self.parent[self.parent[name]]
            name = self.parent[name]
        return name

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic canonical pick
            keep, drop = sorted((ra, rb))
            self.parent[drop] = keep


def extract_fragment(result: ComprehensionResult) -> PlanFragment:
    """Read the winning state's meaning predicates into a plan fragment."""
    facts = _meaning_facts(result.structure)
    aliases = _Aliases()
    for f in facts:
        if f.name == "same":
            if len(f.args) != 2 or not all(isinstance(a, Var) for a in f.args):
                raise StructuralError(f"malformed same link: {f!r}")
            aliases.union(f.args[0].name, f.args[1].name)

    def canon(term):
        if isinstance(term, Var):
            return Var(aliases.find(term.name))
        if isinstance(term, ValueSet):
            return ValueSet(canon(m) for m in term)
        if isinstance(term, Struct):
            return Struct([(k, canon(v)) for k, v in term.fields])
        return term

    groups: dict[str, ValueSet] = {}
    for f in facts:
        if f.name == "collect":
            if not f.args or not isinstance(f.args[0], Var):
                raise StructuralError(f"malformed collect: {f!r}")
            g = aliases.find(f.args[0].name)
            members = [canon(a) for a in f.args[1:]]
            existing = groups.get(g)
            groups[g] = existing.union(ValueSet(members)) if existing \
                else ValueSet(members)

    def expand(term):
        term = canon(term)
        if isinstance(term, Var) and term.name in groups:
            return groups[term.name]
        if isinstance(term, ValueSet):
            return ValueSet(expand(m) for m in term)
        return term

    fragment = PlanFragment()
    slot_facts: dict[str, list] = {}
    actions: list[tuple[str, str]] = []  # (call var, primitive)
    for f in facts:
        if f.name == "action":
            if len(f.args) != 2 or not isinstance(f.args[0], Sym) \
                    or not isinstance(f.args[1], Var):
                raise StructuralError(f"malformed action fact: {f!r}")
            cv = aliases.find(f.args[1].name)
            if not any(v == cv for v, _ in actions):
                actions.append((cv, f.args[0].name))
        elif f.name == "slot":
            if len(f.args) != 3 or not isinstance(f.args[0], Var) \
                    or not isinstance(f.args[1], Sym):
                raise StructuralError(f"malformed slot fact: {f!r}")
            cv = aliases.find(f.args[0].name)
            slot_facts.setdefault(cv, []).append((f.args[1].name, f.args[2]))
        elif f.name == "discourse":
            if len(f.args) != 2 or not isinstance(f.args[0], Var) \
                    or not isinstance(f.args[1], Sym):
                raise StructuralError(f"malformed discourse fact: {f!r}")
            v = aliases.find(f.args[0].name)
            props = {}
            for k, val in f.kwargs:
                if isinstance(val, Num):
                    props[k] = int(val.value)
                elif isinstance(val, Sym):
                    props[k] = True if val.name == "true" else val.name
                else:
                    props[k] = val
            fragment.discourse[v] = (f.args[1].name, props)
        elif f.name == "locate":
            if len(f.args) != 2 or not isinstance(f.args[0], Var) \
                    or not isinstance(f.args[1], Sym):
                raise StructuralError(f"malformed locate fact: {f!r}")
            fragment.locate[aliases.find(f.args[0].name)] = f.args[1].name

    for cv, primitive in actions:
        spec = PRIMITIVES.get(primitive)
        present = {}
        for role, term in slot_facts.get(cv, []):
            if spec.slot_type(role) is None:
                raise StructuralError(
                    f"{primitive} has no slot named {role}")
            value = expand(term)
            if role in present and present[role] != value:
                prev = present[role]
                prev_set = prev if isinstance(prev, ValueSet) else ValueSet([prev])
                add_set = value if isinstance(value, ValueSet) else ValueSet([value])
                present[role] = prev_set.union(add_set)
            else:
                present[role] = value
        slots = tuple((role, present[role]) for role in spec.roles
                      if role in present)
        fragment.calls.append(PlanCall("", primitive, slots))

    fragment.unresolved_tokens = list(result.unresolved_tokens)
    return fragment


def _count_dangling(ts: TransientStructure) -> int:
    """Referents annotated but feeding no call slot (loose ends)."""
    facts = _meaning_facts(ts)
    aliases = _Aliases()
    for f in facts:
        if f.name == "same" and len(f.args) == 2 \
                and all(isinstance(a, Var) for a in f.args):
            aliases.union(f.args[0].name, f.args[1].name)
    groups: dict[str, set] = {}
    used: set[str] = set()
    annotated: set[str] = set()
    for f in facts:
        if f.name == "collect" and f.args and isinstance(f.args[0], Var):
            g = aliases.find(f.args[0].name)
            groups.setdefault(g, set())
            for a in f.args[1:]:
                if isinstance(a, Var):
                    groups[g].add(aliases.find(a.name))
        elif f.name == "slot" and len(f.args) == 3:
            for v in _vars_in(f.args[2]):
                used.add(aliases.find(v))
        elif f.name in ("discourse", "locate") and f.args \
                and isinstance(f.args[0], Var):
            annotated.add(aliases.find(f.args[0].name))
    changed = True
    while changed:
        changed = False
        for g, members in groups.items():
            if g in used:
                for m in members:
                    if m not in used:
                        used.add(m)
                        changed = True
    dangling = {v for v in annotated if v not in used}
    dangling |= {g for g in groups if g not in used}
    return len(dangling)


def _vars_in(term) -> list:
    if isinstance(term, Var):
        return [term.name]
    if isinstance(term, ValueSet):
        out = []
        for m in term:
            out.extend(_vars_in(m))
        return out
    return []


# ---------------------------------------------------------------------------
# Loading


def load_grammar(path, ontology=None,
                 procs: Optional[ProcRegistry] = None) -> Grammar:
    text = Path(path).read_text()
    registry = procs if procs is not None else make_registry(ontology)
    if not registry.knows("with-unit"):
        registry.register("with-unit", _with_unit)
    constructions, function_words = parse_grammar(text, registry)
    return Grammar(constructions, function_words, registry, ontology)
