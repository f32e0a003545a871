"""Feature structures, unification, and merging.

The parsing engine works on transient structures: blackboards of units, each
unit a bag of feature/value pairs. Values are a small closed vocabulary:

* ``Sym``       interned symbolic constant (concepts, categories, unit names)
* ``Num``       rational number with an optional measurement unit tag
* ``Text``      surface text (token strings)
* ``Var``       logic variable, written ``?name`` in grammar files
* ``ValueSet``  duplicate-free collection matched by subset
* ``Struct``    nested feature map (e.g. ``{min: 15 minute, max: 20 minute}``)
* ``Compound``  applicative term ``(name arg ...)``; when the name is a
  registered procedure it is evaluated (procedural attachment), otherwise it
  unifies structurally and serves for form facts and meaning predicates alike.

``match`` unifies a pattern (a construction's conditional pole) against a
transient structure one-directionally and returns every binding set.
``merge`` overlays a contributing pole under one binding set, unioning value
sets and failing loudly on scalar conflicts. Both are pure.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Optional, Union

from .errors import (
    MergeFailure,
    StructuralError,
    UnknownProcedureError,
)

# ---------------------------------------------------------------------------
# Values


@dataclass(frozen=True)
class Sym:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Num:
    """Rational quantity, optionally tagged with a measurement unit."""

    value: Fraction
    unit: Optional[str] = None

    def __repr__(self) -> str:
        if self.unit is None:
            return str(self.value)
        return f"{self.value} {self.unit}"


@dataclass(frozen=True)
class Text:
    text: str

    def __repr__(self) -> str:
        return f'"{self.text}"'


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


class ValueSet:
    """Ordered, duplicate-free value collection. Matches by subset."""

    __slots__ = ("members",)

    def __init__(self, members: Iterable["FeatureValue"] = ()):
        seen = []
        for m in members:
            if m not in seen:
                seen.append(m)
        object.__setattr__(self, "members", tuple(seen))

    def __setattr__(self, *a):  # immutability guard
        raise AttributeError("ValueSet is immutable")

    def __iter__(self) -> Iterator["FeatureValue"]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, item) -> bool:
        return item in self.members

    def __eq__(self, other) -> bool:
        if not isinstance(other, ValueSet):
            return NotImplemented
        return frozenset_key(self.members) == frozenset_key(other.members)

    def __hash__(self) -> int:
        return hash(frozenset_key(self.members))

    def union(self, other: "ValueSet") -> "ValueSet":
        return ValueSet(self.members + other.members)

    def __repr__(self) -> str:
        return "{" + ", ".join(map(repr, self.members)) + "}"


class Struct:
    """Nested feature map; a pattern Struct matches a superset target."""

    __slots__ = ("fields",)

    def __init__(self, fields: Union[dict, Iterable[tuple]] = ()):
        items = tuple(fields.items()) if isinstance(fields, dict) else tuple(fields)
        names = [k for k, _ in items]
        if len(names) != len(set(names)):
            raise StructuralError(f"duplicate field in struct: {names}")
        object.__setattr__(self, "fields", items)

    def __setattr__(self, *a):
        raise AttributeError("Struct is immutable")

    def get(self, name: str):
        for k, v in self.fields:
            if k == name:
                return v
        return None

    def __eq__(self, other) -> bool:
        if not isinstance(other, Struct):
            return NotImplemented
        return dict(self.fields) == dict(other.fields)

    def __hash__(self) -> int:
        return hash(frozenset_key(self.fields))

    def __repr__(self) -> str:
        inner = " ".join(f"({k} {v!r})" for k, v in self.fields)
        return f"(struct {inner})"


@dataclass(frozen=True)
class Compound:
    """Applicative term: evaluable procedure call or inert fact/predicate."""

    name: str
    args: tuple = ()
    kwargs: tuple = ()  # ordered (key, value) pairs

    def kwarg(self, key: str):
        for k, v in self.kwargs:
            if k == key:
                return v
        return None

    def __repr__(self) -> str:
        parts = [self.name] + [repr(a) for a in self.args]
        parts += [f":{k} {v!r}" for k, v in self.kwargs]
        return "(" + " ".join(parts) + ")"


FeatureValue = Union[Sym, Num, Text, Var, ValueSet, Struct, Compound]

#: Result sentinel for procedures that cannot produce a value (distinct from
#: an error: a failed guard just rejects the match branch).
FAILURE = Sym("#failure")
TRUE = Sym("true")
FALSE = Sym("false")


def frozenset_key(items) -> frozenset:
    # Helper for order-insensitive hashing of small collections.
    return frozenset((repr(i), i.__class__.__name__) for i in items)


# ---------------------------------------------------------------------------
# Measurement units
#
# Fixed normalization table: unit name -> (dimension, factor to base unit).
# Masses normalize to grams, times to minutes. Spoon units map to grams via
# the bundled portion calibration (a tablespoon of the sample doughs weighs
# 17 g; this constant is what makes the bundled cookie recipe yield exactly
# its stated portion count).

UNIT_TABLE: dict[str, tuple[str, Fraction]] = {
    "g": ("mass", Fraction(1)),
    "kg": ("mass", Fraction(1000)),
    "ml": ("volume", Fraction(1)),
    "l": ("volume", Fraction(1000)),
    "teaspoon": ("mass", Fraction(5)),
    "tablespoon": ("mass", Fraction(17)),
    "piece": ("count", Fraction(1)),
    "minute": ("time", Fraction(1)),
    "hour": ("time", Fraction(60)),
    "degrees-C": ("temperature", Fraction(1)),
}


def normalize_num(num: Num) -> tuple[Optional[str], Fraction]:
    """(dimension, value in base units); unitless numbers get dimension None."""
    if num.unit is None:
        return None, num.value
    if num.unit not in UNIT_TABLE:
        raise StructuralError(f"unknown unit: {num.unit}")
    dim, factor = UNIT_TABLE[num.unit]
    return dim, num.value * factor


def nums_equal(a: Num, b: Num) -> bool:
    return normalize_num(a) == normalize_num(b)


# ---------------------------------------------------------------------------
# Variables and substitution


def vars_of(fv: FeatureValue) -> set[str]:
    out: set[str] = set()
    _collect_vars(fv, out)
    return out


def _collect_vars(fv, out: set[str]) -> None:
    if isinstance(fv, Var):
        out.add(fv.name)
    elif isinstance(fv, ValueSet):
        for m in fv:
            _collect_vars(m, out)
    elif isinstance(fv, Struct):
        for _, v in fv.fields:
            _collect_vars(v, out)
    elif isinstance(fv, Compound):
        for a in fv.args:
            _collect_vars(a, out)
        for _, v in fv.kwargs:
            _collect_vars(v, out)


class Bindings:
    """Immutable variable environment with an occurs check at bind time."""

    __slots__ = ("_map",)

    def __init__(self, mapping: Optional[dict] = None):
        object.__setattr__(self, "_map", dict(mapping) if mapping else {})

    def __setattr__(self, *a):
        raise AttributeError("Bindings is immutable")

    def lookup(self, name: str) -> Optional[FeatureValue]:
        return self._map.get(name)

    def walk(self, fv: FeatureValue) -> FeatureValue:
        """Follow variable chains to a terminal value (shallow)."""
        seen = set()
        while isinstance(fv, Var) and fv.name in self._map:
            if fv.name in seen:  # cannot happen under the occurs check
                raise StructuralError(f"binding cycle at ?{fv.name}")
            seen.add(fv.name)
            fv = self._map[fv.name]
        return fv

    def bind(self, name: str, value: FeatureValue) -> Optional["Bindings"]:
        """Extend with name -> value; None when the occurs check fails."""
        value = self.substitute(value)
        if isinstance(value, Var) and value.name == name:
            return self  # trivial self-binding adds nothing
        if name in vars_of(value):
            return None  # occurs check: would build an infinite term
        if name in self._map:
            raise StructuralError(f"rebinding ?{name}")
        new = dict(self._map)
        new[name] = value
        return Bindings(new)

    def substitute(self, fv: FeatureValue) -> FeatureValue:
        """Deep substitution of every bound variable."""
        fv = self.walk(fv)
        if isinstance(fv, ValueSet):
            return ValueSet(self.substitute(m) for m in fv)
        if isinstance(fv, Struct):
            return Struct([(k, self.substitute(v)) for k, v in fv.fields])
        if isinstance(fv, Compound):
            return Compound(
                fv.name,
                tuple(self.substitute(a) for a in fv.args),
                tuple((k, self.substitute(v)) for k, v in fv.kwargs),
            )
        return fv

    def items(self):
        return self._map.items()

    def __len__(self):
        return len(self._map)

    def __repr__(self) -> str:
        inner = ", ".join(f"?{k} -> {v!r}" for k, v in sorted(self._map.items()))
        return "{" + inner + "}"

    def __eq__(self, other):
        if not isinstance(other, Bindings):
            return NotImplemented
        return self._map == other._map

    def __hash__(self):
        return hash(frozenset_key(list(self._map.items())))


# ---------------------------------------------------------------------------
# Procedures (procedural attachment)


class ProcRegistry:
    """Named procedures embeddable as feature values.

    A procedure receives already-substituted argument values plus the shared
    context object (an ontology handle) and returns a FeatureValue, FAILURE,
    or raises a deliberate error.
    """

    def __init__(self, context=None):
        self.context = context
        self._procs: dict[str, Callable] = {}

    def register(self, name: str, fn: Callable) -> None:
        self._procs[name] = fn

    def knows(self, name: str) -> bool:
        return name in self._procs

    def resolve(self, call: Compound, bindings: Bindings) -> FeatureValue:
        if call.name not in self._procs:
            raise UnknownProcedureError(f"procedure not registered: {call.name}")
        args = []
        for a in call.args:
            a = bindings.substitute(a)
            if isinstance(a, Compound) and self.knows(a.name):
                a = self.resolve(a, bindings)
            args.append(a)
        return self._procs[call.name](args, self.context)


# ---------------------------------------------------------------------------
# Units and transient structures

ROOT = "root"


@dataclass(frozen=True)
class Unit:
    """One blackboard unit: a name plus ordered feature/value pairs."""

    name: str
    features: tuple = ()  # ordered (feature-name, FeatureValue) pairs

    @staticmethod
    def build(name: str, features: Iterable[tuple] = ()) -> "Unit":
        feats = tuple(features)
        names = [k for k, _ in feats]
        if len(names) != len(set(names)):
            raise StructuralError(f"duplicate feature in unit {name}: {names}")
        return Unit(name, feats)

    def get(self, feature: str) -> Optional[FeatureValue]:
        for k, v in self.features:
            if k == feature:
                return v
        return None

    def with_feature(self, feature: str, value: FeatureValue) -> "Unit":
        feats = list(self.features)
        for i, (k, _) in enumerate(feats):
            if k == feature:
                feats[i] = (feature, value)
                return Unit(self.name, tuple(feats))
        feats.append((feature, value))
        return Unit(self.name, tuple(feats))


@dataclass(frozen=True)
class PatternUnit:
    """Conditional/contributing pole unit; the name may be a variable."""

    name: FeatureValue  # Sym or Var
    features: tuple = ()

    @staticmethod
    def build(name: FeatureValue, features: Iterable[tuple]) -> "PatternUnit":
        feats = tuple(features)
        names = [k for k, _ in feats]
        if len(names) != len(set(names)):
            raise StructuralError(
                f"duplicate feature in pattern unit {name!r}: {names}"
            )
        return PatternUnit(name, feats)


@dataclass(frozen=True)
class TransientStructure:
    """Immutable blackboard: root unit first, then every other unit in order."""

    units: tuple = ()
    applied: tuple = ()  # names of constructions applied so far
    consumed: frozenset = frozenset()  # token ids matched by applied poles
    counter: int = 0  # fresh-name source for new units

    def __post_init__(self):
        names = [u.name for u in self.units]
        if len(names) != len(set(names)):
            raise StructuralError(f"duplicate unit names: {names}")
        if names and (names[0] != ROOT or names.count(ROOT) != 1):
            raise StructuralError("exactly one unit named root, listed first")

    @property
    def root(self) -> Unit:
        return self.units[0]

    def unit(self, name: str) -> Optional[Unit]:
        for u in self.units:
            if u.name == name:
                return u
        return None

    def replace_unit(self, new_unit: Unit) -> "TransientStructure":
        units = tuple(new_unit if u.name == new_unit.name else u for u in self.units)
        return TransientStructure(units, self.applied, self.consumed, self.counter)

    def add_unit(self, new_unit: Unit) -> "TransientStructure":
        return TransientStructure(
            self.units + (new_unit,), self.applied, self.consumed, self.counter
        )

    def content_key(self) -> str:
        """Deterministic digest of unit contents, names normalized.

        Used for duplicate-state detection during search. Fresh variables and
        generated unit names (``unit-N``) are renumbered canonically: units
        are first ordered by a name-blind rendering, then variables and
        generated names are numbered along that order. Two structures that
        differ only in the order constructions happened to allocate names in
        therefore collide, which is exactly what the search wants.
        """
        blind_order = sorted(
            self.units,
            key=lambda u: (
                _GEN_NAME.match(u.name) and "~" or u.name,
                ";".join(
                    f"{k}={_blind_repr(v)}"
                    for k, v in sorted(u.features, key=lambda kv: kv[0])
                ),
            ),
        )

        var_order: dict[str, int] = {}
        gen_order: dict[str, int] = {}

        def walk(fv):
            if isinstance(fv, Var):
                var_order.setdefault(fv.name, len(var_order))
            elif isinstance(fv, Sym):
                if _GEN_NAME.match(fv.name):
                    gen_order.setdefault(fv.name, len(gen_order))
            elif isinstance(fv, ValueSet):
                for m in sorted(fv, key=_blind_repr):
                    walk(m)
            elif isinstance(fv, Struct):
                for _, v in fv.fields:
                    walk(v)
            elif isinstance(fv, Compound):
                for a in fv.args:
                    walk(a)
                for _, v in fv.kwargs:
                    walk(v)

        for u in blind_order:
            if _GEN_NAME.match(u.name):
                gen_order.setdefault(u.name, len(gen_order))
            for _, v in sorted(u.features, key=lambda kv: kv[0]):
                walk(v)

        def render(fv) -> str:
            if isinstance(fv, Var):
                return f"?v{var_order[fv.name]}"
            if isinstance(fv, Sym) and fv.name in gen_order:
                return f"g{gen_order[fv.name]}"
            if isinstance(fv, ValueSet):
                return "{" + ",".join(sorted(render(m) for m in fv)) + "}"
            if isinstance(fv, Struct):
                return "(" + " ".join(f"{k}={render(v)}" for k, v in fv.fields) + ")"
            if isinstance(fv, Compound):
                bits = [fv.name] + [render(a) for a in fv.args]
                bits += [f":{k}={render(v)}" for k, v in fv.kwargs]
                return "(" + " ".join(bits) + ")"
            return repr(fv)

        parts = []
        for u in blind_order:
            name = f"g{gen_order[u.name]}" if u.name in gen_order else u.name
            feats = ";".join(
                f"{k}={render(v)}"
                for k, v in sorted(u.features, key=lambda kv: kv[0])
            )
            parts.append(f"{name}[{feats}]")
        return "|".join(sorted(parts))


_GEN_NAME = re.compile(r"^unit-\d+$")


def _blind_repr(fv) -> str:
    """repr with variables and generated names blinded (pre-pass sort key)."""
    if isinstance(fv, Var):
        return "?"
    if isinstance(fv, Sym) and _GEN_NAME.match(fv.name):
        return "~"
    if isinstance(fv, ValueSet):
        return "{" + ",".join(sorted(_blind_repr(m) for m in fv)) + "}"
    if isinstance(fv, Struct):
        return "(" + " ".join(f"{k}={_blind_repr(v)}" for k, v in fv.fields) + ")"
    if isinstance(fv, Compound):
        bits = [fv.name] + [_blind_repr(a) for a in fv.args]
        bits += [f":{k}={_blind_repr(v)}" for k, v in fv.kwargs]
        return "(" + " ".join(bits) + ")"
    return repr(fv)


# ---------------------------------------------------------------------------
# Unification (one-directional: pattern against target)


def unify(pattern: FeatureValue, target: FeatureValue, bindings: Bindings,
          procs: Optional[ProcRegistry] = None) -> list[Bindings]:
    """All binding extensions under which pattern subsumes target."""
    pattern = bindings.walk(pattern)

    if isinstance(pattern, Var):
        nb = bindings.bind(pattern.name, target)
        return [nb] if nb is not None else []

    if isinstance(pattern, Compound) and procs is not None and procs.knows(pattern.name):
        # Evaluable pattern term: compute, then unify the result.
        result = procs.resolve(pattern, bindings)
        if result == FAILURE or result == FALSE:
            return []
        return unify(result, target, bindings, procs)

    if isinstance(pattern, Sym):
        return [bindings] if isinstance(target, Sym) and target.name == pattern.name else []

    if isinstance(pattern, Text):
        return [bindings] if isinstance(target, Text) and target.text == pattern.text else []

    if isinstance(pattern, Num):
        return [bindings] if isinstance(target, Num) and nums_equal(pattern, target) else []

    if isinstance(pattern, Struct):
        if not isinstance(target, Struct):
            return []
        envs = [bindings]
        for k, pv in pattern.fields:
            tv = target.get(k)
            if tv is None:
                return []
            envs = [e2 for e in envs for e2 in unify(pv, tv, e, procs)]
            if not envs:
                return []
        return envs

    if isinstance(pattern, Compound):
        if not isinstance(target, Compound) or target.name != pattern.name:
            return []
        if len(target.args) != len(pattern.args):
            return []
        envs = [bindings]
        for pa, ta in zip(pattern.args, target.args):
            envs = [e2 for e in envs for e2 in unify(pa, ta, e, procs)]
            if not envs:
                return []
        for k, pv in pattern.kwargs:
            tv = target.kwarg(k)
            if tv is None:
                return []
            envs = [e2 for e in envs for e2 in unify(pv, tv, e, procs)]
            if not envs:
                return []
        return envs

    if isinstance(pattern, ValueSet):
        if not isinstance(target, ValueSet):
            return []
        return _unify_subset(tuple(pattern), tuple(target), bindings, procs)

    raise StructuralError(f"unsupported pattern value: {pattern!r}")


def _unify_subset(pmembers, tmembers, bindings, procs) -> list[Bindings]:
    """Each pattern member matches a distinct target member (backtracking)."""
    if not pmembers:
        return [bindings]
    out = []
    first, rest = pmembers[0], pmembers[1:]
    for i, t in enumerate(tmembers):
        for env in unify(first, t, bindings, procs):
            remaining = tmembers[:i] + tmembers[i + 1:]
            out.extend(_unify_subset(rest, remaining, env, procs))
    # Deduplicate: different target orderings can reach identical bindings.
    seen, unique = set(), []
    for env in out:
        key = hash(env)
        if key not in seen:
            seen.add(key)
            unique.append(env)
    return unique


# ---------------------------------------------------------------------------
# Matching pattern units against a transient structure

GUARD_FEATURE = "guard"
FORM_FEATURE = "form"

#: Form facts whose first argument names the token a construction consumes.
_TOKEN_FACTS = {"string", "lemma", "meets", "lb", "rb"}


@dataclass(frozen=True)
class MatchResult:
    bindings: Bindings
    touched_tokens: frozenset  # token ids referenced through matched form facts
    unit_map: tuple  # (pattern-unit index, target unit name or None for form-only)


def match(pattern_units: Iterable[PatternUnit], ts: TransientStructure,
          seed: int = 0, procs: Optional[ProcRegistry] = None) -> list[MatchResult]:
    """Match a conditional pole against a transient structure.

    Returns every surviving binding set (empty list = no match). The result
    is a set: its order is deterministic and independent of target-unit
    order; ``seed`` is accepted for interface stability but never changes
    the outcome.
    """
    del seed
    pattern_units = list(pattern_units)
    for pu in pattern_units:
        names = [k for k, _ in pu.features]
        if len(names) != len(set(names)):
            raise StructuralError(f"duplicate feature in pattern unit {pu.name!r}")

    root_form = ts.root.get(FORM_FEATURE) or ValueSet()

    results: list[tuple[Bindings, frozenset, tuple]] = []

    def attempt(idx: int, bindings: Bindings, used: frozenset,
                touched: frozenset, umap: tuple) -> None:
        if idx == len(pattern_units):
            results.append((bindings, touched, umap))
            return
        pu = pattern_units[idx]
        name = bindings.walk(pu.name) if isinstance(pu.name, Var) else pu.name

        candidates: list[Unit] = []
        if isinstance(name, Sym):
            u = ts.unit(name.name)
            if u is not None and u.name not in used:
                candidates = [u]
        else:
            candidates = [u for u in ts.units if u.name not in used]

        for unit in candidates:
            envs = [bindings]
            if isinstance(name, Var):
                nb = envs[0].bind(name.name, Sym(unit.name))
                if nb is None:
                    continue
                envs = [nb]
            _match_into(pu, unit, root_form, envs, procs, used, touched, umap, idx,
                        attempt_next=attempt)

        # Form-only extraction: a pattern unit whose features are all form
        # facts (plus guards) may bind through the root's form set without a
        # counterpart unit; the unit it describes comes into being at merge.
        if isinstance(name, Var) and _form_only(pu):
            _match_form_only(pu, name, root_form, bindings, procs, used,
                             touched, umap, idx, attempt)

    attempt(0, Bindings(), frozenset(), frozenset(), ())

    seen, unique = set(), []
    for env, touched, umap in results:
        key = (hash(env), touched)
        if key not in seen:
            seen.add(key)
            unique.append(MatchResult(env, touched, umap))
    return unique


def _form_only(pu: PatternUnit) -> bool:
    return all(k in (FORM_FEATURE, GUARD_FEATURE) for k, _ in pu.features)


def _facts_of(value) -> list[Compound]:
    if isinstance(value, ValueSet):
        return [m for m in value if isinstance(m, Compound)]
    if isinstance(value, Compound):
        return [value]
    return []


def _match_form_feature(pattern_value, unit: Unit, root_form, bindings,
                        procs) -> list[tuple[Bindings, frozenset]]:
    """Form facts unify against the unit's own form set plus the root's."""
    own = unit.get(FORM_FEATURE) if unit is not None else None
    pool = list(own or []) + [f for f in root_form if f not in (own or ValueSet())]
    envs = _unify_subset(tuple(_facts_of(pattern_value)), tuple(pool), bindings, procs)
    out = []
    for env in envs:
        touched = frozenset(_touched_tokens(_facts_of(pattern_value), env))
        out.append((env, touched))
    return out


def _touched_tokens(facts, env) -> set[str]:
    out = set()
    for f in facts:
        f = env.substitute(f)
        if isinstance(f, Compound) and f.name in _TOKEN_FACTS:
            for a in f.args:
                if isinstance(a, Sym) and a.name.startswith("t") and "-" in a.name:
                    out.add(a.name)
    return out


def _check_guards(pattern_value, bindings, procs) -> list[Bindings]:
    """Evaluate guard terms; (equals ?x expr) unifies, others must not fail."""
    envs = [bindings]
    for g in _facts_of(pattern_value):
        nxt = []
        for env in envs:
            if g.name == "equals":
                if len(g.args) != 2:
                    raise StructuralError("equals guard takes two arguments")
                lhs, rhs = g.args
                rhs = env.substitute(rhs)
                if isinstance(rhs, Compound) and procs is not None and procs.knows(rhs.name):
                    rhs = procs.resolve(rhs, env)
                if rhs == FAILURE or rhs == FALSE:
                    continue
                nxt.extend(unify(lhs, rhs, env, procs))
            else:
                if procs is None or not procs.knows(g.name):
                    raise UnknownProcedureError(f"guard procedure not registered: {g.name}")
                result = procs.resolve(g, env)
                if result in (FAILURE, FALSE):
                    continue
                nxt.append(env)
        envs = nxt
        if not envs:
            return []
    return envs


def _match_into(pu, unit, root_form, envs, procs, used, touched, umap, idx,
                attempt_next):
    for env0 in envs:
        stack = [(env0, touched)]
        ok = True
        for fname, fvalue in pu.features:
            if fname == GUARD_FEATURE:
                continue  # guards run last, once other features bound things
            nxt = []
            if fname == FORM_FEATURE:
                for env, tch in stack:
                    for env2, tch2 in _match_form_feature(fvalue, unit, root_form, env, procs):
                        nxt.append((env2, tch | tch2))
            else:
                tv = unit.get(fname)
                if tv is None:
                    stack = []
                    ok = False
                    break
                for env, tch in stack:
                    for env2 in unify(fvalue, tv, env, procs):
                        nxt.append((env2, tch))
            stack = nxt
            if not stack:
                ok = False
                break
        if not ok:
            continue
        for env, tch in stack:
            genvs = [env]
            for fname, fvalue in pu.features:
                if fname == GUARD_FEATURE:
                    genvs = [e2 for e in genvs for e2 in _check_guards(fvalue, e, procs)]
            for genv in genvs:
                attempt_next(idx + 1, genv, used | {unit.name}, tch,
                             umap + ((idx, unit.name),))


def _match_form_only(pu, name_var, root_form, bindings, procs, used,
                     touched, umap, idx, attempt_next):
    stack = [(bindings, touched)]
    for fname, fvalue in pu.features:
        if fname == GUARD_FEATURE:
            continue
        nxt = []
        for env, tch in stack:
            envs = _unify_subset(tuple(_facts_of(fvalue)), tuple(root_form), env, procs)
            for env2 in envs:
                tch2 = frozenset(_touched_tokens(_facts_of(fvalue), env2))
                nxt.append((env2, tch | tch2))
        stack = nxt
        if not stack:
            return
    for env, tch in stack:
        genvs = [env]
        for fname, fvalue in pu.features:
            if fname == GUARD_FEATURE:
                genvs = [e2 for e in genvs for e2 in _check_guards(fvalue, e, procs)]
        for genv in genvs:
            if genv.walk(name_var) is name_var or isinstance(genv.walk(name_var), Var):
                continue  # the form facts must have named the unit
            attempt_next(idx + 1, genv, used, tch, umap + ((idx, None),))


# ---------------------------------------------------------------------------
# Merging


@dataclass(frozen=True)
class MergeOutcome:
    structure: TransientStructure
    bindings: Bindings


def merge(contribution: Iterable[PatternUnit], target: TransientStructure,
          bindings: Bindings, procs: Optional[ProcRegistry] = None) -> MergeOutcome:
    """Overlay a contributing pole onto a transient structure.

    Value sets union; equal scalars are idempotent; conflicting scalars raise
    MergeFailure with the feature path. The input structure is never touched.
    Unbound unit-name variables allocate fresh units and extend the bindings.
    """
    ts = target
    env = bindings
    for pu in contribution:
        name = env.walk(pu.name) if isinstance(pu.name, Var) else pu.name
        if isinstance(name, Var):
            fresh = f"unit-{ts.counter}"
            ts = TransientStructure(ts.units, ts.applied, ts.consumed, ts.counter + 1)
            nb = env.bind(name.name, Sym(fresh))
            if nb is None:
                raise MergeFailure(str(name), name, Sym(fresh))
            env = nb
            name = Sym(fresh)
        unit = ts.unit(name.name)
        created = False
        if unit is None:
            unit = Unit(name.name)
            created = True
        for fname, fvalue in pu.features:
            value = env.substitute(fvalue)
            value = _eval_contribution(value, env, procs)
            existing = unit.get(fname)
            if existing is None:
                unit = unit.with_feature(fname, value)
            elif isinstance(existing, ValueSet) and isinstance(value, ValueSet):
                unit = unit.with_feature(fname, existing.union(value))
            elif _scalars_equal(existing, value):
                pass  # idempotent re-contribution
            else:
                raise MergeFailure(f"{unit.name}/{fname}", existing, value)
        ts = ts.add_unit(unit) if created else ts.replace_unit(unit)
    return MergeOutcome(ts, env)


def _eval_contribution(value, env, procs):
    if isinstance(value, Compound) and procs is not None and procs.knows(value.name):
        return procs.resolve(value, env)
    if isinstance(value, ValueSet):
        return ValueSet(_eval_contribution(m, env, procs) for m in value)
    return value


def _scalars_equal(a, b) -> bool:
    if isinstance(a, Num) and isinstance(b, Num):
        return nums_equal(a, b)
    return a == b


# ---------------------------------------------------------------------------
# Convenience constructors used across the package and the tests


def sym(name: str) -> Sym:
    return Sym(name)


def var(name: str) -> Var:
    return Var(name)


def num(value, unit: Optional[str] = None) -> Num:
    return Num(Fraction(value), unit)


def text(s: str) -> Text:
    return Text(s)


def vset(*members) -> ValueSet:
    return ValueSet(members)


def fact(name: str, *args, **kwargs) -> Compound:
    return Compound(name, tuple(args), tuple(kwargs.items()))


_fresh_counter = itertools.count()


def rename_fresh(units: Iterable[PatternUnit], known: set[str],
                 counter: Iterator[int]) -> list[PatternUnit]:
    """Rename every variable not in `known` to a fresh name (per application)."""
    mapping: dict[str, Var] = {}

    def ren(fv):
        if isinstance(fv, Var):
            if fv.name in known:
                return fv
            if fv.name not in mapping:
                mapping[fv.name] = Var(f"{fv.name}~{next(counter)}")
            return mapping[fv.name]
        if isinstance(fv, ValueSet):
            return ValueSet(ren(m) for m in fv)
        if isinstance(fv, Struct):
            return Struct([(k, ren(v)) for k, v in fv.fields])
        if isinstance(fv, Compound):
            return Compound(fv.name, tuple(ren(a) for a in fv.args),
                            tuple((k, ren(v)) for k, v in fv.kwargs))
        return fv

    out = []
    for pu in units:
        out.append(PatternUnit(ren(pu.name) if isinstance(pu.name, Var) else pu.name,
                               tuple((k, ren(v)) for k, v in pu.features)))
    return out
