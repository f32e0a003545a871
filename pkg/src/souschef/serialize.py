"""JSON encoding of feature values, shared by plan files and traces.

Rationals are written as exact strings ("35/2"), never floats, so that
round-tripping preserves equality and files are byte-stable across runs.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import InputError
from .features import Compound, Num, Struct, Sym, Text, ValueSet, Var


def fv_to_json(value):
    if isinstance(value, Sym):
        return {"sym": value.name}
    if isinstance(value, Var):
        return {"var": value.name}
    if isinstance(value, Text):
        return {"text": value.text}
    if isinstance(value, Num):
        out = {"num": str(value.value)}
        if value.unit is not None:
            out["unit"] = value.unit
        return out
    if isinstance(value, ValueSet):
        return {"set": [fv_to_json(m) for m in value.members]}
    if isinstance(value, Struct):
        return {"struct": {k: fv_to_json(v) for k, v in value.fields}}
    if isinstance(value, Compound):
        out = {"call": value.name, "args": [fv_to_json(a) for a in value.args]}
        if value.kwargs:
            out["kwargs"] = {k: fv_to_json(v) for k, v in value.kwargs}
        return out
    raise InputError(f"not a serializable feature value: {value!r}")


def fv_from_json(data):
    if not isinstance(data, dict) or len(data) < 1:
        raise InputError(f"malformed feature value: {data!r}")
    if "sym" in data:
        return Sym(data["sym"])
    if "var" in data:
        return Var(data["var"])
    if "text" in data:
        return Text(data["text"])
    if "num" in data:
        return Num(Fraction(data["num"]), data.get("unit"))
    if "set" in data:
        return ValueSet(tuple(fv_from_json(m) for m in data["set"]))
    if "struct" in data:
        return Struct([(k, fv_from_json(v)) for k, v in data["struct"].items()])
    if "call" in data:
        kwargs = tuple((k, fv_from_json(v))
                       for k, v in data.get("kwargs", {}).items())
        return Compound(data["call"],
                        tuple(fv_from_json(a) for a in data.get("args", [])),
                        kwargs)
    raise InputError(f"malformed feature value: {data!r}")
