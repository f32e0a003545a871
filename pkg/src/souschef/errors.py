"""Shared exception types.

Every failure the engine can signal deliberately derives from SousChefError
so callers (and the CLI) can separate engine diagnostics from genuine bugs.
"""

from __future__ import annotations


class SousChefError(Exception):
    """Base class for all deliberate engine errors."""

    code = "error"

    def payload(self) -> dict:
        """Machine-readable form, used for CLI stderr diagnostics."""
        return {"error": self.code, "message": str(self)}


class StructuralError(SousChefError):
    """Malformed pattern or structure (distinct from a mere match failure)."""

    code = "structural-error"


class InputError(SousChefError):
    """Bad user-facing input: empty utterance, malformed recipe, bad flag."""

    code = "input-error"


class GrammarSyntaxError(SousChefError):
    """Grammar file does not parse; carries a line number."""

    code = "grammar-syntax-error"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self), "line": self.line}


class UnknownProcedureError(SousChefError):
    """A procedure call names a procedure that was never registered."""

    code = "unknown-procedure"


class UnknownConceptError(SousChefError):
    """An ontology lookup named a concept the ontology does not define."""

    code = "unknown-concept"


class DuplicateNameError(SousChefError):
    """Two constructions (or primitives) registered under one name."""

    code = "duplicate-name"


class MergeFailure(SousChefError):
    """Scalar conflict while merging; carries the offending feature path."""

    code = "merge-failure"

    def __init__(self, path: str, existing, incoming):
        super().__init__(f"conflict at {path}: {existing!r} vs {incoming!r}")
        self.path = path
        self.existing = existing
        self.incoming = incoming


class SimulationError(SousChefError):
    """The kitchen simulator rejected a primitive application."""

    code = "simulation-error"

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason

    def payload(self) -> dict:
        return {"error": self.code, "reason": self.reason, "message": str(self)}


class UnsupportedDirection(SousChefError):
    """The primitive declares no evaluation direction matching the request."""

    code = "unsupported-direction"


class DataflowDeadlock(SousChefError):
    """No call is evaluable and unevaluated calls remain."""

    code = "dataflow-deadlock"

    def __init__(self, stuck: list):
        super().__init__("no evaluable call; stuck: " + ", ".join(map(str, stuck)))
        self.stuck = list(stuck)


class UnderstandingFailure(SousChefError):
    """A slot could not be filled by any knowledge source."""

    code = "understanding-failure"

    def __init__(self, message: str, question_id: str | None = None,
                 instruction_index: int | None = None):
        super().__init__(message)
        self.question_id = question_id
        self.instruction_index = instruction_index

    def payload(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        if self.question_id is not None:
            out["question"] = self.question_id
        if self.instruction_index is not None:
            out["instruction"] = self.instruction_index
        return out


class SizeExceededError(SousChefError):
    """Exhaustive search refused: input larger than the guard allows."""

    code = "size-exceeded"
