"""Error hierarchy.

Every error that can escape the toolchain carries a process exit code so the
CLI can map failure classes to distinct codes, and (where known) a source
span ``(line, col)`` pointing into the DSL or model source.
"""

from __future__ import annotations


class SimplError(Exception):
    exit_code = 1

    def __init__(self, message: str, span: tuple[int, int] | None = None):
        self.span = span
        if span is not None:
            message = f"{message} (at line {span[0]}, column {span[1]})"
        super().__init__(message)


class UsageError(SimplError):
    exit_code = 2


class DslSyntaxError(SimplError):
    """Malformed source text: tokenizer, reader, or special-form arity."""

    exit_code = 3


class ResolveError(SimplError):
    """A variable reference that resolves to no binder or definition."""

    exit_code = 3


class ModelError(SimplError):
    """Bad model declaration: cycles, CPT shape, probabilities, evidence."""

    exit_code = 4


class BadStaticError(SimplError):
    """A `static` annotation whose expression cannot be made concrete."""

    exit_code = 5


class NonTerminationError(SimplError):
    """Inline depth exhausted; carries the stack of inlined call names."""

    exit_code = 6

    def __init__(self, message: str, inline_stack: list[str], span=None):
        self.inline_stack = inline_stack
        tail = inline_stack[-12:]
        pretty = " -> ".join(tail)
        if len(inline_stack) > len(tail):
            pretty = "... -> " + pretty
        super().__init__(f"{message}\n  inline stack ({len(inline_stack)} deep): {pretty}", span)


class UnsupportedFeatureError(SimplError):
    """The C emitter met a residual construct it refuses to translate."""

    exit_code = 7


class CacheMismatchError(SimplError):
    """Debug-mode cache hit disagreed with recomputation."""

    exit_code = 8

    def __init__(self, cache_id: str, key, stored, recomputed):
        self.cache_id = cache_id
        self.key = key
        self.stored = stored
        self.recomputed = recomputed
        super().__init__(
            f"cache {cache_id}: stored {stored!r} != recomputed {recomputed!r} for key {key!r}"
        )


class DslRuntimeError(SimplError):
    """Evaluation-time failure: type errors, zero normalization, bad writes."""

    exit_code = 9
