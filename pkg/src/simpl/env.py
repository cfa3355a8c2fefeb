"""Chained environments and shared runtime value types."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DslRuntimeError

_MISSING = object()


class Env:
    __slots__ = ("vars", "parent")

    def __init__(self, parent: "Env | None" = None):
        self.vars: dict = {}
        self.parent = parent

    def lookup(self, name: str):
        env = self
        while env is not None:
            v = env.vars.get(name, _MISSING)
            if v is not _MISSING:
                return v
            env = env.parent
        raise DslRuntimeError(f"unbound variable {name!r}")

    def define(self, name: str, value) -> None:
        self.vars[name] = value

    def assign(self, name: str, value) -> None:
        env = self
        while env is not None:
            if name in env.vars:
                env.vars[name] = value
                return
            env = env.parent
        raise DslRuntimeError(f"set! of unbound variable {name!r}")

    def child(self) -> "Env":
        return Env(self)


class Vec:
    """Mutable runtime vector, distinct from immutable DSL lists."""

    __slots__ = ("items",)

    def __init__(self, items):
        self.items = list(items)

    def __repr__(self) -> str:
        return f"(vector {' '.join(map(repr, self.items))})"


@dataclass
class DSLFunction:
    name: str
    params: list
    body: list
    env: Env = field(repr=False)
    no_inline_params: tuple = ()
