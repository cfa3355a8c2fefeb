"""Bundled algorithm assets: DSL sources discoverable by name."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .errors import UsageError
from .syntax import count_annotations, parse_program


@dataclass(frozen=True)
class AlgorithmAsset:
    name: str
    source: str
    annotation_count: int
    required_capabilities: frozenset  # {"scalar", "array"}
    sampler_kind: str  # "independent" | "markov-chain"
    uses_burn: bool


_KINDS = {
    "likelihood": ("independent", False),
    "rejection": ("independent", False),
    "mh": ("markov-chain", True),
    "gibbs": ("markov-chain", True),
}

ALGORITHM_NAMES = tuple(_KINDS)


def _read_asset(filename: str) -> str:
    return resources.files("simpl").joinpath("assets", filename).read_text()


def prelude_source() -> str:
    return _read_asset("prelude.simpl")


def load_asset(name: str) -> AlgorithmAsset:
    if name not in _KINDS:
        raise UsageError(f"unknown algorithm {name!r}; available: {', '.join(_KINDS)}")
    source = _read_asset(f"{name}.simpl")
    kind, uses_burn = _KINDS[name]
    return AlgorithmAsset(
        name=name,
        source=source,
        annotation_count=count_annotations(parse_program(source)),
        required_capabilities=frozenset({"scalar", "array"}),
        sampler_kind=kind,
        uses_burn=uses_burn,
    )


def full_program_text(name: str) -> str:
    """Prelude plus the named algorithm, ready to parse."""
    return prelude_source() + "\n" + load_asset(name).source
