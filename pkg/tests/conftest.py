from __future__ import annotations

import importlib.resources as resources

import pytest

from simpl.algorithms import full_program_text
from simpl.model import parse_model
from simpl.syntax import parse_program

MODELS = ("burglary", "csi", "multiburglary")
ALGOS = ("likelihood", "rejection", "mh", "gibbs")

# oracle values frozen from the enumeration oracle (cross-checked in
# test_model against an independent enumeration)
ORACLE = {
    "burglary": 0.8673512799486707,
    "csi": 0.5829725829725829,
    "multiburglary": 0.0827966881324747,
}


def model_source(name: str) -> str:
    return resources.files("simpl").joinpath("models", f"{name}.bn").read_text()


def model_path(name: str) -> str:
    return str(resources.files("simpl").joinpath("models", f"{name}.bn"))


def fresh_net(name: str):
    return parse_model(model_source(name))


@pytest.fixture
def burglary():
    return fresh_net("burglary")


@pytest.fixture
def csi():
    return fresh_net("csi")


@pytest.fixture
def multiburglary():
    return fresh_net("multiburglary")


_PROGRAMS: dict = {}


def algo_program(name: str):
    """Parsed prelude+algorithm AST (shared; evaluation never mutates it)."""
    if name not in _PROGRAMS:
        _PROGRAMS[name] = parse_program(full_program_text(name))
    return _PROGRAMS[name]


def toolchain_ready() -> bool:
    from simpl.toolchain import toolchain_available
    return toolchain_available()


needs_cc = pytest.mark.skipif(not toolchain_ready(),
                              reason="C toolchain or simpl_rt.h not available")
