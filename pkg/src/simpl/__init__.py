"""simpl: specialize annotated inference algorithms against a fixed model.

Sampling algorithms written naively in a small S-expression DSL are run
three ways: interpreted directly, specialized into a residual trace and
executed, or emitted as C. All three agree bit-for-bit per seed.
"""

from .algorithms import ALGORITHM_NAMES, AlgorithmAsset, load_asset
from .errors import (BadStaticError, CacheMismatchError, DslRuntimeError,
                     DslSyntaxError, ModelError, NonTerminationError,
                     ResolveError, SimplError, UnsupportedFeatureError, UsageError)
from .interp import RunResult, interpret
from .ir import ResidualProgram, canonical_dump, dump
from .model import (BayesNet, ModelCodePlan, Node, NodeRef, exact_posterior,
                    parse_model, specialize_model)
from .pe import pe
from .rng import RngState
from .runner import CompiledResidual, run_residual
from .syntax import parse_program, resolve, strip_annotations

__all__ = [
    "ALGORITHM_NAMES", "AlgorithmAsset", "BadStaticError", "BayesNet",
    "CacheMismatchError", "CompiledResidual", "DslRuntimeError", "DslSyntaxError",
    "ModelCodePlan", "ModelError", "Node", "NodeRef", "NonTerminationError",
    "ResidualProgram", "ResolveError", "RngState", "RunResult", "SimplError",
    "UnsupportedFeatureError", "UsageError", "canonical_dump", "dump",
    "exact_posterior", "interpret", "load_asset", "parse_model", "parse_program",
    "pe", "resolve", "run_residual", "specialize_model", "strip_annotations",
]

__version__ = "0.1.0"
