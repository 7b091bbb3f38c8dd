"""Symbolic toolbox for two-input affine systems: static feedback equivalence
to a flat triangular normal form, flat output derivation and constructive
normal-form transformations, verified numerically at generic points."""

from .errors import (
    EliminationError,
    EvalError,
    ExprSyntaxError,
    FrameMismatch,
    IntegrationError,
    NotApplicable,
    PipelineError,
    SamplerExhausted,
    TriflatError,
)
from .expr import Expr, Rat, Sym, evaluate, free_symbols, substitute, to_str
from .parser import parse_expr
from .sampling import Point, Sampler, is_zero_generic
from .simplify import differentiate, simplify

__all__ = [
    "EliminationError",
    "EvalError",
    "Expr",
    "ExprSyntaxError",
    "FrameMismatch",
    "IntegrationError",
    "NotApplicable",
    "PipelineError",
    "Point",
    "Rat",
    "Sampler",
    "SamplerExhausted",
    "Sym",
    "TriflatError",
    "differentiate",
    "evaluate",
    "free_symbols",
    "is_zero_generic",
    "parse_expr",
    "simplify",
    "substitute",
    "to_str",
]
