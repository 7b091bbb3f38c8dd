"""Generic-point sampling, numeric evaluation helpers and rank computation.

All rank/membership/zero decisions in the package are made numerically at
randomly sampled points, with deterministic seeding.  Points at which an
expression fails to evaluate (division by zero, domain error) or produces
near-singular magnitudes are discarded and resampled, up to a bounded
budget; this operationalizes working at generic points only.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import EvalError, SamplerExhausted
from .expr import Add, Call, Expr, Mul, Pow, Rat, Sym, evaluate, free_symbols

_HUGE = 1e12

Point = dict


@dataclass(frozen=True)
class Sampler:
    """Per-symbol interval domains plus the sampling configuration.

    seed/samples/tol fully determine every probabilistic verdict, so results
    are reproducible.  Symbols without an explicit domain use
    ``default_domain``; the default interval is positive and bounded away
    from zero, which keeps the common singular loci (vanishing denominators)
    out of the sample set.
    """

    seed: int = 42
    samples: int = 16
    tol: float = 1e-9
    max_resamples: int = 200
    domains: Mapping[str, tuple] = field(default_factory=dict)
    default_domain: tuple = (0.2, 1.8)

    def __post_init__(self):
        if self.samples < 8:
            raise ValueError("at least 8 sample points are required")
        for name, (lo, hi) in self.domains.items():
            if not hi > lo:
                raise ValueError(f"domain for {name!r} must have positive length")

    def with_domains(self, domains) -> "Sampler":
        merged = dict(self.domains)
        merged.update(domains)
        return replace(self, domains=merged)

    def domain(self, name):
        return self.domains.get(name, self.default_domain)

    def point_stream(self, syms) -> Iterable[Point]:
        """Endless deterministic stream of sample points for the symbols."""
        names = sorted(set(syms))
        rng = random.Random(f"{self.seed}|{','.join(names)}")
        while True:
            yield {n: rng.uniform(*self.domain(n)) for n in names}

    def admissible_points(self, syms, probe: Callable[[Point], bool], count=None):
        """First ``count`` points accepted by ``probe`` (EvalError rejects)."""
        want = self.samples if count is None else count
        out = []
        budget = self.max_resamples + want
        for point in self.point_stream(syms):
            if budget <= 0:
                raise SamplerExhausted(
                    f"no {want} admissible points within {self.max_resamples} resamples"
                )
            budget -= 1
            try:
                ok = probe(point)
            except EvalError:
                continue
            if ok:
                out.append(point)
                if len(out) == want:
                    return out
        raise SamplerExhausted("point stream ended unexpectedly")


def magnitude(e: Expr, point) -> float:
    """Evaluation with all cancellations disabled; scale reference for zero tests."""
    if isinstance(e, Rat):
        return abs(float(e.value))
    if isinstance(e, Sym):
        return abs(float(point[e.name]))
    if isinstance(e, Add):
        return sum(magnitude(t, point) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= magnitude(f, point)
        return out
    if isinstance(e, Pow):
        b = magnitude(e.base, point)
        if b == 0.0 and e.exponent < 0:
            raise EvalError("division", "division by zero")
        try:
            return b ** float(e.exponent)
        except OverflowError:
            raise EvalError("domain", "overflow") from None
    if isinstance(e, Call):
        return abs(evaluate(e, point)) + 1.0
    raise TypeError(type(e))


def is_zero_generic(e: Expr, sp: Sampler, extra_syms=()) -> bool:
    """True iff the expression vanishes at all sampled admissible points.

    The comparison is relative to the accumulated term magnitude, so exact
    cancellations are recognized even when individual terms are large.
    """
    syms = free_symbols(e) | set(extra_syms)
    if not syms:
        try:
            return abs(evaluate(e, {})) <= sp.tol
        except EvalError:
            raise SamplerExhausted("constant expression undefined") from None
    budget = sp.max_resamples + sp.samples
    count = 0
    for point in sp.point_stream(syms):
        if budget <= 0:
            raise SamplerExhausted("expression undefined on the sampling domain")
        budget -= 1
        try:
            v = evaluate(e, point)
            if not math.isfinite(v) or abs(v) > _HUGE:
                raise EvalError("domain", "near-singular value")
            scale = 1.0 + magnitude(e, point)
        except EvalError:
            continue
        if abs(v) > sp.tol * scale:
            return False
        count += 1
        if count == sp.samples:
            return True
    raise SamplerExhausted("point stream ended unexpectedly")


def all_zero_generic(exprs, sp: Sampler, extra_syms=()) -> bool:
    """Joint zero test sharing one point set across the expressions."""
    exprs = list(exprs)
    if not exprs:
        return True
    syms = set(extra_syms)
    for e in exprs:
        syms |= free_symbols(e)
    if not syms:
        return all(abs(evaluate(e, {})) <= sp.tol for e in exprs)
    budget = sp.max_resamples + sp.samples
    count = 0
    for point in sp.point_stream(syms):
        if budget <= 0:
            raise SamplerExhausted("expressions undefined on the sampling domain")
        budget -= 1
        try:
            for e in exprs:
                v = evaluate(e, point)
                if not math.isfinite(v) or abs(v) > _HUGE:
                    raise EvalError("domain", "near-singular value")
                if abs(v) > sp.tol * (1.0 + magnitude(e, point)):
                    return False
        except EvalError:
            continue
        count += 1
        if count == sp.samples:
            return True
    raise SamplerExhausted("point stream ended unexpectedly")


def numeric_rank(matrix: np.ndarray, tol: float) -> int:
    """SVD rank with threshold relative to the largest singular value."""
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0:
        return 0
    cutoff = tol * max(1.0, float(sv[0])) * max(matrix.shape)
    return int(np.sum(sv > cutoff))


class MatrixSampler:
    """Evaluates a symbolic matrix at admissible sample points."""

    def __init__(self, rows, syms, sp: Sampler):
        self.rows = [list(r) for r in rows]
        self.syms = set(syms)
        for r in self.rows:
            for e in r:
                self.syms |= free_symbols(e)
        self.sp = sp

    def at(self, point) -> np.ndarray:
        vals = []
        for r in self.rows:
            row = []
            for e in r:
                v = evaluate(e, point)
                if not math.isfinite(v) or abs(v) > _HUGE:
                    raise EvalError("domain", "near-singular value")
                row.append(v)
            vals.append(row)
        return np.array(vals, dtype=float)

    def samples(self, count=None):
        out = []

        def probe(point):
            out.append((point, self.at(point)))
            return True

        self.sp.admissible_points(self.syms, probe, count)
        want = self.sp.samples if count is None else count
        return out[-want:]


def sampled_ranks(rows, syms, sp: Sampler):
    """[(point, rank)] at the sampler's admissible points."""
    ms = MatrixSampler(rows, syms, sp)
    return [(p, numeric_rank(m, sp.tol)) for p, m in ms.samples()]


def generic_rank_of_rows(rows, syms, sp: Sampler) -> int:
    """Maximal numeric rank across sample points (the generic value)."""
    if not rows:
        return 0
    return max(r for _p, r in sampled_ranks(rows, syms, sp))
