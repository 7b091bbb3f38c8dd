"""Symbolic Gaussian elimination over the expression field.

Pivot entries are selected by their numeric magnitude at generic sample
points (an entry qualifies only if it is generically nonzero); every
symbolic result is cross-checked numerically before it is returned.
"""

from __future__ import annotations

import math

from .errors import EliminationError, EvalError
from .expr import ZERO, add, div, evaluate, free_symbols, mul, neg, sub
from .sampling import Sampler, _HUGE
from .simplify import is_zero_symbolic, simplify


def _sample_points(rows, sp: Sampler, extra_syms=()):
    syms = set(extra_syms)
    for r in rows:
        for e in r:
            syms |= free_symbols(e)
    if not syms:
        return [dict()]

    def probe(point):
        for r in rows:
            for e in r:
                v = evaluate(e, point)
                if not math.isfinite(v) or abs(v) > _HUGE:
                    raise EvalError("domain", "near-singular entry")
        return True

    return sp.admissible_points(syms, probe)


def _scores(rows, points):
    """Minimum |value| across points for each entry; 0 for failures."""
    out = {}
    for i, r in enumerate(rows):
        for j, e in enumerate(r):
            if e == ZERO:
                out[i, j] = 0.0
                continue
            try:
                out[i, j] = min(abs(evaluate(e, p)) for p in points)
            except EvalError:
                out[i, j] = 0.0
    return out


def _complexity(e):
    """Rough size of an expression; cheap pivots keep elimination sparse."""
    from .expr import Add, Call, Mul, Pow, Rat, Sym

    if isinstance(e, (Rat, Sym)):
        return 1
    if isinstance(e, Add):
        return 1 + sum(_complexity(t) for t in e.terms)
    if isinstance(e, Mul):
        return 1 + sum(_complexity(f) for f in e.factors)
    if isinstance(e, Pow):
        return 2 + _complexity(e.base)
    if isinstance(e, Call):
        return 2 + _complexity(e.arg)
    return 10


class RowReduction:
    """Result of a symbolic row reduction."""

    def __init__(self, rows, pivots, ncols):
        self.rows = rows
        self.pivots = pivots  # list of (row, col) in elimination order
        self.ncols = ncols

    @property
    def pivot_cols(self):
        return [c for _r, c in self.pivots]

    @property
    def rank(self):
        return len(self.pivots)


def row_reduce(rows, sp: Sampler, extra_syms=()) -> RowReduction:
    """Fraction-free Jordan elimination with numeric pivot selection.

    Rows are first scaled to polynomial entries; each update uses the
    Bareiss combination (pivot * row - entry * pivot_row) / previous_pivot,
    whose division is exact, so entries stay polynomial and small.  Pivot
    rows are not normalized; solution extraction divides by the pivot entry.
    """
    rows = [clear_denominators([simplify(e) for e in r]) if r else [] for r in rows]
    if not rows:
        return RowReduction(rows, [], 0)
    ncols = len(rows[0])
    points = _sample_points(rows, sp, extra_syms)
    pivots = []
    used_rows = set()
    prev_pivot = None
    while True:
        scores = _scores(rows, points)
        pivot_cols = {c for _r, c in pivots}
        best = None
        for i in range(len(rows)):
            if i in used_rows:
                continue
            for j in range(ncols):
                if j in pivot_cols:
                    continue
                s = scores[i, j]
                if s <= sp.tol:
                    continue
                if is_zero_symbolic(rows[i][j]):
                    continue
                # prefer structurally simple pivots, then well-conditioned ones
                key = (-_complexity(rows[i][j]), s)
                if best is None or key > best[0]:
                    best = (key, i, j)
        if best is None:
            break
        _key, pi, pj = best
        piv = rows[pi][pj]
        for i in range(len(rows)):
            if i == pi:
                continue
            factor = rows[i][pj]
            if factor == ZERO:
                continue
            updated = []
            for e, pe in zip(rows[i], rows[pi]):
                val = sub(mul(piv, e), mul(factor, pe))
                if prev_pivot is not None:
                    val = div(val, prev_pivot)
                updated.append(simplify(val))
            rows[i] = updated
        used_rows.add(pi)
        pivots.append((pi, pj))
        prev_pivot = piv
    return RowReduction(rows, pivots, ncols)


def nullspace(rows, sp: Sampler, extra_syms=()) -> list:
    """Basis of the right null space over the function field.

    Returns vectors of simplified expressions; each is verified numerically
    against the original matrix.
    """
    if not rows:
        return []
    ncols = len(rows[0])
    red = row_reduce(rows, sp, extra_syms)
    pivot_cols = {c: r for r, c in red.pivots}
    free_cols = [j for j in range(ncols) if j not in pivot_cols]
    basis = []
    for j in free_cols:
        vec = [ZERO] * ncols
        vec[j] = add(1)
        for r, c in red.pivots:
            vec[c] = simplify(neg(div(red.rows[r][j], red.rows[r][c])))
        basis.append(vec)
    _verify_nullspace(rows, basis, sp, extra_syms)
    return basis


def _verify_nullspace(rows, basis, sp, extra_syms=()):
    residuals = []
    for vec in basis:
        for r in rows:
            residuals.append(add(*(mul(a, b) for a, b in zip(r, vec))))
    from .sampling import all_zero_generic

    if residuals and not all_zero_generic(residuals, sp, extra_syms):
        raise EliminationError("null space verification failed at sample points")


def solve_square(rows, rhs, sp: Sampler) -> list:
    """Solve A x = b for a generically invertible square symbolic system."""
    n = len(rows)
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    red = row_reduce(aug, sp)
    pivots = [(r, c) for r, c in red.pivots if c < n]
    if len(pivots) < n:
        raise EliminationError("system is generically singular")
    x = [ZERO] * n
    for r, c in pivots:
        x[c] = simplify(div(red.rows[r][n], red.rows[r][c]))
    return x


def clear_denominators(exprs):
    """Scale a coefficient vector to polynomial form (direction preserved)."""
    from .expr import Rat
    from .simplify import as_fraction, lcm_expr

    pairs = [as_fraction(e) for e in exprs]
    common = add(1)
    for _n, d in pairs:
        if isinstance(d, Rat):
            continue
        common = lcm_expr(common, d)
    out = [simplify(div(mul(n, common), d)) for n, d in pairs]
    return out
