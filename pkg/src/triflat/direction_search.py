"""Search for the input direction attached to the longer terminal chain.

The direction alpha1*b1 + alpha2*b2 is determined either by a linear
containment condition involving the bracket-extended distribution H (unique
when applicable) or as a projective root of a homogeneous quadratic; the
quadratic admits at most two non-collinear solutions, and for a system that
is equivalent to the triangular form at least one of them passes the full
decision procedure.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from .diffgeo import (
    ad_iter,
    annihilator,
    basis,
    cauchy_characteristics,
    contains_generic,
    extend,
    generic_rank,
    is_involutive,
    lie_bracket,
    pruned,
    span_equal,
)
from .elimination import clear_denominators
from .errors import NotApplicable, TriflatError
from .expr import Expr, ONE, Rat, ZERO, add, div, mul, neg, pow_, sub
from .fields import Distribution, VectorField
from .sampling import Sampler, is_zero_generic
from .simplify import as_fraction, simplify, sqrt_of_square
from .systems import AffineSystem


@dataclass
class BracketChain:
    """D_1 = span{b1, b2}, D_{i+1} = D_i + [a, D_i] up to the first
    non-involutive member; depth is the count of involutive members."""

    steps: List[Distribution]  # steps[i] is D_{i+1}
    depth: int
    ranks: List[int]
    rank_ok: bool
    cauchy_ok: bool
    cauchy_top: Optional[Distribution]

    def d(self, i: int) -> Distribution:
        """D_i with D_0 the zero distribution."""
        if i == 0:
            return Distribution(self.steps[0].frame, [])
        return self.steps[i - 1]

    @property
    def top(self) -> Distribution:
        """The first non-involutive member D_{depth+1}."""
        return self.steps[self.depth]


def compute_bracket_chain(sys: AffineSystem, sp: Sampler) -> BracketChain:
    """Build the chain; errors out if it fills the state space while involutive."""
    steps = [pruned(sys.input_distribution(), sp)]
    while True:
        cur = steps[-1]
        if not is_involutive(cur, sp):
            break
        if generic_rank(cur, sp) == sys.n:
            raise NotApplicable(
                "chain of involutive distributions reaches the full tangent space; "
                "the system is static feedback linearizable"
            )
        nxt = pruned(
            extend(cur, [lie_bracket(sys.drift, f) for f in basis(cur, sp)]), sp
        )
        if generic_rank(nxt, sp) == generic_rank(cur, sp):
            raise NotApplicable(
                "chain of involutive distributions stalls below the full space"
            )
        steps.append(nxt)
    depth = len(steps) - 1
    ranks = [generic_rank(D, sp) for D in steps]
    rank_ok = ranks == [2 * (i + 1) for i in range(len(steps))] and depth >= 1
    cauchy_ok = False
    cauchy_top = None
    if depth >= 1:
        cauchy_top = cauchy_characteristics(steps[depth], sp)
        cauchy_ok = not span_equal(cauchy_top, steps[depth - 1], sp)
    return BracketChain(steps, depth, ranks, rank_ok, cauchy_ok, cauchy_top)


def h_distribution(chain: BracketChain, sp: Sampler) -> Distribution:
    """H = D_{depth+1} + [D_depth, D_{depth+1}], pruned to a generic basis."""
    dn = chain.d(chain.depth)
    dn1 = chain.top
    fields = list(dn1.fields)
    for v in basis(dn, sp):
        for w in basis(dn1, sp):
            fields.append(lie_bracket(v, w))
    return pruned(Distribution(dn1.frame, fields), sp)


@dataclass
class DirectionCandidate:
    alpha1: Expr
    alpha2: Expr
    field: VectorField
    source: str  # 'h-method' | 'quadratic-root-1' | 'quadratic-root-2'

    def collinear_with(self, other, sp: Sampler) -> bool:
        cross = sub(mul(self.alpha1, other.alpha2), mul(self.alpha2, other.alpha1))
        return is_zero_generic(simplify(cross), sp)


def _normalized_candidate(sys, alpha1, alpha2, source) -> DirectionCandidate:
    a1, a2 = clear_denominators([simplify(alpha1), simplify(alpha2)])
    if a1 == ZERO and a2 == ZERO:
        raise TriflatError("degenerate direction candidate")
    if a2 == ZERO:
        a1, a2 = ONE, ZERO
    elif a1 == ZERO:
        a1, a2 = ZERO, ONE
    else:
        # cancel the common content through the ratio's normal form
        a1, a2 = as_fraction(div(a1, a2))
        if isinstance(a2, Rat) and a2.value != 0:
            a1, a2 = simplify(div(a1, a2)), ONE
    field = VectorField(
        sys.frame,
        tuple(
            simplify(add(mul(a1, p), mul(a2, q)))
            for p, q in zip(sys.b1.components, sys.b2.components)
        ),
    )
    if field.is_zero():
        raise TriflatError("degenerate direction candidate")
    return DirectionCandidate(a1, a2, field, source)


def candidate_via_h(sys: AffineSystem, chain: BracketChain, sp: Sampler) -> DirectionCandidate:
    """Unique direction with ad_a^{depth+1} b_p inside H, when one exists."""
    if chain.depth < 1:
        raise NotApplicable("the input span itself is non-involutive")
    H = h_distribution(chain, sp)
    k = chain.depth + 1
    w1 = ad_iter(sys.drift, k, sys.b1)
    w2 = ad_iter(sys.drift, k, sys.b2)
    in1 = contains_generic(H, w1, sp)
    in2 = contains_generic(H, w2, sp)
    if in1 and in2:
        raise NotApplicable(
            "both iterated brackets lie in H; the containment condition does not "
            "single out a direction"
        )
    if in1:
        return _normalized_candidate(sys, ONE, ZERO, "h-method")
    if in2:
        return _normalized_candidate(sys, ZERO, ONE, "h-method")
    # pair against the annihilator: one linear equation per complement form
    pairs = []
    for form in annihilator(H, sp).forms:
        c1 = simplify(form.pair(w1))
        c2 = simplify(form.pair(w2))
        if c1 == ZERO and c2 == ZERO:
            continue
        pairs.append((c1, c2))
    best = None
    for i, (c1, c2) in enumerate(pairs):
        cross_ok = True
        for j, (d1, d2) in enumerate(pairs):
            if j == i:
                continue
            cross = simplify(sub(mul(c1, d2), mul(c2, d1)))
            if not is_zero_generic(cross, sp):
                cross_ok = False
                break
        if cross_ok and not is_zero_generic(c2, sp):
            best = (c1, c2)
            break
        if cross_ok and best is None and not is_zero_generic(c1, sp):
            best = (c1, c2)
    if best is None:
        raise NotApplicable("no direction satisfies the containment condition")
    alpha1 = best[1]
    alpha2 = neg(best[0])
    cand = _normalized_candidate(sys, alpha1, alpha2, "h-method")
    combo = VectorField(
        sys.frame,
        tuple(
            simplify(add(mul(cand.alpha1, a), mul(cand.alpha2, b)))
            for a, b in zip(w1.components, w2.components)
        ),
    )
    if not contains_generic(H, combo, sp):
        raise NotApplicable("containment condition is inconsistent across directions")
    return cand


def _quadratic_coefficients(sys, chain, sp):
    """Quadratic forms, one per annihilator direction of D_{depth+1}."""
    a = sys.drift
    n3 = chain.depth
    v1 = ad_iter(a, n3 - 1, sys.b1)
    v2 = ad_iter(a, n3 - 1, sys.b2)
    w11 = lie_bracket(v1, lie_bracket(a, v1))
    w12 = lie_bracket(v1, lie_bracket(a, v2))
    w22 = lie_bracket(v2, lie_bracket(a, v2))
    triples = []
    for form in annihilator(chain.top, sp).forms:
        A = simplify(form.pair(w11))
        B = simplify(form.pair(w12))
        C = simplify(form.pair(w22))
        if A == ZERO and B == ZERO and C == ZERO:
            continue
        triples.append((A, B, C))
    return triples


def candidates_via_quadratic(
    sys: AffineSystem, chain: BracketChain, sp: Sampler
) -> List[DirectionCandidate]:
    """Projective roots of the homogeneous quadratic containment condition.

    The discriminant is kept exact when it reduces to a perfect square;
    otherwise the root carries an explicit square root.  Roots are filtered
    for generic consistency against the remaining component equations and at
    most two non-collinear candidates are returned.
    """
    if chain.depth < 1:
        raise NotApplicable("the input span itself is non-involutive")
    triples = [
        t
        for t in _quadratic_coefficients(sys, chain, sp)
        if not all(is_zero_generic(c, sp) for c in t)
    ]
    if not triples:
        raise NotApplicable(
            "the quadratic condition is vacuous; the characteristic condition on "
            "the first non-involutive member must have failed"
        )
    pivot = _best_triple(triples, sp)
    raw_roots = _projective_roots(pivot, sp)
    roots = []
    for a1, a2 in raw_roots:
        ok = True
        for A, B, C in triples:
            residual = simplify(
                add(
                    mul(A, a1, a1),
                    mul(Rat(2), B, a1, a2),
                    mul(C, a2, a2),
                )
            )
            if not is_zero_generic(residual, sp):
                ok = False
                break
        if ok:
            roots.append((a1, a2))
    out: List[DirectionCandidate] = []
    for a1, a2 in roots:
        cand = _normalized_candidate(
            sys, a1, a2, f"quadratic-root-{len(out) + 1}"
        )
        if not any(cand.collinear_with(c, sp) for c in out):
            out.append(cand)
    if not out:
        raise NotApplicable(
            "no non-trivial direction satisfies the quadratic condition; the "
            "system is not equivalent to the triangular form"
        )
    return out[:2]


def _best_triple(triples, sp: Sampler):
    """Pick the quadratic with the best-conditioned coefficients."""
    import math

    from .expr import evaluate, free_symbols
    from .errors import EvalError

    best = None
    for t in triples:
        syms = set()
        for c in t:
            syms |= free_symbols(c)
        score = math.inf
        count = 0
        for point in sp.point_stream(syms):
            try:
                vals = [abs(evaluate(c, point)) for c in t]
            except EvalError:
                continue
            score = min(score, max(vals))
            count += 1
            if count >= sp.samples:
                break
        if score is not math.inf and (best is None or score > best[0]):
            best = (score, t)
    if best is None:
        raise NotApplicable("quadratic coefficients cannot be evaluated")
    return best[1]


def _projective_roots(triple, sp: Sampler):
    """Roots (alpha1 : alpha2) of A a1^2 + 2 B a1 a2 + C a2^2 = 0."""
    A, B, C = (simplify(c) for c in triple)
    a_zero = is_zero_generic(A, sp)
    c_zero = is_zero_generic(C, sp)
    if a_zero and c_zero:
        # 2 B a1 a2 = 0 with B generically nonzero
        return [(ONE, ZERO), (ZERO, ONE)]
    if a_zero:
        # a2 * (2 B a1 + C a2) = 0
        return [(ONE, ZERO), (neg(C), mul(Rat(2), B))]
    if c_zero:
        return [(ZERO, ONE), (mul(Rat(2), B), neg(A))]
    disc = simplify(sub(mul(B, B), mul(A, C)))
    if is_zero_generic(disc, sp):
        return [(neg(B), A)]
    root = sqrt_of_square(disc)
    if root is None:
        root = pow_(disc, Fraction(1, 2))
    return [
        (simplify(add(neg(B), root)), A),
        (simplify(sub(neg(B), root)), A),
    ]
