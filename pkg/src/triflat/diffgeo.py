"""Lie brackets, flags, Cauchy characteristics, annihilators.

Rank and membership questions are decided numerically at generic sample
points; symbolic elimination only produces readable bases, and each symbolic
result is re-checked numerically.  Sample points where a matrix drops below
its modal rank are treated as non-generic and discarded.
"""

from __future__ import annotations

import numpy as np

from .elimination import clear_denominators, nullspace, solve_square
from .errors import EliminationError, FrameMismatch
from .expr import Expr, ONE, ZERO, add, derivative, mul, neg, sub
from .fields import Codistribution, Distribution, OneForm, VectorField, coordinate_field
from .sampling import MatrixSampler, Sampler, numeric_rank
from .simplify import simplify

_BRACKET_MEMO: dict = {}


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    """[v, w]^i = v^j d_j w^i - w^j d_j v^i, simplified componentwise."""
    if v.frame != w.frame:
        raise FrameMismatch("bracket of fields on different frames")
    memo_key = (v.frame, v.components, w.components)
    hit = _BRACKET_MEMO.get(memo_key)
    if hit is not None:
        return hit
    frame = v.frame
    comps = []
    for i in range(len(frame)):
        terms = []
        for j, xj in enumerate(frame):
            if v.components[j] != ZERO:
                dw = derivative(w.components[i], xj)
                if dw != ZERO:
                    terms.append(mul(v.components[j], dw))
            if w.components[j] != ZERO:
                dv = derivative(v.components[i], xj)
                if dv != ZERO:
                    terms.append(mul(neg(w.components[j]), dv))
        comps.append(simplify(add(*terms)) if terms else ZERO)
    out = VectorField(frame, tuple(comps))
    if len(_BRACKET_MEMO) > 50_000:
        _BRACKET_MEMO.clear()
    _BRACKET_MEMO[memo_key] = out
    return out


def ad_iter(a: VectorField, k: int, w: VectorField) -> VectorField:
    """k-fold iterated bracket [a, [a, ... [a, w]]]; k = 0 gives w."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = w
    for _ in range(k):
        out = lie_bracket(a, out)
    return out


def lie_derivative(v: VectorField, f: Expr, k: int = 1) -> Expr:
    """k-fold derivative of the function f along v."""
    out = f
    for _ in range(k):
        out = simplify(
            add(*(mul(v.components[j], derivative(out, xj)) for j, xj in enumerate(v.frame)))
        )
    return out


def differential(f: Expr, frame) -> OneForm:
    frame = tuple(frame)
    return OneForm(frame, tuple(simplify(derivative(f, x)) for x in frame))


# --- numeric span machinery --------------------------------------------------


def _generic_samples(rows, frame, sp: Sampler):
    """[(point, matrix)] restricted to points attaining the modal rank."""
    ms = MatrixSampler(rows, frame, sp)
    samples = ms.samples()
    ranks = [numeric_rank(m, sp.tol) for _p, m in samples]
    top = max(ranks) if ranks else 0
    return [(p, m) for (p, m), r in zip(samples, ranks) if r == top], top


def generic_rank(D: Distribution, sp: Sampler) -> int:
    """Maximal numeric rank of the component matrix over sample points."""
    if not D.fields:
        return 0
    key = _sampler_key(sp)
    if D._rank is None:
        D._rank = {}
    if key not in D._rank:
        _pts, top = _generic_samples(D.matrix_rows(), D.frame, sp)
        D._rank[key] = top
    return D._rank[key]


def _sampler_key(sp: Sampler):
    return (sp.seed, sp.samples, sp.tol, tuple(sorted(sp.domains.items())), sp.default_domain)


def basis(D: Distribution, sp: Sampler):
    """Generic basis, keeping the earliest spanning fields that raise rank."""
    if not D.fields:
        return []
    key = _sampler_key(sp)
    if D._basis is None:
        D._basis = {}
    if key in D._basis:
        return D._basis[key]
    samples, top = _generic_samples(D.matrix_rows(), D.frame, sp)
    kept = []
    kept_idx = []
    for i, f in enumerate(D.fields):
        if len(kept_idx) == top:
            break
        idx = kept_idx + [i]
        ok = True
        for _p, m in samples:
            if numeric_rank(m[idx, :], sp.tol) != len(idx):
                ok = False
                break
        if ok:
            kept_idx.append(i)
            kept.append(f)
    if len(kept_idx) != top:
        raise EliminationError("could not extract a generic basis")
    D._basis[key] = kept
    return kept


def contains_generic(D: Distribution, v: VectorField, sp: Sampler) -> bool:
    """Membership of v in the span of D at generic points."""
    if v.is_zero():
        return True
    if not D.fields:
        return False
    rows = D.matrix_rows()
    aug = rows + [list(v.components)]
    samples, _top = _generic_samples(aug, D.frame, sp)
    base_ranks = [numeric_rank(m[: len(rows), :], sp.tol) for _p, m in samples]
    modal = max(base_ranks)
    verdict = True
    seen = 0
    for (_p, m), rb in zip(samples, base_ranks):
        if rb != modal:
            continue
        seen += 1
        if numeric_rank(m, sp.tol) != rb:
            verdict = False
            break
    return verdict and seen > 0


def contains_distribution(inner: Distribution, outer: Distribution, sp: Sampler) -> bool:
    if not inner.fields:
        return True
    if not outer.fields:
        return False
    rows_o = outer.matrix_rows()
    aug = rows_o + inner.matrix_rows()
    samples, _ = _generic_samples(aug, outer.frame, sp)
    base = [numeric_rank(m[: len(rows_o), :], sp.tol) for _p, m in samples]
    modal = max(base)
    for (_p, m), rb in zip(samples, base):
        if rb != modal:
            continue
        if numeric_rank(m, sp.tol) != rb:
            return False
    return True


def span_equal(D1: Distribution, D2: Distribution, sp: Sampler) -> bool:
    return contains_distribution(D1, D2, sp) and contains_distribution(D2, D1, sp)


def extend(D: Distribution, fields) -> Distribution:
    return Distribution(D.frame, list(D.fields) + list(fields))


def pruned(D: Distribution, sp: Sampler) -> Distribution:
    return Distribution(D.frame, basis(D, sp))


# --- flags and closures -------------------------------------------------------


def derived_step(D: Distribution, sp: Sampler) -> Distribution:
    b = basis(D, sp)
    new = list(b)
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            new.append(lie_bracket(b[i], b[j]))
    return pruned(Distribution(D.frame, new), sp)


def derived_flag(D: Distribution, i: int, sp: Sampler) -> Distribution:
    out = pruned(D, sp)
    for _ in range(i):
        out = derived_step(out, sp)
    return out


def lie_flag(D: Distribution, i: int, sp: Sampler) -> Distribution:
    base_fields = basis(D, sp)
    out = pruned(D, sp)
    for _ in range(i):
        new = list(out.fields)
        for v in base_fields:
            for w in out.fields:
                new.append(lie_bracket(v, w))
        out = pruned(Distribution(D.frame, new), sp)
    return out


def involutive_closure(D: Distribution, sp: Sampler) -> Distribution:
    out = pruned(D, sp)
    r = generic_rank(out, sp)
    for _ in range(len(D.frame) + 1):
        nxt = derived_step(out, sp)
        rn = generic_rank(nxt, sp)
        if rn == r:
            return out
        out, r = nxt, rn
    return out


def is_involutive(D: Distribution, sp: Sampler) -> bool:
    b = basis(D, sp)
    core = Distribution(D.frame, b)
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            if not contains_generic(core, lie_bracket(b[i], b[j]), sp):
                return False
    return True


# --- annihilators and characteristics ----------------------------------------


def annihilator(D: Distribution, sp: Sampler) -> Codistribution:
    """One-forms spanning the generic null space of the component matrix."""
    frame = D.frame
    n = len(frame)
    b = basis(D, sp)
    if not b:
        return Codistribution(frame, [_coordinate_form(frame, i) for i in range(n)])
    rows = [list(f.components) for f in b]
    vecs = nullspace(rows, sp)
    forms = [OneForm(frame, tuple(clear_denominators(vec))) for vec in vecs]
    return Codistribution(frame, forms)


def _coordinate_form(frame, i):
    coeffs = [ZERO] * len(frame)
    coeffs[i] = ONE
    return OneForm(tuple(frame), tuple(coeffs))


def annihilated_distribution(W: Codistribution, sp: Sampler) -> Distribution:
    """Vector fields annihilated by all forms of the codistribution."""
    frame = W.frame
    if not W.forms:
        return Distribution(frame, [coordinate_field(frame, x) for x in frame])
    rows = [list(w.coefficients) for w in W.forms]
    vecs = nullspace(rows, sp)
    fields = [VectorField(frame, tuple(clear_denominators(vec))) for vec in vecs]
    return Distribution(frame, fields)


def codistribution_rank(W: Codistribution, sp: Sampler) -> int:
    if not W.forms:
        return 0
    _pts, top = _generic_samples(W.matrix_rows(), W.frame, sp)
    return top


def form_in_span(w: OneForm, W: Codistribution, sp: Sampler) -> bool:
    rows = W.matrix_rows()
    aug = rows + [list(w.coefficients)]
    samples, _ = _generic_samples(aug, W.frame, sp)
    base = [numeric_rank(m[: len(rows), :], sp.tol) for _p, m in samples]
    modal = max(base) if base else 0
    for (_p, m), rb in zip(samples, base):
        if rb != modal:
            continue
        if numeric_rank(m, sp.tol) != rb:
            return False
    return True


def cauchy_characteristics(D: Distribution, sp: Sampler) -> Distribution:
    """Fields c in D with [c, D] inside D, solved over the function field."""
    frame = D.frame
    b = basis(D, sp)
    if not b:
        return Distribution(frame, [])
    ann = annihilator(D, sp)
    if not ann.forms:
        return Distribution(frame, b)
    rows = []
    brackets = [[lie_bracket(vj, vi) for vj in b] for vi in b]
    for i in range(len(b)):
        for w in ann.forms:
            rows.append([simplify(w.pair(br)) for br in brackets[i]])
    lam_vectors = nullspace(rows, sp)
    fields = []
    for lam in lam_vectors:
        lam = clear_denominators(lam)
        comps = []
        for k in range(len(frame)):
            comps.append(
                simplify(add(*(mul(l, v.components[k]) for l, v in zip(lam, b))))
            )
        fields.append(VectorField(frame, tuple(comps)))
    C = pruned(Distribution(frame, fields), sp)
    for c in C.fields:
        if not contains_generic(D, c, sp):
            raise EliminationError("characteristic field escapes the distribution")
        for v in b:
            if not contains_generic(D, lie_bracket(c, v), sp):
                raise EliminationError("characteristic condition fails numerically")
    return C


def mod_reduce(v: VectorField, D: Distribution, sp: Sampler) -> VectorField:
    """Representative of v modulo D supported on complement coordinates."""
    b = basis(D, sp)
    if not b:
        return v.simplified()
    d = len(b)
    frame = v.frame
    pivot_rows = _independent_coordinate_rows(b, sp)
    assert len(pivot_rows) == d
    rows = [[f.components[i] for f in b] for i in pivot_rows]
    rhs = [v.components[i] for i in pivot_rows]
    coeffs = solve_square(rows, rhs, sp)
    comps = []
    for k in range(len(frame)):
        correction = add(*(mul(c, f.components[k]) for c, f in zip(coeffs, b)))
        comps.append(simplify(sub(v.components[k], correction)))
    rep = VectorField(frame, tuple(comps))
    diff = VectorField(frame, tuple(simplify(sub(a, c)) for a, c in zip(v.components, rep.components)))
    if not contains_generic(D, diff, sp):
        raise EliminationError("mod-reduction residual escapes the distribution")
    return rep


def _independent_coordinate_rows(fields, sp: Sampler):
    """d coordinate indices on which the field matrix is generically invertible."""
    rows = [list(f.components) for f in fields]
    samples, top = _generic_samples(rows, fields[0].frame, sp)
    if top != len(fields):
        raise EliminationError("spanning fields are generically dependent")
    n = len(fields[0].frame)
    chosen = []
    for _ in range(len(fields)):
        best = None
        for i in range(n):
            if i in chosen:
                continue
            idx = chosen + [i]
            score = min(
                _smallest_singular(m[:, idx]) for _p, m in samples
            )
            if score > sp.tol and (best is None or score > best[0]):
                best = (score, i)
        if best is None:
            raise EliminationError("no invertible coordinate block found")
        chosen.append(best[1])
    return sorted(chosen)


def _smallest_singular(m):
    sv = np.linalg.svd(m, compute_uv=False)
    return float(sv[-1]) if sv.size else 0.0


def complement_coordinates(D: Distribution, sp: Sampler):
    """Coordinate indices completing D to the full space, by numeric pivots."""
    frame = D.frame
    n = len(frame)
    b = basis(D, sp)
    rows = [list(f.components) for f in b] if b else []
    if rows:
        samples, top = _generic_samples(rows, frame, sp)
    else:
        samples, top = [({}, np.zeros((0, n)))], 0
    chosen = []
    for _ in range(n - top):
        best = None
        for i in range(n):
            if i in chosen:
                continue
            score = None
            ok = True
            for _p, m in samples:
                unit_rows = np.zeros((len(chosen) + 1, n))
                for r, c in enumerate(chosen + [i]):
                    unit_rows[r, c] = 1.0
                full = np.vstack([m, unit_rows])
                s = _smallest_singular(full)
                if numeric_rank(full, sp.tol) != top + len(chosen) + 1:
                    ok = False
                    break
                score = s if score is None else min(score, s)
            if ok and score is not None and (best is None or score > best[0]):
                best = (score, i)
        if best is None:
            raise EliminationError("no coordinate complement found")
        chosen.append(best[1])
    return sorted(chosen)
