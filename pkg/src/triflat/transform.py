"""Constructive transformation into the triangular normal form.

The pipeline straightens the nested involutive distribution ladder (with the
terminal chains introduced directly through drift derivatives of the flat
output), normalizes the first core equation, introduces the core coupling
functions as states from top to bottom, splits the last core equation, and
finally brings the rear chains into integrator form with a closing static
feedback.  Every step is verified numerically against the original dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diffgeo import annihilator, differential, lie_derivative
from .errors import EvalError, IntegrationError, PipelineError
from .expr import (
    Add,
    Call,
    Expr,
    Mul,
    ONE,
    Pow,
    Rat,
    Sym,
    ZERO,
    add,
    call,
    div,
    evaluate,
    free_symbols,
    mul,
    neg,
    pow_,
    sub,
    substitute,
)
from .fields import VectorField
from .flatout import FlatOutput
from .integrate import integrate_codistribution
from .sampling import MatrixSampler, Sampler, is_zero_generic, numeric_rank
from .simplify import differentiate, simplify
from .systems import AffineSystem
from .triform import TriangularReport


@dataclass
class CoordinateChange:
    """Composite state/input transformation from the original system."""

    state_map: Dict[str, Expr]  # result state symbol -> expr(original states)
    input_map: Dict[str, Expr]  # result input symbol -> expr(original states+inputs)
    inverse_state_map: Optional[Dict[str, Expr]]  # original -> expr(result states)


@dataclass
class Stage:
    sys: AffineSystem
    forward: Dict[str, Expr]
    input_map: Dict[str, Expr]
    inverse: Optional[Dict[str, Expr]]
    blocks: dict
    log: List[str] = dfield(default_factory=list)

    def change(self) -> CoordinateChange:
        return CoordinateChange(dict(self.forward), dict(self.input_map), self.inverse)


@dataclass
class TriangularDecomposition:
    system: AffineSystem
    chains: Tuple[List[str], List[str]]  # terminal chains (may be empty)
    core: List[str]
    rear_long: List[str]
    rear_short: List[str]
    w_symbol: str  # short-chain top state, or the second input
    couplings: dict  # 'a_i' drift terms and 'g' of the last core equation
    structure_ok: bool
    structure_failures: List[str]


@dataclass
class TransformResult:
    stages: List[Tuple[str, Stage]]
    final: TriangularDecomposition
    change: CoordinateChange
    verified: bool


# --- pattern inversion --------------------------------------------------------


def _isolate(f: Expr, x: str, v: Expr) -> Optional[Expr]:
    """Solve f(..., x, ...) = v for x by unwrapping elementary operations."""
    out = _isolate_structural(f, x, v)
    if out is not None:
        return out
    return _isolate_through_kernel(f, x, v)


def _isolate_structural(f: Expr, x: str, v: Expr) -> Optional[Expr]:
    if isinstance(f, Sym):
        return v if f.name == x else None
    d = differentiate(f, x)
    if d != ZERO and x not in free_symbols(d):
        offset = simplify(sub(f, mul(d, Sym(x))))
        if x not in free_symbols(offset):
            return div(sub(v, offset), d)
    if isinstance(f, Add):
        dep = [t for t in f.terms if x in free_symbols(t)]
        if len(dep) != 1:
            return None
        rest = [t for t in f.terms if x not in free_symbols(t)]
        return _isolate(dep[0], x, sub(v, add(*rest) if rest else ZERO))
    if isinstance(f, Mul):
        dep = [g for g in f.factors if x in free_symbols(g)]
        rest = [g for g in f.factors if x not in free_symbols(g)]
        if len(dep) == 1:
            return _isolate(dep[0], x, div(v, mul(*rest) if rest else ONE))
        ratio = _trig_ratio(dep, x)
        if ratio is not None:
            kind, u = ratio
            target = div(v, mul(*rest) if rest else ONE)
            if kind == "cot":
                target = pow_(target, -1)
            return _isolate(u, x, call("arctan", target))
        return None
    if isinstance(f, Pow):
        if x not in free_symbols(f.base):
            return None
        return _isolate(f.base, x, pow_(v, Fraction(1) / f.exponent))
    if isinstance(f, Call):
        inverse_fn = {
            "sin": "arcsin",
            "tan": "arctan",
            "exp": "log",
            "arcsin": "sin",
            "arctan": "tan",
            "log": "exp",
        }.get(f.fn)
        if inverse_fn is None:
            return None
        return _isolate(f.arg, x, call(inverse_fn, v))
    return None


def _replace_subtree(e: Expr, target: Expr, repl: Expr) -> Expr:
    if e == target:
        return repl
    if isinstance(e, Add):
        return add(*(_replace_subtree(t, target, repl) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(_replace_subtree(g, target, repl) for g in e.factors))
    if isinstance(e, Pow):
        return pow_(_replace_subtree(e.base, target, repl), e.exponent)
    if isinstance(e, Call):
        return call(e.fn, _replace_subtree(e.arg, target, repl))
    return e


def _isolate_through_kernel(f: Expr, x: str, v: Expr) -> Optional[Expr]:
    """When every occurrence of x sits inside one repeated kernel, solve the
    rational outer problem first and then invert the kernel."""
    kernels = []

    def collect(e):
        if (isinstance(e, Call) or (isinstance(e, Pow) and e.exponent.denominator > 1)) \
                and x in free_symbols(e) and e not in kernels:
            kernels.append(e)
        if isinstance(e, Add):
            for t in e.terms:
                collect(t)
        elif isinstance(e, Mul):
            for g in e.factors:
                collect(g)
        elif isinstance(e, Pow):
            collect(e.base)
        elif isinstance(e, Call):
            collect(e.arg)

    collect(f)
    placeholder = Sym("_ker")
    for K in kernels:
        outer = simplify(_replace_subtree(f, K, placeholder))
        if x in free_symbols(outer) or "_ker" not in free_symbols(outer):
            continue
        k_value = _isolate_structural(outer, "_ker", v)
        if k_value is None:
            continue
        return _isolate_structural(K, x, k_value)
    return None


def _trig_ratio(dep_factors, x):
    """Recognize {sin(u)^±1, cos(u)^∓1} pairs: tan or cot of a common u."""
    if len(dep_factors) != 2:
        return None

    def classify(g):
        if isinstance(g, Call) and g.fn in ("sin", "cos"):
            return g.fn, g.arg, 1
        if (
            isinstance(g, Pow)
            and g.exponent == -1
            and isinstance(g.base, Call)
            and g.base.fn in ("sin", "cos")
        ):
            return g.base.fn, g.base.arg, -1
        return None

    c1 = classify(dep_factors[0])
    c2 = classify(dep_factors[1])
    if c1 is None or c2 is None:
        return None
    (f1, u1, e1), (f2, u2, e2) = c1, c2
    if u1 != u2 or {f1, f2} != {"sin", "cos"} or e1 * e2 != -1:
        return None
    sin_exp = e1 if f1 == "sin" else e2
    return ("tan" if sin_exp == 1 else "cot"), u1


def solve_map(old_syms: Sequence[str], defs: Sequence[Tuple[str, Expr]], sp: Sampler):
    """Invert new = F(old) by successive single-unknown isolation.

    Returns old symbol -> expr(new symbols), or None when some equation is
    only implicitly invertible over the pattern set.
    """
    unsolved = set(old_syms)
    solved: Dict[str, Expr] = {}
    pending = [(new, f) for new, f in defs]
    progress = True
    while unsolved and progress:
        progress = False
        for new, f in pending:
            f_sub = simplify(substitute(f, solved)) if solved else f
            deps = free_symbols(f_sub) & unsolved
            if len(deps) != 1:
                continue
            x = next(iter(deps))
            sol = _isolate(f_sub, x, Sym(new))
            if sol is None:
                continue
            solved[x] = simplify(sol)
            unsolved.discard(x)
            progress = True
    if unsolved:
        return None
    return solved


# --- stage machinery ------------------------------------------------------------


def initial_stage(sys: AffineSystem, blocks=None) -> Stage:
    return Stage(
        sys=sys,
        forward={x: Sym(x) for x in sys.frame},
        input_map={u: Sym(u) for u in sys.input_syms},
        inverse={x: Sym(x) for x in sys.frame},
        blocks=blocks or {},
        log=[],
    )


def apply_state_change(stage: Stage, defs: Sequence[Tuple[str, Expr]], sp: Sampler,
                       blocks=None, note="") -> Stage:
    """Apply a full coordinate change given as new symbol -> expr(current)."""
    sysm = stage.sys
    old_frame = sysm.frame
    new_frame = tuple(new for new, _f in defs)
    inverse = solve_map(old_frame, defs, sp)
    if inverse is None:
        raise PipelineError(
            f"coordinate change is not invertible over the pattern set ({note})"
        )
    jac = [
        [differentiate(f, x) for x in old_frame]
        for _new, f in defs
    ]

    def push(fieldv: VectorField) -> VectorField:
        comps = []
        for i in range(len(new_frame)):
            term = add(
                *(mul(jac[i][j], fieldv.components[j]) for j in range(len(old_frame)))
            )
            comps.append(simplify(substitute(simplify(term), inverse)))
        return VectorField(new_frame, tuple(comps))

    new_sys = AffineSystem(
        frame=new_frame,
        drift=push(sysm.drift),
        b1=push(sysm.b1),
        b2=push(sysm.b2),
        input_syms=sysm.input_syms,
        params=sysm.params,
        name=sysm.name,
    )
    forward = {
        new: simplify(substitute(f, stage.forward)) for new, f in defs
    }
    composed_inverse = None
    if stage.inverse is not None:
        composed_inverse = {
            orig: simplify(substitute(expr, inverse))
            for orig, expr in stage.inverse.items()
        }
    out = Stage(
        sys=new_sys,
        forward=forward,
        input_map=dict(stage.input_map),
        inverse=composed_inverse,
        blocks=blocks if blocks is not None else dict(stage.blocks),
        log=stage.log + [note] if note else list(stage.log),
    )
    _check_invertible(out, sp, note)
    return out


def replace_state(stage: Stage, old_sym: str, new_sym: str, func: Expr, sp: Sampler,
                  blocks=None, note="") -> Stage:
    defs = []
    for x in stage.sys.frame:
        if x == old_sym:
            defs.append((new_sym, simplify(func)))
        else:
            defs.append((x, Sym(x)))
    return apply_state_change(stage, defs, sp, blocks=blocks, note=note)


def apply_input_change(stage: Stage, g, M, new_names, sp: Sampler, note="") -> Stage:
    """New inputs v = g(x) + M(x) u; fields and drift follow u = M^-1 (v - g)."""
    sysm = stage.sys
    det = simplify(sub(mul(M[0][0], M[1][1]), mul(M[0][1], M[1][0])))
    if is_zero_generic(det, sp, extra_syms=sysm.frame):
        raise PipelineError(f"input transformation is generically singular ({note})")
    minv = [
        [simplify(div(M[1][1], det)), simplify(neg(div(M[0][1], det)))],
        [simplify(neg(div(M[1][0], det))), simplify(div(M[0][0], det))],
    ]
    b = (sysm.b1, sysm.b2)

    def combo(c1, c2):
        return VectorField(
            sysm.frame,
            tuple(
                simplify(add(mul(c1, p), mul(c2, q)))
                for p, q in zip(b[0].components, b[1].components)
            ),
        )

    new_b = [combo(minv[0][j], minv[1][j]) for j in (0, 1)]
    mg = [
        simplify(add(mul(minv[k][0], g[0]), mul(minv[k][1], g[1]))) for k in (0, 1)
    ]
    drift = VectorField(
        sysm.frame,
        tuple(
            simplify(sub(a, add(mul(p, mg[0]), mul(q, mg[1]))))
            for a, p, q in zip(
                sysm.drift.components, b[0].components, b[1].components
            )
        ),
    )
    subs_map = dict(stage.forward)
    subs_map.update(stage.input_map)
    new_input_map = {}
    for name, gi, row in zip(new_names, g, M):
        expr = add(
            gi,
            mul(row[0], Sym(sysm.input_syms[0])),
            mul(row[1], Sym(sysm.input_syms[1])),
        )
        new_input_map[name] = simplify(substitute(expr, subs_map))
    new_sys = AffineSystem(
        frame=sysm.frame,
        drift=drift,
        b1=new_b[0],
        b2=new_b[1],
        input_syms=tuple(new_names),
        params=sysm.params,
        name=sysm.name,
    )
    return Stage(
        sys=new_sys,
        forward=dict(stage.forward),
        input_map=new_input_map,
        inverse=stage.inverse,
        blocks=dict(stage.blocks),
        log=stage.log + [note] if note else list(stage.log),
    )


def _check_invertible(stage: Stage, sp: Sampler, note=""):
    """forward followed by inverse reproduces the point, at 20 samples."""
    if stage.inverse is None:
        return
    orig = _original_of(stage)
    syms = set(orig.frame) | set(orig.params)
    count = 0
    budget = sp.max_resamples + 20
    for point in sp.point_stream(syms):
        if budget <= 0:
            raise PipelineError(f"cannot sample the coordinate change ({note})")
        budget -= 1
        try:
            newvals = {k: evaluate(f, point) for k, f in stage.forward.items()}
            newvals.update({p: point[p] for p in orig.params})
            back = {x: evaluate(e, newvals) for x, e in stage.inverse.items()}
        except EvalError:
            continue
        for x in orig.frame:
            if abs(back[x] - point[x]) > 1e-8 * (1 + abs(point[x])):
                raise PipelineError(
                    f"inverse map fails to reproduce {x} at a sample point ({note})"
                )
        count += 1
        if count == 20:
            return
    raise PipelineError(f"cannot sample the coordinate change ({note})")


def _original_of(stage: Stage) -> AffineSystem:
    return stage.blocks["original"]


# --- numeric verification -------------------------------------------------------


def verify_transformation(
    original: AffineSystem,
    change: CoordinateChange,
    result: AffineSystem,
    sp: Sampler,
    tol: float = 1e-7,
) -> bool:
    """Pushforward consistency at sampled states and inputs.

    The time derivative of the forward map along the original dynamics must
    match the transformed dynamics at the mapped point.
    """
    new_frame = result.frame
    jac = {
        new: {x: differentiate(f, x) for x in original.frame}
        for new, f in change.state_map.items()
    }
    syms = set(original.frame) | set(original.input_syms) | set(original.params)
    checked = 0
    budget = sp.max_resamples + 20
    for point in sp.point_stream(syms):
        if budget <= 0:
            raise PipelineError("verification could not sample admissible points")
        budget -= 1
        try:
            xdot = [
                evaluate(c, point)
                + evaluate(p, point) * point[original.input_syms[0]]
                + evaluate(q, point) * point[original.input_syms[1]]
                for c, p, q in zip(
                    original.drift.components,
                    original.b1.components,
                    original.b2.components,
                )
            ]
            lhs = {}
            for new in new_frame:
                lhs[new] = sum(
                    evaluate(jac[new][x], point) * xdot[j]
                    for j, x in enumerate(original.frame)
                )
            newpoint = {new: evaluate(f, point) for new, f in change.state_map.items()}
            for p in original.params:
                newpoint[p] = point[p]
            uvals = [
                evaluate(change.input_map[u], point) for u in result.input_syms
            ]
            for i, new in enumerate(new_frame):
                rhs = (
                    evaluate(result.drift.components[i], newpoint)
                    + evaluate(result.b1.components[i], newpoint) * uvals[0]
                    + evaluate(result.b2.components[i], newpoint) * uvals[1]
                )
                if abs(lhs[new] - rhs) > tol * (1.0 + abs(lhs[new]) + abs(rhs)):
                    return False
        except EvalError:
            continue
        checked += 1
        if checked == 20:
            return True
    raise PipelineError("verification could not sample admissible points")


def _stage_verified(stage: Stage, sp: Sampler, tol=1e-7) -> bool:
    return verify_transformation(
        _original_of(stage), stage.change(), stage.sys, sp, tol
    )


def _image_points(stage: Stage, sp: Sampler, count: int = None):
    """Sample points of the current frame lying on the image of the original
    sampling box; structural identities are only claimed there."""
    orig = _original_of(stage)
    syms = set(orig.frame) | set(orig.input_syms) | set(orig.params)
    want = sp.samples if count is None else count
    out = []
    budget = sp.max_resamples + want
    for point in sp.point_stream(syms):
        if budget <= 0:
            raise PipelineError("cannot sample the image of the original domain")
        budget -= 1
        try:
            newpt = {k: evaluate(f, point) for k, f in stage.forward.items()}
            for u, f in stage.input_map.items():
                newpt[u] = evaluate(f, point)
            for par in orig.params:
                newpt[par] = point[par]
        except EvalError:
            continue
        out.append(newpt)
        if len(out) == want:
            return out
    raise PipelineError("cannot sample the image of the original domain")


def _zero_at(e: Expr, points, tol) -> bool:
    from .sampling import magnitude

    seen = 0
    for pt in points:
        try:
            v = evaluate(e, pt)
            scale = 1.0 + magnitude(e, pt)
        except EvalError:
            continue
        if abs(v) > tol * scale:
            return False
        seen += 1
    if seen == 0:
        raise PipelineError("expression cannot be evaluated on the image points")
    return True


def _depends_at(e: Expr, x: str, points, tol) -> bool:
    return not _zero_at(differentiate(e, x), points, tol)


def _rank_at(rows, points, tol) -> int:
    best = 0
    for pt in points:
        try:
            m = np.array(
                [[evaluate(e, pt) for e in r] for r in rows], dtype=float
            )
        except EvalError:
            continue
        best = max(best, numeric_rank(m, tol))
    return best


# --- step 1-3: ladder coordinates ------------------------------------------------


def _ladder_levels(report: TriangularReport):
    """Nested involutive distributions, outermost (largest) first, below the
    drift-extension members; terminal-chain levels are covered by the drift
    derivatives of the flat output and are not integrated."""
    levels = [("closure", report.closure)]
    for i in range(len(report.cauchy_flags) - 1, -1, -1):
        levels.append((f"cauchy{i + 1}", report.cauchy_flags[i]))
    levels.append(("delta0", report.delta0))
    for k in range(report.chain.depth - 1, 0, -1):
        levels.append((f"d{k}", report.chain.d(k)))
    return levels


def _completion_coordinates(found_funcs, frame, sp, count):
    """Original coordinates completing the map, by maximal numeric pivots."""
    rows = [list(differential(f, frame).coefficients) for f in found_funcs]
    ms = MatrixSampler(rows, frame, sp) if rows else None
    samples = ms.samples() if rows else [({}, np.zeros((0, len(frame))))]
    chosen = []
    for _ in range(count):
        best = None
        for i, x in enumerate(frame):
            if x in chosen:
                continue
            score = None
            ok = True
            for _p, m in samples:
                unit = np.zeros((len(chosen) + 1, len(frame)))
                for r, name in enumerate(chosen + [x]):
                    unit[r, frame.index(name)] = 1.0
                full = np.vstack([m, unit])
                if numeric_rank(full, sp.tol) != full.shape[0]:
                    ok = False
                    break
                sv = np.linalg.svd(full, compute_uv=False)
                s = float(sv[-1])
                score = s if score is None else min(score, s)
            if ok and score is not None and (best is None or score > best[0]):
                best = (score, x)
        if best is None:
            raise PipelineError("no coordinate completion found")
        chosen.append(best[1])
    return chosen


def build_ladder_change(
    report: TriangularReport, flat: FlatOutput, sp: Sampler, hints=()
) -> List[Tuple[str, Expr]]:
    """Coordinate functions straightening the whole ladder at once.

    Terminal chains come from drift derivatives of the flat output, the core
    tops are the chain feeds, and the interior coordinates are integrals of
    the successive level annihilators.
    """
    sysm = report.system
    a = sysm.drift
    frame = sysm.frame
    l1, l2 = report.chain_lengths
    defs: List[Tuple[str, Expr]] = []
    knowns: List[Expr] = []

    for j, (phi, length) in enumerate(((flat.phi1, l1), (flat.phi2, l2)), start=1):
        cur = phi
        for k in range(1, length + 1):
            defs.append((f"p{j}_{k}", simplify(cur)))
            knowns.append(simplify(cur))
            cur = lie_derivative(a, cur)
    q_names = [f"q{i}" for i in range(1, report.n2 + 1)]
    feeds = [simplify(f) for f in flat.feeds]
    defs.append((q_names[0], feeds[0]))
    defs.append((q_names[1], feeds[1]))
    knowns += feeds
    next_q = 2  # index into q_names
    rear_names = [f"r{i}" for i in range(1, 2 * report.chain.depth)]
    next_r = 0

    preferred = _call_argument_coordinates(sysm)
    for label, dist in _ladder_levels(report):
        ann = annihilator(dist, sp)
        try:
            integrals = integrate_codistribution(
                ann, sp, hints=hints, knowns=knowns,
                extra_candidates=_system_pool(sysm),
                preferred_coordinates=preferred,
            )
        except IntegrationError as err:
            raise PipelineError(
                f"straightening stalled at level {label}: {err}; supply a hint "
                f"function whose differential lies in {ann}"
            ) from err
        for fi in integrals:
            if fi.expr in knowns:
                continue
            knowns.append(fi.expr)
            if next_q < report.n2:
                defs.append((q_names[next_q], fi.expr))
                next_q += 1
            elif next_r < len(rear_names):
                defs.append((rear_names[next_r], fi.expr))
                next_r += 1
            else:
                raise PipelineError(f"too many integrals at level {label}")
    if next_q != report.n2:
        raise PipelineError("core block coordinates incomplete after straightening")
    remaining = 2 * report.chain.depth - 1 - next_r
    for x in _completion_coordinates(knowns, frame, sp, remaining):
        defs.append((rear_names[next_r], Sym(x)))
        knowns.append(Sym(x))
        next_r += 1
    return defs


def _system_pool(sysm: AffineSystem):
    pool = []
    for f in (sysm.drift, sysm.b1, sysm.b2):
        for c in f.components:
            if isinstance(c, Call):
                pool.append(c.arg)
    return pool


def _call_argument_coordinates(sysm: AffineSystem):
    """State symbols appearing inside elementary functions of the dynamics.

    Keeping these as coordinates makes the introduced states compositions of
    invertible elementary patterns instead of algebraic root expressions.
    """
    out = []

    def walk(e):
        if isinstance(e, Call):
            arg_syms = free_symbols(e.arg) & set(sysm.frame)
            for x in sysm.frame:
                if x in arg_syms and x not in out:
                    out.append(x)
            walk(e.arg)
        elif isinstance(e, Add):
            for t in e.terms:
                walk(t)
        elif isinstance(e, Mul):
            for f in e.factors:
                walk(f)
        elif isinstance(e, Pow):
            walk(e.base)

    for f in (sysm.drift, sysm.b1, sysm.b2):
        for c in f.components:
            walk(c)
    return out


def decompose(sys_original: AffineSystem, report: TriangularReport,
              flat: FlatOutput, sp: Sampler, hints=()) -> Stage:
    """Steps 1-3: straighten the ladder and verify the block structure."""
    defs = build_ladder_change(report, flat, sp, hints)
    n3 = report.chain.depth
    blocks = {
        "original": sys_original,
        "p1": [n for n, _ in defs if n.startswith("p1_")],
        "p2": [n for n, _ in defs if n.startswith("p2_")],
        "q": [n for n, _ in defs if n.startswith("q")],
        "rear": [n for n, _ in defs if n.startswith("r")],
    }
    stage0 = initial_stage(sys_original, blocks)
    stage = apply_state_change(stage0, defs, sp, blocks=blocks, note="straighten ladder")
    _verify_block_structure(stage, report, sp)
    if not _stage_verified(stage, sp):
        raise PipelineError("straightening stage fails numeric verification")
    return stage


def _verify_block_structure(stage: Stage, report, sp: Sampler):
    """Prop-style block checks: dependencies and input-block ranks.

    All identities are tested on image points of the original domain."""
    sysm = stage.sys
    blocks = stage.blocks
    n3 = report.chain.depth
    p_syms = blocks["p1"] + blocks["p2"]
    q_syms = blocks["q"]
    r_syms = blocks["rear"]
    frame = sysm.frame
    points = _image_points(stage, sp)

    def row(sym):
        i = frame.index(sym)
        return (
            sysm.drift.components[i],
            sysm.b1.components[i],
            sysm.b2.components[i],
        )

    failures = []
    for s in p_syms:
        dr, b1c, b2c = row(s)
        if not (_zero_at(b1c, points, sp.tol) and _zero_at(b2c, points, sp.tol)):
            failures.append(f"terminal row {s} touches the inputs")
        for x in q_syms[3:] + r_syms:
            if not _zero_at(differentiate(dr, x), points, sp.tol):
                failures.append(f"terminal row {s} depends on {x}")
    deep = r_syms[3:] if n3 >= 2 else []
    for s in q_syms:
        dr, b1c, b2c = row(s)
        if n3 >= 2 and not (
            _zero_at(b1c, points, sp.tol) and _zero_at(b2c, points, sp.tol)
        ):
            failures.append(f"core row {s} touches the inputs")
        for x in deep:
            if not _zero_at(differentiate(dr, x), points, sp.tol):
                failures.append(f"core row {s} depends on deep rear state {x}")
    if failures:
        raise PipelineError("block structure violated: " + "; ".join(failures))

    p_rhs = [row(s)[0] for s in p_syms]
    if p_syms:
        rows = [[differentiate(e, x) for x in q_syms[:3]] for e in p_rhs]
        if _rank_at(rows, points, sp.tol) > 2:
            raise PipelineError("terminal block has more than two effective inputs")
    q_rhs_full = [
        add(row(s)[0], mul(row(s)[1], Sym(sysm.input_syms[0])),
            mul(row(s)[2], Sym(sysm.input_syms[1])))
        for s in q_syms
    ]
    if n3 >= 2:
        wrt_all = r_syms[:3]
        wrt_pair = r_syms[1:3]
    else:
        wrt_all = r_syms[:1] + list(sysm.input_syms)
        wrt_pair = list(sysm.input_syms)
    rows_all = [[differentiate(e, x) for x in wrt_all] for e in q_rhs_full]
    rows_pair = [[differentiate(e, x) for x in wrt_pair] for e in q_rhs_full]
    if _rank_at(rows_all, points, sp.tol) != 2:
        raise PipelineError("core block does not have exactly two effective inputs")
    if _rank_at(rows_pair, points, sp.tol) != 1:
        raise PipelineError("core block short-direction rank is not one")


# --- steps 4-6 -------------------------------------------------------------------


def _rhs_of(stage: Stage, sym: str):
    sysm = stage.sys
    i = sysm.frame.index(sym)
    return (
        sysm.drift.components[i],
        sysm.b1.components[i],
        sysm.b2.components[i],
    )


def normalize_first_core_equation(stage: Stage, report, sp: Sampler) -> Stage:
    """Step 4: make the first core equation read q1' = w."""
    sysm = stage.sys
    blocks = stage.blocks
    n3 = report.chain.depth
    q1 = blocks["q"][0]
    dr, b1c, b2c = _rhs_of(stage, q1)
    points = _image_points(stage, sp)
    if n3 >= 2:
        r_syms = blocks["rear"]
        f = dr
        if not (_zero_at(b1c, points, sp.tol) and _zero_at(b2c, points, sp.tol)):
            raise PipelineError("first core equation touches the inputs directly")
        candidates = [x for x in r_syms[1:3] if _depends_at(f, x, points, sp.tol)]
        if not candidates:
            raise PipelineError(
                "first core equation does not depend on the rear pair; upstream "
                "checks must be inconsistent"
            )
        target = candidates[0]
        blocks = dict(blocks)
        blocks["w"] = "z2_1"
        blocks["rear"] = [x for x in r_syms if x != target]
        stage = replace_state(
            stage, target, "z2_1", f, sp, blocks=blocks, note="normalize first core equation"
        )
        return stage
    # n3 == 1: input transformation instead of a state change
    u1, u2 = sysm.input_syms
    c1 = b1c
    c2 = b2c
    if not _zero_at(c2, points, sp.tol):
        m = [[ONE, ZERO], [c1, c2]]
    elif not _zero_at(c1, points, sp.tol):
        m = [[ZERO, ONE], [c1, c2]]
    else:
        raise PipelineError(
            "first core equation does not depend on the inputs; upstream checks "
            "must be inconsistent"
        )
    g = (ZERO, dr)
    stage = apply_input_change(
        stage, g, m, ("v1", "v2"), sp, note="normalize first core equation (input)"
    )
    blocks = dict(stage.blocks)
    blocks["w"] = "v2"
    stage.blocks = blocks
    return stage


def _w_value(stage: Stage):
    w = stage.blocks["w"]
    if w in stage.sys.frame:
        return Sym(w), "state"
    return Sym(w), "input"


def introduce_core_couplings(stage: Stage, report, sp: Sampler) -> Stage:
    """Step 5: bring the core block into chained shape, then split the last
    equation and introduce the long-chain top."""
    n2 = report.n2
    w_sym, w_kind = _w_value(stage)
    for i in range(2, n2):
        points = _image_points(stage, sp)
        q_syms = stage.blocks["q"]
        qi = q_syms[i - 1]
        dr, b1c, b2c = _rhs_of(stage, qi)
        if w_kind == "state":
            coeff = simplify(differentiate(dr, stage.blocks["w"]))
            if not _zero_at(differentiate(coeff, stage.blocks["w"]), points, sp.tol):
                raise PipelineError(f"core equation {qi} is not affine in the chain input")
        else:
            coeff = b2c if stage.blocks["w"] == stage.sys.input_syms[1] else b1c
        target = q_syms[i]
        if simplify(sub(coeff, Sym(target))) == ZERO:
            continue  # already in chained shape at this level
        if not _depends_at(coeff, target, points, sp.tol):
            raise PipelineError(
                f"coupling coefficient of {qi} does not depend on {target}; "
                "upstream checks must be inconsistent"
            )
        new_name = f"{target}n"
        blocks = dict(stage.blocks)
        blocks["q"] = [new_name if s == target else s for s in q_syms]
        stage = replace_state(
            stage, target, new_name, coeff, sp, blocks=blocks,
            note=f"introduce coupling state level {i}",
        )
        w_sym, w_kind = _w_value(stage)
    # split the last core equation
    points = _image_points(stage, sp)
    q_syms = stage.blocks["q"]
    qn = q_syms[-1]
    dr, b1c, b2c = _rhs_of(stage, qn)
    if w_kind == "state":
        g2 = simplify(differentiate(dr, stage.blocks["w"]))
        if not (_zero_at(b1c, points, sp.tol) and _zero_at(b2c, points, sp.tol)):
            raise PipelineError("last core equation touches the inputs directly")
        if not _zero_at(differentiate(g2, stage.blocks["w"]), points, sp.tol):
            raise PipelineError("last core equation is not affine in the chain input")
        g1 = simplify(sub(dr, mul(g2, w_sym)))
    else:
        which = 1 if stage.blocks["w"] == stage.sys.input_syms[1] else 0
        g2 = (b1c, b2c)[which]
        other = (b1c, b2c)[1 - which]
        if not _zero_at(other, points, sp.tol):
            raise PipelineError("last core equation depends on the long-chain input")
        g1 = dr
    rear = stage.blocks["rear"]
    if not rear:
        raise PipelineError("no rear coordinate available for the long-chain top")
    r1 = rear[0]
    if not _depends_at(g1, r1, points, sp.tol):
        raise PipelineError(
            "state part of the last core equation does not depend on the rear "
            "top; upstream checks must be inconsistent"
        )
    if _depends_at(g2, r1, points, sp.tol):
        raise PipelineError("coupling factor of the last core equation reaches the rear top")
    if simplify(sub(g1, Sym(r1))) == ZERO:
        blocks = dict(stage.blocks)
        blocks["z1"] = [r1]
        blocks["rear"] = rear[1:]
        stage.blocks = blocks
        return stage
    blocks = dict(stage.blocks)
    blocks["z1"] = ["z1_1"]
    blocks["rear"] = rear[1:]
    stage = replace_state(
        stage, r1, "z1_1", g1, sp, blocks=blocks, note="introduce long-chain top"
    )
    return stage


def rear_chains_to_integrators(stage: Stage, report, sp: Sampler) -> Stage:
    """Step 6: integrator form for both rear chains plus the final feedback."""
    n3 = report.chain.depth

    def grow_chain(stage, chain_key, length):
        chain = stage.blocks[chain_key]
        while len(chain) < length:
            points = _image_points(stage, sp)
            top = chain[-1]
            dr, b1c, b2c = _rhs_of(stage, top)
            if not (_zero_at(b1c, points, sp.tol) and _zero_at(b2c, points, sp.tol)):
                raise PipelineError(
                    f"rear chain state {top} reaches the inputs too early; the "
                    "input span is no longer straightened"
                )
            new_name = f"{chain_key}_{len(chain) + 1}"
            rear = stage.blocks["rear"]
            candidates = [x for x in rear if _depends_at(dr, x, points, sp.tol)]
            if not candidates:
                raise PipelineError(
                    f"derivative of {top} does not reach a free rear coordinate"
                )
            target = _best_dependence(dr, candidates, points)
            blocks = dict(stage.blocks)
            blocks[chain_key] = chain + [new_name]
            blocks["rear"] = [x for x in rear if x != target]
            stage = replace_state(
                stage, target, new_name, dr, sp, blocks=blocks,
                note=f"rear chain state {new_name}",
            )
            chain = stage.blocks[chain_key]
        return stage

    if "z1" not in stage.blocks:
        raise PipelineError("long-chain top missing; run the previous step first")
    if n3 >= 2:
        blocks = dict(stage.blocks)
        blocks.setdefault("z2", [stage.blocks["w"]])
        stage.blocks = blocks
        stage = grow_chain(stage, "z1", n3)
        stage = grow_chain(stage, "z2", n3 - 1)
    else:
        blocks = dict(stage.blocks)
        blocks["z2"] = []
        stage.blocks = blocks
    if stage.blocks["rear"]:
        raise PipelineError("rear coordinates left over after chain construction")

    # closing static feedback
    sysm = stage.sys
    long_bottom = stage.blocks["z1"][-1]
    dr1, b11, b12 = _rhs_of(stage, long_bottom)
    if n3 >= 2:
        short_bottom = stage.blocks["z2"][-1]
        dr2, b21, b22 = _rhs_of(stage, short_bottom)
        g = (dr1, dr2)
        M = [[b11, b12], [b21, b22]]
        names = ("v1f", "v2f")
    else:
        u1, u2 = sysm.input_syms
        g = (dr1, ZERO)
        M = [[b11, b12], [ZERO, ONE]]
        names = ("v1f", u2 + "f")
    was_input_w = stage.blocks.get("w") == sysm.input_syms[1]
    stage = apply_input_change(stage, g, M, names, sp, note="closing feedback")
    if was_input_w:
        blocks = dict(stage.blocks)
        blocks["w"] = names[1]
        stage.blocks = blocks
    return stage


def _best_dependence(expr, candidates, points):
    best = None
    for x in candidates:
        d = differentiate(expr, x)
        score = None
        for pt in points:
            try:
                v = abs(evaluate(d, pt))
            except EvalError:
                continue
            score = v if score is None else min(score, v)
        if score is not None and (best is None or score > best[0]):
            best = (score, x)
    if best is None:
        raise PipelineError("no usable rear coordinate dependence")
    return best[1]


# --- final assembly ---------------------------------------------------------------


def transform_to_triangular(
    sys: AffineSystem,
    report: TriangularReport,
    flat: FlatOutput,
    sp: Sampler,
    hints=(),
) -> TransformResult:
    """Run the whole pipeline and verify every step against the original."""
    stages: List[Tuple[str, Stage]] = []
    stage = decompose(sys, report, flat, sp, hints)
    stages.append(("straighten", stage))
    stage = normalize_first_core_equation(stage, report, sp)
    stages.append(("normalize-first", stage))
    stage = introduce_core_couplings(stage, report, sp)
    stages.append(("core-couplings", stage))
    stage = rear_chains_to_integrators(stage, report, sp)
    stages.append(("rear-chains", stage))
    verified = True
    for name, st in stages:
        if not _stage_verified(st, sp):
            raise PipelineError(f"stage {name} fails numeric verification")
    final = _assemble_decomposition(stage, report, sp)
    return TransformResult(stages, final, stage.change(), verified)


def _assemble_decomposition(stage: Stage, report, sp: Sampler) -> TriangularDecomposition:
    sysm = stage.sys
    blocks = stage.blocks
    n3 = report.chain.depth
    w = blocks.get("w", sysm.input_syms[1])
    q_syms = blocks["q"]
    failures = []
    couplings = {}
    points = _image_points(stage, sp, count=20)
    w_expr = Sym(w)

    def expect_zero(e, label):
        if not _zero_at(simplify(e), points, sp.tol):
            failures.append(label)

    for chain_key in ("p1", "p2"):
        chain = blocks.get(chain_key, [])
        feeds = chain[1:] + [q_syms[0] if chain_key == "p1" else q_syms[1]]
        for s, nxt in zip(chain, feeds):
            dr, b1c, b2c = _rhs_of(stage, s)
            expect_zero(sub(dr, Sym(nxt)), f"terminal chain row {s}")
            expect_zero(b1c, f"terminal chain row {s} input 1")
            expect_zero(b2c, f"terminal chain row {s} input 2")
    dr, b1c, b2c = _rhs_of(stage, q_syms[0])
    rhs_full = add(dr, mul(b1c, Sym(sysm.input_syms[0])), mul(b2c, Sym(sysm.input_syms[1])))
    expect_zero(sub(rhs_full, w_expr), "first core equation")
    for i in range(2, report.n2):
        qi = q_syms[i - 1]
        dr, b1c, b2c = _rhs_of(stage, qi)
        rhs_full = add(dr, mul(b1c, Sym(sysm.input_syms[0])), mul(b2c, Sym(sysm.input_syms[1])))
        a_i = simplify(substitute(rhs_full, {w: ZERO}))
        expect_zero(
            sub(rhs_full, add(mul(Sym(q_syms[i]), w_expr), a_i)),
            f"core equation {qi} shape",
        )
        couplings[f"a{i}"] = a_i
        for deep in q_syms[i + 1:]:
            expect_zero(differentiate(a_i, deep), f"drift coupling {qi} vs {deep}")
        for z in blocks.get("z1", []) + blocks.get("z2", []):
            expect_zero(differentiate(a_i, z), f"drift coupling {qi} vs rear {z}")
    qn = q_syms[-1]
    dr, b1c, b2c = _rhs_of(stage, qn)
    rhs_full = add(dr, mul(b1c, Sym(sysm.input_syms[0])), mul(b2c, Sym(sysm.input_syms[1])))
    z1_top = blocks["z1"][0]
    g_expr = simplify(
        substitute(sub(rhs_full, Sym(z1_top)), {w: ONE})
    )
    g_expr = simplify(sub(g_expr, substitute(sub(rhs_full, Sym(z1_top)), {w: ZERO})))
    couplings["g"] = g_expr
    expect_zero(
        sub(rhs_full, add(Sym(z1_top), mul(g_expr, w_expr))),
        "last core equation shape",
    )
    for chain_key, bottom_feeds in (("z1", sysm.input_syms[0]), ("z2", None)):
        chain = blocks.get(chain_key, [])
        for idx, s in enumerate(chain):
            dr, b1c, b2c = _rhs_of(stage, s)
            rhs_full = add(
                dr, mul(b1c, Sym(sysm.input_syms[0])), mul(b2c, Sym(sysm.input_syms[1]))
            )
            if idx + 1 < len(chain):
                expect_zero(sub(rhs_full, Sym(chain[idx + 1])), f"rear chain row {s}")
            else:
                target = (
                    Sym(sysm.input_syms[0])
                    if chain_key == "z1"
                    else Sym(sysm.input_syms[1])
                )
                expect_zero(sub(rhs_full, target), f"rear chain bottom {s}")
    return TriangularDecomposition(
        system=sysm,
        chains=(blocks.get("p1", []), blocks.get("p2", [])),
        core=q_syms,
        rear_long=blocks.get("z1", []),
        rear_short=blocks.get("z2", []),
        w_symbol=w,
        couplings=couplings,
        structure_ok=not failures,
        structure_failures=failures,
    )


# --- prolongation evidence ----------------------------------------------------


def image_sampler(result: TransformResult, sp: Sampler) -> Sampler:
    """Sampler whose state/input boxes cover the image of the original domain.

    The transformed expressions are only claimed on that image; sampling
    outside it can cross branch loci of inverse functions.
    """
    stage = result.stages[-1][1]
    points = _image_points(stage, sp, count=max(sp.samples, 24))
    domains = {}
    keys = list(stage.sys.frame) + list(stage.sys.input_syms)
    for k in keys:
        vals = [pt[k] for pt in points]
        lo, hi = min(vals), max(vals)
        pad = 0.05 * (hi - lo) + 1e-6
        domains[k] = (lo - pad, hi + pad)
    return sp.with_domains(domains)


def prolonged_linearizability(result: TransformResult, sp: Sampler):
    """Prolong the normal form's chain-side input and test static feedback
    linearizability of the extension.

    The right input to prolong is the one feeding the core chain of the
    transformed system; prolongation does not commute with static feedback,
    so the test runs on the normal form, sampled over the image domain.
    """
    from .checks import check_static_feedback_linearizable
    from .systems import prolong

    final = result.final
    k = len(final.core) - 1
    extended = prolong(final.system, 1, k)
    return check_static_feedback_linearizable(extended, image_sampler(result, sp))
