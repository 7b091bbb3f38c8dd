"""Constructive pipeline: staged transformations and numeric verification."""

from triflat.direction_search import _normalized_candidate, compute_bracket_chain
from triflat.expr import ONE, Rat, Sym, ZERO, neg
from triflat.flatout import flat_output_for_report
from triflat.generator import triangular_template
from triflat.parser import parse_expr
from triflat.sampling import Sampler, is_zero_generic
from triflat.simplify import simplify
from triflat.systems import make_affine, prolong
from triflat.transform import (
    CoordinateChange,
    _isolate,
    solve_map,
    transform_to_triangular,
    verify_transformation,
)
from triflat.triform import triangular_form_check

SP = Sampler()


# --- pattern inversion -------------------------------------------------------

def test_isolate_patterns():
    V = Sym("V")
    cases = [
        ("2*x + y", "x", "(V - y)/2"),
        ("y*sin(x)", "x", "arcsin(V/y)"),
        ("tan(x)*c", "x", "arctan(V/c)"),
        ("exp(x) + 1", "x", "log(V - 1)"),
        ("(1+y^2)*x", "x", "V/(1+y^2)"),
        ("-cos(x)/sin(x)", "x", None),  # solvable, via the quotient pattern
        ("sqrt(q*r^2)/2/r", "q", None),  # solvable, via the kernel route
    ]
    for text, x, expected in cases:
        sol = _isolate(simplify(parse_expr(text)), x, V)
        assert sol is not None, text
        if expected is not None:
            assert is_zero_generic(
                simplify(sol - parse_expr(expected)), SP
            ), (text, str(sol))
        # substitute back: f(sol) == V on a positive box
        from triflat.expr import substitute

        back = simplify(substitute(simplify(parse_expr(text)), {x: sol}))
        assert is_zero_generic(simplify(back - V), Sampler(default_domain=(0.3, 0.9)))


def test_solve_map_cascaded():
    defs = [
        ("a", parse_expr("x + y")),
        ("b", parse_expr("y")),
        ("c", parse_expr("tan(z)")),
    ]
    sol = solve_map(("x", "y", "z"), defs, SP)
    assert sol is not None
    assert is_zero_generic(simplify(sol["y"] - Sym("b")), SP)
    assert is_zero_generic(simplify(sol["x"] - parse_expr("a - b")), SP)
    assert is_zero_generic(simplify(sol["z"] - parse_expr("arctan(c)")), SP)


def test_solve_map_reports_implicit():
    defs = [("a", parse_expr("x + cos(x)"))]
    assert solve_map(("x",), defs, SP) is None


# --- verification ------------------------------------------------------------

def test_verify_identity_change(sin_analysis):
    s = sin_analysis.system
    change = CoordinateChange(
        state_map={x: Sym(x) for x in s.frame},
        input_map={u: Sym(u) for u in s.input_syms},
        inverse_state_map=None,
    )
    assert verify_transformation(s, change, s, sin_analysis.sp)


def test_verify_rejects_corrupted_map(vtol_analysis):
    res = vtol_analysis.transform
    change = res.change
    bad_state = dict(change.state_map)
    key = sorted(bad_state)[0]
    bad_state[key] = neg(bad_state[key])
    corrupted = CoordinateChange(bad_state, dict(change.input_map), None)
    assert not verify_transformation(
        vtol_analysis.system, corrupted, res.final.system, vtol_analysis.sp
    )


# --- full pipelines ----------------------------------------------------------

def test_vtol_pipeline(vtol_analysis):
    res = vtol_analysis.transform
    assert res.verified
    fin = res.final
    assert fin.structure_ok, fin.structure_failures
    assert [len(c) for c in fin.chains] == [1, 1]
    assert len(fin.core) == 3
    assert len(fin.rear_long) == 1 and not fin.rear_short
    assert [name for name, _ in res.stages] == [
        "straighten",
        "normalize-first",
        "core-couplings",
        "rear-chains",
    ]


def test_sin_pipeline_matches_form(sin_analysis):
    res = sin_analysis.transform
    fin = res.final
    assert res.verified and fin.structure_ok
    assert [len(c) for c in fin.chains] == [1, 0]
    # cross-coupling factor in the last core equation is present and state-only
    g = fin.couplings["g"]
    assert g != ZERO
    from triflat.expr import free_symbols

    assert free_symbols(g) <= set(fin.system.frame) | set(fin.system.params)


def test_academic10_pipeline_regression(academic10_analysis):
    res = academic10_analysis.transform
    fin = res.final
    assert res.verified and fin.structure_ok
    # cautious long-chain top: the bounded choice keeps the input span straight
    maps = res.change.state_map
    assert str(maps[fin.rear_long[0]]) == "sin(x8)"
    sysm = fin.system
    for i, x in enumerate(sysm.frame):
        touches_inputs = (
            sysm.b1.components[i] != ZERO or sysm.b2.components[i] != ZERO
        )
        if touches_inputs:
            assert x in (fin.rear_long[-1], fin.rear_short[-1] if fin.rear_short else None)


def test_template_pipeline_is_renaming():
    inst = triangular_template(1, 1, 3, 2, seed=17)
    s = inst.system
    chain = compute_bracket_chain(s, SP)
    cand = _normalized_candidate(s, ONE, ZERO, "h")
    rep = triangular_form_check(s, cand, SP, chain)
    flat = flat_output_for_report(rep, SP)
    res = transform_to_triangular(s, rep, flat, SP)
    assert res.verified and res.final.structure_ok
    for new, expr in res.change.state_map.items():
        assert isinstance(expr, Sym), f"{new} -> {expr} is not a renaming"


def test_prolong_identity_and_names(sin_analysis):
    s = sin_analysis.system
    assert prolong(s, 0, 0) is s
    pro = prolong(s, 1, 2)
    assert pro.frame == s.frame + (s.input_syms[1], s.input_syms[1] + "_1")
    assert pro.input_syms[1].endswith("_2")
    assert pro.input_syms[0] == s.input_syms[0]


def test_make_affine_shape():
    s = make_affine(("x1",), [parse_expr("sin(u1)*u2")], ("u1", "u2"))
    assert s.frame == ("x1", "u1", "u2")
    assert s.input_syms == ("u1_1", "u2_1")
    assert s.b1.component("u1") == Rat(1)
    assert s.b2.component("u2") == Rat(1)


def test_stage_logs_recorded(vtol_analysis):
    res = vtol_analysis.transform
    final_stage = res.stages[-1][1]
    assert any("closing feedback" in line for line in final_stage.log)
