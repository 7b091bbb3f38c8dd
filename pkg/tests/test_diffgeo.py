"""Vector field calculus: brackets, flags, characteristics, annihilators."""

import random

import numpy as np
from triflat.diffgeo import (
    ad_iter,
    annihilator,
    basis,
    cauchy_characteristics,
    contains_distribution,
    contains_generic,
    derived_flag,
    derived_step,
    differential,
    extend,
    form_in_span,
    generic_rank,
    involutive_closure,
    is_involutive,
    lie_bracket,
    lie_derivative,
    lie_flag,
    mod_reduce,
    pruned,
    span_equal,
)
from triflat.expr import Rat, Sym, ZERO, evaluate, mul
from triflat.fields import Distribution, OneForm, VectorField, coordinate_field
from triflat.library import chained_form, vtol
from triflat.parser import parse_expr
from triflat.sampling import Sampler, is_zero_generic
from triflat.simplify import simplify

SP = Sampler()


def fd_bracket(v, w, point, h=1e-6):
    """Finite-difference Lie bracket oracle: Jw(x) v(x) - Jv(x) w(x)."""
    frame = v.frame
    n = len(frame)

    def val(f, pt):
        return np.array([evaluate(c, pt) for c in f.components])

    def jac(f, pt):
        out = np.zeros((n, n))
        for j, x in enumerate(frame):
            up = dict(pt)
            dn = dict(pt)
            up[x] += h
            dn[x] -= h
            out[:, j] = (val(f, up) - val(f, dn)) / (2 * h)
        return out

    return jac(w, point) @ val(v, point) - jac(v, point) @ val(w, point)


def _random_poly_field(rng, frame, terms=2):
    parts = {}
    for x in frame:
        if rng.random() < 0.6:
            e = Rat(rng.randint(-2, 2))
            for _ in range(rng.randint(0, terms)):
                e = e + Rat(rng.randint(-2, 2)) * Sym(rng.choice(frame)) * Sym(rng.choice(frame))
            parts[x] = simplify(e)
    return VectorField.from_dict(frame, parts)


def test_coordinate_fields_commute():
    frame = ("x", "z")
    bx = coordinate_field(frame, "x")
    bz = coordinate_field(frame, "z")
    assert lie_bracket(bx, bz).is_zero()


def test_bracket_chained_fields_matches_hand_expansion():
    c = chained_form(4)
    br = lie_bracket(c.b1, c.b2)
    assert br.components == (ZERO, ZERO, Rat(1), ZERO)
    # independent finite-difference oracle at random points
    rng = random.Random(5)
    for _ in range(5):
        pt = {x: rng.uniform(0.3, 1.5) for x in c.frame}
        num = fd_bracket(c.b1, c.b2, pt)
        sym = np.array([evaluate(e, pt) for e in br.components])
        assert np.allclose(num, sym, atol=1e-5)


def test_bracket_matches_finite_differences_random():
    rng = random.Random(9)
    frame = ("x", "y", "z")
    for _ in range(5):
        v = _random_poly_field(rng, frame)
        w = _random_poly_field(rng, frame)
        br = lie_bracket(v, w)
        pt = {x: rng.uniform(0.4, 1.2) for x in frame}
        assert np.allclose(
            fd_bracket(v, w, pt),
            [evaluate(e, pt) for e in br.components],
            atol=1e-4,
        )


def test_jacobi_identity_random_fields():
    rng = random.Random(2)
    frame = ("x", "y", "z")
    for _ in range(3):
        u = _random_poly_field(rng, frame)
        v = _random_poly_field(rng, frame)
        w = _random_poly_field(rng, frame)
        total = (
            lie_bracket(u, lie_bracket(v, w))
            .plus(lie_bracket(v, lie_bracket(w, u)))
            .plus(lie_bracket(w, lie_bracket(u, v)))
        )
        for c in total.components:
            assert is_zero_generic(simplify(c), SP)


def test_ad_iter_zero_is_identity(vtol_analysis):
    a = vtol_analysis.system
    assert ad_iter(a.drift, 0, a.b2) == a.b2


def test_ad_iter_vtol_spans_second_chain_member(vtol_analysis):
    s = vtol_analysis.system
    sp = vtol_analysis.sp
    d1 = pruned(s.input_distribution(), sp)
    ad1 = ad_iter(s.drift, 1, s.b2)
    d2 = vtol_analysis.chain.top
    assert contains_generic(d2, ad1, sp)
    assert not contains_generic(d1, ad1, sp)


def test_lie_derivative_vtol_output(vtol_analysis):
    s = vtol_analysis.system
    phi = parse_expr("eps*cos(theta)+z")
    out = lie_derivative(s.drift, phi)
    assert is_zero_generic(out - parse_expr("-eps*omega*sin(theta)+vz"), vtol_analysis.sp)


def test_lie_derivative_constant_and_iteration():
    s = vtol()
    assert lie_derivative(s.drift, Rat(7)) == ZERO
    phi = parse_expr("x*z")
    twice = lie_derivative(s.drift, phi, 2)
    once_twice = lie_derivative(s.drift, lie_derivative(s.drift, phi))
    assert is_zero_generic(twice - once_twice, SP)


def test_generic_rank_collinear():
    frame = ("x", "z")
    v = coordinate_field(frame, "x")
    w = v.scale(Rat(2))
    assert generic_rank(Distribution(frame, [v, w]), SP) == 1


def test_generic_rank_vtol_and_ten_state(vtol_analysis, academic10_analysis):
    assert vtol_analysis.chain.ranks == [2, 4]
    assert academic10_analysis.chain.ranks == [2, 4, 6]


def test_contains_trivial():
    frame = ("x", "y", "z")
    v = coordinate_field(frame, "x")
    w = coordinate_field(frame, "y")
    D = Distribution(frame, [v, w])
    assert contains_generic(D, v, SP)
    assert not contains_generic(D, coordinate_field(frame, "z"), SP)


def test_derived_flag_involutive_fixed_point():
    frame = ("x", "y", "z")
    D = Distribution(frame, [coordinate_field(frame, "x"), coordinate_field(frame, "y")])
    assert generic_rank(derived_flag(D, 1, SP), SP) == 2


def test_derived_flag_chained_ranks():
    c = chained_form(5)
    D = c.input_distribution()
    for i in range(4):
        assert generic_rank(derived_flag(D, i, SP), SP) == 2 + i


def test_lie_flag_chained_ranks_and_brute_force():
    c = chained_form(5)
    D = c.input_distribution()
    for i in range(4):
        assert generic_rank(lie_flag(D, i, SP), SP) == 2 + i
    # brute force: enumerate all bracket words up to depth i
    rng = random.Random(4)
    frame = ("x", "y", "z", "w")
    v1 = _random_poly_field(rng, frame)
    v2 = _random_poly_field(rng, frame)
    D = Distribution(frame, [v1, v2])
    for depth in (1, 2):
        words = [v1, v2]
        layer = [v1, v2]
        for _ in range(depth):
            layer = [lie_bracket(g, w) for g in (v1, v2) for w in layer]
            words.extend(layer)
        brute = pruned(Distribution(frame, words), SP)
        assert generic_rank(lie_flag(D, depth, SP), SP) == generic_rank(brute, SP)


def test_involutive_closure_vtol_display(vtol_analysis):
    s = vtol_analysis.system
    sp = vtol_analysis.sp
    closure = vtol_analysis.report.closure
    expected = Distribution(
        s.frame,
        [
            VectorField.from_dict(
                s.frame,
                {"x": parse_expr("eps*cos(theta)"), "z": parse_expr("eps*sin(theta)"),
                 "theta": parse_expr("1")},
            ),
            coordinate_field(s.frame, "vx"),
            coordinate_field(s.frame, "vz"),
            coordinate_field(s.frame, "omega"),
        ],
    )
    assert span_equal(closure, expected, sp)


def test_involutive_closure_sin_display(sin_analysis):
    s = sin_analysis.system
    closure = sin_analysis.report.closure
    expected = Distribution(
        s.frame, [coordinate_field(s.frame, x) for x in ("u1", "u2", "x1", "x2")]
    )
    assert span_equal(closure, expected, sin_analysis.sp)


def test_is_involutive_examples(vtol_analysis):
    sp = vtol_analysis.sp
    assert is_involutive(vtol_analysis.chain.d(1), sp)
    assert not is_involutive(vtol_analysis.chain.top, sp)
    frame = ("x", "y", "z")
    D = Distribution(frame, [coordinate_field(frame, "x"), coordinate_field(frame, "z")])
    assert is_involutive(D, SP)


def test_cauchy_of_full_space():
    frame = ("x", "y")
    D = Distribution(frame, [coordinate_field(frame, "x"), coordinate_field(frame, "y")])
    C = cauchy_characteristics(D, SP)
    assert span_equal(C, D, SP)


def test_cauchy_generic_rank2_in_r3_is_zero():
    # D = span{d/dx, d/dy + x d/dz} is the canonical non-involutive example
    frame = ("x", "y", "z")
    v = coordinate_field(frame, "x")
    w = VectorField.from_dict(frame, {"y": Rat(1), "z": Sym("x")})
    D = Distribution(frame, [v, w])
    C = cauchy_characteristics(D, SP)
    assert generic_rank(C, SP) == 0
    # brute-force oracle: the linear conditions at sample points have no kernel
    rng = random.Random(11)
    br = lie_bracket(v, w)
    for _ in range(5):
        pt = {s: rng.uniform(0.3, 1.5) for s in frame}
        m = np.array(
            [
                [evaluate(c, pt) for c in f.components]
                for f in (v, w, br)
            ]
        )
        # rank of [v, w, [v,w]] is 3: no combination of v, w brackets into D
        assert np.linalg.matrix_rank(m) == 3


def test_annihilator_coordinate_plane():
    frame = ("x", "z")
    D = Distribution(frame, [coordinate_field(frame, "x")])
    ann = annihilator(D, SP)
    assert len(ann.forms) == 1
    assert ann.forms[0].coefficients == (ZERO, Rat(1))


def test_annihilator_vtol_display(vtol_analysis):
    s = vtol_analysis.system
    sp = vtol_analysis.sp
    ann = annihilator(vtol_analysis.report.closure, sp)
    classical = [
        OneForm.from_components(s.frame, {"theta": parse_expr("eps*sin(theta)"), "z": parse_expr("-1")}),
        OneForm.from_components(s.frame, {"theta": parse_expr("eps*cos(theta)"), "x": parse_expr("-1")}),
    ]
    for w in classical:
        assert form_in_span(w, ann, sp)
    rows = ann.matrix_rows() + [list(w.coefficients) for w in classical]
    from triflat.sampling import MatrixSampler, numeric_rank

    ms = MatrixSampler(rows, s.frame, sp)
    assert max(numeric_rank(m, sp.tol) for _p, m in ms.samples()) == 2


def test_annihilator_sin_l_perp_membership(sin_analysis):
    s = sin_analysis.system
    sp = sin_analysis.sp
    lperp = sin_analysis.flat.l_perp
    expected_forms = [
        OneForm.from_components(s.frame, {"x1": Sym("u2"), "x2": -Sym("u1")}),
        OneForm.from_components(s.frame, {"u1": Sym("u2"), "u2": -Sym("u1")}),
        OneForm.from_components(s.frame, {"x3": Rat(1)}),
    ]
    for w in expected_forms:
        assert form_in_span(w, lperp, sp)


def test_annihilator_orthogonal_to_distribution(vtol_analysis):
    sp = vtol_analysis.sp
    D = vtol_analysis.report.delta1
    ann = annihilator(D, sp)
    for w in ann.forms:
        for f in D.fields:
            assert is_zero_generic(simplify(w.pair(f)), sp)


def test_mod_reduce_member_is_zero(vtol_analysis):
    sp = vtol_analysis.sp
    s = vtol_analysis.system
    D = pruned(s.input_distribution(), sp)
    rep = mod_reduce(s.b1, D, sp)
    assert all(is_zero_generic(simplify(c), sp) for c in rep.components)


def test_mod_reduce_disjoint_unchanged():
    frame = ("x", "y", "z")
    D = Distribution(frame, [coordinate_field(frame, "x")])
    v = coordinate_field(frame, "z")
    rep = mod_reduce(v, D, SP)
    assert rep.components == v.components


def test_mod_reduce_vtol_bracket_not_in_h(vtol_analysis):
    from triflat.direction_search import h_distribution

    s = vtol_analysis.system
    sp = vtol_analysis.sp
    H = h_distribution(vtol_analysis.chain, sp)
    w1 = ad_iter(s.drift, 2, s.b1)
    assert not contains_generic(H, w1, sp)
    rep = mod_reduce(w1, H, sp)
    assert not rep.is_zero()
    assert any(not is_zero_generic(simplify(c), sp) for c in rep.components)


def test_derived_flag_monotone_stabilizes_at_closure(sin_analysis):
    sp = sin_analysis.sp
    D = sin_analysis.report.delta1
    prev = generic_rank(D, sp)
    cur = D
    closure = involutive_closure(D, sp)
    for _ in range(4):
        nxt = derived_step(cur, sp)
        r = generic_rank(nxt, sp)
        assert r >= prev
        if r == prev:
            break
        prev, cur = r, nxt
    assert span_equal(cur, closure, sp)


def test_leibniz_rule():
    rng = random.Random(8)
    frame = ("x", "y", "z")
    for _ in range(3):
        v = _random_poly_field(rng, frame)
        w = _random_poly_field(rng, frame)
        f = simplify(parse_expr("x*y + 2*z"))
        left = lie_bracket(v, VectorField(frame, tuple(simplify(mul(f, c)) for c in w.components)))
        right = w.scale(lie_derivative(v, f)).plus(lie_bracket(v, w).scale(f))
        for a, b in zip(left.components, right.components):
            assert is_zero_generic(simplify(a - b), SP)
