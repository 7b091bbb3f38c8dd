"""Two-input affine systems and static transformations acting on them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

from .errors import FrameMismatch, TriflatError
from .expr import ZERO, add, free_symbols, mul, sub
from .fields import Distribution, VectorField, coordinate_field
from .sampling import Sampler, is_zero_generic
from .simplify import simplify


@dataclass(frozen=True)
class AffineSystem:
    """dx/dt = a(x) + b1(x) u1 + b2(x) u2 on named state coordinates."""

    frame: Tuple[str, ...]
    drift: VectorField
    b1: VectorField
    b2: VectorField
    input_syms: Tuple[str, str]
    params: Tuple[str, ...] = ()
    name: str = "system"

    def __post_init__(self):
        allowed = set(self.frame) | set(self.params)
        for fld in (self.drift, self.b1, self.b2):
            if fld.frame != tuple(self.frame):
                raise FrameMismatch("system fields must share the state frame")
            for c in fld.components:
                extra = free_symbols(c) - allowed
                if extra:
                    raise TriflatError(
                        f"non-state symbols {sorted(extra)} in system {self.name!r}"
                    )
        if len(set(self.frame) | set(self.input_syms)) != len(self.frame) + 2:
            raise TriflatError("state and input symbols must be disjoint")

    @property
    def n(self):
        return len(self.frame)

    @property
    def inputs(self):
        return (self.b1, self.b2)

    def input_distribution(self) -> Distribution:
        return Distribution(self.frame, [self.b1, self.b2])

    def rhs(self, u1_expr, u2_expr):
        """Closed-loop right-hand side as expressions."""
        return [
            simplify(add(a, mul(p, u1_expr), mul(q, u2_expr)))
            for a, p, q in zip(self.drift.components, self.b1.components, self.b2.components)
        ]

    def simplified(self) -> "AffineSystem":
        return replace(
            self,
            drift=self.drift.simplified(),
            b1=self.b1.simplified(),
            b2=self.b2.simplified(),
        )


def vector_field(frame, mapping) -> VectorField:
    """Vector field from a {coordinate: Expr} mapping."""
    return VectorField.from_dict(frame, mapping)


def _fresh(name, taken):
    while name in taken:
        name = name + "_"
    return name


def prolong(sys: AffineSystem, which: int, k: int) -> AffineSystem:
    """Add k integrators on the chosen input; the new input is its k-th derivative."""
    if k == 0:
        return sys
    if which not in (0, 1):
        raise ValueError("which must be 0 or 1")
    u = sys.input_syms[which]
    taken = set(sys.frame) | set(sys.input_syms) | set(sys.params)
    chain = [u]
    for i in range(1, k + 1):
        chain.append(_fresh(f"{u}_{i}", taken))
    new_states = chain[:-1]
    new_input = chain[-1]
    frame = tuple(sys.frame) + tuple(new_states)

    def ext(f, extra):
        return VectorField(frame, tuple(f.components) + tuple(extra))

    b_pro = sys.b1 if which == 0 else sys.b2
    b_other = sys.b2 if which == 0 else sys.b1
    from .expr import Sym

    drift_comps = [
        add(a, mul(c, Sym(u))) for a, c in zip(sys.drift.components, b_pro.components)
    ]
    drift_extra = [Sym(s) for s in chain[1:-1]] + [ZERO]
    drift = VectorField(frame, tuple(simplify(c) for c in drift_comps) + tuple(drift_extra))
    b_pro_new = coordinate_field(frame, new_states[-1])
    b_other_new = ext(b_other, [ZERO] * len(new_states))
    b1, b2 = (b_pro_new, b_other_new) if which == 0 else (b_other_new, b_pro_new)
    u_new = (new_input, sys.input_syms[1]) if which == 0 else (sys.input_syms[0], new_input)
    return AffineSystem(
        frame=frame,
        drift=drift,
        b1=b1,
        b2=b2,
        input_syms=u_new,
        params=sys.params,
        name=f"{sys.name}+prolong({u},{k})",
    )


def make_affine(frame, rhs_components, input_syms, params=(), name="system") -> AffineSystem:
    """Affine representation of a general system dx/dt = f(x, u).

    Every control is prolonged once: the old inputs become states, the input
    vector fields become the corresponding coordinate fields, and the new
    inputs are the first derivatives of the old ones.
    """
    u1, u2 = input_syms
    taken = set(frame) | set(input_syms) | set(params)
    new_inputs = (_fresh(f"{u1}_1", taken), _fresh(f"{u2}_1", taken))
    new_frame = tuple(frame) + (u1, u2)
    drift = VectorField(new_frame, tuple(simplify(c) for c in rhs_components) + (ZERO, ZERO))
    return AffineSystem(
        frame=new_frame,
        drift=drift,
        b1=coordinate_field(new_frame, u1),
        b2=coordinate_field(new_frame, u2),
        input_syms=new_inputs,
        params=tuple(params),
        name=name,
    )


def feedback_transform(sys: AffineSystem, beta, gamma, sp: Sampler = None) -> AffineSystem:
    """Invertible static feedback given directly by the field recombination.

    New input fields are beta[i][0]*b1 + beta[i][1]*b2 and the new drift is
    a + gamma[0]*b1 + gamma[1]*b2; det(beta) must be generically nonzero.
    """
    det = simplify(sub(mul(beta[0][0], beta[1][1]), mul(beta[0][1], beta[1][0])))
    if det == ZERO:
        raise TriflatError("feedback matrix is singular")
    if sp is not None and is_zero_generic(det, sp):
        raise TriflatError("feedback matrix is generically singular")

    def combo(c1, c2):
        return VectorField(
            sys.frame,
            tuple(
                simplify(add(mul(c1, a), mul(c2, b)))
                for a, b in zip(sys.b1.components, sys.b2.components)
            ),
        )

    drift = VectorField(
        sys.frame,
        tuple(
            simplify(add(a, mul(gamma[0], p), mul(gamma[1], q)))
            for a, p, q in zip(
                sys.drift.components, sys.b1.components, sys.b2.components
            )
        ),
    )
    return replace(
        sys,
        drift=drift,
        b1=combo(beta[0][0], beta[0][1]),
        b2=combo(beta[1][0], beta[1][1]),
        name=f"{sys.name}+feedback",
    )
