"""Built-in example systems used by the test suite and the bundled corpus."""

from __future__ import annotations

from .expr import Sym, mul
from .parser import parse_expr as pe
from .systems import AffineSystem, make_affine, vector_field


def vtol() -> AffineSystem:
    """Planar VTOL aircraft with rolling-moment coupling eps."""
    frame = ("x", "z", "theta", "vx", "vz", "omega")
    drift = vector_field(
        frame,
        {
            "x": Sym("vx"),
            "z": Sym("vz"),
            "theta": Sym("omega"),
            "vz": pe("-1"),
        },
    )
    b1 = vector_field(frame, {"vx": pe("-sin(theta)"), "vz": pe("cos(theta)")})
    b2 = vector_field(
        frame,
        {"vx": pe("eps*cos(theta)"), "vz": pe("eps*sin(theta)"), "omega": pe("1")},
    )
    return AffineSystem(frame, drift, b1, b2, ("u1", "u2"), params=("eps",), name="vtol")


def sin_drift_affine() -> AffineSystem:
    """dx3 = sin(u1/u2) system, made affine by prolonging both controls once."""
    frame = ("x1", "x2", "x3")
    rhs = [Sym("u1"), Sym("u2"), pe("sin(u1/u2)")]
    return make_affine(frame, rhs, ("u1", "u2"), name="sin-drift")


def sqrt_drift_affine() -> AffineSystem:
    frame = ("x1", "x2", "x3")
    rhs = [Sym("u1"), Sym("u2"), pe("sqrt(u1*u2)")]
    return make_affine(frame, rhs, ("u1", "u2"), name="sqrt-drift")


def product_drift_affine() -> AffineSystem:
    frame = ("x1", "x2", "x3")
    rhs = [Sym("u1"), Sym("u2"), pe("u1*u2")]
    return make_affine(frame, rhs, ("u1", "u2"), name="product-drift")


def academic10() -> AffineSystem:
    """Ten-state academic example with two chains upstream of the core block."""
    frame = tuple(f"x{i}" for i in range(1, 11))
    drift = vector_field(
        frame,
        {
            "x1": pe("x2"),
            "x2": pe("x4+sin(x6)"),
            "x3": pe("x2+x5"),
            "x4": pe("(x9-x8*x10)*(1-cos(x6)*x7)"),
            "x5": pe("x6*(x9-x8*x10)"),
            "x6": pe("x7*(x9-x8*x10)"),
            "x7": pe("x1*(x8*x10-x9)+sin(x8)"),
            "x8": pe("x9+x10"),
        },
    )
    b1 = vector_field(frame, {"x9": pe("1")})
    b2 = vector_field(frame, {"x10": pe("1")})
    return AffineSystem(frame, drift, b1, b2, ("u1", "u2"), name="academic10")


def chained_form(n: int) -> AffineSystem:
    """Driftless chained form on n states."""
    frame = tuple(f"x{i}" for i in range(1, n + 1))
    b1 = vector_field(frame, {f"x{n}": pe("1")})
    parts = {"x1": pe("1")}
    for i in range(2, n):
        parts[f"x{i}"] = Sym(f"x{i + 1}")
    b2 = vector_field(frame, parts)
    drift = vector_field(frame, {})
    return AffineSystem(frame, drift, b1, b2, ("u1", "u2"), name=f"chained{n}")


def extended_chained(n: int, drift_terms=None) -> AffineSystem:
    """Drift-augmented chained form; drift_terms maps i -> Expr for dx_i.

    The default drift a_i = x1 * x_{i+1} (i = 2..n-1) respects the required
    triangular dependence.
    """
    sysd = chained_form(n)
    frame = sysd.frame
    if drift_terms is None:
        drift_terms = {i: mul(Sym("x1"), Sym(f"x{i + 1}")) for i in range(2, n)}
    drift = vector_field(frame, {f"x{i}": e for i, e in drift_terms.items()})
    return AffineSystem(
        frame, drift, sysd.b1, sysd.b2, ("u1", "u2"), name=f"extchained{n}"
    )


def double_integrator_pair() -> AffineSystem:
    """Two decoupled double integrators; static feedback linearizable."""
    frame = ("x1", "x2", "x3", "x4")
    drift = vector_field(frame, {"x1": Sym("x2"), "x3": Sym("x4")})
    b1 = vector_field(frame, {"x2": pe("1")})
    b2 = vector_field(frame, {"x4": pe("1")})
    return AffineSystem(frame, drift, b1, b2, ("u1", "u2"), name="double-integrators")


def sampler_domains(sys: AffineSystem):
    """Domain overrides keeping the bundled examples away from singular loci."""
    overrides = {
        "vtol": {"theta": (0.2, 1.2), "eps": (0.4, 0.9)},
        "sin-drift": {"u1": (0.2, 0.9), "u2": (1.0, 1.8)},
        "sqrt-drift": {"u1": (0.3, 1.5), "u2": (0.3, 1.5)},
        "product-drift": {},
        "academic10": {"x8": (0.2, 1.2)},
    }
    return overrides.get(sys.name, {})
