"""Vector fields, one-forms and their spans on a fixed coordinate frame."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

from .errors import FrameMismatch
from .expr import Expr, ZERO, add, mul
from .simplify import simplify


@dataclass(frozen=True)
class VectorField:
    """Components of a vector field with respect to an ordered frame."""

    frame: Tuple[str, ...]
    components: Tuple[Expr, ...]

    def __post_init__(self):
        if len(self.frame) != len(self.components):
            raise FrameMismatch(
                f"{len(self.components)} components on a frame of length {len(self.frame)}"
            )

    @staticmethod
    def from_dict(frame, parts) -> "VectorField":
        frame = tuple(frame)
        return VectorField(frame, tuple(parts.get(x, ZERO) for x in frame))

    def component(self, name) -> Expr:
        return self.components[self.frame.index(name)]

    def simplified(self) -> "VectorField":
        return VectorField(self.frame, tuple(simplify(c) for c in self.components))

    def scale(self, factor) -> "VectorField":
        return VectorField(self.frame, tuple(mul(factor, c) for c in self.components))

    def plus(self, other) -> "VectorField":
        _same_frame(self, other)
        return VectorField(
            self.frame,
            tuple(add(a, b) for a, b in zip(self.components, other.components)),
        )

    def is_zero(self) -> bool:
        return all(c == ZERO for c in self.components)

    def __str__(self):
        parts = [f"{c}*d/d{x}" for x, c in zip(self.frame, self.components) if c != ZERO]
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class OneForm:
    """Coefficients of a one-form with respect to an ordered frame."""

    frame: Tuple[str, ...]
    coefficients: Tuple[Expr, ...]

    def __post_init__(self):
        if len(self.frame) != len(self.coefficients):
            raise FrameMismatch(
                f"{len(self.coefficients)} coefficients on a frame of length {len(self.frame)}"
            )

    @staticmethod
    def from_components(frame, parts) -> "OneForm":
        frame = tuple(frame)
        return OneForm(frame, tuple(parts.get(x, ZERO) for x in frame))

    def simplified(self) -> "OneForm":
        return OneForm(self.frame, tuple(simplify(c) for c in self.coefficients))

    def pair(self, v: VectorField) -> Expr:
        """Natural pairing <omega, v>."""
        if self.frame != v.frame:
            raise FrameMismatch("pairing across different frames")
        return add(*(mul(a, b) for a, b in zip(self.coefficients, v.components)))

    def __str__(self):
        parts = [f"{c}*d{x}" for x, c in zip(self.frame, self.coefficients) if c != ZERO]
        return " + ".join(parts) if parts else "0"


def _same_frame(a, b):
    if a.frame != b.frame:
        raise FrameMismatch(f"frames differ: {a.frame} vs {b.frame}")


class Distribution:
    """Span of vector fields; the spanning set may be redundant.

    The generic rank is computed on demand and cached; callers must use one
    sampler consistently per analysis for the cache to be meaningful.
    """

    def __init__(self, frame, fields: Sequence[VectorField]):
        self.frame = tuple(frame)
        self.fields = tuple(f for f in fields if not f.is_zero())
        for f in self.fields:
            if f.frame != self.frame:
                raise FrameMismatch("spanning field on a different frame")
        self._rank = None
        self._basis = None

    def matrix_rows(self):
        return [list(f.components) for f in self.fields]

    def __len__(self):
        return len(self.fields)

    def __str__(self):
        return "span{" + ", ".join(str(f) for f in self.fields) + "}"


class Codistribution:
    """Span of one-forms; mirrors Distribution."""

    def __init__(self, frame, forms: Sequence[OneForm]):
        self.frame = tuple(frame)
        self.forms = tuple(
            w for w in forms if any(c != ZERO for c in w.coefficients)
        )
        for w in self.forms:
            if w.frame != self.frame:
                raise FrameMismatch("spanning form on a different frame")
        self._rank = None
        self._basis = None

    def matrix_rows(self):
        return [list(w.coefficients) for w in self.forms]

    def __len__(self):
        return len(self.forms)

    def __str__(self):
        return "span{" + ", ".join(str(w) for w in self.forms) + "}"


def coordinate_field(frame, name) -> VectorField:
    from .expr import ONE

    return VectorField.from_dict(frame, {name: ONE})
