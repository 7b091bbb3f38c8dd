"""Decision procedure for equivalence to the flat triangular normal form.

Assembles the distribution ladder for a given direction candidate, evaluates
the five structural conditions (a)-(e), classifies the terminal-chain case
and records all witnesses in a report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from .checks import CheckOutcome
from .diffgeo import (
    ad_iter,
    basis,
    cauchy_characteristics,
    contains_generic,
    derived_step,
    extend,
    generic_rank,
    is_involutive,
    lie_bracket,
    pruned,
    span_equal,
)
from .direction_search import BracketChain, DirectionCandidate, compute_bracket_chain
from .errors import NotApplicable
from .fields import Distribution
from .sampling import Sampler
from .systems import AffineSystem

CASE_TWO_CHAINS = "TwoChains"
CASE_ONE_CHAIN = "OneChain"
CASE_NO_X1 = "NoX1"


@dataclass
class TriangularReport:
    system: AffineSystem
    chain: BracketChain
    candidate: Optional[DirectionCandidate]
    delta0: Optional[Distribution] = None
    delta1: Optional[Distribution] = None
    delta1_flags: List[Distribution] = field(default_factory=list)
    cauchy_flags: List[Distribution] = field(default_factory=list)
    closure: Optional[Distribution] = None
    g_chain: List[Distribution] = field(default_factory=list)
    items: dict = field(default_factory=dict)  # 'a'..'e' -> bool | None (skipped)
    failures: List[str] = field(default_factory=list)
    n2: Optional[int] = None
    s: Optional[int] = None
    case: Optional[str] = None
    chain_lengths: Optional[tuple] = None
    dims_consistent: bool = False
    verdict: bool = False

    @property
    def depth(self):
        return self.chain.depth

    @property
    def dims(self):
        l = self.chain_lengths or (None, None)
        return {
            "x1_chain_lengths": l,
            "n2": self.n2,
            "n3": self.depth,
        }

    def summary(self):
        flags = "".join(
            k if v else k.upper() for k, v in sorted(self.items.items()) if v is not None
        )
        return (
            f"verdict={self.verdict} case={self.case} depth={self.depth} "
            f"n2={self.n2} chains={self.chain_lengths} items={flags or '-'}"
        )


def _fail(report, label):
    report.failures.append(label)
    return report


def triangular_form_check(
    sys: AffineSystem,
    candidate: DirectionCandidate,
    sp: Sampler,
    chain: Optional[BracketChain] = None,
) -> TriangularReport:
    """Evaluate the full set of structural conditions for one candidate."""
    chain = chain or compute_bracket_chain(sys, sp)
    report = TriangularReport(sys, chain, candidate)
    if not chain.rank_ok:
        return _fail(report, f"chain ranks {chain.ranks} differ from 2, 4, ...")
    if not chain.cauchy_ok:
        return _fail(
            report,
            "characteristics of the first non-involutive member coincide with "
            "the previous member",
        )
    n3 = chain.depth
    a = sys.drift
    v_low = ad_iter(a, n3 - 1, candidate.field)
    v_high = lie_bracket(a, v_low)
    delta0 = pruned(extend(chain.d(n3 - 1), [v_low]), sp)
    delta1 = pruned(extend(chain.d(n3), [v_high]), sp)
    report.delta0, report.delta1 = delta0, delta1
    if generic_rank(delta0, sp) != 2 * n3 - 1 or generic_rank(delta1, sp) != 2 * n3 + 1:
        return _fail(report, "candidate direction degenerates the ladder ranks")
    return _run_items(report, delta0, delta1, sp)


def _run_items(report: TriangularReport, delta0, delta1, sp: Sampler) -> TriangularReport:
    sys = report.system
    a = sys.drift
    n = sys.n

    # (a) characteristics of delta1 equal delta0
    c1 = cauchy_characteristics(delta1, sp)
    report.items["a"] = span_equal(c1, delta0, sp)
    if not report.items["a"]:
        _fail(report, "(a) characteristic distribution differs from the lower rung")

    # (b) derived flag grows by one per step up to the involutive closure
    flags = [delta1]
    ranks = [generic_rank(delta1, sp)]
    while True:
        nxt = derived_step(flags[-1], sp)
        r = generic_rank(nxt, sp)
        if r == ranks[-1]:
            break
        flags.append(nxt)
        ranks.append(r)
        if r == n:
            break
    report.delta1_flags = flags
    report.closure = flags[-1]
    increments_ok = all(b - a == 1 for a, b in zip(ranks, ranks[1:]))
    non_involutive = len(flags) > 1
    report.items["b"] = increments_ok and non_involutive
    if not report.items["b"]:
        _fail(report, "(b) derived flag of the ladder top does not grow by single steps")
        report.verdict = False
        return report
    report.n2 = ranks[-1] - ranks[0] + 2
    n2 = report.n2

    # (c) drift compatibility along the characteristic ladder, plus coupling
    compat = True
    cauchys = []
    for i in range(1, n2 - 2):  # flag levels 1 .. n2-3
        Ci = cauchy_characteristics(flags[i], sp)
        cauchys.append(Ci)
        for c in basis(Ci, sp):
            if not contains_generic(flags[i], lie_bracket(a, c), sp):
                compat = False
                _fail(report, f"(c) drift incompatible at flag level {i}")
                break
        if not compat:
            break
    report.cauchy_flags = cauchys
    closure_full = generic_rank(report.closure, sp) == n
    if closure_full:
        report.items["c"] = compat
        report.items["d"] = None
        report.items["e"] = None
        report.case = CASE_NO_X1
        report.chain_lengths = (0, 0)
        report.s = 0
        report.g_chain = [report.closure]
    else:
        coupling_src = flags[n2 - 3] if n2 >= 3 else delta1
        extension = [lie_bracket(a, f) for f in basis(coupling_src, sp)]
        grown = pruned(extend(report.closure, extension), sp)
        coupling = generic_rank(grown, sp) == generic_rank(report.closure, sp) + 1
        if not coupling:
            _fail(report, "(c) coupling rank condition fails")
        report.items["c"] = compat and coupling

        # (d), (e): prolong the closure by the drift until the full space
        g_chain = [report.closure]
        involutive_ok = True
        while True:
            cur = g_chain[-1]
            if generic_rank(cur, sp) == n:
                break
            nxt = pruned(
                extend(cur, [lie_bracket(a, f) for f in basis(cur, sp)]), sp
            )
            if generic_rank(nxt, sp) == generic_rank(cur, sp):
                break
            if not is_involutive(nxt, sp):
                involutive_ok = False
                _fail(report, f"(d) extension step {len(g_chain)} is not involutive")
                g_chain.append(nxt)
                break
            g_chain.append(nxt)
            if len(g_chain) > n:
                break
        report.g_chain = g_chain
        report.items["d"] = involutive_ok
        reached = generic_rank(g_chain[-1], sp) == n
        report.items["e"] = reached
        if not reached:
            _fail(report, "(e) drift extensions of the closure stall below the full space")
        report.s = len(g_chain) - 1
        if reached and involutive_ok:
            increments = [
                generic_rank(b, sp) - generic_rank(a_, sp)
                for a_, b in zip(g_chain, g_chain[1:])
            ]
            if all(i in (1, 2) for i in increments):
                long_len = report.s
                short_len = sum(1 for i in increments if i == 2)
                report.chain_lengths = (long_len, short_len)
                report.case = (
                    CASE_TWO_CHAINS if increments and increments[0] == 2 else CASE_ONE_CHAIN
                )
            else:
                _fail(report, "terminal chain increments are not 1 or 2")

    ok = all(v for v in report.items.values() if v is not None)
    if ok and report.chain_lengths is not None:
        expected_n = generic_rank(report.closure, sp) + sum(report.chain_lengths)
        report.dims_consistent = expected_n == n
        if not report.dims_consistent:
            _fail(report, "block dimensions do not add up to the state count")
    report.verdict = bool(ok and report.dims_consistent and not report.failures)
    return report


def detect_case(report: TriangularReport) -> str:
    """Terminal-chain classification from the first extension step."""
    if report.closure is None:
        raise NotApplicable("report has no closure data")
    return report.case


def equal_length_variant_check(sys: AffineSystem, sp: Sampler) -> CheckOutcome:
    """Conditions (a)-(e) run on the chain members themselves.

    This recognizes the stricter normal form whose terminal chains have
    equal lengths (with no cross-coupling in the last core equation).
    """
    try:
        chain = compute_bracket_chain(sys, sp)
    except NotApplicable as e:
        return CheckOutcome(False, str(e), {})
    report = TriangularReport(sys, chain, None)
    if not chain.rank_ok:
        return CheckOutcome(False, "chain ranks differ from 2, 4, ...", {})
    n3 = chain.depth
    report = _run_items(report, chain.d(n3), chain.top, sp)
    witness = {
        "items": dict(report.items),
        "failures": list(report.failures),
        "n2": report.n2,
        "depth": report.depth,
    }
    failing = report.failures[0] if report.failures else None
    return CheckOutcome(report.verdict, failing, witness)
