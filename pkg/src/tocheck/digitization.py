"""Rounding dense-time traces onto the integer grid, and checking when that
is sound.

A dense value x rounds to floor(x) when x <= floor(x) + eps, else to
ceil(x); lifted pointwise over a trace's stamps and every time-valued state
field.  The reduction from dense-time to integral-time verification is exact
precisely when every timeout increment is at least one time unit; models
violating that (an update interval dipping below 1) produce dense runs whose
rounded versions are not runs, which `closure_check` exhibits empirically
with replayable seeds.

Everything here uses exact rationals; floating point would silently break
the tie cases the rounding definition pivots on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Union

from . import ir
from .clocked import ClockedSpace, ClockedState, TimedTrace, simulate_dense, is_integral_run

Rat = Union[int, Fraction]


@dataclass(frozen=True)
class Epsilon:
    """Rounding pivot, an exact rational in (0, 1]."""

    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        if not 0 < self.value <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {self.value}")

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class ClosureFailure:
    seed: int
    epsilon: Epsilon
    index: int  # first observation at which the rounded trace stops being a run


@dataclass(frozen=True)
class ClosureReport:
    runs_checked: int
    epsilons: tuple[Epsilon, ...]
    failures: tuple[ClosureFailure, ...]

    @property
    def closed(self) -> bool:
        return not self.failures

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "runs_checked": self.runs_checked,
            "epsilons": [str(e) for e in self.epsilons],
            "failures": [
                {"seed": f.seed, "epsilon": str(f.epsilon), "index": f.index}
                for f in self.failures
            ],
            "closed": self.closed,
        }


def digitize_value(x: Rat, eps: Epsilon) -> int:
    """floor(x) when x <= floor(x) + eps, otherwise ceil(x)."""
    if x < 0:
        raise ValueError("digitize_value expects a non-negative value")
    x = Fraction(x)
    fl = x.numerator // x.denominator
    return fl if x <= fl + eps.value else fl + 1


def digitize_state(s: ClockedState, eps: Epsilon) -> ClockedState:
    """Round every time-valued field (clock, timeouts, calendar dues, timing
    captures) with the same epsilon; discrete fields are untouched."""
    return ClockedState(
        t=digitize_value(s.t, eps),
        locs=s.locs,
        timeouts=tuple(digitize_value(x, eps) for x in s.timeouts),
        timing=tuple(digitize_value(x, eps) for x in s.timing),
        vars=s.vars,
        calendar=tuple(
            sorted(
                (digitize_value(due, eps), msg, snd, rcv)
                for due, msg, snd, rcv in s.calendar
            )
        ),
    )


def digitize_trace(tr: TimedTrace, eps: Epsilon) -> TimedTrace:
    """Pointwise rounding of a dense trace; the result claims integral mode.

    Rounding is monotone, so stamp monotonicity survives; whether the result
    is an actual integral run is `is_integral_run`'s question.
    """
    obs = tuple(
        (digitize_state(s, eps), digitize_value(stamp, eps))
        for s, stamp in tr.observations
    )
    return TimedTrace(obs, "integral", tr.deadlocked)


def increment_at_least_one(model: ir.Model) -> tuple[bool, list[str]]:
    """Can every update rule only ever increment a timeout by >= 1?

    Interval/lower-bound rules are inspected for a dense-legal increment
    below one time unit (for the zero-base valuation); Infinity resolves to
    the system maximum and MaxM draws integers >= 1, so both always pass.
    Returns (verdict, offending rule descriptions).
    """
    offending: list[str] = []
    consts = model.const_env()

    def admits_sub_unit(lo: int, lo_strict: bool, hi: Optional[int], hi_strict: bool) -> bool:
        """Does the rule's dense window intersect the open interval (0, 1)?"""
        l, l_strict = (lo, lo_strict) if lo > 0 else (0, True)
        if hi is None or hi > 1:
            u, u_strict = 1, True
        else:
            u, u_strict = hi, (hi_strict if hi < 1 else True)
        if l < u:
            return True  # rationals are dense: a point always fits
        return l == u and not l_strict and not u_strict

    for p in model.processes:
        extra = {p.param: 1} if p.param else {}
        for e in p.edges:
            u = e.action.update
            desc = f"{p.name}:{e.source}->{e.target}"
            if isinstance(u, ir.Interval):
                lo = ir.eval_expr(u.lo, {**consts, **extra})
                hi = ir.eval_expr(u.hi, {**consts, **extra})
                if admits_sub_unit(lo, u.lo_strict, hi, u.hi_strict):
                    offending.append(desc)
            elif isinstance(u, ir.LowerBound):
                lo = ir.eval_expr(u.lo, {**consts, **extra})
                if admits_sub_unit(lo, u.strict, None, False):
                    offending.append(desc)
    seen: set[str] = set()
    uniq = [d for d in offending if not (d in seen or seen.add(d))]
    return not uniq, uniq


def closure_check(
    fm: ir.FlatModel,
    n_runs: int,
    epsilons: Iterable[Epsilon],
    seed: int,
    max_time: Optional[int] = None,
) -> ClosureReport:
    """Sample dense runs, round each under each epsilon, and replay the
    result against the integral semantics.  Failures carry the seed, the
    epsilon and the first violating observation index so they can be
    reproduced exactly.
    """
    eps_list = tuple(epsilons)
    horizon = max_time if max_time is not None else 4 * fm.max_timeout + 10
    space = ClockedSpace(fm)
    failures: list[ClosureFailure] = []
    for k in range(n_runs):
        run_seed = seed + k
        tr = simulate_dense(fm, run_seed, horizon)
        for eps in eps_list:
            rounded = digitize_trace(tr, eps)
            ok, idx = is_integral_run(space, rounded)
            if not ok:
                failures.append(ClosureFailure(run_seed, eps, idx if idx is not None else -1))
    return ClosureReport(n_runs, eps_list, tuple(failures))


def default_epsilons() -> list[Epsilon]:
    return [Epsilon(Fraction(k, 10)) for k in range(1, 11)]
