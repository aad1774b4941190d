"""Clocked reference semantics: explicit global clock, absolute timeouts.

This engine is the oracle side of the toolkit.  It is deliberately plain
Python over exact numbers: integral mode (ints) drives the clocked/clockless
equivalence checks, dense mode (fractions) drives the digitization closure
experiments.  Nothing here is performance critical; clarity wins.

Time never passes an unexpired timeout or an undelivered message: the single
time-progress transition jumps the clock to the minimum pending deadline, and
discrete transitions fire only at that minimum.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Union

from . import ir
from ._compile import (
    CompiledModel,
    KernelError,
    K_CAL_RECV,
    K_CAL_SEND,
    K_SYNC_RECV,
    K_SYNC_SEND,
    K_TIMEOUT,
    U_INF,
    U_INTERVAL,
    U_LOWER,
    U_MAXM,
    compile_model,
    eval_prog,
)

Time = Union[int, Fraction]

DENSE_DENOMINATOR_LIMIT = 8  # dense offsets are rationals p/q with q <= 8


@dataclass(frozen=True)
class ClockedState:
    """Snapshot of the clocked system.

    ``calendar`` entries are (due, message_id, sender, receiver), sorted; all
    times are absolute.  ``timing`` holds capture timestamps (clock values).
    """

    t: Time
    locs: tuple[int, ...]
    timeouts: tuple[Time, ...]
    timing: tuple[Time, ...]
    vars: tuple[int, ...]
    calendar: tuple[tuple[Time, int, int, int], ...] = ()


@dataclass(frozen=True)
class TimedTrace:
    """Finite prefix of a run: (state, stamp) observations, monotone stamps."""

    observations: tuple[tuple[ClockedState, Time], ...]
    mode: str  # "integral" | "dense"
    deadlocked: bool = False


class ClockedSpace:
    """Clocked successor generator over a compiled model."""

    def __init__(self, fm: ir.FlatModel):
        self.fm = fm
        self.cm: CompiledModel = compile_model(fm)

    # -- state helpers ---------------------------------------------------

    def initial_states(self) -> list[ClockedState]:
        """One state per InitSpec combination; t = 0, calendar empty."""
        import itertools

        cm = self.cm
        out = []
        for touts in itertools.product(*cm.timeout_init_choices):
            for vals in itertools.product(*cm.var_init_choices):
                for tau in touts:
                    if tau < 0:
                        raise ir.ModelError.single("initial timeout below clock 0")
                out.append(
                    ClockedState(
                        t=0,
                        locs=tuple(cm.entry),
                        timeouts=tuple(touts),
                        timing=tuple(cm.timing_init),
                        vars=tuple(vals),
                        calendar=(),
                    )
                )
        return sorted(out, key=lambda s: (s.timeouts, s.vars))

    def _slot_getter(self, s: ClockedState):
        """Expression slots: variables resolve normally; guards never touch
        timeouts, so only the vars/timing sections are addressable."""
        cm = self.cm

        def get(slot: int) -> int:
            if slot >= cm.off_vars:
                return s.vars[slot - cm.off_vars]
            if slot >= cm.off_timing:
                val = s.timing[slot - cm.off_timing]
                if isinstance(val, Fraction) and val.denominator != 1:
                    raise KernelError("non-integral timing value in expression")
                return int(val)
            raise KernelError("expression references a timeout slot")

        return get

    def _min_pending(self, s: ClockedState) -> Time:
        m = min(s.timeouts)
        for due, *_ in s.calendar:
            if due < m:
                m = due
        return m

    def _bypass(self, s: ClockedState, p: int) -> bool:
        cm = self.cm
        committed = (
            cm.committed_flag_slot >= 0
            and s.vars[cm.committed_flag_slot - cm.off_vars] == 1
        )
        urgent = (
            cm.urgent_count_slot >= 0 and s.vars[cm.urgent_count_slot - cm.off_vars] > 0
        )
        loc = s.locs[p]
        return (committed and (p, loc) in cm.committed_locs) or (
            urgent and (p, loc) in cm.urgent_locs
        )

    def _blocked(self, s: ClockedState) -> bool:
        cm = self.cm
        if cm.committed_flag_slot >= 0 and s.vars[cm.committed_flag_slot - cm.off_vars] == 1:
            return True
        if cm.urgent_count_slot >= 0 and s.vars[cm.urgent_count_slot - cm.off_vars] > 0:
            return True
        return False

    # -- update offsets ----------------------------------------------------

    def _abs_bounds(
        self, s: ClockedState, edge
    ) -> tuple[Time, bool, Time, bool]:
        """Absolute (lo, lo_strict, hi, hi_strict) window for an update rule.

        Bases anchor at the captured timestamp when named, at the current
        clock otherwise; unbounded shapes are capped at t + max_timeout, the
        clocked image of the bounded clockless domain.
        """
        cm = self.cm
        t = s.t
        cap_hi = t + cm.max_timeout
        if edge.ukind == U_INF:
            return cap_hi, False, cap_hi, False
        if edge.ukind == U_MAXM:
            return t + 1, False, t + min(cm.max_const + 1, cm.max_timeout), False
        lo_anchor = (
            s.timing[edge.ulo_base - cm.off_timing] if edge.ulo_base >= 0 else t
        )
        lo = edge.ulo + lo_anchor
        if edge.ukind == U_LOWER:
            return lo, bool(edge.ulo_strict), cap_hi, False
        hi_anchor = (
            s.timing[edge.uhi_base - cm.off_timing] if edge.uhi_base >= 0 else t
        )
        hi = edge.uhi + hi_anchor
        if hi > cap_hi:
            hi, hi_strict = cap_hi, False
        else:
            hi_strict = bool(edge.uhi_strict)
        return lo, bool(edge.ulo_strict), hi, hi_strict

    def _integral_offsets(self, s: ClockedState, edge) -> list[int]:
        """Integral candidate absolute expiries, floored at t+1."""
        lo, lo_s, hi, hi_s = self._abs_bounds(s, edge)
        start = int(lo) + 1 if lo_s else int(lo)
        if start < lo:  # lo not integral
            start = int(lo) + 1
        start = max(start, s.t + 1)
        end = int(hi) if not hi_s else (int(hi) - 1 if hi == int(hi) else int(hi))
        return list(range(start, end + 1))

    def _dense_offsets(self, s: ClockedState, edge) -> list[Fraction]:
        """Dense candidates: rationals with denominator <= 8 in the window.

        MaxM keeps integer offsets (its draws are integers by definition);
        everything else may land strictly inside a unit interval, which is
        exactly what the digitization experiments need to exercise.
        """
        if edge.ukind == U_MAXM:
            return [Fraction(x) for x in self._integral_offsets(s, edge)]
        lo, lo_s, hi, hi_s = self._abs_bounds(s, edge)
        lo = Fraction(lo)
        hi = Fraction(hi)
        floor = Fraction(s.t)  # must be strictly after now
        out = set()
        for q in range(1, DENSE_DENOMINATOR_LIMIT + 1):
            p_lo = (lo * q).numerator if (lo * q).denominator == 1 else int(lo * q) + 1
            if lo_s and Fraction(p_lo, q) == lo:
                p_lo += 1
            p_hi = (hi * q).numerator if (hi * q).denominator == 1 else int(hi * q)
            if hi_s and Fraction(p_hi, q) == hi:
                p_hi -= 1
            for p in range(p_lo, p_hi + 1):
                val = Fraction(p, q)
                if val > floor:
                    out.add(val)
        return sorted(out)

    # -- successor generation ----------------------------------------------

    def successors(self, s: ClockedState) -> list[tuple[tuple, ClockedState]]:
        """Integral-mode successors (labels mirror the clockless kernel)."""
        return self._successors(s, dense=False)

    def _successors(
        self, s: ClockedState, dense: bool
    ) -> list[tuple[tuple, ClockedState]]:
        cm = self.cm
        out: list[tuple[tuple, ClockedState]] = []
        m = self._min_pending(s)
        if s.t > m:
            raise KernelError("inconsistent clocked state: clock passed a deadline")

        if s.t < m and not self._blocked(s):
            out.append((("time", m - s.t), replace(s, t=m)))
            return out if not cm.sync_eager else out + self._sync_successors(s, dense)

        # discrete phase: t == min (or an urgency bypass)
        getter = self._slot_getter(s)
        offsets = self._dense_offsets if dense else self._integral_offsets

        for p in range(cm.n_procs):
            expired = s.timeouts[p] == s.t
            if not (expired or self._bypass(s, p)):
                continue
            loc = s.locs[p]
            for eid in cm.out_timeout[p][loc]:
                edge = cm.edges[eid]
                if not eval_prog(edge.guard, getter):
                    continue
                cands = offsets(s, edge)
                if not cands:
                    raise KernelError(f"unsatisfiable update on {edge.origin}")
                for tau in cands:
                    out.append(
                        (("timeout", p, eid, tau), self._fire(s, edge, tau))
                    )
            for eid in cm.out_send[p][loc]:
                edge = cm.edges[eid]
                if not eval_prog(edge.guard, getter):
                    continue
                cands = offsets(s, edge)
                if not cands:
                    raise KernelError(f"unsatisfiable update on {edge.origin}")
                for tau in cands:
                    nxt = self._fire(s, edge, tau)
                    entries = list(nxt.calendar) + [
                        (s.t + d, edge.message, p, tgt) for tgt, d in edge.targets
                    ]
                    if len(entries) > cm.cap:
                        raise KernelError(f"calendar capacity {cm.cap} exceeded")
                    out.append(
                        (("send", p, eid, tau), replace(nxt, calendar=tuple(sorted(entries))))
                    )

        for p in range(cm.n_procs):
            loc = s.locs[p]
            for eid in cm.out_recv[p][loc]:
                edge = cm.edges[eid]
                seen = None
                for pos, ent in enumerate(s.calendar):
                    due, msg, snd, rcv = ent
                    if due != s.t or msg != edge.message or snd != edge.sender or rcv != p:
                        continue
                    if ent == seen:
                        continue
                    seen = ent
                    cands = offsets(s, edge)
                    if not cands:
                        raise KernelError(f"unsatisfiable update on {edge.origin}")
                    for tau in cands:
                        nxt = self._fire(s, edge, tau)
                        rest = nxt.calendar[:pos] + nxt.calendar[pos + 1 :]
                        out.append((("recv", p, eid, tau), replace(nxt, calendar=rest)))

        out.extend(self._sync_successors(s, dense))
        return out

    def _sync_successors(self, s, dense: bool) -> list[tuple[tuple, ClockedState]]:
        cm = self.cm
        getter = self._slot_getter(s)
        offsets = self._dense_offsets if dense else self._integral_offsets
        out = []
        for se_id, re_id in cm.sync_pairs:
            se, re_ = cm.edges[se_id], cm.edges[re_id]
            if s.locs[se.proc] != se.source or s.locs[re_.proc] != re_.source:
                continue
            if not (
                cm.sync_eager or s.timeouts[se.proc] == s.t or self._bypass(s, se.proc)
            ):
                continue
            if not eval_prog(se.guard, getter) or not eval_prog(re_.guard, getter):
                continue
            ds_all = offsets(s, se)
            dr_all = offsets(s, re_)
            if not ds_all or not dr_all:
                raise KernelError(f"unsatisfiable update on {se.origin}")
            ds = [d for d in ds_all if d > s.timeouts[se.proc]]
            dr = [d for d in dr_all if d > s.timeouts[re_.proc]]
            if not ds or not dr:
                continue
            msgval = eval_prog(se.message_prog, getter)
            for d_s in ds:
                half = self._fire(s, se, d_s)
                for d_r in dr:
                    nxt = self._fire_on(half, s, re_, d_r, msg=(re_.message_var, msgval))
                    out.append(
                        (("sync", se.proc, se_id, re_.proc, re_id, d_s, d_r), nxt)
                    )
        return out

    def _fire(self, s: ClockedState, edge, tau: Time) -> ClockedState:
        return self._fire_on(s, s, edge, tau, msg=None)

    def _fire_on(
        self,
        base: ClockedState,
        pre: ClockedState,
        edge,
        tau: Time,
        msg: Optional[tuple[int, int]],
    ) -> ClockedState:
        """Apply an edge to ``base``, evaluating expressions against ``pre``
        (rendezvous halves both read the pre-rendezvous state)."""
        cm = self.cm
        locs = list(base.locs)
        locs[edge.proc] = edge.target
        touts = list(base.timeouts)
        touts[edge.proc] = tau
        timing = list(base.timing)
        for cslot in edge.capture:
            timing[cslot - cm.off_timing] = pre.t  # capture the clock
        vars_ = list(base.vars)
        override: dict[int, int] = {}
        if msg is not None and msg[0] >= 0:
            slot, val = msg
            vi = slot - cm.off_vars
            if not cm.var_lo[vi] <= val <= cm.var_hi[vi]:
                raise KernelError(
                    f"message value {val} out of bounds for {cm.var_names[vi]}"
                )
            vars_[vi] = val
            override[slot] = val

        if edge.assigns:
            pre_getter = self._slot_getter(pre)

            def getter(slot: int) -> int:
                if slot in override:
                    return override[slot]
                return pre_getter(slot)

            values = [(slot, eval_prog(prog, getter)) for slot, prog in edge.assigns]
            for slot, val in values:
                vi = slot - cm.off_vars
                if not cm.var_lo[vi] <= val <= cm.var_hi[vi]:
                    raise KernelError(
                        f"assignment to {cm.var_names[vi]} out of bounds ({val}) "
                        f"on {edge.origin}"
                    )
                vars_[vi] = val
        return ClockedState(
            t=base.t,
            locs=tuple(locs),
            timeouts=tuple(touts),
            timing=tuple(timing),
            vars=tuple(vars_),
            calendar=base.calendar,
        )


# ============================================================
# module-level operations
# ============================================================


def initial_states_clocked(fm: ir.FlatModel) -> list[ClockedState]:
    return ClockedSpace(fm).initial_states()


def successors_clocked(
    fm: ir.FlatModel | ClockedSpace, s: ClockedState
) -> list[tuple[tuple, ClockedState]]:
    space = fm if isinstance(fm, ClockedSpace) else ClockedSpace(fm)
    return space.successors(s)


def simulate(
    fm: ir.FlatModel,
    seed: int,
    max_time: Time,
    mode: str = "dense",
) -> TimedTrace:
    """Pseudo-random finite run, truncated once the clock would pass
    ``max_time``.  Deterministic for a fixed seed.  Dense mode draws update
    offsets as exact rationals with denominator <= 8."""
    if max_time <= 0:
        raise ValueError("max_time must be positive")
    dense = mode == "dense"
    space = ClockedSpace(fm)
    rng = random.Random(seed)
    inits = space.initial_states()
    state = inits[rng.randrange(len(inits))]
    obs = [(state, state.t)]
    deadlocked = False
    while True:
        succs = space._successors(state, dense=dense)
        if not succs:
            deadlocked = True
            break
        _, state = succs[rng.randrange(len(succs))]
        if state.t > max_time:
            break
        obs.append((state, state.t))
    return TimedTrace(tuple(obs), "dense" if dense else "integral", deadlocked)


def simulate_dense(fm: ir.FlatModel, seed: int, max_time: Time) -> TimedTrace:
    return simulate(fm, seed, max_time, mode="dense")


def is_integral_run(
    fm: ir.FlatModel | ClockedSpace, tr: TimedTrace
) -> tuple[bool, Optional[int]]:
    """Is ``tr`` a prefix of an integral clocked run?

    Checks initiation (first observation is an initial state at stamp 0),
    stamp/state agreement, monotonicity, and consecution: every step must be
    one of the generated successors, whose construction already carries the
    stamp side conditions (progress strictly advances to the minimum,
    discrete steps keep the clock).  Returns (ok, first violating index).
    """
    space = fm if isinstance(fm, ClockedSpace) else ClockedSpace(fm)
    if tr.mode != "integral":
        raise ValueError("is_integral_run expects an integral trace")
    if not tr.observations:
        return True, None
    first, stamp0 = tr.observations[0]
    if stamp0 != first.t or first not in space.initial_states():
        return False, 0
    prev = first
    for i in range(1, len(tr.observations)):
        cur, stamp = tr.observations[i]
        if stamp != cur.t or stamp < prev.t:
            return False, i
        if cur == prev:
            # idling transition: timed transition systems always allow a
            # stutter step, and digitization relies on it (two deadlines
            # less than one unit apart collapse onto the same instant)
            continue
        try:
            succs = {nxt for _, nxt in space.successors(prev)}
        except KernelError:
            return False, i
        if cur not in succs:
            return False, i
        prev = cur
    return True, None


def decode_clocked(space: ClockedSpace, s: ClockedState) -> dict:
    """JSON-ready dict; exact rationals rendered as "p/q" strings."""
    cm = space.cm

    def num(x: Time):
        if isinstance(x, Fraction):
            return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
        return x

    return {
        "time": num(s.t),
        "locs": [cm.loc_names[p][s.locs[p]] for p in range(cm.n_procs)],
        "timeouts": [num(x) for x in s.timeouts],
        "timing": {cm.timing_names[i]: num(x) for i, x in enumerate(s.timing)},
        "vars": {cm.var_names[i]: v for i, v in enumerate(s.vars)},
        "calendar": [
            {
                "message": cm.message_names[msg],
                "sender": cm.proc_names[snd],
                "receiver": cm.proc_names[rcv],
                "due": num(due),
            }
            for due, msg, snd, rcv in s.calendar
        ],
    }


def trace_to_json(space: ClockedSpace, tr: TimedTrace) -> dict:
    return {
        "schema": 1,
        "mode": tr.mode,
        "deadlocked": tr.deadlocked,
        "observations": [decode_clocked(space, s) for s, _ in tr.observations],
    }
