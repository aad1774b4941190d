"""Clockless finitary semantics: the verification state space.

The global clock is gone.  Timeouts and calendar delays live in the bounded
domain [0, max_timeout]; the single time-progress transition subtracts the
minimum pending value from every timeout and delay, so after each progress
step something is at zero and the reachable state set is finite.

``ClocklessState`` is a friendly view over the flat int tuples the kernels
exchange; exploration code works on raw tuples for speed and converts at the
edges (counterexamples, JSON, debugging).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ir
from ._compile import CompiledModel, KernelError, compile_model, update_candidates
from .kernel import make_engine


@dataclass(frozen=True)
class ClocklessState:
    """Decoded state: locations by name, bounded timeouts, variable values,
    and the calendar as a sorted multiset of undelivered messages."""

    locs: tuple[str, ...]
    timeouts: tuple[int, ...]
    timing: tuple[tuple[str, int], ...]
    vars: tuple[tuple[str, int], ...]
    calendar: tuple[tuple[str, str, str, int], ...]  # (message, sender, receiver, remaining)

    def to_json_dict(self) -> dict:
        return {
            "locs": list(self.locs),
            "timeouts": list(self.timeouts),
            "timing": {k: v for k, v in self.timing},
            "vars": {k: v for k, v in self.vars},
            "calendar": [
                {"message": m, "sender": s, "receiver": r, "remaining": rem}
                for m, s, r, rem in self.calendar
            ],
        }


class ClocklessSpace:
    """Compiled model + kernel engine with decoding helpers.

    ``cm`` lets callers supply an adjusted compiled model (the timeliness
    instrumentation patches accumulators in); by default the flat model is
    compiled as is.
    """

    def __init__(
        self,
        fm: ir.FlatModel,
        force_python: bool = False,
        cm: CompiledModel | None = None,
    ):
        self.fm = fm
        self.cm: CompiledModel = cm if cm is not None else compile_model(fm)
        self.engine = make_engine(self.cm, force_python=force_python)

    def initial_states(self) -> list[tuple]:
        return self.engine.initial_states()

    def successors(self, state: tuple) -> list[tuple[tuple, tuple]]:
        return self.engine.successors(state)

    def decode(self, state: tuple) -> ClocklessState:
        cm = self.cm
        n, k = cm.n_procs, cm.n_timing
        cal = []
        base = cm.off_cal
        for j in range(cm.cap):
            rem = state[base + 4 * j]
            if rem < 0:
                break
            msg, snd, rcv = state[base + 4 * j + 1 : base + 4 * j + 4]
            cal.append(
                (cm.message_names[msg], cm.proc_names[snd], cm.proc_names[rcv], rem)
            )
        return ClocklessState(
            locs=tuple(cm.loc_names[p][state[p]] for p in range(n)),
            timeouts=tuple(state[n : 2 * n]),
            timing=tuple(zip(cm.timing_names, state[2 * n : 2 * n + k])),
            vars=tuple(zip(cm.var_names, state[cm.off_vars : cm.off_cal])),
            calendar=tuple(cal),
        )

    def label_json(self, label: tuple) -> dict:
        """Transition labels in a replayable JSON form."""
        cm = self.cm
        kind = label[0]
        if kind == "time":
            return {"kind": "time_progress", "delta": label[1]}
        if kind == "timeout":
            _, p, eid, d = label
            return {
                "kind": "timeout",
                "process": cm.proc_names[p],
                "edge": cm.edges[eid].origin,
                "delta": d,
            }
        if kind == "send":
            _, p, eid, d = label
            return {
                "kind": "send",
                "process": cm.proc_names[p],
                "edge": cm.edges[eid].origin,
                "delta": d,
            }
        if kind == "recv":
            _, p, eid, d = label
            e = cm.edges[eid]
            return {
                "kind": "receive",
                "process": cm.proc_names[p],
                "edge": e.origin,
                "message": cm.message_names[e.message],
                "sender": cm.proc_names[e.sender],
                "delta": d,
            }
        if kind == "sync":
            _, sp, se, rp, re_, ds, dr = label
            return {
                "kind": "sync",
                "sender": cm.proc_names[sp],
                "receiver": cm.proc_names[rp],
                "edges": [cm.edges[se].origin, cm.edges[re_].origin],
                "delta_sender": ds,
                "delta_receiver": dr,
            }
        raise ValueError(f"unknown label {label!r}")


def initial_states(fm: ir.FlatModel) -> list[tuple]:
    """Raw initial state tuples (one per InitSpec enumeration)."""
    return ClocklessSpace(fm).initial_states()


def successors(fm: ir.FlatModel, state: tuple) -> list[tuple[tuple, tuple]]:
    """(label, state) successors; see module docstring for determinism."""
    return ClocklessSpace(fm).successors(state)


def eval_update(
    fm: ir.FlatModel | CompiledModel, state: tuple, edge_index: int
) -> list[int]:
    """Legal next-expiry offsets for an edge's update rule in ``state``.

    Ascending; always a subset of [1, max_timeout].  Empty means the model
    reached an unsatisfiable update (a modelling error at runtime).
    """
    cm = fm if isinstance(fm, CompiledModel) else compile_model(fm)
    return update_candidates(cm, state, cm.edges[edge_index])


def normalize_clocked(space: ClocklessSpace, clocked_state) -> tuple:
    """Map an integral clocked state to its clockless image.

    Drops the clock, re-bases every timeout and calendar due time to "time
    remaining from now".  Only defined for models without timing variables
    (their clocked values are absolute capture times with no positional
    counterpart here).
    """
    cm = space.cm
    if cm.n_timing:
        raise ir.ModelError.single(
            "normalize_clocked requires a model without timing variables"
        )
    t = clocked_state.t
    n = cm.n_procs
    for tau in clocked_state.timeouts:
        if tau < t:
            raise ir.ModelError.single(
                f"inconsistent clocked state: timeout {tau} behind clock {t}"
            )
    parts = list(clocked_state.locs)
    parts.extend(tau - t for tau in clocked_state.timeouts)
    parts.extend(clocked_state.vars)
    entries = sorted(
        (due - t, msg, snd, rcv) for (due, msg, snd, rcv) in clocked_state.calendar
    )
    for e in entries:
        if e[0] < 0:
            raise ir.ModelError.single("inconsistent clocked state: overdue entry")
        parts.extend(e)
    parts.extend((-1,) * (4 * (cm.cap - len(entries))))
    return tuple(parts)


def state_space_bound(fm: ir.FlatModel) -> int:
    """Analytic cap on the number of clockless states.

    (max_timeout+1)^(processes+timing vars) * prod(locations per process)
    * prod(variable domain sizes) * (calendar entry space + 1)^capacity.
    Every reachable state is one choice per factor, so the explored count can
    never exceed it; `explore_stats` asserts exactly that.
    """
    m1 = fm.max_timeout + 1
    bound = m1 ** (len(fm.procs) + len(fm.timing))
    for p in fm.procs:
        bound *= len(p.locations)
    for v in fm.variables:
        bound *= v.hi - v.lo + 1
    if fm.calendar_capacity:
        entry_space = len(fm.messages) * len(fm.procs) * len(fm.procs) * m1
        bound *= (entry_space + 1) ** fm.calendar_capacity
    return bound


__all__ = [
    "ClocklessState",
    "ClocklessSpace",
    "KernelError",
    "initial_states",
    "successors",
    "eval_update",
    "normalize_clocked",
    "state_space_bound",
]
