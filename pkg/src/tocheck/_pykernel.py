"""Pure-Python clockless successor kernel.

Reference implementation of the finitary semantics over compiled models; the
Cython kernel (`_ckernel`) mirrors it instruction for instruction and the
parity tests hold both to identical output.  States are flat int tuples (see
`_compile` for the layout); successor lists are deterministic: time progress
first, then timeout edges, calendar sends, calendar receives and rendezvous
pairs, each in table order with ascending update offsets.
"""

from __future__ import annotations

import itertools

from ._compile import (
    CompiledModel,
    KernelError,
    eval_prog,
    update_candidates,
)

IMPL = "python"


class Engine:
    """Successor generator for one compiled model.

    Pure functions of (model, state): instances carry no mutable state and
    may be shared across threads.
    """

    def __init__(self, cm: CompiledModel):
        self.cm = cm

    def initial_states(self) -> list[tuple]:
        """Every combination of initial timeout/variable choices."""
        cm = self.cm
        locs = tuple(cm.entry)
        timing = tuple(cm.timing_init)
        pads = (-1,) * (4 * cm.cap)
        out = []
        for touts in itertools.product(*cm.timeout_init_choices):
            for vals in itertools.product(*cm.var_init_choices):
                out.append(locs + touts + timing + vals + pads)
        return sorted(out)

    # -- helpers -------------------------------------------------------

    def _entries(self, state: tuple) -> list[tuple[int, int, int, int]]:
        cm = self.cm
        base = cm.off_cal
        out = []
        for j in range(cm.cap):
            r = state[base + 4 * j]
            if r < 0:
                break
            out.append(tuple(state[base + 4 * j : base + 4 * j + 4]))
        return out

    def _with_calendar(self, parts: list, entries: list) -> tuple:
        cm = self.cm
        if len(entries) > cm.cap:
            raise KernelError(
                f"calendar capacity {cm.cap} exceeded ({len(entries)} entries)"
            )
        cal: list[int] = []
        for e in sorted(entries):
            cal.extend(e)
        cal.extend((-1,) * (4 * (cm.cap - len(entries))))
        return tuple(parts[: cm.off_cal] + cal)

    def _fire(
        self,
        state: tuple,
        edge,
        delta: int,
        extra_env: dict[int, int] | None = None,
    ) -> list:
        """Apply one edge: move location, re-arm timeout, capture, assign.
        Returns the mutable state prefix; the caller finishes the calendar."""
        cm = self.cm
        new = list(state)
        new[edge.proc] = edge.target
        new[cm.n_procs + edge.proc] = delta
        for cslot in edge.capture:
            val = delta + state[cslot]
            if val > cm.max_timeout:
                raise KernelError(
                    f"timing variable exceeds max_timeout on {edge.origin}"
                )
            new[cslot] = val
        if edge.assigns:
            if extra_env:
                getter = lambda s: extra_env.get(s, state[s])
            else:
                getter = state.__getitem__
            values = [(slot, eval_prog(prog, getter)) for slot, prog in edge.assigns]
            for slot, val in values:
                vi = slot - cm.off_vars
                if not cm.var_lo[vi] <= val <= cm.var_hi[vi]:
                    if slot in cm.saturating_slots:
                        val = min(max(val, cm.var_lo[vi]), cm.var_hi[vi])
                    else:
                        raise KernelError(
                            f"assignment to {cm.var_names[vi]} out of bounds "
                            f"({val} not in [{cm.var_lo[vi]}, {cm.var_hi[vi]}]) "
                            f"on {edge.origin}"
                        )
                new[slot] = val
        return new

    def _deltas(self, state: tuple, edge) -> list[int]:
        c = update_candidates(self.cm, state, edge)
        if not c:
            raise KernelError(f"unsatisfiable update on {edge.origin}")
        return c

    # -- successors ----------------------------------------------------

    def successors(self, state: tuple) -> list[tuple[tuple, tuple]]:
        cm = self.cm
        n = cm.n_procs
        out: list[tuple[tuple, tuple]] = []

        entries = self._entries(state)
        committed = cm.committed_flag_slot >= 0 and state[cm.committed_flag_slot] == 1
        urgent = cm.urgent_count_slot >= 0 and state[cm.urgent_count_slot] > 0
        blocked = committed or urgent

        mins = [state[n + p] for p in range(n)]
        mins.extend(e[0] for e in entries)
        minval = min(mins)

        if minval > 0 and not blocked:
            new = list(state)
            for p in range(n):
                new[n + p] = state[n + p] - minval
            base = cm.off_cal
            for j in range(len(entries)):
                new[base + 4 * j] = state[base + 4 * j] - minval
            for slot, guard in cm.accumulators:
                if eval_prog(guard, state.__getitem__):
                    vi = slot - cm.off_vars
                    new[slot] = min(state[slot] + minval, cm.var_hi[vi])
            out.append((("time", minval), tuple(new)))

        def bypass(p: int) -> bool:
            loc = state[p]
            return (committed and (p, loc) in cm.committed_locs) or (
                urgent and (p, loc) in cm.urgent_locs
            )

        getter = state.__getitem__
        for p in range(n):
            if state[n + p] != 0 and not bypass(p):
                continue
            loc = state[p]
            for eid in cm.out_timeout[p][loc]:
                edge = cm.edges[eid]
                if not eval_prog(edge.guard, getter):
                    continue
                for delta in self._deltas(state, edge):
                    new = self._fire(state, edge, delta)
                    out.append(
                        (("timeout", p, eid, delta), self._with_calendar(new, entries))
                    )
            for eid in cm.out_send[p][loc]:
                edge = cm.edges[eid]
                if not eval_prog(edge.guard, getter):
                    continue
                for delta in self._deltas(state, edge):
                    new = self._fire(state, edge, delta)
                    added = entries + [
                        (d, edge.message, p, tgt) for tgt, d in edge.targets
                    ]
                    out.append(
                        (("send", p, eid, delta), self._with_calendar(new, added))
                    )

        # calendar receives: any due entry matching a receive edge at the
        # receiver's current location; duplicates of an entry collapse
        for p in range(n):
            loc = state[p]
            for eid in cm.out_recv[p][loc]:
                edge = cm.edges[eid]
                seen = None
                for pos, ent in enumerate(entries):
                    if ent[0] != 0:
                        continue
                    if ent[1] != edge.message or ent[2] != edge.sender or ent[3] != p:
                        continue
                    if ent == seen:
                        continue
                    seen = ent
                    rest = entries[:pos] + entries[pos + 1 :]
                    for delta in self._deltas(state, edge):
                        new = self._fire(state, edge, delta)
                        out.append(
                            (("recv", p, eid, delta), self._with_calendar(new, rest))
                        )

        for se_id, re_id in cm.sync_pairs:
            se = cm.edges[se_id]
            re = cm.edges[re_id]
            if state[se.proc] != se.source or state[re.proc] != re.source:
                continue
            if not (
                cm.sync_eager or state[n + se.proc] == 0 or bypass(se.proc)
            ):
                continue
            if not eval_prog(se.guard, getter) or not eval_prog(re.guard, getter):
                continue
            tau_s = state[n + se.proc]
            tau_r = state[n + re.proc]
            ds_all = self._deltas(state, se)
            dr_all = self._deltas(state, re)
            ds = [d for d in ds_all if d > tau_s]
            dr = [d for d in dr_all if d > tau_r]
            if not ds or not dr:
                continue  # rendezvous disabled: no offset clears the old timeout
            msgval = eval_prog(se.message_prog, getter)
            extra = {re.message_var: msgval} if re.message_var >= 0 else None
            for d_s in ds:
                half = self._fire(state, se, d_s)
                for d_r in dr:
                    new = list(half)
                    new[re.proc] = re.target
                    new[n + re.proc] = d_r
                    for cslot in re.capture:
                        val = d_r + state[cslot]
                        if val > cm.max_timeout:
                            raise KernelError(
                                f"timing variable exceeds max_timeout on {re.origin}"
                            )
                        new[cslot] = val
                    if re.message_var >= 0:
                        vi = re.message_var - cm.off_vars
                        if not cm.var_lo[vi] <= msgval <= cm.var_hi[vi]:
                            raise KernelError(
                                f"message value {msgval} out of bounds for "
                                f"{cm.var_names[vi]} on {re.origin}"
                            )
                        new[re.message_var] = msgval
                    if re.assigns:
                        getter2 = (
                            (lambda s: extra.get(s, state[s])) if extra else getter
                        )
                        values = [
                            (slot, eval_prog(prog, getter2)) for slot, prog in re.assigns
                        ]
                        for slot, val in values:
                            vi = slot - cm.off_vars
                            if not cm.var_lo[vi] <= val <= cm.var_hi[vi]:
                                raise KernelError(
                                    f"assignment to {cm.var_names[vi]} out of bounds "
                                    f"({val}) on {re.origin}"
                                )
                            new[slot] = val
                    out.append(
                        (
                            ("sync", se.proc, se_id, re.proc, re_id, d_s, d_r),
                            self._with_calendar(new, entries),
                        )
                    )
        return out
