# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled clockless successor kernel.

Instruction-for-instruction mirror of `_pykernel.Engine`; the parity tests
drive both on identical inputs and require identical outputs, including
successor order and error messages.  States stay Python int tuples at the
interface; internally the bytecode programs, bounds and edge tables are
lowered to C arrays once per model.
"""

from cpython.tuple cimport PyTuple_GET_ITEM

from ._compile import (
    KernelError,
    K_TIMEOUT, K_SYNC_SEND, K_SYNC_RECV, K_CAL_SEND, K_CAL_RECV,
    U_INTERVAL, U_LOWER, U_INF, U_MAXM,
)

from cpython.array cimport array
from cpython cimport array as c_array
import array as pyarray

IMPL = "cython"

DEF STACK_MAX = 128


cdef class _CEdgeData:
    cdef public int kind, proc, source, target
    cdef public int ukind, ulo, ulo_strict, uhi, uhi_strict, ulo_base, uhi_base
    cdef public int channel, message, message_var, sender
    cdef array guard
    cdef list assigns            # [(slot, array prog)]
    cdef tuple capture           # timing slots
    cdef tuple targets           # ((proc, delay), ...)
    cdef array message_prog
    cdef public str origin


cdef long _eval(array prog, tuple state) except? -9223372036854775807:
    """Bytecode interpreter; Python floor semantics for % and /."""
    cdef long stack[STACK_MAX]
    cdef Py_ssize_t sp = 0, i = 0, n = len(prog)
    cdef long[:] code = prog
    cdef long op, arg, a, b, r
    while i < n:
        op = code[i]; arg = code[i + 1]; i += 2
        if op == 0:      # const
            stack[sp] = arg; sp += 1
        elif op == 1:    # slot
            stack[sp] = <long> <object> PyTuple_GET_ITEM(state, arg); sp += 1
        elif op == 7:    # neg
            stack[sp - 1] = -stack[sp - 1]
        elif op == 16:   # not
            stack[sp - 1] = 0 if stack[sp - 1] else 1
        else:
            sp -= 1
            b = stack[sp]; a = stack[sp - 1]
            if op == 2:
                stack[sp - 1] = a + b
            elif op == 3:
                stack[sp - 1] = a - b
            elif op == 4:
                stack[sp - 1] = a * b
            elif op == 5:
                if b <= 0:
                    raise KernelError("modulo by non-positive value")
                r = a % b
                if r != 0 and ((r < 0) != (b < 0)):
                    r += b
                stack[sp - 1] = r
            elif op == 6:
                if b <= 0:
                    raise KernelError("division by non-positive value")
                r = a // b
                stack[sp - 1] = r
            elif op == 8:
                stack[sp - 1] = 1 if a < b else 0
            elif op == 9:
                stack[sp - 1] = 1 if a <= b else 0
            elif op == 10:
                stack[sp - 1] = 1 if a == b else 0
            elif op == 11:
                stack[sp - 1] = 1 if a != b else 0
            elif op == 12:
                stack[sp - 1] = 1 if a >= b else 0
            elif op == 13:
                stack[sp - 1] = 1 if a > b else 0
            elif op == 14:
                stack[sp - 1] = 1 if (a and b) else 0
            elif op == 15:
                stack[sp - 1] = 1 if (a or b) else 0
            else:
                raise KernelError(f"bad opcode {op}")
    return stack[sp - 1]


cdef array _as_prog(prog):
    return pyarray.array("l", prog)


cdef class Engine:
    """Successor generator over compiled models (see `_pykernel` for the
    reference semantics this mirrors)."""

    cdef object cm
    cdef int n, k, v, cap, off_timing, off_vars, off_cal, max_timeout, max_const
    cdef int committed_slot, urgent_slot
    cdef bint sync_eager
    cdef array var_lo, var_hi
    cdef list edges              # list[_CEdgeData]
    cdef list out_timeout, out_send, out_recv   # [proc][loc] -> tuple of ids
    cdef tuple sync_pairs
    cdef set committed_locs, urgent_locs
    cdef set saturating
    cdef list accumulators       # [(slot, array guard)]
    cdef list var_names

    def __init__(self, cm):
        self.cm = cm
        self.n = cm.n_procs
        self.k = cm.n_timing
        self.v = cm.n_vars
        self.cap = cm.cap
        self.off_timing = 2 * self.n
        self.off_vars = 2 * self.n + self.k
        self.off_cal = self.off_vars + self.v
        self.max_timeout = cm.max_timeout
        self.max_const = cm.max_const
        self.committed_slot = cm.committed_flag_slot
        self.urgent_slot = cm.urgent_count_slot
        self.sync_eager = cm.sync_eager
        self.var_lo = pyarray.array("l", cm.var_lo) if cm.var_lo else pyarray.array("l")
        self.var_hi = pyarray.array("l", cm.var_hi) if cm.var_hi else pyarray.array("l")
        self.var_names = list(cm.var_names)
        self.committed_locs = set(cm.committed_locs)
        self.urgent_locs = set(cm.urgent_locs)
        self.saturating = set(cm.saturating_slots)
        self.accumulators = [(slot, _as_prog(g)) for slot, g in cm.accumulators]
        self.out_timeout = [list(map(tuple, row)) for row in cm.out_timeout]
        self.out_send = [list(map(tuple, row)) for row in cm.out_send]
        self.out_recv = [list(map(tuple, row)) for row in cm.out_recv]
        self.sync_pairs = tuple(cm.sync_pairs)
        self.edges = []
        for e in cm.edges:
            d = _CEdgeData()
            d.kind = e.kind; d.proc = e.proc; d.source = e.source; d.target = e.target
            d.ukind = e.ukind; d.ulo = e.ulo; d.ulo_strict = e.ulo_strict
            d.uhi = e.uhi; d.uhi_strict = e.uhi_strict
            d.ulo_base = e.ulo_base; d.uhi_base = e.uhi_base
            d.channel = e.channel; d.message = e.message
            d.message_var = e.message_var; d.sender = e.sender
            d.guard = _as_prog(e.guard)
            d.message_prog = _as_prog(e.message_prog)
            d.assigns = [(slot, _as_prog(p)) for slot, p in e.assigns]
            d.capture = e.capture
            d.targets = e.targets
            d.origin = e.origin
            self.edges.append(d)

    def initial_states(self):
        import itertools
        cm = self.cm
        locs = tuple(cm.entry)
        timing = tuple(cm.timing_init)
        pads = (-1,) * (4 * self.cap)
        out = []
        for touts in itertools.product(*cm.timeout_init_choices):
            for vals in itertools.product(*cm.var_init_choices):
                out.append(locs + touts + timing + vals + pads)
        return sorted(out)

    # -- helpers ---------------------------------------------------------

    cdef list _entries(self, tuple state):
        cdef int j, base = self.off_cal
        cdef list out = []
        for j in range(self.cap):
            if <long> state[base + 4 * j] < 0:
                break
            out.append(state[base + 4 * j: base + 4 * j + 4])
        return out

    cdef tuple _with_calendar(self, list parts, list entries):
        if len(entries) > self.cap:
            raise KernelError(
                f"calendar capacity {self.cap} exceeded ({len(entries)} entries)"
            )
        cdef list cal = []
        for e in sorted(entries):
            cal.extend(e)
        cal.extend((-1,) * (4 * (self.cap - len(entries))))
        return tuple(parts[: self.off_cal] + cal)

    cdef list _deltas(self, tuple state, _CEdgeData edge):
        cdef int mt = self.max_timeout
        cdef long lo, hi, start, end
        if edge.ukind == U_INF:
            return [mt]
        if edge.ukind == U_MAXM:
            end = self.max_const + 1
            if end > mt:
                end = mt
            out = list(range(1, end + 1))
            if not out:
                raise KernelError(f"unsatisfiable update on {edge.origin}")
            return out
        lo = edge.ulo - (<long> state[edge.ulo_base] if edge.ulo_base >= 0 else 0)
        start = lo + 1 if edge.ulo_strict else lo
        if start < 1:
            start = 1
        if edge.ukind == U_LOWER:
            out = list(range(start, mt + 1))
        else:
            hi = edge.uhi - (<long> state[edge.uhi_base] if edge.uhi_base >= 0 else 0)
            end = hi - 1 if edge.uhi_strict else hi
            if end > mt:
                end = mt
            out = list(range(start, end + 1))
        if not out:
            raise KernelError(f"unsatisfiable update on {edge.origin}")
        return out

    cdef list _fire(self, tuple state, _CEdgeData edge, long delta, dict extra_env):
        cdef list new = list(state)
        cdef long val
        cdef int vi, cslot
        new[edge.proc] = edge.target
        new[self.n + edge.proc] = delta
        for cslot in edge.capture:
            val = delta + <long> state[cslot]
            if val > self.max_timeout:
                raise KernelError(
                    f"timing variable exceeds max_timeout on {edge.origin}"
                )
            new[cslot] = val
        cdef list values
        if edge.assigns:
            values = []
            if extra_env is not None:
                for slot, prog in edge.assigns:
                    values.append((slot, self._eval_env(prog, state, extra_env)))
            else:
                for slot, prog in edge.assigns:
                    values.append((slot, _eval(prog, state)))
            for slot, val in values:
                vi = slot - self.off_vars
                if not self.var_lo.data.as_longs[vi] <= val <= self.var_hi.data.as_longs[vi]:
                    if slot in self.saturating:
                        if val < self.var_lo.data.as_longs[vi]:
                            val = self.var_lo.data.as_longs[vi]
                        elif val > self.var_hi.data.as_longs[vi]:
                            val = self.var_hi.data.as_longs[vi]
                    else:
                        raise KernelError(
                            f"assignment to {self.var_names[vi]} out of bounds "
                            f"({val} not in [{self.var_lo.data.as_longs[vi]}, "
                            f"{self.var_hi.data.as_longs[vi]}]) on {edge.origin}"
                        )
                new[slot] = val
        return new

    cdef long _eval_env(self, array prog, tuple state, dict extra_env):
        # slow path used only for rendezvous receiver assignments
        cdef list temp = list(state)
        for slot, v in extra_env.items():
            temp[slot] = v
        return _eval(prog, tuple(temp))

    cdef bint _bypass(self, tuple state, int p, bint committed, bint urgent):
        cdef int loc = <long> state[p]
        if committed and (p, loc) in self.committed_locs:
            return True
        if urgent and (p, loc) in self.urgent_locs:
            return True
        return False

    # -- successors --------------------------------------------------------

    def successors(self, tuple state):
        cdef int n = self.n, p, j, loc, pos
        cdef long minval, delta, tau_s, tau_r, msgval, d_s, d_r, val
        cdef list out = []
        cdef list entries = self._entries(state)
        cdef bint committed = self.committed_slot >= 0 and <long> state[self.committed_slot] == 1
        cdef bint urgent = self.urgent_slot >= 0 and <long> state[self.urgent_slot] > 0
        cdef bint blocked = committed or urgent
        cdef _CEdgeData edge, se, re_
        cdef list new, rest, added

        minval = <long> state[n]
        for p in range(1, n):
            val = <long> state[n + p]
            if val < minval:
                minval = val
        for e in entries:
            val = <long> e[0]
            if val < minval:
                minval = val

        if minval > 0 and not blocked:
            new = list(state)
            for p in range(n):
                new[n + p] = <long> state[n + p] - minval
            base = self.off_cal
            for j in range(len(entries)):
                new[base + 4 * j] = <long> state[base + 4 * j] - minval
            for slot, guard in self.accumulators:
                if _eval(guard, state):
                    vi = slot - self.off_vars
                    val = <long> state[slot] + minval
                    if val > self.var_hi.data.as_longs[vi]:
                        val = self.var_hi.data.as_longs[vi]
                    new[slot] = val
            out.append((("time", minval), tuple(new)))

        for p in range(n):
            if <long> state[n + p] != 0 and not self._bypass(state, p, committed, urgent):
                continue
            loc = <long> state[p]
            for eid in self.out_timeout[p][loc]:
                edge = <_CEdgeData> self.edges[eid]
                if not _eval(edge.guard, state):
                    continue
                for delta in self._deltas(state, edge):
                    new = self._fire(state, edge, delta, None)
                    out.append((("timeout", p, eid, delta), self._with_calendar(new, entries)))
            for eid in self.out_send[p][loc]:
                edge = <_CEdgeData> self.edges[eid]
                if not _eval(edge.guard, state):
                    continue
                for delta in self._deltas(state, edge):
                    new = self._fire(state, edge, delta, None)
                    added = entries + [(d, edge.message, p, tgt) for tgt, d in edge.targets]
                    out.append((("send", p, eid, delta), self._with_calendar(new, added)))

        for p in range(n):
            loc = <long> state[p]
            for eid in self.out_recv[p][loc]:
                edge = <_CEdgeData> self.edges[eid]
                seen = None
                for pos in range(len(entries)):
                    ent = entries[pos]
                    if <long> ent[0] != 0:
                        continue
                    if <long> ent[1] != edge.message or <long> ent[2] != edge.sender or <long> ent[3] != p:
                        continue
                    if ent == seen:
                        continue
                    seen = ent
                    rest = entries[:pos] + entries[pos + 1:]
                    for delta in self._deltas(state, edge):
                        new = self._fire(state, edge, delta, None)
                        out.append((("recv", p, eid, delta), self._with_calendar(new, rest)))

        for se_id, re_id in self.sync_pairs:
            se = <_CEdgeData> self.edges[se_id]
            re_ = <_CEdgeData> self.edges[re_id]
            if <long> state[se.proc] != se.source or <long> state[re_.proc] != re_.source:
                continue
            if not (self.sync_eager or <long> state[n + se.proc] == 0
                    or self._bypass(state, se.proc, committed, urgent)):
                continue
            if not _eval(se.guard, state) or not _eval(re_.guard, state):
                continue
            tau_s = <long> state[n + se.proc]
            tau_r = <long> state[n + re_.proc]
            ds_all = self._deltas(state, se)
            dr_all = self._deltas(state, re_)
            ds = [d for d in ds_all if d > tau_s]
            dr = [d for d in dr_all if d > tau_r]
            if not ds or not dr:
                continue
            msgval = _eval(se.message_prog, state)
            extra = {re_.message_var: msgval} if re_.message_var >= 0 else None
            for d_s in ds:
                half = self._fire(state, se, d_s, None)
                for d_r in dr:
                    new = list(half)
                    new[re_.proc] = re_.target
                    new[n + re_.proc] = d_r
                    for cslot in re_.capture:
                        val = d_r + <long> state[cslot]
                        if val > self.max_timeout:
                            raise KernelError(
                                f"timing variable exceeds max_timeout on {re_.origin}"
                            )
                        new[cslot] = val
                    if re_.message_var >= 0:
                        vi = re_.message_var - self.off_vars
                        if not self.var_lo.data.as_longs[vi] <= msgval <= self.var_hi.data.as_longs[vi]:
                            raise KernelError(
                                f"message value {msgval} out of bounds for "
                                f"{self.var_names[vi]} on {re_.origin}"
                            )
                        new[re_.message_var] = msgval
                    if re_.assigns:
                        values = []
                        for slot, prog in re_.assigns:
                            if extra is not None:
                                values.append((slot, self._eval_env(prog, state, extra)))
                            else:
                                values.append((slot, _eval(prog, state)))
                        for slot, val in values:
                            vi = slot - self.off_vars
                            if not self.var_lo.data.as_longs[vi] <= val <= self.var_hi.data.as_longs[vi]:
                                raise KernelError(
                                    f"assignment to {self.var_names[vi]} out of bounds "
                                    f"({val}) on {re_.origin}"
                                )
                            new[slot] = val
                    out.append(
                        (("sync", se.proc, se_id, re_.proc, re_id, d_s, d_r),
                         self._with_calendar(new, entries))
                    )
        return out
