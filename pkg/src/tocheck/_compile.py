"""Compilation of a FlatModel into the table form the kernels execute.

States are flat tuples of ints with a fixed layout:

    locs[0..n) | timeouts[0..n) | timing[0..k) | vars[0..v) | calendar[4*cap]

Calendar entries are (remaining, message_id, sender, receiver) quadruples kept
sorted ascending, padded with (-1,-1,-1,-1); the padding sorts after real
entries by construction of the insertion routine, so equal multisets have
equal tuples.

Expressions compile to a tiny stack bytecode (flat int sequence of
[op, arg] pairs) interpreted identically by the pure-Python and Cython
kernels; modulo/division use floor semantics with a positive-divisor domain
check so both interpreters agree with the IR evaluator bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import ir

# bytecode opcodes
OP_CONST = 0
OP_SLOT = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_MOD = 5
OP_DIV = 6
OP_NEG = 7
OP_LT = 8
OP_LE = 9
OP_EQ = 10
OP_NE = 11
OP_GE = 12
OP_GT = 13
OP_AND = 14
OP_OR = 15
OP_NOT = 16

# edge kinds
K_TIMEOUT = 0
K_SYNC_SEND = 1
K_SYNC_RECV = 2
K_CAL_SEND = 3
K_CAL_RECV = 4

# update kinds
U_INTERVAL = 0
U_LOWER = 1
U_INF = 2
U_MAXM = 3

_UPDATE_KIND = {"interval": U_INTERVAL, "lower": U_LOWER, "inf": U_INF, "maxm": U_MAXM}
_EDGE_KIND = {
    "timeout": K_TIMEOUT,
    "sync_send": K_SYNC_SEND,
    "sync_recv": K_SYNC_RECV,
    "cal_send": K_CAL_SEND,
    "cal_recv": K_CAL_RECV,
}


class KernelError(Exception):
    """Semantic model error hit while generating successors (out-of-bounds
    assignment, unsatisfiable update, calendar overflow, arithmetic domain)."""


def compile_expr(e: ir.Expr, slot_of: dict[str, int]) -> tuple[int, ...]:
    """Flatten an expression to bytecode; names resolve through slot_of."""
    code: list[int] = []

    def emit(node: ir.Expr) -> None:
        if isinstance(node, ir.IntLit):
            code.extend((OP_CONST, node.value))
        elif isinstance(node, ir.BoolLit):
            code.extend((OP_CONST, 1 if node.value else 0))
        elif isinstance(node, ir.Name):
            code.extend((OP_SLOT, slot_of[node.ident]))
        elif isinstance(node, ir.BinOp):
            emit(node.left)
            emit(node.right)
            code.extend(
                ({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "%": OP_MOD, "/": OP_DIV}[node.op], 0)
            )
        elif isinstance(node, ir.Neg):
            emit(node.operand)
            code.extend((OP_NEG, 0))
        elif isinstance(node, ir.Cmp):
            emit(node.left)
            emit(node.right)
            code.extend(
                (
                    {"<": OP_LT, "<=": OP_LE, "=": OP_EQ, "!=": OP_NE, ">=": OP_GE, ">": OP_GT}[
                        node.op
                    ],
                    0,
                )
            )
        elif isinstance(node, ir.And):
            emit(node.left)
            emit(node.right)
            code.extend((OP_AND, 0))
        elif isinstance(node, ir.Or):
            emit(node.left)
            emit(node.right)
            code.extend((OP_OR, 0))
        elif isinstance(node, ir.Not):
            emit(node.operand)
            code.extend((OP_NOT, 0))
        else:
            raise TypeError(f"cannot compile {type(node).__name__}")

    emit(e)
    return tuple(code)


def eval_prog(prog: tuple[int, ...], get_slot) -> int:
    """Reference interpreter (the pure kernel and clocked oracle use it)."""
    stack: list[int] = []
    i = 0
    n = len(prog)
    while i < n:
        op = prog[i]
        arg = prog[i + 1]
        i += 2
        if op == OP_CONST:
            stack.append(arg)
        elif op == OP_SLOT:
            stack.append(get_slot(arg))
        elif op == OP_NEG:
            stack.append(-stack.pop())
        elif op == OP_NOT:
            stack.append(0 if stack.pop() else 1)
        else:
            b = stack.pop()
            a = stack.pop()
            if op == OP_ADD:
                stack.append(a + b)
            elif op == OP_SUB:
                stack.append(a - b)
            elif op == OP_MUL:
                stack.append(a * b)
            elif op == OP_MOD:
                if b <= 0:
                    raise KernelError("modulo by non-positive value")
                stack.append(a % b)
            elif op == OP_DIV:
                if b <= 0:
                    raise KernelError("division by non-positive value")
                stack.append(a // b)
            elif op == OP_LT:
                stack.append(1 if a < b else 0)
            elif op == OP_LE:
                stack.append(1 if a <= b else 0)
            elif op == OP_EQ:
                stack.append(1 if a == b else 0)
            elif op == OP_NE:
                stack.append(1 if a != b else 0)
            elif op == OP_GE:
                stack.append(1 if a >= b else 0)
            elif op == OP_GT:
                stack.append(1 if a > b else 0)
            elif op == OP_AND:
                stack.append(1 if (a and b) else 0)
            elif op == OP_OR:
                stack.append(1 if (a or b) else 0)
            else:
                raise KernelError(f"bad opcode {op}")
    return stack[-1]


@dataclass(frozen=True)
class CEdge:
    """Compiled edge; all references are slot/index resolved."""

    index: int
    kind: int
    proc: int
    source: int
    target: int
    guard: tuple[int, ...]
    ukind: int
    ulo: int
    ulo_strict: int
    uhi: int
    uhi_strict: int
    ulo_base: int  # timing slot (global state index) or -1
    uhi_base: int
    capture: tuple[int, ...]  # timing slots (global state indices)
    assigns: tuple[tuple[int, tuple[int, ...]], ...]  # (var global slot, prog)
    channel: int = -1
    message_prog: tuple[int, ...] = ()
    message_var: int = -1  # global slot or -1
    message: int = -1  # calendar message id
    targets: tuple[tuple[int, int], ...] = ()  # (proc, delay)
    sender: int = -1
    origin: str = ""


@dataclass(frozen=True)
class CompiledModel:
    """Integer-table form of a flat model.  Immutable and shareable."""

    n_procs: int
    n_timing: int
    n_vars: int
    cap: int
    max_timeout: int
    max_const: int
    loc_names: tuple[tuple[str, ...], ...]
    proc_names: tuple[str, ...]
    entry: tuple[int, ...]
    timeout_init_choices: tuple[tuple[int, ...], ...]
    timing_init: tuple[int, ...]
    var_lo: tuple[int, ...]
    var_hi: tuple[int, ...]
    var_init_choices: tuple[tuple[int, ...], ...]
    var_names: tuple[str, ...]
    timing_names: tuple[str, ...]
    message_names: tuple[str, ...]
    channel_names: tuple[str, ...]
    edges: tuple[CEdge, ...]
    out_timeout: tuple[tuple[tuple[int, ...], ...], ...]  # [proc][loc] -> edge ids
    out_send: tuple[tuple[tuple[int, ...], ...], ...]
    out_recv: tuple[tuple[tuple[int, ...], ...], ...]
    sync_pairs: tuple[tuple[int, int], ...]  # (send edge id, recv edge id)
    sync_eager: bool
    committed_flag_slot: int  # global state index or -1
    urgent_count_slot: int
    committed_locs: frozenset[tuple[int, int]]
    urgent_locs: frozenset[tuple[int, int]]
    accumulators: tuple[tuple[int, tuple[int, ...]], ...] = ()  # (slot, guard prog)
    # saturating accumulator slots clamp at var_hi instead of erroring
    saturating_slots: frozenset[int] = frozenset()

    # layout offsets
    @property
    def off_timeout(self) -> int:
        return self.n_procs

    @property
    def off_timing(self) -> int:
        return 2 * self.n_procs

    @property
    def off_vars(self) -> int:
        return 2 * self.n_procs + self.n_timing

    @property
    def off_cal(self) -> int:
        return 2 * self.n_procs + self.n_timing + self.n_vars

    @property
    def state_len(self) -> int:
        return self.off_cal + 4 * self.cap

    def loc_slot(self, proc: int) -> int:
        return proc

    def timeout_slot(self, proc: int) -> int:
        return self.n_procs + proc

    def timing_slot(self, idx: int) -> int:
        return 2 * self.n_procs + idx

    def var_slot(self, idx: int) -> int:
        return self.off_vars + idx


def compile_model(fm: ir.FlatModel) -> CompiledModel:
    """Resolve a flat model's names to slots and its expressions to bytecode."""
    n = len(fm.procs)
    k = len(fm.timing)
    v = len(fm.variables)
    off_timing = 2 * n
    off_vars = 2 * n + k

    slot_of: dict[str, int] = {}
    for i, t in enumerate(fm.timing):
        slot_of[t.name] = off_timing + i
    for i, var in enumerate(fm.variables):
        slot_of[var.name] = off_vars + i

    msg_id = {m: i for i, m in enumerate(fm.messages)}
    chan_id = {c: i for i, c in enumerate(fm.channels)}

    edges: list[CEdge] = []
    for idx, e in enumerate(fm.edges):
        u = e.update
        edges.append(
            CEdge(
                index=idx,
                kind=_EDGE_KIND[e.kind],
                proc=e.proc,
                source=e.source,
                target=e.target,
                guard=compile_expr(e.guard, slot_of),
                ukind=_UPDATE_KIND[u.kind],
                ulo=u.lo,
                ulo_strict=int(u.lo_strict),
                uhi=u.hi,
                uhi_strict=int(u.hi_strict),
                ulo_base=off_timing + u.lo_base if u.lo_base >= 0 else -1,
                uhi_base=off_timing + u.hi_base if u.hi_base >= 0 else -1,
                capture=tuple(off_timing + c for c in e.capture),
                assigns=tuple((off_vars + t, compile_expr(r, slot_of)) for t, r in e.assign),
                channel=chan_id.get(e.channel, -1),
                message_prog=compile_expr(e.message_expr, slot_of) if e.message_expr else (),
                message_var=off_vars + e.message_var if e.message_var >= 0 else -1,
                message=msg_id.get(e.message, -1),
                targets=e.cal_targets,
                sender=e.cal_sender,
                origin=f"{fm.procs[e.proc].name}:{e.origin}",
            )
        )

    def bucket(kind: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
        out = []
        for p in range(n):
            per_loc = []
            for l in range(len(fm.procs[p].locations)):
                per_loc.append(
                    tuple(
                        ce.index
                        for ce in edges
                        if ce.proc == p and ce.source == l and ce.kind == kind
                    )
                )
            out.append(tuple(per_loc))
        return tuple(out)

    sync_pairs = tuple(
        (s.index, r.index)
        for s in edges
        if s.kind == K_SYNC_SEND
        for r in edges
        if r.kind == K_SYNC_RECV and r.channel == s.channel and r.proc != s.proc
    )

    return CompiledModel(
        n_procs=n,
        n_timing=k,
        n_vars=v,
        cap=fm.calendar_capacity,
        max_timeout=fm.max_timeout,
        max_const=fm.max_const,
        loc_names=tuple(p.locations for p in fm.procs),
        proc_names=tuple(p.name for p in fm.procs),
        entry=tuple(p.entry for p in fm.procs),
        timeout_init_choices=tuple(p.timeout_init_choices for p in fm.procs),
        timing_init=tuple(t.init for t in fm.timing),
        var_lo=tuple(x.lo for x in fm.variables),
        var_hi=tuple(x.hi for x in fm.variables),
        var_init_choices=tuple(x.init_choices for x in fm.variables),
        var_names=tuple(x.name for x in fm.variables),
        timing_names=tuple(t.name for t in fm.timing),
        message_names=fm.messages,
        channel_names=fm.channels,
        edges=tuple(edges),
        out_timeout=bucket(K_TIMEOUT),
        out_send=bucket(K_CAL_SEND),
        out_recv=bucket(K_CAL_RECV),
        sync_pairs=sync_pairs,
        sync_eager=fm.sync_eager,
        committed_flag_slot=(
            off_vars + fm.committed_flag_var if fm.committed_flag_var >= 0 else -1
        ),
        urgent_count_slot=(
            off_vars + fm.urgent_count_var if fm.urgent_count_var >= 0 else -1
        ),
        committed_locs=fm.committed_locs,
        urgent_locs=fm.urgent_locs,
    )


def update_candidates(
    cm: CompiledModel, state: tuple, edge: CEdge
) -> list[int]:
    """Legal next-expiry offsets for ``edge`` in ``state`` (ascending).

    Interval/lower bounds are shifted down by their base timing variable;
    everything is clamped to [1, max_timeout]; MaxM draws from [1, M+1].
    An empty result is the caller's "unsatisfiable update" model error
    (except where a rendezvous filter empties an otherwise nonempty set).
    """
    mt = cm.max_timeout
    if edge.ukind == U_INF:
        return [mt]
    if edge.ukind == U_MAXM:
        return list(range(1, min(cm.max_const + 1, mt) + 1))
    lo = edge.ulo - (state[edge.ulo_base] if edge.ulo_base >= 0 else 0)
    start = lo + 1 if edge.ulo_strict else lo
    start = max(start, 1)
    if edge.ukind == U_LOWER:
        return list(range(start, mt + 1))
    hi = edge.uhi - (state[edge.uhi_base] if edge.uhi_base >= 0 else 0)
    end = hi - 1 if edge.uhi_strict else hi
    end = min(end, mt)
    return list(range(start, end + 1))
