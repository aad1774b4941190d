"""Typed intermediate representation of timeout/calendar transition models.

A model is a parallel composition of processes, each drawn as a finite graph
of locations.  Every process owns one timeout; a discrete edge fires when the
timeout expires and re-arms it through an update rule.  Processes communicate
by shared variables, rendezvous channels, or a global calendar of in-flight
messages with integer delivery delays.

This module owns:

* the IR types (``Model`` down to ``Expr``),
* ``validate`` -- structural/type diagnostics,
* ``desugar_locations`` -- urgent/committed location lowering,
* ``flatten`` -- parametric family instantiation into a ``FlatModel``,
* ``max_constant`` -- the largest integer used by any update rule.

IR values are treated as immutable once validated; the semantics engines
compile a ``FlatModel`` into table form and never mutate it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


class ModelError(Exception):
    """Raised for semantic errors that make a model unusable.

    Carries the diagnostics that triggered it so CLI callers can render them
    uniformly with validate output.
    """

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.message for d in diagnostics))

    @classmethod
    def single(cls, message: str, where: str = "") -> "ModelError":
        return cls([Diagnostic("error", message, where)])


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding.  ``severity`` is ``error`` or ``warning``."""

    severity: str
    message: str
    where: str = ""
    line: int = 0
    col: int = 0

    def render(self) -> str:
        pos = f":{self.line}:{self.col}" if self.line else ""
        where = f" [{self.where}]" if self.where else ""
        return f"{self.severity}{pos}: {self.message}{where}"


# ============================================================
# Expressions
#
# Integer and boolean expressions over declared identifiers.  The same AST is
# used for guards, assignment right-hand sides, variable bounds, update-rule
# bounds and property atoms; which identifiers are legal depends on context
# and is checked by validate/flatten.
# ============================================================


@dataclass(frozen=True)
class Expr:
    """Base class; all nodes are frozen and hashable."""


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Name(Expr):
    """Reference to a constant, variable, timing variable or family index."""

    ident: str


@dataclass(frozen=True)
class BinOp(Expr):
    """Arithmetic: op in {+, -, *, %, /} (/ is floor division)."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    """Comparison: op in {<, <=, =, !=, >=, >}."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Or(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr


CMP_OPS = {"<", "<=", "=", "!=", ">=", ">"}
ARITH_OPS = {"+", "-", "*", "%", "/"}


class EvalError(Exception):
    """Expression references an unbound name or hits a domain error."""


def eval_expr(e: Expr, env: dict) -> int:
    """Evaluate ``e`` under ``env`` (name -> int).  Booleans are 0/1.

    Modulo and division follow Python floor semantics; the compiled kernels
    replicate this exactly.  A non-positive right operand is a domain error.
    """
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return 1 if e.value else 0
    if isinstance(e, Name):
        try:
            return env[e.ident]
        except KeyError:
            raise EvalError(f"unbound identifier '{e.ident}'") from None
    if isinstance(e, BinOp):
        a, b = eval_expr(e.left, env), eval_expr(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "%":
            if b <= 0:
                raise EvalError("modulo by non-positive value")
            return a % b
        if e.op == "/":
            if b <= 0:
                raise EvalError("division by non-positive value")
            return a // b
        raise EvalError(f"unknown operator {e.op!r}")
    if isinstance(e, Neg):
        return -eval_expr(e.operand, env)
    if isinstance(e, Cmp):
        a, b = eval_expr(e.left, env), eval_expr(e.right, env)
        return int(
            {"<": a < b, "<=": a <= b, "=": a == b, "!=": a != b, ">=": a >= b, ">": a > b}[e.op]
        )
    if isinstance(e, And):
        return int(bool(eval_expr(e.left, env)) and bool(eval_expr(e.right, env)))
    if isinstance(e, Or):
        return int(bool(eval_expr(e.left, env)) or bool(eval_expr(e.right, env)))
    if isinstance(e, Not):
        return int(not eval_expr(e.operand, env))
    raise EvalError(f"unknown expression node {type(e).__name__}")


def expr_names(e: Expr) -> set[str]:
    """All identifiers referenced by ``e``."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Name):
            out.add(n.ident)
        elif isinstance(n, (BinOp, Cmp, And, Or)):
            stack.append(n.left)
            stack.append(n.right)
        elif isinstance(n, (Neg, Not)):
            stack.append(n.operand)
    return out


def subst_expr(e: Expr, bindings: dict[str, int]) -> Expr:
    """Replace bound names by literals (used when instantiating families)."""
    if isinstance(e, Name) and e.ident in bindings:
        return IntLit(bindings[e.ident])
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.left, bindings), subst_expr(e.right, bindings))
    if isinstance(e, Neg):
        return Neg(subst_expr(e.operand, bindings))
    if isinstance(e, Cmp):
        return Cmp(e.op, subst_expr(e.left, bindings), subst_expr(e.right, bindings))
    if isinstance(e, And):
        return And(subst_expr(e.left, bindings), subst_expr(e.right, bindings))
    if isinstance(e, Or):
        return Or(subst_expr(e.left, bindings), subst_expr(e.right, bindings))
    if isinstance(e, Not):
        return Not(subst_expr(e.operand, bindings))
    return e


def rename_expr(e: Expr, mapping: dict[str, str]) -> Expr:
    """Rewrite identifier references (used to rename locals apart)."""
    if isinstance(e, Name):
        return Name(mapping.get(e.ident, e.ident))
    if isinstance(e, BinOp):
        return BinOp(e.op, rename_expr(e.left, mapping), rename_expr(e.right, mapping))
    if isinstance(e, Neg):
        return Neg(rename_expr(e.operand, mapping))
    if isinstance(e, Cmp):
        return Cmp(e.op, rename_expr(e.left, mapping), rename_expr(e.right, mapping))
    if isinstance(e, And):
        return And(rename_expr(e.left, mapping), rename_expr(e.right, mapping))
    if isinstance(e, Or):
        return Or(rename_expr(e.left, mapping), rename_expr(e.right, mapping))
    if isinstance(e, Not):
        return Not(rename_expr(e.operand, mapping))
    return e


# ============================================================
# Update rules
#
# The next-expiry offset delta of a fired timeout is drawn from one of four
# rule shapes.  Bounds are expressions so templates can write them in terms
# of constants and the family index; they resolve to naturals per instance.
# An optional base names a captured timing variable whose value shifts the
# bound (written `l+w` in the surface syntax, subtracted at evaluation time
# because the stored form is the clockless one).
# ============================================================


@dataclass(frozen=True)
class Interval:
    """delta strictly/weakly between two shifted bounds."""

    lo: Expr
    lo_strict: bool
    hi: Expr
    hi_strict: bool
    lo_base: Optional[str] = None
    hi_base: Optional[str] = None


@dataclass(frozen=True)
class LowerBound:
    """delta above a shifted bound, capped by the system-wide max timeout."""

    lo: Expr
    strict: bool
    base: Optional[str] = None


@dataclass(frozen=True)
class Infinity:
    """Indefinite wait: resolves to the system-wide max timeout."""


@dataclass(frozen=True)
class MaxM:
    """Any future point: delta in [1, M+1] where M = max_constant(model)."""


UpdateRule = Union[Interval, LowerBound, Infinity, MaxM]


# ============================================================
# Edge actions
# ============================================================

Assignment = tuple[str, Expr]


@dataclass(frozen=True)
class TimeoutAction:
    """Plain timeout edge: re-arm own timeout, capture, assign."""

    update: UpdateRule
    capture: tuple[str, ...] = ()
    assign: tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class SyncSend:
    """Rendezvous send half: `sync ch!expr`."""

    channel: str
    message: Expr
    update: UpdateRule
    capture: tuple[str, ...] = ()
    assign: tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class SyncRecv:
    """Rendezvous receive half: `sync ch?var` (var ``None`` discards)."""

    channel: str
    message_var: Optional[str]
    update: UpdateRule
    capture: tuple[str, ...] = ()
    assign: tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class SendTarget:
    """One (receiver, delay) pair; receiver is a family index expression."""

    receiver: Expr
    delay: Expr


@dataclass(frozen=True)
class SendComprehension:
    """`{(j, d) : j in lo..hi, cond}` -- expands per family index at flatten."""

    binder: str
    lo: Expr
    hi: Expr
    cond: Optional[Expr]
    delay: Expr


@dataclass(frozen=True)
class CalSend:
    """Post a message to the calendar for each target, with its delay."""

    message: str
    targets: tuple[Union[SendTarget, SendComprehension], ...]
    update: UpdateRule
    capture: tuple[str, ...] = ()
    assign: tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class CalRecv:
    """Consume a due calendar entry.

    ``sender`` is a family-index expression, or a fresh identifier acting as a
    binder: the edge then matches any sender and the binder is bound to the
    actual sender index inside assignment right-hand sides.  Binder edges are
    expanded to one edge per possible sender during flattening.
    """

    message: str
    sender: Expr
    update: UpdateRule
    capture: tuple[str, ...] = ()
    assign: tuple[Assignment, ...] = ()


Action = Union[TimeoutAction, SyncSend, SyncRecv, CalSend, CalRecv]


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    guard: Expr
    action: Action
    # source line for diagnostics; excluded from structural equality
    line: int = field(default=0, compare=False)


# ============================================================
# Declarations
# ============================================================


@dataclass(frozen=True)
class VarDecl:
    """Bounded integer variable.  Bounds/init resolve against constants.

    Invariant (checked after resolution): lo <= init <= hi.  ``init_choices``
    holds the enumerated initial values; a singleton for ordinary variables.
    """

    name: str
    lo: Expr
    hi: Expr
    init_choices: tuple[Expr, ...]


@dataclass(frozen=True)
class Location:
    """kind is ``normal``, ``urgent`` or ``committed`` (pre-desugar only)."""

    id: str
    kind: str = "normal"


@dataclass(frozen=True)
class InitSpec:
    """Initial choices for the process timeout and timing variables."""

    timeout_choices: tuple[Expr, ...]
    timing_init: tuple[tuple[str, Expr], ...] = ()


@dataclass(frozen=True)
class ProcessTemplate:
    name: str
    locations: tuple[Location, ...]
    entry: str
    edges: tuple[Edge, ...]
    init: InitSpec
    param: Optional[str] = None
    param_lo: Optional[Expr] = None
    param_hi: Optional[Expr] = None
    locals: tuple[VarDecl, ...] = ()
    timing_vars: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChannelDecl:
    name: str


@dataclass(frozen=True)
class ConstDecl:
    name: str
    value: Expr


@dataclass(frozen=True)
class PropertyDecl:
    """kind is ``invariant`` or ``ltl``; formula text is parsed by the checker."""

    name: str
    kind: str
    formula: str


@dataclass(frozen=True)
class UrgencyInfo:
    """Desugaring record: which (process, location) pairs were urgent or
    committed, and the names of the injected control variables."""

    committed: frozenset[tuple[str, str]] = frozenset()
    urgent: frozenset[tuple[str, str]] = frozenset()
    committed_flag: Optional[str] = None
    urgent_count: Optional[str] = None


COMMITTED_FLAG = "committed_flag"
URGENT_COUNT = "urgent_count"


@dataclass(frozen=True)
class Model:
    """A whole specification: constants, processes, shared state, properties.

    Invariants (enforced by ``validate``):
      * identifiers unique within their namespace,
      * max_timeout >= every integer constant in any update rule,
      * calendar_capacity > 0 whenever send/receive edges exist.
    """

    name: str
    max_timeout: Expr
    consts: tuple[ConstDecl, ...] = ()
    globals: tuple[VarDecl, ...] = ()
    channels: tuple[ChannelDecl, ...] = ()
    processes: tuple[ProcessTemplate, ...] = ()
    calendar_capacity: Expr = IntLit(0)
    properties: tuple[PropertyDecl, ...] = ()
    sync_eager: bool = False
    urgency: Optional[UrgencyInfo] = None

    def const_env(self, bindings: Optional[dict[str, int]] = None) -> dict[str, int]:
        """Constant name -> value, applying ``bindings`` overrides in
        declaration order so derived constants see overridden ones."""
        bindings = bindings or {}
        env: dict[str, int] = {}
        for c in self.consts:
            if c.name in bindings:
                env[c.name] = bindings[c.name]
            else:
                env[c.name] = eval_expr(c.value, env)
        for k, v in bindings.items():
            if k not in env:
                env[k] = v
        return env


# ============================================================
# Flat (instantiated) form
# ============================================================


@dataclass(frozen=True)
class FlatVar:
    name: str
    lo: int
    hi: int
    init_choices: tuple[int, ...]
    owner: Optional[int] = None  # process index for locals, None for globals


@dataclass(frozen=True)
class FlatTimingVar:
    name: str
    owner: int
    init: int


@dataclass(frozen=True)
class FlatUpdate:
    """An update rule with integer bounds and timing-var slots resolved.

    kind: "interval" | "lower" | "inf" | "maxm".  For interval/lower, ``lo``
    (and ``hi``) hold the resolved constants; ``lo_base``/``hi_base`` index
    the flat timing-variable table or are -1.
    """

    kind: str
    lo: int = 0
    lo_strict: bool = False
    hi: int = 0
    hi_strict: bool = False
    lo_base: int = -1
    hi_base: int = -1


@dataclass(frozen=True)
class FlatEdge:
    """Fully resolved edge: locations and variables by index.

    ``kind``: timeout | sync_send | sync_recv | cal_send | cal_recv.
    ``guard``/``assign`` expressions reference flat variable names.
    ``capture`` indexes the flat timing table.  Calendar targets/senders are
    flat process indices; delays are resolved naturals.
    """

    proc: int
    source: int
    target: int
    kind: str
    guard: Expr
    update: FlatUpdate
    capture: tuple[int, ...] = ()
    assign: tuple[tuple[int, Expr], ...] = ()  # (flat var index, rhs)
    channel: str = ""
    message_expr: Optional[Expr] = None  # sync send payload
    message_var: int = -1  # sync recv destination var (-1 discards)
    message: str = ""  # calendar message name
    cal_targets: tuple[tuple[int, int], ...] = ()  # (flat proc index, delay)
    cal_sender: int = -1  # flat proc index for cal_recv
    origin: str = ""  # template-level description for labels/diagnostics


@dataclass(frozen=True)
class FlatProcess:
    name: str
    locations: tuple[str, ...]
    entry: int
    timeout_init_choices: tuple[int, ...]
    template: str = ""
    family_index: int = 0  # 1-based within family; 0 for singletons


@dataclass(frozen=True)
class FlatModel:
    """Instantiated model: the unit the semantics engines consume."""

    name: str
    max_timeout: int
    max_const: int
    procs: tuple[FlatProcess, ...]
    variables: tuple[FlatVar, ...]
    timing: tuple[FlatTimingVar, ...]
    edges: tuple[FlatEdge, ...]
    channels: tuple[str, ...]
    messages: tuple[str, ...]
    calendar_capacity: int
    properties: tuple[PropertyDecl, ...] = ()
    sync_eager: bool = False
    committed_locs: frozenset[tuple[int, int]] = frozenset()
    urgent_locs: frozenset[tuple[int, int]] = frozenset()
    committed_flag_var: int = -1
    urgent_count_var: int = -1
    family_sizes: tuple[tuple[str, int], ...] = ()
    const_values: tuple[tuple[str, int], ...] = ()

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def proc_index(self, name: str) -> int:
        for i, p in enumerate(self.procs):
            if p.name == name:
                return i
        raise KeyError(name)

    def timing_index(self, name: str) -> int:
        for i, t in enumerate(self.timing):
            if t.name == name:
                return i
        raise KeyError(name)


def proc_instance_name(template: str, index: Optional[int]) -> str:
    return template if index is None else f"{template}[{index}]"


def local_var_name(proc_name: str, var: str) -> str:
    return f"{proc_name}.{var}"


# ============================================================
# validate
# ============================================================


def _rule_consts(rule: UpdateRule) -> Iterator[Expr]:
    if isinstance(rule, Interval):
        yield rule.lo
        yield rule.hi
    elif isinstance(rule, LowerBound):
        yield rule.lo


def _action_parts(
    action: Action,
) -> tuple[UpdateRule, tuple[str, ...], tuple[Assignment, ...]]:
    return action.update, action.capture, action.assign


def validate(model: Model) -> list[Diagnostic]:
    """Check every structural invariant; empty result means well-formed.

    Diagnostics never raise: a broken model yields findings, and callers
    decide whether warnings are acceptable.  Bounds that depend on the family
    index cannot be checked here and are re-checked during flattening.
    """
    diags: list[Diagnostic] = []
    err = lambda msg, where="": diags.append(Diagnostic("error", msg, where))
    warn = lambda msg, where="": diags.append(Diagnostic("warning", msg, where))

    try:
        consts = model.const_env()
    except EvalError as e:
        err(f"constant declarations do not evaluate: {e}", "consts")
        consts = {}

    def const_eval(e: Expr, extra: Optional[dict[str, int]] = None) -> Optional[int]:
        env = dict(consts)
        if extra:
            env.update(extra)
        try:
            return eval_expr(e, env)
        except EvalError:
            return None

    max_timeout = const_eval(model.max_timeout)
    if max_timeout is None or max_timeout < 1:
        err("max_timeout must be a positive constant", "model")
        max_timeout = None

    # namespace uniqueness
    seen: dict[str, str] = {}
    for kind, names in (
        ("const", [c.name for c in model.consts]),
        ("global", [g.name for g in model.globals]),
        ("channel", [c.name for c in model.channels]),
        ("process", [p.name for p in model.processes]),
        ("property", [p.name for p in model.properties]),
    ):
        local_seen: set[str] = set()
        for n in names:
            if n in local_seen:
                err(f"duplicate {kind} name '{n}'", kind)
            local_seen.add(n)
            seen[n] = kind

    def check_var(v: VarDecl, where: str, extra: Optional[dict[str, int]] = None) -> None:
        lo, hi = const_eval(v.lo, extra), const_eval(v.hi, extra)
        if lo is None or hi is None:
            if not _mentions_param(v, model):
                err(f"variable '{v.name}' bounds do not evaluate", where)
            return
        if lo > hi:
            err(f"variable '{v.name}' has empty range [{lo}, {hi}]", where)
            return
        for init in v.init_choices:
            iv = const_eval(init, extra)
            if iv is None:
                continue
            if not lo <= iv <= hi:
                err(f"variable '{v.name}' init {iv} outside [{lo}, {hi}]", where)

    for g in model.globals:
        check_var(g, "globals")

    has_calendar_edges = False
    urgent_proc_count = 0
    for p in model.processes:
        where = f"process {p.name}"
        loc_ids = [l.id for l in p.locations]
        if len(set(loc_ids)) != len(loc_ids):
            err("duplicate location ids", where)
        loc_set = set(loc_ids)
        if p.entry not in loc_set:
            err(f"entry location '{p.entry}' not declared", where)
        local_names = {v.name for v in p.locals}
        timing = set(p.timing_vars)
        if timing & local_names:
            err("timing variables overlap local variables", where)
        if timing & {g.name for g in model.globals} or local_names & {
            g.name for g in model.globals
        }:
            err("process-level names shadow globals", where)
        for v in p.locals:
            check_var(v, where, extra={p.param: 1} if p.param else None)

        legal_names = (
            set(consts)
            | {g.name for g in model.globals}
            | local_names
            | timing
            | ({p.param} if p.param else set())
        )

        if any(l.kind == "urgent" for l in p.locations):
            urgent_proc_count += 1

        if not p.init.timeout_choices:
            err("process has no initial timeout choice", where)
        for tc in p.init.timeout_choices:
            v = const_eval(tc, {p.param: 1} if p.param else None)
            if v is not None and v < 0:
                err("initial timeout must be >= 0", where)
            if v is not None and max_timeout is not None and v > max_timeout:
                err(f"initial timeout {v} exceeds max_timeout", where)
        timing_inited = {n for n, _ in p.init.timing_init}
        for n, e in p.init.timing_init:
            if n not in timing:
                err(f"init for undeclared timing variable '{n}'", where)
            v = const_eval(e, {p.param: 1} if p.param else None)
            if v is not None and not (0 <= v <= (max_timeout or v)):
                err(f"timing variable '{n}' init outside [0, max_timeout]", where)
        for n in timing - timing_inited:
            err(f"timing variable '{n}' lacks an init", where)

        for idx, edge in enumerate(p.edges):
            ewhere = f"{where}/edge {idx} ({edge.source}->{edge.target})"
            if edge.source not in loc_set:
                err(f"edge source '{edge.source}' not declared", ewhere)
            if edge.target not in loc_set:
                err(f"edge target '{edge.target}' not declared", ewhere)
            update, capture, assign = _action_parts(edge.action)
            for c in capture:
                if c not in timing:
                    err(f"capture of undeclared timing variable '{c}'", ewhere)
            binder: set[str] = set()
            if isinstance(edge.action, CalRecv):
                has_calendar_edges = True
                if edge.guard != BoolLit(True):
                    err("receive edges must have guard 'true'", ewhere)
                s = edge.action.sender
                if isinstance(s, Name) and s.ident not in legal_names and s.ident not in {
                    q.name for q in model.processes
                }:
                    binder = {s.ident}
            if isinstance(edge.action, CalSend):
                has_calendar_edges = True
                for t in edge.action.targets:
                    if isinstance(t, SendComprehension):
                        binder |= {t.binder}
                        d = const_eval(t.delay, {t.binder: 1, **({p.param: 1} if p.param else {})})
                    else:
                        d = const_eval(t.delay, {p.param: 1} if p.param else None)
                    if d is not None:
                        if d < 1:
                            err("message delay must be >= 1", ewhere)
                        elif max_timeout is not None and d > max_timeout:
                            err(f"message delay {d} exceeds max_timeout", ewhere)
            if isinstance(edge.action, (SyncSend, SyncRecv)):
                if edge.action.channel not in {c.name for c in model.channels}:
                    err(f"undeclared channel '{edge.action.channel}'", ewhere)
            if isinstance(edge.action, SyncRecv) and edge.action.message_var is not None:
                if edge.action.message_var not in local_names:
                    err(
                        f"sync receive destination '{edge.action.message_var}' "
                        "is not a local variable",
                        ewhere,
                    )

            scope = legal_names | binder
            for e2, what in [(edge.guard, "guard")] + [
                (rhs, f"assignment to '{tgt}'") for tgt, rhs in assign
            ]:
                missing = expr_names(e2) - scope
                if missing:
                    err(f"{what} references undeclared {sorted(missing)}", ewhere)
            for tgt, _ in assign:
                if tgt not in local_names and tgt not in {g.name for g in model.globals}:
                    err(f"assignment target '{tgt}' is not a variable", ewhere)

            # update rule constants: nonempty over positive reals (base = 0),
            # and within max_timeout
            for ce in _rule_consts(update):
                names = expr_names(ce) - set(consts) - ({p.param} if p.param else set())
                names -= timing  # bases are stored separately, not in bounds
                if names:
                    err(f"update bound references undeclared {sorted(names)}", ewhere)
            if isinstance(update, (Interval, LowerBound)):
                for base in (
                    [update.lo_base, update.hi_base]
                    if isinstance(update, Interval)
                    else [update.base]
                ):
                    if base is not None and base not in timing:
                        err(f"update base '{base}' is not a timing variable", ewhere)
            if isinstance(update, Interval):
                extra = {p.param: 1} if p.param else None
                lo, hi = const_eval(update.lo, extra), const_eval(update.hi, extra)
                if lo is not None and hi is not None:
                    # dense nonemptiness of the positive part, for base = 0
                    top = hi if not update.hi_strict else hi  # closed test below
                    empty = hi < lo or (hi == lo and (update.lo_strict or update.hi_strict))
                    if empty or top <= 0:
                        err(f"empty interval ({lo}, {hi})", ewhere)
                    if max_timeout is not None and max(lo, hi) > max_timeout:
                        err("interval bound exceeds max_timeout", ewhere)
            if isinstance(update, LowerBound):
                lo = const_eval(update.lo, {p.param: 1} if p.param else None)
                if lo is not None and max_timeout is not None and lo > max_timeout:
                    err("lower bound exceeds max_timeout; no legal delta", ewhere)

        # committed locations need an exit; simultaneous committed entry via a
        # rendezvous pair is ambiguous (flag can hold one process only)
        for l in p.locations:
            if l.kind not in ("normal", "urgent", "committed"):
                err(f"unknown location kind '{l.kind}'", where)
            if l.kind == "committed" and not any(e.source == l.id for e in p.edges):
                err(f"committed location '{l.id}' has no outgoing edge", where)

    cap = const_eval(model.calendar_capacity)
    if cap is None or cap < 0:
        err("calendar capacity must be a non-negative constant", "model")
    elif has_calendar_edges and cap == 0:
        err("send/receive edges require calendar capacity > 0", "model")

    # rendezvous pairs entering marked locations simultaneously
    marked = {
        (p.name, l.id)
        for p in model.processes
        for l in p.locations
        if l.kind in ("urgent", "committed")
    }
    if marked:
        senders = [
            (p.name, e)
            for p in model.processes
            for e in p.edges
            if isinstance(e.action, SyncSend)
        ]
        recvs = [
            (p.name, e)
            for p in model.processes
            for e in p.edges
            if isinstance(e.action, SyncRecv)
        ]
        for sp, se in senders:
            for rp, re in recvs:
                if sp == rp or se.action.channel != re.action.channel:
                    continue
                if (sp, se.target) in marked and (rp, re.target) in marked:
                    err(
                        "rendezvous pair enters two urgent/committed locations "
                        f"simultaneously (channel '{se.action.channel}')",
                        f"process {sp}",
                    )

    # integer constants in update rules vs max_timeout
    if max_timeout is not None:
        m = _max_rule_constant(model, consts)
        if m is not None and m > max_timeout:
            err(f"update-rule constant {m} exceeds max_timeout {max_timeout}", "model")

    return diags


def _mentions_param(v: VarDecl, model: Model) -> bool:
    params = {p.param for p in model.processes if p.param}
    names = expr_names(v.lo) | expr_names(v.hi)
    for e in v.init_choices:
        names |= expr_names(e)
    return bool(names & params)


def _max_rule_constant(model: Model, consts: dict[str, int]) -> Optional[int]:
    """Largest resolvable update-rule bound, probing family index 1."""
    best: Optional[int] = None
    for p in model.processes:
        extra = {p.param: 1} if p.param else {}
        for e in p.edges:
            update = e.action.update
            for ce in _rule_consts(update):
                try:
                    v = eval_expr(ce, {**consts, **extra})
                except EvalError:
                    continue
                best = v if best is None else max(best, v)
    return best


# ============================================================
# max_constant
# ============================================================


def max_constant(model: Model, bindings: Optional[dict[str, int]] = None) -> int:
    """M: the maximum integer bound across all update rules (0 if none).

    Family-indexed bounds are maximized over the bound family range.  MaxM
    update rules draw from [1, M+1] capped at max_timeout; Infinity resolves
    to max_timeout itself.
    """
    consts = model.const_env(bindings)
    best = 0
    for p in model.processes:
        if p.param:
            lo = eval_expr(p.param_lo, consts) if p.param_lo is not None else 1
            hi = eval_expr(p.param_hi, consts) if p.param_hi is not None else lo
            indices = range(lo, hi + 1)
        else:
            indices = range(0, 1)
        for e in p.edges:
            for ce in _rule_consts(e.action.update):
                for i in indices:
                    env = dict(consts)
                    if p.param:
                        env[p.param] = i
                    best = max(best, eval_expr(ce, env))
    return best


# ============================================================
# desugar_locations
# ============================================================


def desugar_locations(model: Model) -> Model:
    """Lower urgent/committed locations to plain ones.

    Every edge *entering* a marked location gets its update forced to the
    one-step interval [1,1] (the value is dead: exits fire immediately via the
    urgency mechanism) and an injected assignment raising the control
    variable; every edge *leaving* one lowers it again.  Committed locations
    additionally guard every other process's edges with
    ``committed_flag != 1``.  Time progress is blocked while either control
    variable is raised; the semantics engines treat a process sitting at a
    marked location as expired ("committed bypass") so its exits fire in the
    same instant.

    Models without marked locations are returned unchanged.
    """
    marked = {
        (p.name, l.id): l.kind
        for p in model.processes
        for l in p.locations
        if l.kind != "normal"
    }
    if not marked:
        return model

    diags = [d for d in validate(model) if d.severity == "error"]
    if diags:
        raise ModelError(diags)

    any_committed = any(k == "committed" for k in marked.values())
    any_urgent = any(k == "urgent" for k in marked.values())
    new_globals = list(model.globals)
    if any_committed:
        new_globals.append(
            VarDecl(COMMITTED_FLAG, IntLit(0), IntLit(1), (IntLit(0),))
        )
    if any_urgent:
        n_procs_bound = len(model.processes) * 64  # safe cap; real count set at flatten
        new_globals.append(
            VarDecl(URGENT_COUNT, IntLit(0), IntLit(n_procs_bound), (IntLit(0),))
        )

    def lower(p: ProcessTemplate) -> ProcessTemplate:
        new_edges = []
        for e in p.edges:
            update, capture, assign = _action_parts(e.action)
            guard = e.guard
            add_assign: list[Assignment] = []
            tgt_kind = marked.get((p.name, e.target))
            src_kind = marked.get((p.name, e.source))
            if tgt_kind == "committed":
                update = Interval(IntLit(1), False, IntLit(1), False)
                add_assign.append((COMMITTED_FLAG, IntLit(1)))
            elif tgt_kind == "urgent":
                update = Interval(IntLit(1), False, IntLit(1), False)
                add_assign.append((URGENT_COUNT, BinOp("+", Name(URGENT_COUNT), IntLit(1))))
            if src_kind == "committed" and tgt_kind != "committed":
                add_assign.append((COMMITTED_FLAG, IntLit(0)))
            if src_kind == "urgent" and tgt_kind != "urgent":
                add_assign.append((URGENT_COUNT, BinOp("-", Name(URGENT_COUNT), IntLit(1))))
            if any_committed and src_kind != "committed":
                guard = (
                    Cmp("!=", Name(COMMITTED_FLAG), IntLit(1))
                    if guard == BoolLit(True)
                    else And(guard, Cmp("!=", Name(COMMITTED_FLAG), IntLit(1)))
                )
            if add_assign:
                action = dataclasses.replace(
                    e.action, update=update, assign=tuple(assign) + tuple(add_assign)
                )
            elif update is not e.action.update:
                action = dataclasses.replace(e.action, update=update)
            else:
                action = e.action
            new_edges.append(dataclasses.replace(e, guard=guard, action=action))
        return dataclasses.replace(
            p,
            locations=tuple(Location(l.id, "normal") for l in p.locations),
            edges=tuple(new_edges),
        )

    info = UrgencyInfo(
        committed=frozenset(k for k, v in marked.items() if v == "committed"),
        urgent=frozenset(k for k, v in marked.items() if v == "urgent"),
        committed_flag=COMMITTED_FLAG if any_committed else None,
        urgent_count=URGENT_COUNT if any_urgent else None,
    )
    return dataclasses.replace(
        model,
        globals=tuple(new_globals),
        processes=tuple(lower(p) for p in model.processes),
        urgency=info,
    )


# ============================================================
# flatten
# ============================================================


def flatten(model: Model, bindings: Optional[dict[str, int]] = None) -> FlatModel:
    """Instantiate parametric families into a concrete flat model.

    Each family member gets its own copy of locations, edges, locals and
    timing variables, renamed apart as ``template[i].name``; the family index
    is substituted into every expression.  Raises ``ModelError`` for missing
    bindings, unresolvable expressions, or resolved values that violate the
    bounds that could not be checked statically.

    Flattening an already-flat model (all families of size one, or no
    parameters) is the identity up to renaming, and is idempotent.
    """
    model = desugar_locations(model)
    bindings = dict(bindings or {})
    try:
        consts = model.const_env(bindings)
    except EvalError as e:
        raise ModelError.single(f"constants do not evaluate: {e}") from None

    def resolve(e: Expr, env: dict[str, int], what: str) -> int:
        try:
            return eval_expr(e, env)
        except EvalError as exc:
            raise ModelError.single(f"{what}: {exc}") from None

    max_timeout = resolve(model.max_timeout, consts, "max_timeout")
    if max_timeout < 1:
        raise ModelError.single("max_timeout must be >= 1")
    mconst = max_constant(model, bindings)
    if mconst > max_timeout:
        raise ModelError.single(
            f"update-rule constant {mconst} exceeds max_timeout {max_timeout}"
        )
    cap = resolve(model.calendar_capacity, consts, "calendar capacity")

    # enumerate process instances
    instances: list[tuple[ProcessTemplate, Optional[int]]] = []
    family_sizes: list[tuple[str, int]] = []
    for p in model.processes:
        if p.param is None:
            instances.append((p, None))
            continue
        lo = resolve(p.param_lo, consts, f"family {p.name} range") if p.param_lo else 1
        hi_expr = p.param_hi
        if hi_expr is None:
            raise ModelError.single(f"family {p.name} lacks a size bound")
        hi = resolve(hi_expr, consts, f"family {p.name} range")
        if hi < lo:
            raise ModelError.single(
                f"family {p.name} range {lo}..{hi} is empty (need N >= 1)"
            )
        family_sizes.append((p.name, hi - lo + 1))
        for i in range(lo, hi + 1):
            instances.append((p, i))

    proc_names = [proc_instance_name(p.name, i) for p, i in instances]
    proc_index = {n: k for k, n in enumerate(proc_names)}
    # index instances of the same family by family index for calendar refs
    family_members: dict[str, dict[int, int]] = {}
    for k, (p, i) in enumerate(instances):
        if i is not None:
            family_members.setdefault(p.name, {})[i] = k

    variables: list[FlatVar] = []
    var_index: dict[str, int] = {}

    def add_var(v: VarDecl, owner: Optional[int], env: dict[str, int], rename: str) -> None:
        lo = resolve(v.lo, env, f"bounds of {rename}")
        hi = resolve(v.hi, env, f"bounds of {rename}")
        inits = tuple(resolve(e, env, f"init of {rename}") for e in v.init_choices)
        if lo > hi or any(not lo <= iv <= hi for iv in inits):
            raise ModelError.single(f"variable {rename}: init outside [{lo}, {hi}]")
        var_index[rename] = len(variables)
        variables.append(FlatVar(rename, lo, hi, inits, owner))

    for g in model.globals:
        add_var(g, None, consts, g.name)

    timing: list[FlatTimingVar] = []
    timing_index: dict[str, int] = {}

    procs: list[FlatProcess] = []
    edges: list[FlatEdge] = []
    messages: set[str] = set()

    for k, (tmpl, fam_i) in enumerate(instances):
        pname = proc_names[k]
        env = dict(consts)
        if fam_i is not None:
            env[tmpl.param] = fam_i
        rename_map: dict[str, str] = {}
        for v in tmpl.locals:
            rn = local_var_name(pname, v.name)
            rename_map[v.name] = rn
            add_var(v, k, env, rn)
        timing_inits = dict(tmpl.init.timing_init)
        for tv in tmpl.timing_vars:
            rn = local_var_name(pname, tv)
            rename_map[tv] = rn
            init = resolve(timing_inits[tv], env, f"init of {rn}")
            if not 0 <= init <= max_timeout:
                raise ModelError.single(f"timing variable {rn} init outside domain")
            timing_index[rn] = len(timing)
            timing.append(FlatTimingVar(rn, k, init))

        loc_ids = [l.id for l in tmpl.locations]
        loc_index = {l: i for i, l in enumerate(loc_ids)}
        tchoices = tuple(
            resolve(e, env, f"initial timeout of {pname}") for e in tmpl.init.timeout_choices
        )
        for tv in tchoices:
            if not 0 <= tv <= max_timeout:
                raise ModelError.single(f"{pname}: initial timeout {tv} outside domain")
        procs.append(
            FlatProcess(
                pname,
                tuple(loc_ids),
                loc_index[tmpl.entry],
                tchoices,
                template=tmpl.name,
                family_index=fam_i or 0,
            )
        )

        def res_update(u: UpdateRule, env: dict[str, int]) -> FlatUpdate:
            if isinstance(u, Interval):
                return FlatUpdate(
                    "interval",
                    lo=resolve(u.lo, env, "update bound"),
                    lo_strict=u.lo_strict,
                    hi=resolve(u.hi, env, "update bound"),
                    hi_strict=u.hi_strict,
                    lo_base=timing_index[rename_map[u.lo_base]] if u.lo_base else -1,
                    hi_base=timing_index[rename_map[u.hi_base]] if u.hi_base else -1,
                )
            if isinstance(u, LowerBound):
                return FlatUpdate(
                    "lower",
                    lo=resolve(u.lo, env, "update bound"),
                    lo_strict=u.strict,
                    lo_base=timing_index[rename_map[u.base]] if u.base else -1,
                )
            if isinstance(u, Infinity):
                return FlatUpdate("inf")
            return FlatUpdate("maxm")

        def flatten_edge(e: Edge, env: dict[str, int], extra_rename: dict[str, str]) -> None:
            rmap = {**rename_map, **extra_rename}
            subst = {n: v for n, v in env.items() if n not in consts or n == tmpl.param}
            # substitute param/binder values first, then rename locals
            def fix(x: Expr) -> Expr:
                return rename_expr(subst_expr(x, {**consts, **subst}), rmap)

            update, capture, assign = _action_parts(e.action)
            fedge_kwargs = dict(
                proc=k,
                source=loc_index[e.source],
                target=loc_index[e.target],
                guard=fix(e.guard),
                update=res_update(update, env),
                capture=tuple(timing_index[rmap[c]] for c in capture),
                assign=tuple((var_index[rmap.get(t, t)], fix(r)) for t, r in assign),
                origin=f"{e.source}->{e.target}",
            )
            a = e.action
            if isinstance(a, TimeoutAction):
                edges.append(FlatEdge(kind="timeout", **fedge_kwargs))
            elif isinstance(a, SyncSend):
                edges.append(
                    FlatEdge(kind="sync_send", channel=a.channel, message_expr=fix(a.message), **fedge_kwargs)
                )
            elif isinstance(a, SyncRecv):
                mv = var_index[rmap[a.message_var]] if a.message_var else -1
                edges.append(
                    FlatEdge(kind="sync_recv", channel=a.channel, message_var=mv, **fedge_kwargs)
                )
            elif isinstance(a, CalSend):
                messages.add(a.message)
                targets: list[tuple[int, int]] = []
                for t in a.targets:
                    if isinstance(t, SendTarget):
                        tgt = _resolve_proc_ref(
                            t.receiver, env, tmpl, proc_index, family_members, pname
                        )
                        delay = resolve(t.delay, env, "message delay")
                        targets.append((tgt, delay))
                    else:
                        lo = resolve(t.lo, env, "target range")
                        hi = resolve(t.hi, env, "target range")
                        for j in range(lo, hi + 1):
                            jenv = {**env, t.binder: j}
                            if t.cond is not None and not eval_expr(t.cond, jenv):
                                continue
                            tgt = _resolve_proc_ref(
                                Name(t.binder), jenv, tmpl, proc_index, family_members, pname
                            )
                            targets.append((tgt, resolve(t.delay, jenv, "message delay")))
                for _, d in targets:
                    if not 1 <= d <= max_timeout:
                        raise ModelError.single(
                            f"{pname}: message delay {d} outside [1, max_timeout]"
                        )
                edges.append(
                    FlatEdge(kind="cal_send", message=a.message, cal_targets=tuple(targets), **fedge_kwargs)
                )
            elif isinstance(a, CalRecv):
                messages.add(a.message)
                sender = _resolve_proc_ref(
                    a.sender, env, tmpl, proc_index, family_members, pname
                )
                edges.append(
                    FlatEdge(kind="cal_recv", message=a.message, cal_sender=sender, **fedge_kwargs)
                )

        for e in tmpl.edges:
            a = e.action
            if isinstance(a, CalRecv) and _is_binder(a.sender, env, model, tmpl):
                binder = a.sender.ident  # type: ignore[union-attr]
                fam = family_members.get(tmpl.name, {})
                if not fam:
                    raise ModelError.single(
                        f"{pname}: receive-from-any needs a process family"
                    )
                for j in sorted(fam):
                    if fam_i is not None and j == fam_i:
                        continue
                    e2 = dataclasses.replace(
                        e, action=dataclasses.replace(a, sender=IntLit(j))
                    )
                    flatten_edge(e2, {**env, binder: j}, {})
            else:
                flatten_edge(e, env, {})

    fm = FlatModel(
        name=model.name,
        max_timeout=max_timeout,
        max_const=mconst,
        procs=tuple(procs),
        variables=tuple(variables),
        timing=tuple(timing),
        edges=tuple(edges),
        channels=tuple(c.name for c in model.channels),
        messages=tuple(sorted(messages)),
        calendar_capacity=cap,
        properties=model.properties,
        sync_eager=model.sync_eager,
        family_sizes=tuple(family_sizes),
        const_values=tuple(sorted(consts.items())),
    )
    if model.urgency:
        comm = frozenset(
            (i, procs[i].locations.index(loc))
            for i, p in enumerate(procs)
            for (tname, loc) in model.urgency.committed
            if p.template == tname
        )
        urg = frozenset(
            (i, procs[i].locations.index(loc))
            for i, p in enumerate(procs)
            for (tname, loc) in model.urgency.urgent
            if p.template == tname
        )
        fm = dataclasses.replace(
            fm,
            committed_locs=comm,
            urgent_locs=urg,
            committed_flag_var=var_index.get(COMMITTED_FLAG, -1),
            urgent_count_var=var_index.get(URGENT_COUNT, -1),
        )
    return fm


def _is_binder(sender: Expr, env: dict[str, int], model: Model, tmpl: ProcessTemplate) -> bool:
    if not isinstance(sender, Name):
        return False
    if sender.ident in env:
        return False
    if sender.ident in {p.name for p in model.processes}:
        return False
    return True


def _resolve_proc_ref(
    ref: Expr,
    env: dict[str, int],
    tmpl: ProcessTemplate,
    proc_index: dict[str, int],
    family_members: dict[str, dict[int, int]],
    where: str,
) -> int:
    """A process reference is a singleton process name or a family index of
    the referring template's own family."""
    if isinstance(ref, Name) and ref.ident in proc_index:
        return proc_index[ref.ident]
    try:
        idx = eval_expr(ref, env)
    except EvalError as e:
        raise ModelError.single(f"{where}: process reference: {e}") from None
    fam = family_members.get(tmpl.name, {})
    if idx not in fam:
        raise ModelError.single(f"{where}: no family member with index {idx}")
    return fam[idx]
