"""Parser and printer for the textual model format (.ttm).

The grammar is line oriented: every declaration is one statement on one line,
process bodies sit between braces.  That keeps files diffable and lets the
parser resynchronize at line boundaries, so independent mistakes produce
independent errors instead of one avalanche.

    model fischer
    max_timeout 6
    const N = 2
    global lock : [0, N] init 0
    channel approach

    process proc(i : 1..N) {
        locations sleeping wait trying critical
        entry sleeping
        init tau = 1
        sleeping -> wait when lock = 0 update in [1, d1]
        wait -> trying when true update >= d2 do { lock := i }
    }

    invariant mutex: in_critical <= 1
    ltl eventually_crit: <> at(proc[1], critical)

Edges read:  SRC -> TGT when GUARD [comm] update RULE [capture {w,..}]
[do { v := e; .. }]   where comm is `sync ch!expr`, `sync ch?var`,
`send msg to {(r, d), ..}` / `send msg to {(j, d) : j in lo..hi, cond}`, or
`recv msg from ref`.  Update rules: `in (l, m]`, `in [l+w, m)`, `> l`,
`>= l+w`, `inf`, `maxM`.  A `+w` suffix names a captured timing variable; the
stored rule is the clockless one, so the bound is *re-based* on the captured
value at evaluation time.

Properties are kept as raw text here; the checker module owns their grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from . import ir


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int  # 1-based
    col: int  # 1-based
    length: int = 1


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    expected: tuple[str, ...]
    found: str

    def render(self) -> str:
        exp = " or ".join(self.expected)
        return (
            f"{self.span.file}:{self.span.line}:{self.span.col}: "
            f"expected {exp}, found {self.found!r}"
        )


@dataclass
class ParseResult:
    model: Optional[ir.Model]
    errors: list[ParseError]

    @property
    def ok(self) -> bool:
        return self.model is not None and not self.errors


# ============================================================
# tokenizer
# ============================================================

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#.*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|:=|<=|>=|!=|\.\.|[-+*/%(){}\[\],:;!?=<>&|.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "ident" | "op" | "eol"
    text: str
    line: int
    col: int


def tokenize_line(text: str, line_no: int, file: str, errors: list[ParseError]) -> list[Token]:
    toks: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            errors.append(
                ParseError(
                    SourceSpan(file, line_no, pos + 1), ("a token",), text[pos]
                )
            )
            pos += 1
            continue
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append(Token(kind, m.group(), line_no, m.start() + 1))
        pos = m.end()
    toks.append(Token("eol", "", line_no, len(text) + 1))
    return toks


class LineSyntaxError(Exception):
    def __init__(self, err: ParseError):
        self.err = err
        super().__init__(err.render())


class TokenStream:
    """Cursor over one statement's tokens."""

    def __init__(self, toks: list[Token], file: str):
        self.toks = toks
        self.file = file
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def at_end(self) -> bool:
        return self.cur.kind == "eol"

    def error(self, *expected: str) -> LineSyntaxError:
        t = self.cur
        found = t.text if t.kind != "eol" else "end of line"
        return LineSyntaxError(
            ParseError(SourceSpan(self.file, t.line, t.col, max(1, len(t.text))), expected, found)
        )

    def accept(self, text: str) -> bool:
        if self.cur.kind != "eol" and self.cur.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if self.cur.text == text and self.cur.kind != "eol":
            t = self.cur
            self.i += 1
            return t
        raise self.error(f"'{text}'")

    def ident(self, what: str = "an identifier") -> str:
        if self.cur.kind == "ident":
            t = self.cur
            self.i += 1
            return t.text
        raise self.error(what)

    def expect_end(self) -> None:
        if not self.at_end():
            raise self.error("end of line")


KEYWORDS = {"true", "false", "in", "inf", "maxM", "tau"}


# ============================================================
# expression parsing (shared with the property grammar in `props`)
# ============================================================


def parse_expr(ts: TokenStream) -> ir.Expr:
    return _parse_or(ts)


def _parse_or(ts: TokenStream) -> ir.Expr:
    e = _parse_and(ts)
    while ts.accept("|"):
        e = ir.Or(e, _parse_and(ts))
    return e


def _parse_and(ts: TokenStream) -> ir.Expr:
    e = _parse_not(ts)
    while ts.accept("&"):
        e = ir.And(e, _parse_not(ts))
    return e


def _parse_not(ts: TokenStream) -> ir.Expr:
    if ts.accept("!"):
        return ir.Not(_parse_not(ts))
    return _parse_cmp(ts)


def _parse_cmp(ts: TokenStream) -> ir.Expr:
    e = _parse_add(ts)
    for op in ("<=", ">=", "!=", "=", "<", ">"):
        if ts.accept(op):
            return ir.Cmp(op, e, _parse_add(ts))
    return e


def _parse_add(ts: TokenStream) -> ir.Expr:
    e = _parse_mul(ts)
    while True:
        if ts.accept("+"):
            e = ir.BinOp("+", e, _parse_mul(ts))
        elif ts.accept("-"):
            e = ir.BinOp("-", e, _parse_mul(ts))
        else:
            return e


def _parse_mul(ts: TokenStream) -> ir.Expr:
    e = _parse_unary(ts)
    while True:
        if ts.accept("*"):
            e = ir.BinOp("*", e, _parse_unary(ts))
        elif ts.accept("%"):
            e = ir.BinOp("%", e, _parse_unary(ts))
        elif ts.accept("/"):
            e = ir.BinOp("/", e, _parse_unary(ts))
        else:
            return e


def _parse_unary(ts: TokenStream) -> ir.Expr:
    if ts.accept("-"):
        inner = _parse_unary(ts)
        if isinstance(inner, ir.IntLit):
            return ir.IntLit(-inner.value)
        return ir.Neg(inner)
    return _parse_atom(ts)


def _parse_atom(ts: TokenStream) -> ir.Expr:
    t = ts.cur
    if t.kind == "int":
        ts.i += 1
        return ir.IntLit(int(t.text))
    if t.kind == "ident":
        if t.text == "true":
            ts.i += 1
            return ir.BoolLit(True)
        if t.text == "false":
            ts.i += 1
            return ir.BoolLit(False)
        ts.i += 1
        return ir.Name(t.text)
    if ts.accept("("):
        e = parse_expr(ts)
        ts.expect(")")
        return e
    raise ts.error("an expression")


# ============================================================
# statement parsing
# ============================================================


@dataclass
class _ProcCtx:
    name: str
    param: Optional[str] = None
    param_lo: Optional[ir.Expr] = None
    param_hi: Optional[ir.Expr] = None
    locations: list[ir.Location] = field(default_factory=list)
    entry: Optional[str] = None
    locals: list[ir.VarDecl] = field(default_factory=list)
    timing: list[str] = field(default_factory=list)
    timing_init: list[tuple[str, ir.Expr]] = field(default_factory=list)
    timeout_choices: Optional[tuple[ir.Expr, ...]] = None
    edges: list[ir.Edge] = field(default_factory=list)


class Parser:
    def __init__(self, text: str, file: str = "<string>"):
        self.file = file
        self.lines = text.splitlines()
        self.errors: list[ParseError] = []
        self.name: Optional[str] = None
        self.max_timeout: Optional[ir.Expr] = None
        self.calendar: ir.Expr = ir.IntLit(0)
        self.sync_eager = False
        self.consts: list[ir.ConstDecl] = []
        self.globals: list[ir.VarDecl] = []
        self.channels: list[ir.ChannelDecl] = []
        self.processes: list[ir.ProcessTemplate] = []
        self.properties: list[ir.PropertyDecl] = []
        self._proc: Optional[_ProcCtx] = None

    def fail(self, ts: TokenStream, *expected: str) -> None:
        raise ts.error(*expected)

    def parse(self) -> ParseResult:
        for line_no, raw in enumerate(self.lines, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            toks = tokenize_line(raw, line_no, self.file, self.errors)
            if len(toks) == 1:  # only eol (line was all bad chars)
                continue
            ts = TokenStream(toks, self.file)
            try:
                self.statement(ts, raw)
            except LineSyntaxError as e:
                self.errors.append(e.err)
        if self._proc is not None:
            self.errors.append(
                ParseError(
                    SourceSpan(self.file, len(self.lines) or 1, 1),
                    ("'}' closing process block",),
                    "end of file",
                )
            )
            self._finish_proc()
        if self.name is None:
            self.errors.append(
                ParseError(SourceSpan(self.file, 1, 1), ("a 'model NAME' line",), "none")
            )
        if self.max_timeout is None:
            self.errors.append(
                ParseError(SourceSpan(self.file, 1, 1), ("a 'max_timeout' line",), "none")
            )
        if self.errors and (self.name is None or self.max_timeout is None):
            return ParseResult(None, self.errors)
        model = ir.Model(
            name=self.name or "model",
            max_timeout=self.max_timeout or ir.IntLit(1),
            consts=tuple(self.consts),
            globals=tuple(self.globals),
            channels=tuple(self.channels),
            processes=tuple(self.processes),
            calendar_capacity=self.calendar,
            properties=tuple(self.properties),
            sync_eager=self.sync_eager,
        )
        return ParseResult(model if not self.errors else None, self.errors)

    # -- statements ------------------------------------------------------

    def statement(self, ts: TokenStream, raw: str) -> None:
        if self._proc is not None:
            if ts.cur.text == "}":
                ts.expect("}")
                ts.expect_end()
                self._finish_proc()
                return
            self.proc_statement(ts)
            return
        head = ts.cur
        if head.kind != "ident":
            raise ts.error("a declaration keyword")
        kw = head.text
        if kw == "model":
            ts.i += 1
            self.name = ts.ident("a model name")
            ts.expect_end()
        elif kw == "max_timeout":
            ts.i += 1
            self.max_timeout = parse_expr(ts)
            ts.expect_end()
        elif kw == "calendar":
            ts.i += 1
            self.calendar = parse_expr(ts)
            ts.expect_end()
        elif kw == "sync_eager":
            ts.i += 1
            self.sync_eager = True
            ts.expect_end()
        elif kw == "const":
            ts.i += 1
            name = ts.ident("a constant name")
            ts.expect("=")
            self.consts.append(ir.ConstDecl(name, parse_expr(ts)))
            ts.expect_end()
        elif kw == "global":
            ts.i += 1
            self.globals.append(self.var_decl(ts))
            ts.expect_end()
        elif kw == "channel":
            ts.i += 1
            self.channels.append(ir.ChannelDecl(ts.ident("a channel name")))
            ts.expect_end()
        elif kw == "process":
            ts.i += 1
            self.proc_header(ts)
        elif kw in ("invariant", "ltl"):
            ts.i += 1
            name = ts.ident("a property name")
            colon = ts.expect(":")
            # formula is the raw remainder of the line (checker grammar)
            formula = raw[colon.col :].strip()
            if not formula:
                raise ts.error("a property formula")
            self.properties.append(ir.PropertyDecl(name, kw, formula))
        else:
            raise ts.error(
                "'model'", "'max_timeout'", "'calendar'", "'const'", "'global'",
                "'channel'", "'process'", "'invariant'", "'ltl'",
            )

    def var_decl(self, ts: TokenStream) -> ir.VarDecl:
        name = ts.ident("a variable name")
        ts.expect(":")
        ts.expect("[")
        lo = parse_expr(ts)
        ts.expect(",")
        hi = parse_expr(ts)
        ts.expect("]")
        if ts.cur.text != "init":
            raise ts.error("'init'")
        ts.i += 1
        choices = self.init_choices(ts)
        return ir.VarDecl(name, lo, hi, choices)

    def init_choices(self, ts: TokenStream) -> tuple[ir.Expr, ...]:
        if ts.accept("{"):
            out = [parse_expr(ts)]
            while ts.accept(","):
                out.append(parse_expr(ts))
            ts.expect("}")
            return tuple(out)
        return (parse_expr(ts),)

    def proc_header(self, ts: TokenStream) -> None:
        name = ts.ident("a process name")
        ctx = _ProcCtx(name)
        if ts.accept("("):
            ctx.param = ts.ident("a family index name")
            ts.expect(":")
            ctx.param_lo = parse_expr(ts)
            ts.expect("..")
            ctx.param_hi = parse_expr(ts)
            ts.expect(")")
        ts.expect("{")
        ts.expect_end()
        self._proc = ctx

    def _finish_proc(self) -> None:
        ctx = self._proc
        self._proc = None
        assert ctx is not None
        if ctx.entry is None and ctx.locations:
            ctx.entry = ctx.locations[0].id
        self.processes.append(
            ir.ProcessTemplate(
                name=ctx.name,
                locations=tuple(ctx.locations),
                entry=ctx.entry or "",
                edges=tuple(ctx.edges),
                init=ir.InitSpec(
                    timeout_choices=ctx.timeout_choices or (ir.IntLit(0),),
                    timing_init=tuple(ctx.timing_init),
                ),
                param=ctx.param,
                param_lo=ctx.param_lo,
                param_hi=ctx.param_hi,
                locals=tuple(ctx.locals),
                timing_vars=tuple(ctx.timing),
            )
        )

    def proc_statement(self, ts: TokenStream) -> None:
        ctx = self._proc
        assert ctx is not None
        head = ts.cur
        if head.kind != "ident":
            raise ts.error("a process-level declaration or an edge")
        kw = head.text
        if kw == "locations":
            ts.i += 1
            while ts.cur.kind == "ident":
                ctx.locations.append(ir.Location(ts.ident()))
            ts.expect_end()
        elif kw == "location":
            ts.i += 1
            name = ts.ident("a location name")
            kind = "normal"
            if ts.cur.kind == "ident" and ts.cur.text in ("urgent", "committed"):
                kind = ts.cur.text
                ts.i += 1
            ctx.locations.append(ir.Location(name, kind))
            ts.expect_end()
        elif kw == "entry":
            ts.i += 1
            ctx.entry = ts.ident("a location name")
            ts.expect_end()
        elif kw == "local":
            ts.i += 1
            ctx.locals.append(self.var_decl(ts))
            ts.expect_end()
        elif kw == "timing":
            ts.i += 1
            name = ts.ident("a timing variable name")
            if ts.cur.text != "init":
                raise ts.error("'init'")
            ts.i += 1
            init = parse_expr(ts)
            ctx.timing.append(name)
            ctx.timing_init.append((name, init))
            ts.expect_end()
        elif kw == "init":
            ts.i += 1
            if ts.cur.text != "tau":
                raise ts.error("'tau'")
            ts.i += 1
            if ts.accept("="):
                ctx.timeout_choices = (parse_expr(ts),)
            elif ts.cur.text == "in":
                ts.i += 1
                ts.expect("{")
                out = [parse_expr(ts)]
                while ts.accept(","):
                    out.append(parse_expr(ts))
                ts.expect("}")
                ctx.timeout_choices = tuple(out)
            else:
                raise ts.error("'=' or 'in {..}'")
            ts.expect_end()
        else:
            ctx.edges.append(self.edge(ts, ctx))

    # -- edges -----------------------------------------------------------

    def edge(self, ts: TokenStream, ctx: _ProcCtx) -> ir.Edge:
        line = ts.cur.line
        source = ts.ident("a source location")
        ts.expect("->")
        target = ts.ident("a target location")
        if ts.cur.text != "when":
            raise ts.error("'when'")
        ts.i += 1
        guard = parse_expr(ts)

        comm: Optional[tuple] = None
        if ts.cur.kind == "ident" and ts.cur.text in ("sync", "send", "recv"):
            kw = ts.cur.text
            ts.i += 1
            if kw == "sync":
                chan = ts.ident("a channel name")
                if ts.accept("!"):
                    comm = ("sync_send", chan, parse_expr(ts))
                elif ts.accept("?"):
                    if ts.cur.text == "_":
                        ts.i += 1
                        comm = ("sync_recv", chan, None)
                    else:
                        comm = ("sync_recv", chan, ts.ident("a variable or '_'"))
                else:
                    raise ts.error("'!' or '?'")
            elif kw == "send":
                msg = ts.ident("a message name")
                if ts.cur.text != "to":
                    raise ts.error("'to'")
                ts.i += 1
                comm = ("cal_send", msg, self.send_targets(ts))
            else:  # recv
                msg = ts.ident("a message name")
                if ts.cur.text != "from":
                    raise ts.error("'from'")
                ts.i += 1
                comm = ("cal_recv", msg, parse_expr(ts))

        if ts.cur.text != "update":
            raise ts.error("'update'")
        ts.i += 1
        update = self.update_rule(ts, ctx)

        capture: tuple[str, ...] = ()
        if ts.cur.text == "capture":
            ts.i += 1
            ts.expect("{")
            caps = [ts.ident("a timing variable")]
            while ts.accept(","):
                caps.append(ts.ident("a timing variable"))
            ts.expect("}")
            capture = tuple(caps)

        assigns: tuple[ir.Assignment, ...] = ()
        if ts.cur.text == "do":
            ts.i += 1
            ts.expect("{")
            alist = [self.assignment(ts)]
            while ts.accept(";"):
                if ts.cur.text == "}":
                    break
                alist.append(self.assignment(ts))
            ts.expect("}")
            assigns = tuple(alist)
        ts.expect_end()

        if comm is None:
            action: ir.Action = ir.TimeoutAction(update, capture, assigns)
        elif comm[0] == "sync_send":
            action = ir.SyncSend(comm[1], comm[2], update, capture, assigns)
        elif comm[0] == "sync_recv":
            action = ir.SyncRecv(comm[1], comm[2], update, capture, assigns)
        elif comm[0] == "cal_send":
            action = ir.CalSend(comm[1], comm[2], update, capture, assigns)
        else:
            action = ir.CalRecv(comm[1], comm[2], update, capture, assigns)
        return ir.Edge(source, target, guard, action, line=line)

    def assignment(self, ts: TokenStream) -> ir.Assignment:
        name = ts.ident("an assignment target")
        ts.expect(":=")
        return (name, parse_expr(ts))

    def send_targets(self, ts: TokenStream):
        ts.expect("{")
        ts.expect("(")
        first_recv = parse_expr(ts)
        ts.expect(",")
        first_delay = parse_expr(ts)
        ts.expect(")")
        if ts.accept(":"):
            # comprehension: first_recv must be a plain binder name
            if not isinstance(first_recv, ir.Name):
                raise ts.error("a binder name before ':'")
            binder = first_recv.ident
            b = ts.ident("the binder name")
            if b != binder:
                raise ts.error(f"binder '{binder}'")
            if ts.cur.text != "in":
                raise ts.error("'in'")
            ts.i += 1
            lo = parse_expr(ts)
            ts.expect("..")
            hi = parse_expr(ts)
            cond = None
            if ts.accept(","):
                cond = parse_expr(ts)
            ts.expect("}")
            return (ir.SendComprehension(binder, lo, hi, cond, first_delay),)
        targets = [ir.SendTarget(first_recv, first_delay)]
        while ts.accept(","):
            ts.expect("(")
            r = parse_expr(ts)
            ts.expect(",")
            d = parse_expr(ts)
            ts.expect(")")
            targets.append(ir.SendTarget(r, d))
        ts.expect("}")
        return tuple(targets)

    def update_rule(self, ts: TokenStream, ctx: _ProcCtx) -> ir.UpdateRule:
        if ts.cur.text == "inf":
            ts.i += 1
            return ir.Infinity()
        if ts.cur.text == "maxM":
            ts.i += 1
            return ir.MaxM()
        if ts.cur.text == "in":
            ts.i += 1
            if ts.accept("("):
                lo_strict = True
            elif ts.accept("["):
                lo_strict = False
            else:
                raise ts.error("'(' or '['")
            lo, lo_base = self.bound(ts, ctx)
            ts.expect(",")
            hi, hi_base = self.bound(ts, ctx)
            if ts.accept(")"):
                hi_strict = True
            elif ts.accept("]"):
                hi_strict = False
            else:
                raise ts.error("')' or ']'")
            return ir.Interval(lo, lo_strict, hi, hi_strict, lo_base, hi_base)
        if ts.accept(">="):
            lo, base = self.bound(ts, ctx)
            return ir.LowerBound(lo, False, base)
        if ts.accept(">"):
            lo, base = self.bound(ts, ctx)
            return ir.LowerBound(lo, True, base)
        raise ts.error("'in'", "'>'", "'>='", "'inf'", "'maxM'")

    def bound(self, ts: TokenStream, ctx: _ProcCtx) -> tuple[ir.Expr, Optional[str]]:
        """A bound expression with an optional trailing `+w` timing base."""
        e = parse_expr(ts)
        if isinstance(e, ir.BinOp) and e.op == "+" and isinstance(e.right, ir.Name):
            if e.right.ident in ctx.timing:
                return e.left, e.right.ident
        if isinstance(e, ir.Name) and e.ident in ctx.timing:
            return ir.IntLit(0), e.ident
        return e, None


def parse(text: str, file: str = "<string>") -> ParseResult:
    """Parse model text.  Total: malformed input yields errors, never raises."""
    return Parser(text, file).parse()


# ============================================================
# rendering
# ============================================================

_PREC = {"|": 1, "&": 2, "!": 3, "cmp": 4, "+": 5, "-": 5, "*": 6, "%": 6, "/": 6, "neg": 7}


def expr_to_text(e: ir.Expr, parent_prec: int = 0) -> str:
    if isinstance(e, ir.IntLit):
        return str(e.value)
    if isinstance(e, ir.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, ir.Name):
        return e.ident
    if isinstance(e, ir.BinOp):
        p = _PREC[e.op]
        s = f"{expr_to_text(e.left, p)} {e.op} {expr_to_text(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    if isinstance(e, ir.Neg):
        return f"-{expr_to_text(e.operand, _PREC['neg'])}"
    if isinstance(e, ir.Cmp):
        p = _PREC["cmp"]
        s = f"{expr_to_text(e.left, p + 1)} {e.op} {expr_to_text(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    if isinstance(e, ir.And):
        p = _PREC["&"]
        s = f"{expr_to_text(e.left, p)} & {expr_to_text(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    if isinstance(e, ir.Or):
        p = _PREC["|"]
        s = f"{expr_to_text(e.left, p)} | {expr_to_text(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    if isinstance(e, ir.Not):
        return f"!{expr_to_text(e.operand, _PREC['!'])}"
    raise TypeError(f"cannot render {type(e).__name__}")


def _bound_text(e: ir.Expr, base: Optional[str]) -> str:
    if base is None:
        return expr_to_text(e)
    if e == ir.IntLit(0):
        return base
    return f"{expr_to_text(e, _PREC['+'])} + {base}"


def _update_text(u: ir.UpdateRule) -> str:
    if isinstance(u, ir.Infinity):
        return "inf"
    if isinstance(u, ir.MaxM):
        return "maxM"
    if isinstance(u, ir.LowerBound):
        op = ">" if u.strict else ">="
        return f"{op} {_bound_text(u.lo, u.base)}"
    lo_b = "(" if u.lo_strict else "["
    hi_b = ")" if u.hi_strict else "]"
    return (
        f"in {lo_b}{_bound_text(u.lo, u.lo_base)}, {_bound_text(u.hi, u.hi_base)}{hi_b}"
    )


def render(model: ir.Model) -> str:
    """Canonical text for a model; `parse(render(m))` rebuilds `m`."""
    out: list[str] = [f"model {model.name}", f"max_timeout {expr_to_text(model.max_timeout)}"]
    if model.sync_eager:
        out.append("sync_eager")
    if model.calendar_capacity != ir.IntLit(0):
        out.append(f"calendar {expr_to_text(model.calendar_capacity)}")
    if model.consts:
        out.append("")
        for c in model.consts:
            out.append(f"const {c.name} = {expr_to_text(c.value)}")
    if model.globals:
        out.append("")
        for g in model.globals:
            out.append(f"global {_var_text(g)}")
    if model.channels:
        out.append("")
        for ch in model.channels:
            out.append(f"channel {ch.name}")
    for p in model.processes:
        out.append("")
        out.extend(_proc_text(p))
    if model.properties:
        out.append("")
        for prop in model.properties:
            out.append(f"{prop.kind} {prop.name}: {prop.formula}")
    return "\n".join(out) + "\n"


def _var_text(v: ir.VarDecl) -> str:
    init = (
        expr_to_text(v.init_choices[0])
        if len(v.init_choices) == 1
        else "{" + ", ".join(expr_to_text(e) for e in v.init_choices) + "}"
    )
    return f"{v.name} : [{expr_to_text(v.lo)}, {expr_to_text(v.hi)}] init {init}"


def _proc_text(p: ir.ProcessTemplate) -> list[str]:
    head = f"process {p.name}"
    if p.param:
        head += f"({p.param} : {expr_to_text(p.param_lo)}..{expr_to_text(p.param_hi)})"
    out = [head + " {"]
    for l in p.locations:
        out.append(f"    location {l.id}" + (f" {l.kind}" if l.kind != "normal" else ""))
    out.append(f"    entry {p.entry}")
    tc = p.init.timeout_choices
    if len(tc) == 1:
        out.append(f"    init tau = {expr_to_text(tc[0])}")
    else:
        out.append("    init tau in {" + ", ".join(expr_to_text(e) for e in tc) + "}")
    for v in p.locals:
        out.append(f"    local {_var_text(v)}")
    t_init = dict(p.init.timing_init)
    for tv in p.timing_vars:
        out.append(f"    timing {tv} init {expr_to_text(t_init[tv])}")
    for e in p.edges:
        out.append("    " + _edge_text(e))
    out.append("}")
    return out


def _edge_text(e: ir.Edge) -> str:
    a = e.action
    parts = [f"{e.source} -> {e.target} when {expr_to_text(e.guard)}"]
    if isinstance(a, ir.SyncSend):
        parts.append(f"sync {a.channel}!{expr_to_text(a.message)}")
    elif isinstance(a, ir.SyncRecv):
        parts.append(f"sync {a.channel}?{a.message_var or '_'}")
    elif isinstance(a, ir.CalSend):
        parts.append(f"send {a.message} to {_targets_text(a.targets)}")
    elif isinstance(a, ir.CalRecv):
        parts.append(f"recv {a.message} from {expr_to_text(a.sender)}")
    parts.append(f"update {_update_text(a.update)}")
    if a.capture:
        parts.append("capture {" + ", ".join(a.capture) + "}")
    if a.assign:
        body = "; ".join(f"{t} := {expr_to_text(r)}" for t, r in a.assign)
        parts.append("do { " + body + " }")
    return " ".join(parts)


def _targets_text(targets) -> str:
    items = []
    for t in targets:
        if isinstance(t, ir.SendComprehension):
            s = (
                f"{{({t.binder}, {expr_to_text(t.delay)}) : {t.binder} in "
                f"{expr_to_text(t.lo)}..{expr_to_text(t.hi)}"
            )
            if t.cond is not None:
                s += f", {expr_to_text(t.cond)}"
            return s + "}"
        items.append(f"({expr_to_text(t.receiver)}, {expr_to_text(t.delay)})")
    return "{" + ", ".join(items) + "}"
