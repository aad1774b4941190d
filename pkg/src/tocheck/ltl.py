"""LTL formulas and the property grammar over clockless states.

Formulas are built from atoms with not/and/or/implies, next (X), until (U)
and the derived eventually (<>) / always ([]).  Precedence, tightest first:
unary (!, X, <>, []), then U (right associative), then &, |, ->.

Atoms talk about one clockless state:

    in_critical <= 1                 global variable comparison
    proc[1].slot = proc[2].slot      process-local variables
    timeout(node[1]) > 0             bounded timeout values
    at(gate, g2)                     control location
    timeout(a) - timeout(b) >= 3     differences are plain arithmetic

``forall k . f`` / ``exists k . f`` expand to a conjunction/disjunction over
a process family's indices (inferred from ``name[k]`` references in the
body), so properties scale with the family binding.

Parsing needs a FlatModel: atom references are resolved to state slots and
compiled to the same bytecode the kernels run, which is what makes atom
evaluation cheap during exploration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from . import ir
from ._compile import CompiledModel, compile_expr, eval_prog
from .dsl import (
    LineSyntaxError,
    ParseError,
    SourceSpan,
    Token,
    TokenStream,
    tokenize_line,
)


class PropertyError(Exception):
    """Property text failed to parse or referenced unknown names."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("; ".join(e.render() for e in errors))


# ============================================================
# formula AST
# ============================================================


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    """Leaf predicate; ``index`` keys into the atom table of the check."""

    index: int
    text: str

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class TrueF(Formula):
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class NotF(Formula):
    sub: Formula

    def __str__(self) -> str:
        return f"!{_paren(self.sub)}"


@dataclass(frozen=True)
class AndF(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class OrF(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class ImpliesF(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class NextF(Formula):
    sub: Formula

    def __str__(self) -> str:
        return f"X {_paren(self.sub)}"


@dataclass(frozen=True)
class UntilF(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class ReleaseF(Formula):
    """Dual of until; produced by negation normal form only."""

    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} R {self.right})"


@dataclass(frozen=True)
class EventuallyF(Formula):
    sub: Formula

    def __str__(self) -> str:
        return f"<> {_paren(self.sub)}"


@dataclass(frozen=True)
class AlwaysF(Formula):
    sub: Formula

    def __str__(self) -> str:
        return f"[] {_paren(self.sub)}"


def _paren(f: Formula) -> str:
    return str(f)


def formula_size(f: Formula) -> int:
    """AST node count over the core grammar (sugar counts expanded)."""
    if isinstance(f, (Atom, TrueF, FalseF)):
        return 1
    if isinstance(f, (NotF, NextF)):
        return 1 + formula_size(f.sub)
    if isinstance(f, EventuallyF):
        return 2 + formula_size(f.sub)  # true U f
    if isinstance(f, AlwaysF):
        return 3 + formula_size(f.sub)  # !(true U !f)
    return 1 + formula_size(f.left) + formula_size(f.right)


def negate(f: Formula) -> Formula:
    return f.sub if isinstance(f, NotF) else NotF(f)


def to_nnf(f: Formula, neg: bool = False) -> Formula:
    """Negation normal form over {atoms, and, or, X, U, R}."""
    if isinstance(f, TrueF):
        return FalseF() if neg else f
    if isinstance(f, FalseF):
        return TrueF() if neg else f
    if isinstance(f, Atom):
        return NotF(f) if neg else f
    if isinstance(f, NotF):
        return to_nnf(f.sub, not neg)
    if isinstance(f, AndF):
        l, r = to_nnf(f.left, neg), to_nnf(f.right, neg)
        return OrF(l, r) if neg else AndF(l, r)
    if isinstance(f, OrF):
        l, r = to_nnf(f.left, neg), to_nnf(f.right, neg)
        return AndF(l, r) if neg else OrF(l, r)
    if isinstance(f, ImpliesF):
        return to_nnf(OrF(NotF(f.left), f.right), neg)
    if isinstance(f, NextF):
        return NextF(to_nnf(f.sub, neg))
    if isinstance(f, UntilF):
        l, r = to_nnf(f.left, neg), to_nnf(f.right, neg)
        return ReleaseF(l, r) if neg else UntilF(l, r)
    if isinstance(f, ReleaseF):
        l, r = to_nnf(f.left, neg), to_nnf(f.right, neg)
        return UntilF(l, r) if neg else ReleaseF(l, r)
    if isinstance(f, EventuallyF):
        return to_nnf(UntilF(TrueF(), f.sub), neg)
    if isinstance(f, AlwaysF):
        return to_nnf(ReleaseF(FalseF(), f.sub), neg)
    raise TypeError(type(f).__name__)


# ============================================================
# atoms over clockless states
# ============================================================


@dataclass
class AtomTable:
    """Deduped atom predicates compiled to state-slot bytecode."""

    progs: list[tuple[int, ...]]
    texts: list[str]

    def evaluate(self, state: tuple) -> frozenset[int]:
        get = state.__getitem__
        return frozenset(
            i for i, prog in enumerate(self.progs) if eval_prog(prog, get)
        )

    def eval_one(self, state: tuple, index: int) -> bool:
        return bool(eval_prog(self.progs[index], state.__getitem__))


class PropertyParser:
    """Recursive-descent parser for property text against a flat model."""

    def __init__(self, fm: ir.FlatModel, cm: CompiledModel, text: str, file: str):
        self.fm = fm
        self.cm = cm
        self.text = text
        self.file = file
        self.errors: list[ParseError] = []
        toks = tokenize_line(text, 1, file, self.errors)
        self.ts = TokenStream(toks, file)
        self.binders: dict[str, int] = {}
        self.atoms: dict[str, int] = {}
        self.table = AtomTable([], [])
        self.consts = dict(fm.const_values)

    # -- formula level -------------------------------------------------

    def parse_formula(self) -> Formula:
        f = self._implies()
        self.ts.expect_end()
        return f

    def parse_bool_expr(self) -> Formula:
        """Invariant bodies: boolean structure over atoms, no temporal ops."""
        f = self._implies(allow_temporal=False)
        self.ts.expect_end()
        return f

    def _implies(self, allow_temporal: bool = True) -> Formula:
        left = self._or(allow_temporal)
        if self.ts.accept("->"):
            return ImpliesF(left, self._implies(allow_temporal))
        return left

    def _or(self, allow_temporal: bool) -> Formula:
        f = self._and(allow_temporal)
        while self.ts.accept("|"):
            f = OrF(f, self._and(allow_temporal))
        return f

    def _and(self, allow_temporal: bool) -> Formula:
        f = self._until(allow_temporal)
        while self.ts.accept("&"):
            f = AndF(f, self._until(allow_temporal))
        return f

    def _until(self, allow_temporal: bool) -> Formula:
        f = self._unary(allow_temporal)
        if self.ts.cur.kind == "ident" and self.ts.cur.text == "U":
            if not allow_temporal:
                raise self.ts.error("no temporal operator in an invariant")
            self.ts.i += 1
            return UntilF(f, self._until(allow_temporal))
        return f

    def _unary(self, allow_temporal: bool) -> Formula:
        ts = self.ts
        t = ts.cur
        if t.kind == "op" and t.text == "!":
            ts.i += 1
            return NotF(self._unary(allow_temporal))
        if t.kind == "op" and t.text == "[":
            ts.i += 1
            ts.expect("]")
            if not allow_temporal:
                raise ts.error("no temporal operator in an invariant")
            return AlwaysF(self._unary(allow_temporal))
        if t.kind == "op" and t.text == "<":
            ts.i += 1
            ts.expect(">")
            if not allow_temporal:
                raise ts.error("no temporal operator in an invariant")
            return EventuallyF(self._unary(allow_temporal))
        if t.kind == "ident" and t.text in ("X", "G", "F") and allow_temporal:
            nxt = ts.toks[ts.i + 1]
            # X/G/F are operators only when something follows that can start
            # a formula; a bare name like `F` remains an identifier
            if nxt.kind in ("ident", "int") or nxt.text in ("(", "!", "[", "<"):
                ts.i += 1
                sub = self._unary(allow_temporal)
                return {"X": NextF, "G": AlwaysF, "F": EventuallyF}[t.text](sub)
        if t.kind == "ident" and t.text in ("forall", "exists"):
            ts.i += 1
            binder = ts.ident("a binder name")
            ts.expect(".")
            return self._expand_quantifier(t.text, binder, allow_temporal)
        if t.kind == "ident" and t.text == "true":
            ts.i += 1
            return TrueF()
        if t.kind == "ident" and t.text == "false":
            ts.i += 1
            return FalseF()
        if t.kind == "op" and t.text == "(":
            mark = ts.i
            ts.i += 1
            try:
                f = self._implies(allow_temporal)
                ts.expect(")")
                return f
            except LineSyntaxError:
                # not a formula group: backtrack, parse as an atom expression
                ts.i = mark
                return self._atom()
        return self._atom()

    def _expand_quantifier(self, kw: str, binder: str, allow_temporal: bool) -> Formula:
        ts = self.ts
        start = ts.i
        # discover the family: parse once with index 1 to find `name[binder]`
        fam = self._find_family(start, binder)
        if fam is None:
            raise ts.error(f"a body referencing some family as name[{binder}]")
        name, size = fam
        parts: list[Formula] = []
        end = None
        for idx in range(1, size + 1):
            ts.i = start
            self.binders[binder] = idx
            parts.append(self._implies(allow_temporal))
            end = ts.i
        del self.binders[binder]
        ts.i = end
        out = parts[0]
        for p in parts[1:]:
            out = AndF(out, p) if kw == "forall" else OrF(out, p)
        return out

    def _find_family(self, start: int, binder: str) -> Optional[tuple[str, int]]:
        sizes = dict(self.fm.family_sizes)
        toks = self.ts.toks
        for j in range(start, len(toks) - 2):
            if (
                toks[j].kind == "ident"
                and toks[j].text in sizes
                and toks[j + 1].text == "["
            ):
                # binder appears inside the index expression
                k = j + 2
                depth = 1
                while k < len(toks) and depth:
                    if toks[k].text == "[":
                        depth += 1
                    elif toks[k].text == "]":
                        depth -= 1
                    elif toks[k].kind == "ident" and toks[k].text == binder:
                        return toks[j].text, sizes[toks[j].text]
                    k += 1
        return None

    # -- atom level ------------------------------------------------------

    def _atom(self) -> Formula:
        ts = self.ts
        if ts.cur.kind == "ident" and ts.cur.text == "at":
            ts.i += 1
            ts.expect("(")
            proc = self._proc_ref()
            ts.expect(",")
            loc = ts.ident("a location name")
            ts.expect(")")
            p = self.fm.procs[proc]
            if loc not in p.locations:
                raise ts.error(f"a location of {p.name}")
            prog = (1, proc, 0, p.locations.index(loc), 10, 0)  # slot == loc
            return self._intern(f"at({p.name}, {loc})", prog)
        # comparison of two integer terms
        lhs, ltext = self._term()
        for op, opc in (("<=", 9), (">=", 12), ("!=", 11), ("=", 10), ("<", 8), (">", 13)):
            if ts.accept(op):
                rhs, rtext = self._term()
                prog = lhs + rhs + (opc, 0)
                return self._intern(f"{ltext} {op} {rtext}", prog)
        raise ts.error("a comparison operator")

    def _term(self) -> tuple[tuple[int, ...], str]:
        prog, text = self._term_mul()
        while True:
            if self.ts.accept("+"):
                p2, t2 = self._term_mul()
                prog = prog + p2 + (2, 0)
                text = f"{text} + {t2}"
            elif self.ts.accept("-"):
                p2, t2 = self._term_mul()
                prog = prog + p2 + (3, 0)
                text = f"{text} - {t2}"
            else:
                return prog, text

    def _term_mul(self) -> tuple[tuple[int, ...], str]:
        prog, text = self._term_atom()
        while True:
            if self.ts.accept("*"):
                p2, t2 = self._term_atom()
                prog = prog + p2 + (4, 0)
                text = f"{text} * {t2}"
            elif self.ts.accept("%"):
                p2, t2 = self._term_atom()
                prog = prog + p2 + (5, 0)
                text = f"{text} % {t2}"
            else:
                return prog, text

    def _term_atom(self) -> tuple[tuple[int, ...], str]:
        ts = self.ts
        t = ts.cur
        if t.kind == "int":
            ts.i += 1
            return (0, int(t.text)), t.text
        if t.kind == "op" and t.text == "-":
            ts.i += 1
            prog, text = self._term_atom()
            return prog + (7, 0), f"-{text}"
        if t.kind == "op" and t.text == "(":
            ts.i += 1
            prog, text = self._term()
            ts.expect(")")
            return prog, f"({text})"
        if t.kind == "ident" and t.text == "timeout":
            ts.i += 1
            ts.expect("(")
            proc = self._proc_ref()
            ts.expect(")")
            return (1, self.cm.timeout_slot(proc)), f"timeout({self.fm.procs[proc].name})"
        if t.kind == "ident":
            return self._name_term()
        raise ts.error("an integer term")

    def _name_term(self) -> tuple[tuple[int, ...], str]:
        ts = self.ts
        name = ts.ident()
        if name in self.binders and ts.cur.text != "[" and ts.cur.text != ".":
            return (0, self.binders[name]), str(self.binders[name])
        qualified: Optional[str] = None
        if ts.cur.text == "[" or ts.cur.text == ".":
            proc = self._proc_ref_tail(name)
            ts.expect(".")
            member = ts.ident("a variable name")
            pname = self.fm.procs[proc].name
            qualified = ir.local_var_name(pname, member)
        target = qualified or name
        if qualified is None and name in self.consts:
            return (0, self.consts[name]), name
        try:
            vi = self.fm.var_index(target)
            return (1, self.cm.var_slot(vi)), target
        except KeyError:
            pass
        try:
            ti = self.fm.timing_index(target)
            return (1, self.cm.timing_slot(ti)), target
        except KeyError:
            pass
        raise ts.error(f"a known variable (got '{target}')")

    def _proc_ref(self) -> int:
        return self._proc_ref_tail(self.ts.ident("a process name"))

    def _proc_ref_tail(self, name: str) -> int:
        ts = self.ts
        if ts.cur.text == "[":
            ts.expect("[")
            idx = self._index_expr()
            ts.expect("]")
            full = ir.proc_instance_name(name, idx)
        else:
            full = name
        try:
            return self.fm.proc_index(full)
        except KeyError:
            raise ts.error(f"a process name (got '{full}')") from None

    def _index_expr(self) -> int:
        """Small constant arithmetic with binder values, for name[k%N+1]."""
        toks: list[Token] = []
        depth = 1
        ts = self.ts
        while not ts.at_end():
            t = ts.cur
            if t.text == "[":
                depth += 1
            elif t.text == "]":
                depth -= 1
                if depth == 0:
                    break
            toks.append(t)
            ts.i += 1
        sub = TokenStream(toks + [Token("eol", "", 1, 0)], self.file)
        from .dsl import parse_expr

        e = parse_expr(sub)
        env = {**self.consts, **self.binders}
        try:
            return ir.eval_expr(e, env)
        except ir.EvalError as exc:
            raise ts.error(f"a constant index ({exc})") from None

    def _intern(self, text: str, prog: tuple[int, ...]) -> Atom:
        if text in self.atoms:
            return Atom(self.atoms[text], text)
        idx = len(self.table.progs)
        self.atoms[text] = idx
        self.table.progs.append(prog)
        self.table.texts.append(text)
        return Atom(idx, text)


def parse_property(
    fm: ir.FlatModel,
    cm: CompiledModel,
    text: str,
    kind: str = "ltl",
    file: str = "<property>",
) -> tuple[Formula, AtomTable]:
    """Parse property text into a formula plus its compiled atom table.

    ``kind`` "invariant" restricts to boolean structure (the formula is then
    the state predicate that must hold everywhere).
    """
    p = PropertyParser(fm, cm, text, file)
    if p.errors:
        raise PropertyError(p.errors)
    try:
        f = p.parse_formula() if kind == "ltl" else p.parse_bool_expr()
    except LineSyntaxError as e:
        raise PropertyError([e.err]) from None
    return f, p.table


def eval_state_formula(f: Formula, truth: frozenset[int]) -> bool:
    """Evaluate a temporal-operator-free formula under an atom valuation."""
    if isinstance(f, Atom):
        return f.index in truth
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, NotF):
        return not eval_state_formula(f.sub, truth)
    if isinstance(f, AndF):
        return eval_state_formula(f.left, truth) and eval_state_formula(f.right, truth)
    if isinstance(f, OrF):
        return eval_state_formula(f.left, truth) or eval_state_formula(f.right, truth)
    if isinstance(f, ImpliesF):
        return (not eval_state_formula(f.left, truth)) or eval_state_formula(
            f.right, truth
        )
    raise TypeError(f"temporal operator in state formula: {type(f).__name__}")
