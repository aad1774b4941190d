"""LTL to Büchi automaton translation (tableau construction).

The classic node-expansion tableau: a graph node carries the obligations that
must hold now (``old``) and in the next step (``next``); until/release/or
obligations split nodes.  The result is a generalized Büchi automaton with
one acceptance set per until subformula, degeneralized here with the usual
counter product into a plain nondeterministic Büchi automaton.

Transition labels are conjunctions of atom literals (``pos`` must be true,
``neg`` must be false); a state letter is the set of true atom indices, so
``pos <= letter and not (neg & letter)`` decides enabledness.

`accepts_lasso` decides membership of an ultimately periodic word u.v^ω,
which is what both the translation self-tests and the formula oracle use.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .ltl import (
    AndF,
    Atom,
    FalseF,
    Formula,
    NextF,
    NotF,
    OrF,
    ReleaseF,
    TrueF,
    UntilF,
    negate,
    to_nnf,
)


@dataclass(frozen=True)
class Transition:
    src: int
    pos: frozenset[int]
    neg: frozenset[int]
    dst: int

    def enabled(self, letter: frozenset[int]) -> bool:
        return self.pos <= letter and not (self.neg & letter)


@dataclass
class BuchiAutomaton:
    """Nondeterministic Büchi automaton over atom-valuation letters."""

    n_states: int
    initial: frozenset[int]
    transitions: tuple[Transition, ...]
    accepting: frozenset[int]
    n_atoms: int
    by_src: tuple[tuple[Transition, ...], ...] = field(default=())

    def __post_init__(self):
        if not self.by_src:
            buckets: list[list[Transition]] = [[] for _ in range(self.n_states)]
            for t in self.transitions:
                buckets[t.src].append(t)
            self.by_src = tuple(tuple(b) for b in buckets)

    def successors(self, q: int, letter: frozenset[int]) -> list[int]:
        return [t.dst for t in self.by_src[q] if t.enabled(letter)]


# ============================================================
# tableau construction
# ============================================================


class _Node:
    __slots__ = ("index", "incoming", "new", "old", "nxt")

    def __init__(self, incoming, new, old, nxt):
        self.index = -1
        self.incoming: set[int] = incoming
        self.new: set[Formula] = new
        self.old: set[Formula] = old
        self.nxt: set[Formula] = nxt


_INIT = -1  # pseudo-node id marking initial incoming edges


def _key(node: _Node) -> tuple:
    return (frozenset(node.old), frozenset(node.nxt))


def ltl_to_buchi(f: Formula, n_atoms: int) -> BuchiAutomaton:
    """Translate ``f`` (any formula over ``n_atoms`` atoms) to an NBA whose
    language is exactly the set of infinite atom-valuation words satisfying
    ``f``."""
    nnf = to_nnf(f)
    done: dict[tuple, _Node] = {}

    def expand(node: _Node) -> None:
        if not node.new:
            k = _key(node)
            if k in done:
                done[k].incoming |= node.incoming
                return
            node.index = len(done)
            done[k] = node
            expand(
                _Node(
                    incoming={node.index},
                    new=set(node.nxt),
                    old=set(),
                    nxt=set(),
                )
            )
            return
        g = node.new.pop()
        if isinstance(g, TrueF):
            node.old.add(g)
            expand(node)
            return
        if isinstance(g, FalseF):
            return  # contradiction: drop node
        if isinstance(g, Atom) or (isinstance(g, NotF) and isinstance(g.sub, Atom)):
            if negate(g) in node.old:
                return
            node.old.add(g)
            expand(node)
            return
        if isinstance(g, AndF):
            node.old.add(g)
            for s in (g.left, g.right):
                if s not in node.old:
                    node.new.add(s)
            expand(node)
            return
        if isinstance(g, NextF):
            node.old.add(g)
            node.nxt.add(g.sub)
            expand(node)
            return
        if isinstance(g, (OrF, UntilF, ReleaseF)):
            node.old.add(g)
            if isinstance(g, OrF):
                new1, nxt1 = {g.left}, set()
                new2 = {g.right}
            elif isinstance(g, UntilF):
                new1, nxt1 = {g.left}, {g}
                new2 = {g.right}
            else:  # release: right holds until left&right (or forever)
                new1, nxt1 = {g.right}, {g}
                new2 = {g.left, g.right}
            n1 = _Node(
                set(node.incoming),
                node.new | (new1 - node.old),
                set(node.old),
                node.nxt | nxt1,
            )
            n2 = _Node(
                set(node.incoming),
                node.new | (new2 - node.old),
                set(node.old),
                set(node.nxt),
            )
            expand(n1)
            expand(n2)
            return
        raise TypeError(f"unexpected formula in NNF: {type(g).__name__}")

    expand(_Node(incoming={_INIT}, new={nnf}, old=set(), nxt=set()))

    nodes = sorted(done.values(), key=lambda n: n.index)
    untils = sorted(
        {g for n in nodes for g in n.old if isinstance(g, UntilF)},
        key=str,
    )

    def literals(n: _Node) -> tuple[frozenset[int], frozenset[int]]:
        pos = frozenset(g.index for g in n.old if isinstance(g, Atom))
        neg = frozenset(
            g.sub.index for g in n.old if isinstance(g, NotF) and isinstance(g.sub, Atom)
        )
        return pos, neg

    # generalized acceptance: one set per until
    acc_sets: list[set[int]] = []
    for u in untils:
        acc_sets.append({n.index for n in nodes if u not in n.old or u.right in n.old})

    k = max(1, len(acc_sets))
    if not acc_sets:
        acc_sets = [set(n.index for n in nodes)]

    # state 0 is a transient start state (the first letter is consumed on
    # the edge into the first tableau node); counter advances when leaving
    # a state inside the current acceptance set
    def did(q: int, c: int) -> int:
        return 1 + q * k + c

    transitions: list[Transition] = []
    for n in nodes:
        pos, neg = literals(n)
        for src in n.incoming:
            if src == _INIT:
                transitions.append(Transition(0, pos, neg, did(n.index, 0)))
            else:
                for c in range(k):
                    c2 = (c + 1) % k if src in acc_sets[c] else c
                    transitions.append(
                        Transition(did(src, c), pos, neg, did(n.index, c2))
                    )
    accepting = frozenset(did(q, 0) for q in acc_sets[0])
    return BuchiAutomaton(
        n_states=1 + len(nodes) * k,
        initial=frozenset({0}),
        transitions=tuple(transitions),
        accepting=accepting,
        n_atoms=n_atoms,
    )


# ============================================================
# lasso-word membership (used by tests and the formula oracle)
# ============================================================


def accepts_lasso(
    a: BuchiAutomaton,
    stem: list[frozenset[int]],
    loop: list[frozenset[int]],
) -> bool:
    """Does the automaton accept stem . loop^ω ?

    Subset-propagates over the stem, then analyses the loop's step graph:
    the word is accepted iff some state reachable on the stem lies on a
    loop-word cycle that passes through an accepting state.
    """
    assert loop, "loop must be non-empty"
    reach = set(a.initial)
    for letter in stem:
        reach = {d for q in reach for d in a.successors(q, letter)}
        if not reach:
            return False
    acc_mask = _loop_accepting_states(a, loop)
    return bool(reach & acc_mask)


def _loop_accepting_states(a: BuchiAutomaton, loop: list[frozenset[int]]) -> set[int]:
    """States q such that reading loop^ω from q can revisit q infinitely
    while hitting acceptance; computed from the one-iteration step relation
    annotated with 'passed through an accepting state'."""
    n = a.n_states
    # step[i] = (reach_row, acc_row) bitmasks after reading the full loop
    reach_rows = [0] * n
    acc_rows = [0] * n
    for q in range(n):
        frontier = {q: (1 if q in a.accepting else 0)}
        for letter in loop:
            nxt: dict[int, int] = {}
            for s, flag in frontier.items():
                for t in a.by_src[s]:
                    if t.enabled(letter):
                        f2 = flag or (1 if t.dst in a.accepting else 0)
                        old = nxt.get(t.dst)
                        if old is None or f2 > old:
                            nxt[t.dst] = f2
            frontier = nxt
            if not frontier:
                break
        for dst, flag in frontier.items():
            reach_rows[q] |= 1 << dst
            if flag:
                acc_rows[q] |= 1 << dst

    # 1. states on a flagged cycle: s reaches itself in >= 1 step-graph edges
    #    with at least one acceptance-flagged edge on the way
    on_cycle: set[int] = set()
    for q in range(n):
        seen = [False] * (2 * n)
        stack = []
        for d in _bits(reach_rows[q]):
            f = (acc_rows[q] >> d) & 1
            if not seen[d * 2 + f]:
                seen[d * 2 + f] = True
                stack.append((d, f))
        while stack:
            s, f = stack.pop()
            if s == q and f:
                on_cycle.add(q)
                break
            for d in _bits(reach_rows[s]):
                f2 = f or ((acc_rows[s] >> d) & 1)
                if not seen[d * 2 + f2]:
                    seen[d * 2 + f2] = True
                    stack.append((d, f2))

    # 2. acceptance only needs the run to *reach* such a cycle
    out = set(on_cycle)
    changed = True
    while changed:
        changed = False
        for q in range(n):
            if q in out:
                continue
            if any(d in out for d in _bits(reach_rows[q])):
                out.add(q)
                changed = True
    return out


def _bits(x: int):
    while x:
        b = x & -x
        yield b.bit_length() - 1
        x ^= b


# ============================================================
# semantic evaluation on lasso words (the independent oracle)
# ============================================================


def holds_on_lasso(
    f: Formula, stem: list[frozenset[int]], loop: list[frozenset[int]]
) -> bool:
    """Satisfaction of ``f`` on the ultimately periodic word stem.loop^ω,
    computed directly from the semantics (no automaton): positions are
    stem + loop with the loop's last position wired back to its start,
    until handled as a least fixpoint over the loop."""
    assert loop
    n_pos = len(stem) + len(loop)

    def succ(i: int) -> int:
        return i + 1 if i + 1 < n_pos else len(stem)

    letters = stem + loop
    memo: dict[Formula, list[bool]] = {}

    def sat(g: Formula) -> list[bool]:
        if g in memo:
            return memo[g]
        if isinstance(g, Atom):
            v = [g.index in letters[i] for i in range(n_pos)]
        elif isinstance(g, TrueF):
            v = [True] * n_pos
        elif isinstance(g, FalseF):
            v = [False] * n_pos
        elif isinstance(g, NotF):
            v = [not x for x in sat(g.sub)]
        elif isinstance(g, AndF):
            l, r = sat(g.left), sat(g.right)
            v = [a and b for a, b in zip(l, r)]
        elif isinstance(g, OrF):
            l, r = sat(g.left), sat(g.right)
            v = [a or b for a, b in zip(l, r)]
        elif isinstance(g, NextF):
            s = sat(g.sub)
            v = [s[succ(i)] for i in range(n_pos)]
        elif isinstance(g, UntilF):
            l, r = sat(g.left), sat(g.right)
            v = [False] * n_pos
            # least fixpoint: iterate until stable (bounded by positions+1)
            for _ in range(n_pos + 1):
                changed = False
                for i in range(n_pos - 1, -1, -1):
                    nv = r[i] or (l[i] and v[succ(i)])
                    if nv != v[i]:
                        v[i] = nv
                        changed = True
                if not changed:
                    break
        elif isinstance(g, ReleaseF):
            l, r = sat(g.left), sat(g.right)
            v = [True] * n_pos
            # greatest fixpoint: X = r & (l | next X)
            for _ in range(n_pos + 1):
                changed = False
                for i in range(n_pos - 1, -1, -1):
                    nv = r[i] and (l[i] or v[succ(i)])
                    if nv != v[i]:
                        v[i] = nv
                        changed = True
                if not changed:
                    break
        else:
            # sugar: normalize and retry
            v = sat(to_nnf(g))
        memo[g] = v
        return v

    return sat(to_nnf(f))[0]


def all_letters(n_atoms: int) -> list[frozenset[int]]:
    """Every atom valuation over n_atoms atoms, in a stable order."""
    out = []
    for bits in itertools.product((0, 1), repeat=n_atoms):
        out.append(frozenset(i for i, b in enumerate(bits) if b))
    return out
