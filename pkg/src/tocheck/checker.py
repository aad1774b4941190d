"""Property checking over the clockless state space.

* ``check_invariant`` -- breadth-first reachability, shortest counterexample.
* ``check_ltl`` -- Büchi product + nested depth-first search for an
  accepting lasso (the formula is negated, so an accepting cycle *is* the
  counterexample).
* ``check_timeliness`` -- bounded-accumulation instrumentation lowered onto
  ``check_invariant``.
* ``bisim_check`` -- executable clocked/clockless equivalence oracle.
* ``explore_stats`` -- full exploration with the analytic state bound.

Verdicts are reproducible: exploration is layer-ordered BFS (worker count
changes scheduling, never results) and the nested DFS is single threaded.
LTL verdicts treat the run set as infinite paths; states with no successors
are reported in the stats as deadlocks and contribute no infinite runs.
"""

from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import clocked as clocked_mod
from . import ir, ltl
from ._compile import CompiledModel, KernelError, compile_expr, eval_prog
from .buchi import BuchiAutomaton, ltl_to_buchi
from .clockless import ClocklessSpace, state_space_bound
from .ltl import AtomTable, Formula, parse_property

DEFAULT_STATE_CAP = 5_000_000


def default_state_cap() -> int:
    env = os.environ.get("TOCHECK_STATE_CAP")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return DEFAULT_STATE_CAP


@dataclass
class Stats:
    states_stored: int = 0
    transitions: int = 0
    peak_frontier: int = 0
    deadlocks: int = 0
    wall_time: float = 0.0

    def to_json_dict(self, with_time: bool = False) -> dict:
        d = {
            "states_stored": self.states_stored,
            "transitions": self.transitions,
            "peak_frontier": self.peak_frontier,
            "deadlocks": self.deadlocks,
        }
        if with_time:
            d["wall_time"] = round(self.wall_time, 3)
        return d


@dataclass
class Counterexample:
    kind: str  # "path" | "lasso"
    states: list[tuple]
    labels: list[tuple]  # labels[i] leads states[i] -> states[i+1 or loop_start]
    loop_start: Optional[int] = None


@dataclass
class Verdict:
    """Outcome of one property check.

    ``holds`` is None exactly when the state cap was hit (resource-limited,
    neither proven nor refuted); a counterexample is present iff holds is
    False.
    """

    property: str
    holds: Optional[bool]
    counterexample: Optional[Counterexample] = None
    stats: Stats = field(default_factory=Stats)
    limit_hit: bool = False

    def to_json_dict(self, space: ClocklessSpace) -> dict:
        d: dict = {"schema": 1, "property": self.property, "holds": self.holds}
        if self.limit_hit:
            d["limit_hit"] = True
        if self.counterexample is not None:
            ce = self.counterexample
            d["counterexample"] = {
                "kind": ce.kind,
                "states": [space.decode(s).to_json_dict() for s in ce.states],
                "labels": [space.label_json(l) for l in ce.labels],
            }
            if ce.loop_start is not None:
                d["counterexample"]["loop_start"] = ce.loop_start
        d["stats"] = self.stats.to_json_dict()
        return d


class _CapHit(Exception):
    pass


# ============================================================
# invariant checking (parallel-frontier BFS, shortest counterexample)
# ============================================================


def check_invariant(
    space: ClocklessSpace,
    predicate: Formula,
    atoms: AtomTable,
    name: str = "invariant",
    state_cap: Optional[int] = None,
    workers: int = 1,
) -> Verdict:
    """Holds iff the (temporal-free) predicate is true in every reachable
    state; otherwise the violating path is shortest and deterministic."""
    cap = state_cap or default_state_cap()
    t0 = time.perf_counter()
    stats = Stats()

    def violated(s: tuple) -> bool:
        return not ltl.eval_state_formula(predicate, atoms.evaluate(s))

    succ = space.successors
    inits = space.initial_states()
    parents: dict[tuple, Optional[tuple[tuple, tuple]]] = {s: None for s in inits}
    frontier = sorted(parents)
    stats.states_stored = len(parents)
    bad: Optional[tuple] = None
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for s in frontier:
            if violated(s):
                bad = s
                break
        while frontier and bad is None:
            stats.peak_frontier = max(stats.peak_frontier, len(frontier))
            if pool is not None:
                chunks = _chunk(frontier, workers)
                results = pool.map(lambda ch: [(u, succ(u)) for u in ch], chunks)
                expanded = [item for chunk in results for item in chunk]
            else:
                expanded = [(u, succ(u)) for u in frontier]
            nxt: dict[tuple, tuple[tuple, tuple]] = {}
            for u, succs in expanded:
                stats.transitions += len(succs)
                if not succs:
                    stats.deadlocks += 1
                for lab, v in succs:
                    if v in parents:
                        continue
                    prev = nxt.get(v)
                    if prev is None or (u, lab) < prev:
                        nxt[v] = (u, lab)
            new_states = sorted(nxt)
            for v in new_states:
                parents[v] = nxt[v]
                if bad is None and violated(v):
                    bad = v
            stats.states_stored = len(parents)
            if stats.states_stored > cap:
                raise _CapHit()
            if bad is not None:
                break
            frontier = new_states
    except _CapHit:
        stats.wall_time = time.perf_counter() - t0
        return Verdict(name, None, stats=stats, limit_hit=True)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    stats.wall_time = time.perf_counter() - t0
    if bad is None:
        return Verdict(name, True, stats=stats)
    states = [bad]
    labels: list[tuple] = []
    cur = bad
    while parents[cur] is not None:
        parent, lab = parents[cur]  # type: ignore[misc]
        states.append(parent)
        labels.append(lab)
        cur = parent
    states.reverse()
    labels.reverse()
    return Verdict(
        name, False, Counterexample("path", states, labels), stats=stats
    )


def _chunk(seq: list, n: int) -> list[list]:
    size = max(1, (len(seq) + n - 1) // n)
    return [seq[i : i + size] for i in range(0, len(seq), size)]


# ============================================================
# LTL checking (product + nested DFS)
# ============================================================


def check_ltl(
    space: ClocklessSpace,
    formula: Formula,
    atoms: AtomTable,
    name: str = "ltl",
    state_cap: Optional[int] = None,
    weak_fairness: bool = False,
) -> Verdict:
    """Model-check an LTL formula over the infinite runs of the model.

    Builds the Büchi automaton of the negation and searches the product for
    an accepting lasso with the two-pass nested DFS; the first accepting
    cycle found becomes the counterexample (stem + loop of model states).

    ``weak_fairness`` adds justice on every process's discrete transitions:
    a run is only a counterexample if each process either acts infinitely
    often or is infinitely often unable to act.
    """
    cap = state_cap or default_state_cap()
    t0 = time.perf_counter()
    stats = Stats()
    nba = ltl_to_buchi(ltl.NotF(formula), len(atoms.progs))
    n_procs = space.cm.n_procs

    letter_cache: dict[tuple, frozenset[int]] = {}
    succ_cache: dict[tuple, list] = {}

    def letter(s: tuple) -> frozenset[int]:
        v = letter_cache.get(s)
        if v is None:
            v = atoms.evaluate(s)
            letter_cache[s] = v
        return v

    def msuccs(s: tuple) -> list:
        v = succ_cache.get(s)
        if v is None:
            v = space.successors(s)
            stats.transitions += len(v)
            if not v:
                stats.deadlocks += 1
            succ_cache[s] = v
            if len(succ_cache) > cap:
                raise _CapHit()
        return v

    def enabled_procs(s: tuple) -> frozenset[int]:
        out = set()
        for lab, _ in msuccs(s):
            out.update(_label_procs(lab))
        return frozenset(out)

    k_fair = n_procs if weak_fairness else 0

    def psuccs(node: tuple) -> list[tuple[tuple, tuple]]:
        """Product successors: (label, node).  Node = (s, q[, c])."""
        s, q = node[0], node[1]
        lab_s = letter(s)
        qs = nba.successors(q, lab_s)
        out = []
        if not k_fair:
            for lab, s2 in msuccs(s):
                for q2 in qs:
                    out.append((lab, (s2, q2)))
            return out
        c = node[2]
        for lab, s2 in msuccs(s):
            if c == 0:
                c2 = 1 if q in nba.accepting else 0
            else:
                j = c - 1  # waiting for justice of process j
                just = j in _label_procs(lab) or j not in enabled_procs(s)
                c2 = (c + 1) % (n_procs + 1) if just else c
            for q2 in qs:
                out.append((lab, (s2, q2, c2)))
        return out

    def accepting(node: tuple) -> bool:
        if not k_fair:
            return node[1] in nba.accepting
        return node[2] == 0 and node[1] in nba.accepting

    inits = []
    for s in space.initial_states():
        for q0 in sorted(nba.initial):
            inits.append((s, q0) if not k_fair else (s, q0, 0))

    # nested DFS, iterative.  colors: 1 cyan (on dfs1 stack), 2 blue (done).
    color: dict[tuple, int] = {}
    red: set[tuple] = set()
    lasso: Optional[Counterexample] = None

    try:
        for init in inits:
            if lasso is not None:
                break
            if init in color:
                continue
            # dfs1 stack: (node, succ-iterator, incoming label)
            stack1: list[list] = [[init, iter(psuccs(init)), None]]
            color[init] = 1
            while stack1:
                node, it, _inlab = stack1[-1]
                advanced = False
                for lab, nxt in it:
                    if nxt not in color:
                        color[nxt] = 1
                        stack1.append([nxt, iter(psuccs(nxt)), lab])
                        advanced = True
                        break
                if advanced:
                    continue
                # postorder
                if accepting(node):
                    found = _dfs2(node, psuccs, color, red)
                    if found is not None:
                        lasso = _build_lasso(stack1, node, found)
                        break
                color[node] = 2
                stack1.pop()
            if lasso is not None:
                break
    except _CapHit:
        stats.states_stored = len(succ_cache)
        stats.wall_time = time.perf_counter() - t0
        return Verdict(name, None, stats=stats, limit_hit=True)

    stats.states_stored = len(succ_cache)
    stats.peak_frontier = len(color)
    stats.wall_time = time.perf_counter() - t0
    if lasso is None:
        return Verdict(name, True, stats=stats)
    return Verdict(name, False, lasso, stats=stats)


def _label_procs(lab: tuple) -> tuple[int, ...]:
    kind = lab[0]
    if kind in ("timeout", "send", "recv"):
        return (lab[1],)
    if kind == "sync":
        return (lab[1], lab[3])
    return ()


def _dfs2(seed: tuple, psuccs, color: dict, red: set) -> Optional[list]:
    """Second DFS from an accepting node: a path back to any cyan node (one
    still on the first-search stack) closes an accepting cycle.  Returns the
    (label, node) path seed -> cyan node, or None."""
    parent: dict[tuple, tuple[tuple, tuple]] = {}
    stack = [(seed, iter(psuccs(seed)))]
    red.add(seed)
    while stack:
        node, it = stack[-1]
        advanced = False
        for lab, nxt in it:
            if color.get(nxt) == 1:  # cyan: on dfs1 stack
                path = [(lab, nxt)]
                cur = node
                while cur != seed:
                    plab, pnode = parent[cur]
                    path.append((plab, cur))
                    cur = pnode
                path.reverse()
                return path
            if nxt not in red:
                red.add(nxt)
                parent[nxt] = (lab, node)
                stack.append((nxt, iter(psuccs(nxt))))
                advanced = True
                break
        if not advanced:
            stack.pop()
    return None


def _build_lasso(stack1: list, seed: tuple, path2: list) -> Counterexample:
    """Assemble the lasso in model-state terms.

    The accepting run is: dfs1 stack from the initial node down to the cyan
    node t found by dfs2, then round the loop [t .. seed (stack tail), seed
    .. t (dfs2 path)] forever.  Labels transition states[i] -> states[i+1],
    with the final label closing back to states[loop_start].  Product states
    project to their model component.
    """
    stack_nodes = [entry[0] for entry in stack1]
    stack_labels = [entry[2] for entry in stack1[1:]]  # node i -> node i+1
    t = path2[-1][1]
    idx = stack_nodes.index(t)
    states = [n[0] for n in stack_nodes] + [n[0] for _, n in path2[:-1]]
    labels = stack_labels + [l for l, _ in path2]
    return Counterexample(kind="lasso", states=states, labels=labels, loop_start=idx)


# ============================================================
# timeliness: bounded accumulation between two flag events
# ============================================================

TIME_DIFF_VAR = "time_diff"


def instrument_time_diff(
    space: ClocklessSpace, flag1: str, flag2: str, bound: int
) -> tuple[ClocklessSpace, Formula, AtomTable]:
    """Inject the elapsed-time accumulator.

    A fresh variable ``time_diff`` gains every time-progress decrement while
    ``flag1 != 0 and flag2 = 0`` holds.  Its domain is [0, bound+1] and it
    saturates at bound+1: any value past the bound is already a violation,
    so saturation preserves the verdict while keeping the state space small
    (a plain bounded variable would overflow right after the first
    violation, turning a property failure into a model error).
    Returns (instrumented space, predicate time_diff <= bound, atoms).
    """
    fm = space.fm
    if bound < 0:
        raise ir.ModelError.single("timeliness bound must be >= 0")
    for name in (flag1, flag2):
        fm.var_index(name)  # raises KeyError -> surface as model error
    new_var = ir.FlatVar(TIME_DIFF_VAR, 0, bound + 1, (0,))
    fm2 = dataclasses.replace(fm, variables=fm.variables + (new_var,))
    from ._compile import compile_model

    cm = compile_model(fm2)
    slot = cm.var_slot(fm2.var_index(TIME_DIFF_VAR))
    guard = compile_expr(
        ir.And(
            ir.Cmp("!=", ir.Name(flag1), ir.IntLit(0)),
            ir.Cmp("=", ir.Name(flag2), ir.IntLit(0)),
        ),
        {flag1: cm.var_slot(fm2.var_index(flag1)), flag2: cm.var_slot(fm2.var_index(flag2))},
    )
    cm2 = dataclasses.replace(
        cm, accumulators=((slot, guard),), saturating_slots=frozenset({slot})
    )
    space2 = ClocklessSpace(fm2, cm=cm2)
    pred, atoms = parse_property(
        fm2, cm2, f"{TIME_DIFF_VAR} <= {bound}", kind="invariant"
    )
    return space2, pred, atoms


def check_timeliness(
    space: ClocklessSpace,
    flag_pair: tuple[str, str],
    bound: int,
    name: str = "timeliness",
    state_cap: Optional[int] = None,
    workers: int = 1,
) -> Verdict:
    """Bounded-latency check: the accumulated time between raising flag1 and
    raising flag2 never exceeds ``bound``."""
    space2, pred, atoms = instrument_time_diff(space, flag_pair[0], flag_pair[1], bound)
    v = check_invariant(space2, pred, atoms, name=name, state_cap=state_cap, workers=workers)
    v.instrumented_space = space2  # type: ignore[attr-defined]
    return v


# ============================================================
# clocked / clockless equivalence oracle
# ============================================================


@dataclass
class BisimReport:
    bisimilar: Optional[bool]  # None = inconclusive (horizon too small)
    clocked_states: int
    clockless_states: int
    horizon: int
    mismatch: Optional[str] = None

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "bisimilar": self.bisimilar,
            "clocked_states": self.clocked_states,
            "clockless_states": self.clockless_states,
            "horizon": self.horizon,
            "mismatch": self.mismatch,
        }


def bisim_check(
    fm: ir.FlatModel, horizon: Optional[int] = None, state_cap: Optional[int] = None
) -> BisimReport:
    """Check that dropping the clock changes nothing observable.

    Explores the integral clocked graph up to time ``horizon`` and the
    clockless graph to a fixpoint, then verifies that the clock-erasing map
    is a bisimulation: every explored clocked state's discrete successors
    must project exactly onto its image's discrete successors, and time
    progress corresponds by construction (both sides subtract the same
    minimum, which the projection turns into the same state).  Conclusive
    only once every clockless state has been witnessed; otherwise the report
    says inconclusive so callers can retry with a larger horizon.

    Requires a model without timing variables (clocked timing values are
    absolute timestamps with no clockless counterpart).
    """
    from . import clockless as clockless_mod

    cap = state_cap or default_state_cap()
    space = ClocklessSpace(fm)
    if space.cm.n_timing:
        raise ir.ModelError.single("bisim_check requires a model without timing variables")
    horizon = horizon if horizon is not None else 4 * fm.max_timeout + 8

    # clockless side: full fixpoint
    seen: set[tuple] = set(space.initial_states())
    frontier = sorted(seen)
    clockless_disc: dict[tuple, frozenset] = {}
    clockless_time: dict[tuple, bool] = {}
    while frontier:
        nxt = []
        for u in frontier:
            succs = space.successors(u)
            clockless_disc[u] = frozenset(
                v for lab, v in succs if lab[0] != "time"
            )
            clockless_time[u] = any(lab[0] == "time" for lab, _ in succs)
            for _, v in succs:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
            if len(seen) > cap:
                raise ir.ModelError.single("state cap exceeded in bisim_check")
        frontier = sorted(nxt)
    clockless_states = seen

    # clocked side: integral exploration bounded by the horizon
    cspace = clocked_mod.ClockedSpace(fm)
    inits = cspace.initial_states()
    explored: dict = {}
    image: set[tuple] = set()
    pruned = False
    frontier2 = list(inits)
    visited = set(inits)
    while frontier2:
        nxt2 = []
        for s in frontier2:
            succs = cspace.successors(s)
            explored[s] = succs
            for _, s2 in succs:
                if s2.t > horizon:
                    pruned = True
                    continue
                if s2 not in visited:
                    visited.add(s2)
                    nxt2.append(s2)
            if len(visited) > cap:
                raise ir.ModelError.single("state cap exceeded in bisim_check")
        frontier2 = nxt2

    for s in visited:
        image.add(clockless_mod.normalize_clocked(space, s))

    report = BisimReport(
        bisimilar=None,
        clocked_states=len(visited),
        clockless_states=len(clockless_states),
        horizon=horizon,
    )
    if not image <= clockless_states:
        extra = next(iter(image - clockless_states))
        report.bisimilar = False
        report.mismatch = f"clocked image not clockless-reachable: {extra}"
        return report

    # per-state mutual matching on discrete successors
    for s, succs in explored.items():
        u = clockless_mod.normalize_clocked(space, s)
        disc_clocked = frozenset(
            clockless_mod.normalize_clocked(space, s2)
            for lab, s2 in succs
            if lab[0] != "time"
        )
        if disc_clocked != clockless_disc.get(u, frozenset()):
            report.bisimilar = False
            report.mismatch = (
                f"discrete successor sets differ at t={s.t}: "
                f"clocked->{len(disc_clocked)} vs clockless->{len(clockless_disc.get(u, frozenset()))}"
            )
            return report
        # time progress must be enabled on both sides or neither
        has_time_clocked = any(lab[0] == "time" for lab, _ in succs)
        has_time_clockless = clockless_time.get(u, False)
        if has_time_clocked != has_time_clockless:
            report.bisimilar = False
            report.mismatch = f"time-progress enabledness differs at t={s.t}"
            return report

    if image != clockless_states:
        if pruned:
            return report  # inconclusive: horizon closed too early
        missing = next(iter(clockless_states - image))
        report.bisimilar = False
        report.mismatch = f"clockless state never witnessed: {missing}"
        return report
    report.bisimilar = True
    return report


# ============================================================
# exploration statistics
# ============================================================


@dataclass
class ExploreStats:
    states: int
    transitions: int
    deadlocks: int
    bound: int
    capped: bool = False

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "states": self.states,
            "transitions": self.transitions,
            "deadlocks": self.deadlocks,
            "state_bound": self.bound,
            "within_bound": (not self.capped) and self.states <= self.bound,
            "capped": self.capped,
        }


def explore_stats(
    space: ClocklessSpace, state_cap: Optional[int] = None
) -> ExploreStats:
    """Full reachable-set exploration with the analytic bound alongside."""
    cap = state_cap or default_state_cap()
    bound = state_space_bound(space.fm)
    seen: set[tuple] = set(space.initial_states())
    frontier = sorted(seen)
    transitions = 0
    deadlocks = 0
    capped = False
    while frontier and not capped:
        nxt = []
        for u in frontier:
            succs = space.successors(u)
            transitions += len(succs)
            if not succs:
                deadlocks += 1
            for _, v in succs:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
            if len(seen) > cap:
                capped = True
                break
        frontier = sorted(nxt)
    return ExploreStats(len(seen), transitions, deadlocks, bound, capped)


# ============================================================
# counterexample replay
# ============================================================


def replay(space: ClocklessSpace, ce: Counterexample) -> bool:
    """Re-run a counterexample's labels through the successor relation and
    confirm they reproduce its states exactly (and close the loop)."""
    states, labels = ce.states, ce.labels
    if len(labels) != len(states) - (0 if ce.kind == "lasso" else 1):
        return False
    for i, lab in enumerate(labels):
        src = states[i]
        expect = states[i + 1] if i + 1 < len(states) else states[ce.loop_start or 0]
        found = None
        for l2, v in space.successors(src):
            if l2 == lab:
                found = v
                break
        if found != expect:
            return False
    return True


# ============================================================
# property dispatch (used by the CLI and the acceptance suite)
# ============================================================


def run_property(
    space: ClocklessSpace,
    prop: ir.PropertyDecl,
    state_cap: Optional[int] = None,
    workers: int = 1,
    weak_fairness: bool = False,
) -> Verdict:
    if prop.kind == "invariant":
        pred, atoms = parse_property(space.fm, space.cm, prop.formula, kind="invariant")
        return check_invariant(
            space, pred, atoms, name=prop.name, state_cap=state_cap, workers=workers
        )
    formula, atoms = parse_property(space.fm, space.cm, prop.formula, kind="ltl")
    return check_ltl(
        space,
        formula,
        atoms,
        name=prop.name,
        state_cap=state_cap,
        weak_fairness=weak_fairness,
    )
