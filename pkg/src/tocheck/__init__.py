"""tocheck: finite-state verification of timeout/calendar transition models.

Real-time systems modelled as processes with expiring timeouts (plus an
optional calendar of delayed messages) are reduced to finite clockless state
spaces and model-checked for LTL safety, liveness and timeliness properties,
with replayable counterexamples.  A clocked reference semantics (integral and
dense rational time) backs the digitization and equivalence oracles.
"""

from . import checker, clocked, clockless, digitization, dsl, ir, ltl
from .checker import (
    Verdict,
    bisim_check,
    check_invariant,
    check_ltl,
    check_timeliness,
    explore_stats,
    run_property,
)
from .clockless import ClocklessSpace, eval_update, normalize_clocked
from .dsl import parse, render
from .ir import Model, desugar_locations, flatten, max_constant, validate
from .kernel import IMPL as kernel_impl

__version__ = "0.1.0"
