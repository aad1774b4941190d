"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``TOCHECK_NO_EXT=1`` to force the pure kernel (the parity tests and the
benchmark use this).  Both kernels expose the same two entry points
(``Engine.initial_states`` / ``Engine.successors``) and must produce
identical output; `tests/test_kernel_parity.py` enforces that.
"""

from __future__ import annotations

import os

from . import _pykernel

if os.environ.get("TOCHECK_NO_EXT") == "1":
    _impl = _pykernel
else:
    try:
        from . import _ckernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernel

Engine = _impl.Engine
IMPL = _impl.IMPL


def make_engine(cm, force_python: bool = False):
    if force_python:
        return _pykernel.Engine(cm)
    return Engine(cm)
