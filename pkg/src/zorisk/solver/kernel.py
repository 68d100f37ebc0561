"""Select the compiled inner loop when it is importable, else the Python one.

Set ``ZORISK_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel

if os.environ.get("ZORISK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernel
    COMPILED = False
else:
    try:
        from . import _ckernel as _impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:  # extension not built
        _impl = _pykernel
        COMPILED = False

run_block = _impl.run_block
python_run_block = _pykernel.run_block

__all__ = ["run_block", "python_run_block", "COMPILED"]
