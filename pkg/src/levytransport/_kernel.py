"""Backend selection for the time-stepping kernel.

The compiled extension is used when available; set the environment variable
``LEVYTRANSPORT_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

from __future__ import annotations

import os

if os.environ.get("LEVYTRANSPORT_PURE_PYTHON", "") == "1":
    from . import _kernel_py as _impl
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        from . import _kernel_py as _impl

BACKEND = _impl.BACKEND
run_steps = _impl.run_steps
run_steps_block = _impl.run_steps_block
