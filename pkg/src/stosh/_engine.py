"""Backend selection for the stepping loops.

The compiled extension is preferred when importable; set STOSH_BACKEND to
"python" or "compiled" to force a choice (forcing "compiled" raises if the
extension is missing, instead of silently falling back).
"""

import os

from . import _engine_np

_choice = os.environ.get("STOSH_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _engine_np
elif _choice == "compiled":
    from . import _core as _impl
elif _choice == "auto":
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _engine_np
else:
    raise RuntimeError(f"STOSH_BACKEND must be auto, python or compiled, "
                       f"not {_choice!r}")

BACKEND = _impl.BACKEND
run_single = _impl.run_single
run_slaved = _impl.run_slaved
run_pair = _impl.run_pair
