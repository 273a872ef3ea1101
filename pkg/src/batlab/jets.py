"""Second-order forward AD: backend selection.

The compiled kernel (``batlab._jetcore``, Cython) is preferred; the
pure-Python module ``batlab._jetpy`` is the reference implementation and the
fallback when the extension is not built.  Set ``BATLAB_JETS=python`` or
``BATLAB_JETS=compiled`` to force a backend (the latter raises if the
extension is missing).
"""

import os

_requested = os.environ.get("BATLAB_JETS", "auto").lower()

if _requested == "python":
    from . import _jetpy as _impl
elif _requested == "compiled":
    from . import _jetcore as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _jetcore as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _jetpy as _impl  # type: ignore[no-redef]

Jet2 = _impl.Jet2
variable = _impl.variable
constant = _impl.constant
from_parts = _impl.from_parts
exp = _impl.exp
log = _impl.log
sin = _impl.sin
cos = _impl.cos
sqrt = _impl.sqrt
powc = _impl.powc
FUNCTIONS = _impl.FUNCTIONS
MAX_ARITY = _impl.MAX_ARITY
JET_BACKEND = _impl.BACKEND

__all__ = [
    "Jet2", "variable", "constant", "from_parts",
    "exp", "log", "sin", "cos", "sqrt", "powc",
    "FUNCTIONS", "MAX_ARITY", "JET_BACKEND",
]
