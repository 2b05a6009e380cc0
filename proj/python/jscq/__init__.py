"""Quantized deep joint source-channel coding toolkit (C++ core)."""

import os as _os

_bundled = _os.path.join(_os.path.dirname(__file__), "data")
if "JSCQ_DATA_DIR" not in _os.environ and _os.path.isdir(_os.path.join(_bundled, "ldpc")):
    _os.environ["JSCQ_DATA_DIR"] = _bundled

from ._jscq import *  # noqa: E402,F401,F403
from ._jscq import __doc__  # noqa: E402,F401
