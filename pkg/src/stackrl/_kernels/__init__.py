"""Backend selection for the hot batch kernels.

The compiled Cython core is preferred when importable; the pure-numpy
fallback implements identical arithmetic (bitwise, enforced by tests).
Set STACKRL_PURE_PY=1 to force the fallback.
"""

from __future__ import annotations

import os

from . import _pure

try:
    from . import _core  # compiled extension, built by setup.py
except ImportError:
    _core = None

if os.environ.get("STACKRL_PURE_PY"):
    _active = _pure
else:
    _active = _core if _core is not None else _pure


def active_backend():
    return _active


def available_backends() -> dict[str, object]:
    out = {"pure": _pure}
    if _core is not None:
        out["compiled"] = _core
    return out


def backend_name() -> str:
    return _active.BACKEND_NAME
