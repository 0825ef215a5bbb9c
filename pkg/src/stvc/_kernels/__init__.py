"""Gibbs sweep kernels: compiled core with a pure-Python twin.

Both kernels implement the same sweep with the same randomness
consumption order, so a given BitGenerator state yields bit-identical
chains from either.  The compiled core is selected when importable;
set STVC_PURE_PYTHON=1 in the environment to force the twin.
"""

import os

from . import _pysweep

if os.environ.get("STVC_PURE_PYTHON") == "1":
    _impl = _pysweep
    BACKEND = "python"
else:
    try:
        from . import _csweep as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pysweep
        BACKEND = "python"

run_stvc_chain = _impl.run_stvc_chain


def active():
    """The kernel module selected for this process."""
    return _impl


def available_backends():
    """Names of the kernel implementations importable in this install."""
    out = ["python"]
    try:
        from . import _csweep  # noqa: F401
        out.insert(0, "compiled")
    except ImportError:
        pass
    return out


def kernel(name: str):
    """Fetch a kernel module by backend name ('compiled' or 'python')."""
    if name == "python":
        return _pysweep
    if name == "compiled":
        from . import _csweep
        return _csweep
    raise ValueError(f"unknown backend {name!r}")
