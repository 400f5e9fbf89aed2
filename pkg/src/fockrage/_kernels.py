"""Select the compiled kernels if importable, else the numpy fallback.

Set ``FOCKRAGE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("FOCKRAGE_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

rank_states = _impl.rank_states
ladder_coo = _impl.ladder_coo
