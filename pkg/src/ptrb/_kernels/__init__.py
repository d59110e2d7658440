"""Hot-loop kernels: compiled when the extension is built, numpy otherwise.

Set ``PTRB_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import fallback

BACKEND = "python"
_impl = fallback
if os.environ.get("PTRB_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = fallback

scan_forward = _impl.scan_forward
scan_backward = _impl.scan_backward
fps = _impl.fps
scan_chunked = fallback.scan_chunked


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name is None:
        return _impl
    if name == "python":
        return fallback
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
