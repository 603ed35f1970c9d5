"""Python access to the sgan core operations.

When installed via pip the compiled module sits next to this file. In a
plain CMake build the tests point SGAN_PYTHON_BUILD_DIR at the build
directory instead.
"""

import os
import sys

try:
    from ._core import *  # noqa: F401,F403
    from . import _core as _core_module
except ImportError:
    _build_dir = os.environ.get("SGAN_PYTHON_BUILD_DIR")
    if not _build_dir:
        raise
    sys.path.insert(0, _build_dir)
    from _core import *  # noqa: F401,F403
    import _core as _core_module

__all__ = [name for name in dir(_core_module) if not name.startswith("_")]
