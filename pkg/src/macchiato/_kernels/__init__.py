"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback is used. Set ``MACCHIATO_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

KIND_HAMMING = _pykernels.KIND_HAMMING
KIND_JACCARD = _pykernels.KIND_JACCARD
KIND_DICE = _pykernels.KIND_DICE
KIND_TANIMOTO = _pykernels.KIND_TANIMOTO
KIND_SOERGEL = _pykernels.KIND_SOERGEL
KIND_PSD1 = _pykernels.KIND_PSD1
KIND_PSD2 = _pykernels.KIND_PSD2

_compiled = None
if not os.environ.get("MACCHIATO_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

backend = _compiled if _compiled is not None else _pykernels
BACKEND_NAME = "compiled" if _compiled is not None else "python"

bfs_distance = backend.bfs_distance
enumerate_subsets = backend.enumerate_subsets
soft_objective = backend.soft_objective
minimize_block = backend.minimize_block


def compiled_available() -> bool:
    return _compiled is not None
