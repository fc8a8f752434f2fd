"""Voxel-level reference consensuses."""
from __future__ import annotations

import numpy as np

from .grid import BinaryMask, RaterStack, SoftMask


def vote_counts(stack: RaterStack) -> np.ndarray:
    """Per-voxel number of raters segmenting the voxel, shaped like the grid."""
    return stack.counts.reshape(stack.grid.dims)


def majority_vote(stack: RaterStack) -> BinaryMask:
    """Foreground where strictly more than half of the raters agree; ties go to background."""
    return BinaryMask(stack.grid, 2 * stack.counts > stack.K)


def mask_average(stack: RaterStack) -> SoftMask:
    return SoftMask(stack.grid, stack.counts / stack.K)
