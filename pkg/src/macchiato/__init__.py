"""Consensus fusion of binary rater segmentations.

Majority voting, mask averaging, hard and soft STAPLE, and Frechet-mean
consensuses over Jaccard/Dice distances and their soft surrogates,
optimised block-wise over morphological subcrowns.
"""
from __future__ import annotations

from ._kernels import BACKEND_NAME
from .baselines import majority_vote, mask_average, vote_counts
from .consensus import (FusionResult, Heuristic, MacchiatoConfig, OptState, hard_consensus,
                        minimize_subcrown_value, soft_consensus)
from .distances import DistanceKind, binary_distance, confusion, lmsd, soft_confusion, soft_distance
from .errors import (BudgetExceeded, ConsensusError, DegenerateCountsWarning, DomainError,
                     EmptySourceMask, GridMismatchError, MaskFormatError, SupportError)
from .fusion import MethodSpec, background_sweep, run_method
from .grid import (BinaryMask, ComponentLabels, Grid, Neighborhood, RaterStack, SoftMask,
                   SubcrownPartition, connected_components, crop, distance_map,
                   global_distance_map, pad_background, subcrown_partition)
from .metrics import (PrfTriple, detection_prf, lesionwise_prf, shannon_entropy, size_report,
                      voxel_prf)
from .oracle import OracleBudget, dense_soft, exhaustive_hard, frechet_hamming
from .staple import (PriorSpec, RaterPerformance, limit_logit, ml_staple, mml_staple,
                     posterior_logit)

__version__ = "0.1.0"
