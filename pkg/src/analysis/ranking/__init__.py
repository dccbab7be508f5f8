# Ranking Module
"""
Cosine-similarity verification and identification: threshold calibration,
gallery averaging and top-k ranking of probes.
"""

from .ranker import (
    GalleryEntry,
    Ranking,
    RankingSet,
    ThresholdCalibration,
    cosine,
    verify,
    calibrate_threshold,
    calibrate_threshold_scores,
    build_gallery,
    rank,
    rank_all,
    rank1_identification_rate,
    verification_pairs,
    read_rankings,
)

__all__ = [
    'GalleryEntry',
    'Ranking',
    'RankingSet',
    'ThresholdCalibration',
    'cosine',
    'verify',
    'calibrate_threshold',
    'calibrate_threshold_scores',
    'build_gallery',
    'rank',
    'rank_all',
    'rank1_identification_rate',
    'verification_pairs',
    'read_rankings',
]
