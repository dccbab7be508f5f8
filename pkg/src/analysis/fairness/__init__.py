# Fairness Audit Module
"""
Group visibility and exposure in top-k rankings, Kolmogorov-Smirnov
significance tests and the end-to-end audit pipeline.
"""

from .metrics import (
    VISIBILITY,
    EXPOSURE,
    GroupMetrics,
    ExposureDistribution,
    DisparityReport,
    ProbeConditionedMatrix,
    HitRatioCurve,
    position_weights,
    decay_norm,
    visibility,
    exposure,
    per_ranking_exposure,
    group_metrics,
    disparate,
    overall_disparity,
    probe_conditioned,
    mate_ranks,
    hit_ratio_curve,
)
from .significance import KSResult, SignificanceMatrix, ks_two_sample, significance_matrix
from .audit import (
    ConfigError,
    AuditConfig,
    load_config,
    run_synth,
    run_rank,
    run_audit,
    load_report,
    write_report_tables,
)

__all__ = [
    'VISIBILITY',
    'EXPOSURE',
    'GroupMetrics',
    'ExposureDistribution',
    'DisparityReport',
    'ProbeConditionedMatrix',
    'HitRatioCurve',
    'position_weights',
    'decay_norm',
    'visibility',
    'exposure',
    'per_ranking_exposure',
    'group_metrics',
    'disparate',
    'overall_disparity',
    'probe_conditioned',
    'mate_ranks',
    'hit_ratio_curve',
    'KSResult',
    'SignificanceMatrix',
    'ks_two_sample',
    'significance_matrix',
    'ConfigError',
    'AuditConfig',
    'load_config',
    'run_synth',
    'run_rank',
    'run_audit',
    'load_report',
    'write_report_tables',
]
