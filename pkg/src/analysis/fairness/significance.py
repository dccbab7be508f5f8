# significance.py - Two-Sample Kolmogorov-Smirnov Tests over Exposure Distributions
import itertools
import logging
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np
import pandas as pd
from scipy.special import kolmogorov

from config.settings import DEFAULT_ALPHA

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n1: int
    n2: int

    def to_dict(self):
        return {"D": self.statistic, "p": self.p_value, "n1": self.n1, "n2": self.n2}


def ks_two_sample(x, y):
    """
    Two-sample Kolmogorov-Smirnov test.

    The statistic D = sup_t |F_x(t) - F_y(t)| is found by evaluating both
    empirical CDFs just before and at every merged sample value, which
    handles ties exactly. The p-value is the asymptotic Kolmogorov
    distribution's survival function at D * sqrt(n1 * n2 / (n1 + n2)), so it
    is approximate for small samples (n < 20).

    Args:
        x (array-like): first sample
        y (array-like): second sample

    Returns:
        KSResult
    """
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("Kolmogorov-Smirnov test needs two non-empty samples")

    merged = np.concatenate([x, y])
    gaps = []
    for side in ("left", "right"):
        cdf_x = np.searchsorted(x, merged, side=side) / n1
        cdf_y = np.searchsorted(y, merged, side=side) / n2
        gaps.append(np.max(np.abs(cdf_x - cdf_y)))
    statistic = float(min(max(gaps), 1.0))

    effective_n = np.sqrt(n1 * n2 / (n1 + n2))
    p_value = float(np.clip(kolmogorov(statistic * effective_n), 0.0, 1.0))
    return KSResult(statistic, p_value, n1, n2)


@dataclass(frozen=True)
class SignificanceMatrix:
    """Pairwise KS results; pair keys follow the group order, lookups are symmetric."""
    cells: Mapping[Tuple[str, str], KSResult]
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")

    @property
    def n_comparisons(self):
        return len(self.cells)

    def get(self, a, b):
        return self.cells[(a, b)] if (a, b) in self.cells else self.cells[(b, a)]

    def significant(self, a, b):
        return self.get(a, b).p_value < self.alpha

    def to_frame(self):
        rows = [
            {"group_a": a, "group_b": b, "D": r.statistic, "p_value": r.p_value,
             "n1": r.n1, "n2": r.n2, "significant": r.p_value < self.alpha}
            for (a, b), r in self.cells.items()
        ]
        return pd.DataFrame(rows, columns=["group_a", "group_b", "D", "p_value", "n1", "n2", "significant"])

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "n_comparisons": self.n_comparisons,
            "correction": None,
            "pairs": [
                {"groups": [a, b], **r.to_dict(), "significant": r.p_value < self.alpha}
                for (a, b), r in self.cells.items()
            ],
        }


def significance_matrix(dists, alpha=DEFAULT_ALPHA):
    """
    KS test between the exposure distributions of every pair of groups.

    No multiple-comparison correction is applied; n_comparisons is reported.

    Args:
        dists (dict): group label -> ExposureDistribution (or sequence of values)
        alpha (float): significance level

    Returns:
        SignificanceMatrix
    """
    if len(dists) < 2:
        raise ValueError(f"Significance matrix needs at least 2 groups, got {len(dists)}")
    samples = {}
    for label, dist in dists.items():
        values = getattr(dist, "per_ranking_values", dist)
        if values is None or len(values) == 0:
            raise ValueError(f"Exposure distribution for group '{label}' is missing or empty")
        samples[label] = values

    cells = {(a, b): ks_two_sample(samples[a], samples[b]) for a, b in itertools.combinations(samples, 2)}
    matrix = SignificanceMatrix(cells, alpha)
    flagged = sum(1 for pair in cells if matrix.significant(*pair))
    logger.info(f"{flagged} of {matrix.n_comparisons} group pairs differ at alpha={alpha}")
    return matrix
