# metrics.py - Group Visibility and Exposure in Top-k Rankings
"""
Fairness metrics over a RankingSet.

A group is passed as the set of identity ids belonging to it. For n rankings
cut at position k:

    visibility(g, k) = 1/(n*k) * sum_i sum_pos [R_i[pos] in g]
    exposure(g, k)   = 1/(n*o) * sum_i sum_pos [R_i[pos] in g] / log2(pos + 1)

with o = sum_{pos=1..k} 1/log2(pos + 1). Rankings shorter than k contribute
only the positions they hold; the denominators stay fixed by k.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from src.data_collection.dataset import DatasetError

logger = logging.getLogger(__name__)

VISIBILITY = "visibility"
EXPOSURE = "exposure"
METRICS = (VISIBILITY, EXPOSURE)


def _check_metric(metric):
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}'; expected one of {METRICS}")


def _check_rankings(rs, k):
    if not rs.rankings:
        raise ValueError("RankingSet is empty")
    if not 1 <= k <= rs.k:
        raise ValueError(f"k must be between 1 and the ranking cutoff {rs.k}, got {k}")


def position_weights(k):
    """Logarithmic discount 1/log2(pos + 1) for pos = 1..k."""
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


def decay_norm(k):
    """Total decay o of a ranking of length k."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return float(np.sum(position_weights(k)))


def _membership(rs, members, k):
    """(n x k) boolean matrix: position holds an identity from members."""
    hits = np.zeros((rs.n, k), dtype=bool)
    for i, ranking in enumerate(rs.rankings):
        for pos, (identity_id, _) in enumerate(ranking.entries[:k]):
            hits[i, pos] = identity_id in members
    return hits


def visibility(rs, g, k):
    """
    Share of the top-k slots held by group g, averaged over rankings.

    Args:
        rs (RankingSet): rankings
        g (collection): identity ids of the group
        k (int): cutoff, at most rs.k

    Returns:
        float in [0, 1]
    """
    _check_rankings(rs, k)
    return float(_membership(rs, g, k).sum() / (rs.n * k))


def exposure(rs, g, k):
    """Position-discounted share of the top-k slots held by group g."""
    _check_rankings(rs, k)
    discounted = _membership(rs, g, k) @ position_weights(k)
    return float(discounted.sum() / (rs.n * decay_norm(k)))


@dataclass(frozen=True)
class GroupMetrics:
    group: str
    k: int
    visibility: float
    exposure: float

    def to_dict(self):
        return {"group": self.group, "k": self.k, "visibility": self.visibility, "exposure": self.exposure}


@dataclass(frozen=True)
class ExposureDistribution:
    """Exposure of one group in each ranking separately (n = 1 per value)."""
    group: str
    per_ranking_values: Tuple[float, ...]
    probe_image_ids: Tuple[str, ...] = ()

    def __len__(self):
        return len(self.per_ranking_values)


def per_ranking_exposure(rs, g, k, group=None):
    """
    Exposure of group g computed per ranking.

    The mean of the returned values equals exposure(rs, g, k).

    Args:
        rs (RankingSet): rankings
        g (collection): identity ids of the group
        k (int): cutoff
        group (str, optional): label recorded on the distribution

    Returns:
        ExposureDistribution
    """
    _check_rankings(rs, k)
    values = (_membership(rs, g, k) @ position_weights(k)) / decay_norm(k)
    return ExposureDistribution(
        group=group,
        per_ranking_values=tuple(float(v) for v in values),
        probe_image_ids=tuple(r.probe_image_id for r in rs.rankings),
    )


def group_metrics(rs, groups, k):
    """
    Visibility and exposure of every group.

    Args:
        groups (dict): group label -> identity ids

    Returns:
        list: GroupMetrics in the order of groups
    """
    return [
        GroupMetrics(label, k, visibility(rs, members, k), exposure(rs, members, k))
        for label, members in groups.items()
    ]


def disparate(rs, g_i, g_j, k, metric):
    """Absolute visibility or exposure gap between two groups."""
    _check_metric(metric)
    measure = visibility if metric == VISIBILITY else exposure
    return abs(measure(rs, g_i, k) - measure(rs, g_j, k))


@dataclass(frozen=True)
class DisparityReport:
    """
    Pairwise and overall disparities. Pair keys follow the order groups were
    given in; lookups through visibility_gap/exposure_gap are symmetric.
    """
    k: int
    pairwise_visibility: Mapping[Tuple[str, str], float]
    pairwise_exposure: Mapping[Tuple[str, str], float]
    overall_visibility: float
    overall_exposure: float

    @staticmethod
    def _lookup(table, a, b):
        if a == b:
            return 0.0
        return table[(a, b)] if (a, b) in table else table[(b, a)]

    def visibility_gap(self, a, b):
        return self._lookup(self.pairwise_visibility, a, b)

    def exposure_gap(self, a, b):
        return self._lookup(self.pairwise_exposure, a, b)

    def to_dict(self):
        return {
            "k": self.k,
            "overall_visibility": self.overall_visibility,
            "overall_exposure": self.overall_exposure,
            "pairs": [
                {"groups": list(pair), "visibility": self.pairwise_visibility[pair],
                 "exposure": self.pairwise_exposure[pair]}
                for pair in self.pairwise_visibility
            ],
        }


def overall_disparity(rs, groups, k):
    """
    Disparate visibility and exposure over every unordered pair of groups.

    The overall values are the unweighted means over the pairs.

    Args:
        rs (RankingSet): rankings
        groups (dict): group label -> identity ids (at least two groups)
        k (int): cutoff

    Returns:
        DisparityReport
    """
    if len(groups) < 2:
        raise ValueError(f"Disparity needs at least 2 groups, got {len(groups)}")
    metrics = {m.group: m for m in group_metrics(rs, groups, k)}

    pairwise_visibility, pairwise_exposure = {}, {}
    for a, b in itertools.combinations(groups, 2):
        pairwise_visibility[(a, b)] = abs(metrics[a].visibility - metrics[b].visibility)
        pairwise_exposure[(a, b)] = abs(metrics[a].exposure - metrics[b].exposure)

    return DisparityReport(
        k=k,
        pairwise_visibility=pairwise_visibility,
        pairwise_exposure=pairwise_exposure,
        overall_visibility=float(np.mean(list(pairwise_visibility.values()))),
        overall_exposure=float(np.mean(list(pairwise_exposure.values()))),
    )


@dataclass(frozen=True)
class ProbeConditionedMatrix:
    """
    Metric of each gallery group computed within each probe group's rankings.

    Cells of probe groups without probes are None (absent), never zero.
    """
    metric: str
    exclude_mates: bool
    k: int
    probe_groups: Tuple[str, ...]
    gallery_groups: Tuple[str, ...]
    cells: Mapping[Tuple[str, str], Optional[float]]
    probe_counts: Mapping[str, int]

    def to_frame(self):
        """Rows = probe groups, columns = gallery groups; absent cells are NaN."""
        data = [
            [np.nan if self.cells[(p, g)] is None else self.cells[(p, g)] for g in self.gallery_groups]
            for p in self.probe_groups
        ]
        frame = pd.DataFrame(data, index=list(self.probe_groups), columns=list(self.gallery_groups))
        frame.index.name = "probe_group"
        return frame

    def to_dict(self):
        return {
            "metric": self.metric,
            "exclude_mates": self.exclude_mates,
            "k": self.k,
            "probe_counts": dict(self.probe_counts),
            "cells": {
                p: {g: self.cells[(p, g)] for g in self.gallery_groups} for p in self.probe_groups
            },
        }


def _label_of(identity_groups, identity_id, role):
    try:
        return identity_groups[identity_id]
    except KeyError:
        raise DatasetError(f"No demographic label for {role} identity", f"identity_id={identity_id}")


def probe_conditioned(rs, identity_groups, metric, k, exclude_mates=False, labels=None):
    """
    Visibility or exposure of each gallery group, per probe group.

    Rankings are partitioned by the probe identity's group and the metric is
    computed within each partition. With exclude_mates, positions holding the
    probe's own identity count for no group while denominators are unchanged,
    so the cells become false-positive shares.

    Args:
        rs (RankingSet): rankings
        identity_groups (dict): identity_id -> group label (probes and gallery)
        metric (str): 'visibility' or 'exposure'
        k (int): cutoff
        exclude_mates (bool): suppress the probe's mate
        labels (list, optional): group order; defaults to the sorted labels

    Returns:
        ProbeConditionedMatrix
    """
    _check_metric(metric)
    _check_rankings(rs, k)
    if labels is None:
        labels = sorted(set(identity_groups.values()))
    labels = tuple(labels)
    code = {label: c for c, label in enumerate(labels)}

    codes = np.full((rs.n, k), -1, dtype=np.int64)
    mates = np.zeros((rs.n, k), dtype=bool)
    probe_codes = np.empty(rs.n, dtype=np.int64)
    for i, ranking in enumerate(rs.rankings):
        probe_codes[i] = code[_label_of(identity_groups, ranking.probe_identity_id, "probe")]
        for pos, (identity_id, _) in enumerate(ranking.entries[:k]):
            codes[i, pos] = code[_label_of(identity_groups, identity_id, "gallery")]
            mates[i, pos] = identity_id == ranking.probe_identity_id
    if exclude_mates:
        codes[mates] = -1

    weights = position_weights(k) if metric == EXPOSURE else np.ones(k)
    norm = decay_norm(k) if metric == EXPOSURE else float(k)

    cells, counts = {}, {}
    for p, probe_label in enumerate(labels):
        rows = codes[probe_codes == p]
        counts[probe_label] = int(rows.shape[0])
        for g, gallery_label in enumerate(labels):
            if rows.shape[0] == 0:
                cells[(probe_label, gallery_label)] = None
                continue
            discounted = (rows == g) @ weights
            cells[(probe_label, gallery_label)] = float(discounted.sum() / (rows.shape[0] * norm))

    absent = [label for label in labels if counts[label] == 0]
    if absent:
        logger.info(f"Probe groups without probes (cells marked absent): {absent}")

    return ProbeConditionedMatrix(metric, exclude_mates, k, labels, labels, cells, counts)


@dataclass(frozen=True)
class HitRatioCurve:
    """(k', hit ratio) for k' = 1..k."""
    points: Tuple[Tuple[int, float], ...]

    def to_frame(self):
        return pd.DataFrame(list(self.points), columns=["k", "hit_ratio"])

    def to_dict(self):
        return [{"k": k, "hit_ratio": ratio} for k, ratio in self.points]


def mate_ranks(rs):
    """1-based position of each probe's own identity, None when it is not ranked."""
    ranks = []
    for ranking in rs.rankings:
        identities = ranking.identities
        ranks.append(identities.index(ranking.probe_identity_id) + 1
                     if ranking.probe_identity_id in identities else None)
    return ranks


def hit_ratio_curve(rs, k):
    """
    Fraction of rankings containing the probe's identity within the first k' positions.

    Args:
        rs (RankingSet): rankings
        k (int): largest k' evaluated

    Returns:
        HitRatioCurve
    """
    _check_rankings(rs, k)
    ranks = np.array([np.inf if r is None else r for r in mate_ranks(rs)], dtype=np.float64)
    return HitRatioCurve(tuple(
        (cutoff, float(np.mean(ranks <= cutoff))) for cutoff in range(1, k + 1)
    ))
