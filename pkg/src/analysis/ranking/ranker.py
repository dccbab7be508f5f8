# ranker.py - Cosine Ranking of Probes Against an Averaged Gallery
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from sklearn.preprocessing import normalize as l2_normalize
from tqdm import tqdm

from config.settings import DEFAULT_GRID_SIZE, RANK_CHUNK_SIZE
from src.data_collection.dataset import DatasetError

logger = logging.getLogger(__name__)

DEGENERATE_MEAN_NORM = 1e-12
SCORE_DIGITS = 9


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    """Averaged unit-norm embedding enrolled for one identity."""
    identity_id: str
    vector: np.ndarray


@dataclass(frozen=True)
class Ranking:
    """
    Top-k gallery identities for one probe.

    Entries are (identity_id, score) pairs with non-increasing scores; equal
    scores are ordered by ascending identity_id.
    """
    probe_image_id: str
    probe_identity_id: str
    entries: Tuple[Tuple[str, float], ...]

    @property
    def identities(self):
        return [identity_id for identity_id, _ in self.entries]

    def to_dict(self):
        return {
            "probe_image_id": self.probe_image_id,
            "probe_identity_id": self.probe_identity_id,
            "entries": [
                {"identity_id": identity_id, "score": float(f"{score:.{SCORE_DIGITS}g}")}
                for identity_id, score in self.entries
            ],
        }


@dataclass(frozen=True)
class RankingSet:
    """All rankings produced against one gallery with one cutoff k."""
    rankings: Tuple[Ranking, ...]
    k: int
    gallery_range: Optional[str] = None

    @property
    def n(self):
        return len(self.rankings)

    def to_jsonl(self, path):
        """Write one JSON object per probe, scores at 9 significant digits."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for ranking in self.rankings:
                f.write(json.dumps(ranking.to_dict()) + "\n")


def read_rankings(path, k=None, gallery_range=None):
    """
    Read a RankingSet written by RankingSet.to_jsonl.

    Args:
        path (str or Path): rankings JSONL file
        k (int, optional): ranking cutoff; defaults to the longest ranking found
        gallery_range (str, optional): gallery range the rankings were built on

    Returns:
        RankingSet
    """
    path = Path(path)
    rankings = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                rankings.append(Ranking(
                    probe_image_id=str(raw["probe_image_id"]),
                    probe_identity_id=str(raw["probe_identity_id"]),
                    entries=tuple((str(e["identity_id"]), float(e["score"])) for e in raw["entries"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DatasetError(f"Malformed ranking ({e})", f"{path.name} line {line_number}")
    if k is None:
        k = max((len(r.entries) for r in rankings), default=1)
    return RankingSet(tuple(rankings), k, gallery_range)


def _as_vector(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a flat vector, got shape {v.shape}")
    return v


def cosine(u, v):
    """
    Cosine similarity dot(u, v) / (|u| |v|), clamped to [-1, 1].

    Raises:
        ValueError: on dimension mismatch or a zero-norm input
    """
    u, v = _as_vector(u, "u"), _as_vector(v, "v")
    if u.shape != v.shape:
        raise ValueError(f"Dimension mismatch: {u.size} vs {v.size}")
    norm_u, norm_v = np.linalg.norm(u), np.linalg.norm(v)
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("Cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (norm_u * norm_v), -1.0, 1.0))


def verify(d_p, d_u, tau):
    """Verification trial: True (confirm) iff cosine(d_p, d_u) strictly exceeds tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"Decision threshold must be in [0, 1], got {tau}")
    return cosine(d_p, d_u) > tau


@dataclass(frozen=True)
class ThresholdCalibration:
    tau: float
    accuracy: float
    grid_size: int

    def to_dict(self):
        return {"tau": self.tau, "accuracy": self.accuracy, "grid_size": self.grid_size}


def calibrate_threshold_scores(genuine_scores, impostor_scores, grid_size=DEFAULT_GRID_SIZE):
    """
    Pick the decision threshold maximizing verification accuracy.

    Accuracy at tau is the mean over all pairs of [score > tau] for genuine
    pairs and [score <= tau] for impostor pairs. It is evaluated on grid_size
    evenly spaced thresholds over [0, 1]; ties go to the smallest threshold.

    Args:
        genuine_scores (array-like): cosine scores of same-identity pairs
        impostor_scores (array-like): cosine scores of different-identity pairs
        grid_size (int): number of grid thresholds (at least 2)

    Returns:
        ThresholdCalibration
    """
    genuine = np.sort(np.asarray(genuine_scores, dtype=np.float64).ravel())
    impostor = np.sort(np.asarray(impostor_scores, dtype=np.float64).ravel())
    if grid_size < 2:
        raise ValueError(f"grid_size must be at least 2, got {grid_size}")
    total = genuine.size + impostor.size
    if total == 0:
        raise ValueError("Threshold calibration needs at least one pair")
    if genuine.size == 0 or impostor.size == 0:
        logger.warning(
            f"Calibrating on {genuine.size} genuine and {impostor.size} impostor pairs; "
            "one class is empty"
        )

    grid = np.linspace(0.0, 1.0, grid_size)
    true_accepts = genuine.size - np.searchsorted(genuine, grid, side="right")
    true_rejects = np.searchsorted(impostor, grid, side="right")
    accuracy = (true_accepts + true_rejects) / total

    best = int(np.argmax(accuracy))
    return ThresholdCalibration(tau=float(grid[best]), accuracy=float(accuracy[best]), grid_size=grid_size)


def calibrate_threshold(pairs, grid_size=DEFAULT_GRID_SIZE):
    """
    Calibrate tau on explicit (vector, vector, same_identity) pairs.

    Args:
        pairs (iterable): (d_p, d_u, same_identity) triples
        grid_size (int): number of grid thresholds

    Returns:
        ThresholdCalibration
    """
    genuine, impostor = [], []
    for d_p, d_u, same_identity in pairs:
        (genuine if same_identity else impostor).append(cosine(d_p, d_u))
    return calibrate_threshold_scores(genuine, impostor, grid_size)


def build_gallery(gallery_images):
    """
    Average each identity's gallery images into one unit vector.

    Vectors are normalized, averaged and the mean renormalized.

    Args:
        gallery_images (dict): identity_id -> list of EmbeddingRecord

    Returns:
        list: GalleryEntry per identity, sorted by identity_id

    Raises:
        DatasetError: for an identity without images or with a degenerate mean
    """
    gallery = []
    for identity_id in sorted(gallery_images):
        images = gallery_images[identity_id]
        if not images:
            raise DatasetError("Gallery identity has no images", f"identity_id={identity_id}")
        mean = l2_normalize(np.vstack([record.vector for record in images]), norm="l2").mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < DEGENERATE_MEAN_NORM:
            raise DatasetError("Gallery mean vector is degenerate (near-zero norm)", f"identity_id={identity_id}")
        vector = mean / norm
        vector.setflags(write=False)
        gallery.append(GalleryEntry(identity_id, vector))
    return gallery


class _GalleryIndex:
    """Gallery matrix plus a content-based tie-break key per row."""

    def __init__(self, gallery):
        if not gallery:
            raise ValueError("Gallery is empty")
        self.ids = [entry.identity_id for entry in gallery]
        self.matrix = np.vstack([np.asarray(entry.vector, dtype=np.float64) for entry in gallery])
        self.id_rank = np.empty(len(self.ids), dtype=np.int64)
        self.id_rank[sorted(range(len(self.ids)), key=self.ids.__getitem__)] = np.arange(len(self.ids))

    @property
    def m(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def rank_block(self, probes, k):
        """Rank a block of probe records; returns one Ranking per probe."""
        block = np.vstack([np.asarray(p.vector, dtype=np.float64) for p in probes])
        if block.shape[1] != self.dim:
            raise ValueError(f"Dimension mismatch: probe dim {block.shape[1]}, gallery dim {self.dim}")
        norms = np.linalg.norm(block, axis=1)
        if np.any(norms == 0.0):
            bad = probes[int(np.flatnonzero(norms == 0.0)[0])].image_id
            raise ValueError(f"Zero-norm probe vector at image_id={bad}")

        scores = np.clip(l2_normalize(block, norm="l2") @ self.matrix.T, -1.0, 1.0)
        depth = min(k, self.m)
        rankings = []
        for probe, row in zip(probes, scores):
            if depth < self.m:
                cutoff = np.partition(row, self.m - depth)[self.m - depth]
                candidates = np.flatnonzero(row >= cutoff)
            else:
                candidates = np.arange(self.m)
            order = candidates[np.lexsort((self.id_rank[candidates], -row[candidates]))][:depth]
            rankings.append(Ranking(
                probe_image_id=probe.image_id,
                probe_identity_id=probe.identity_id,
                entries=tuple((self.ids[j], float(row[j])) for j in order),
            ))
        return rankings


def rank(probe, gallery, k=10):
    """
    Rank every gallery identity by cosine similarity to one probe.

    Args:
        probe (EmbeddingRecord): query image
        gallery (list): GalleryEntry list (any order)
        k (int): cutoff; the ranking holds min(k, m) entries

    Returns:
        Ranking
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return _GalleryIndex(gallery).rank_block([probe], k)[0]


def rank_all(split, gallery, k=10, workers=1, chunk_size=RANK_CHUNK_SIZE, progress=False):
    """
    Rank every probe of a split against the gallery.

    Probes are processed in fixed-size chunks; chunks may run on a thread
    pool, and the result keeps the split's probe order whatever the schedule.

    Args:
        split (Split): probes to rank
        gallery (list): GalleryEntry list
        k (int): ranking cutoff
        workers (int): worker threads (1 = serial)
        chunk_size (int): probes per work unit
        progress (bool): show a tqdm progress bar

    Returns:
        RankingSet: one Ranking per probe
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    index = _GalleryIndex(gallery)
    if k > index.m:
        logger.warning(f"k={k} exceeds gallery size m={index.m}; rankings will hold {index.m} entries")

    probes = list(split.probes)
    chunks = [probes[i:i + chunk_size] for i in range(0, len(probes), chunk_size)]

    def work(chunk):
        return index.rank_block(chunk, k)

    bar = dict(total=len(chunks), desc="Ranking probes", unit="chunk", disable=not progress)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            blocks = list(tqdm(executor.map(work, chunks), **bar))
    else:
        blocks = [work(chunk) for chunk in tqdm(chunks, **bar)]

    rankings = tuple(ranking for block in blocks for ranking in block)
    logger.info(f"Ranked {len(rankings)} probes against {index.m} gallery identities (k={k})")
    return RankingSet(rankings, k, split.gallery_range)


def rank1_identification_rate(rs, tau):
    """
    Fraction of probes whose top-1 identity is their own and scores above tau.

    Args:
        rs (RankingSet): rankings to score
        tau (float): decision threshold

    Returns:
        float
    """
    if not rs.rankings:
        raise ValueError("RankingSet is empty")
    hits = sum(
        1 for r in rs.rankings
        if r.entries and r.entries[0][0] == r.probe_identity_id and r.entries[0][1] > tau
    )
    return hits / rs.n


def verification_pairs(split, gallery, seed=0):
    """
    Genuine and impostor verification pairs drawn from a split.

    Each probe contributes one genuine pair (against its own gallery entry) and,
    when the gallery has more than one identity, one impostor pair against a
    uniformly drawn other entry.

    Returns:
        list: (probe_vector, gallery_vector, same_identity) triples
    """
    rng = np.random.default_rng(seed)
    ids = [entry.identity_id for entry in sorted(gallery, key=lambda e: e.identity_id)]
    vectors = {entry.identity_id: entry.vector for entry in gallery}
    position = {identity_id: i for i, identity_id in enumerate(ids)}

    pairs = []
    for probe in split.probes:
        if probe.identity_id not in position:
            continue
        pairs.append((probe.vector, vectors[probe.identity_id], True))
        if len(ids) > 1:
            j = int(rng.integers(len(ids) - 1))
            if j >= position[probe.identity_id]:
                j += 1
            pairs.append((probe.vector, vectors[ids[j]], False))
    return pairs
