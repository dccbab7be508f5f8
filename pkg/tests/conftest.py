# conftest.py - Shared fixtures for the fairness audit tests
import json

import numpy as np
import pytest

from src.data_collection.dataset import DemographicScheme, write_dataset
from src.data_collection.synthetic import SyntheticSpec, generate_synthetic
from src.analysis.ranking.ranker import Ranking, RankingSet


@pytest.fixture
def scheme():
    return DemographicScheme((
        ("gender", ("Men", "Women")),
        ("ethnicity", ("Asian", "Black", "Caucasian")),
    ))


@pytest.fixture
def two_group_scheme():
    return DemographicScheme((("group", ("A", "B")),))


@pytest.fixture
def make_rankings():
    """Build a RankingSet from lists of identity ids (scores descend from 1.0)."""
    def build(lists, probe_identities=None, k=None):
        probe_identities = probe_identities or [f"probe{i}" for i in range(len(lists))]
        rankings = tuple(
            Ranking(
                probe_image_id=f"img{i:04d}",
                probe_identity_id=probe_identities[i],
                entries=tuple((identity_id, 1.0 - 0.01 * pos) for pos, identity_id in enumerate(ids)),
            )
            for i, ids in enumerate(lists)
        )
        return RankingSet(rankings, k if k is not None else max(len(ids) for ids in lists))
    return build


@pytest.fixture
def small_spec(scheme):
    return SyntheticSpec(scheme, identities_per_group=6, images_per_identity=10, dim=16, seed=7)


@pytest.fixture
def synthetic_dataset(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture
def dataset_dir(tmp_path, synthetic_dataset):
    """Synthetic dataset written to disk as embeddings/identities/scheme files."""
    write_dataset(synthetic_dataset, tmp_path / "data")
    return tmp_path / "data"


@pytest.fixture
def write_embeddings(tmp_path):
    """Write raw JSONL records plus an identities CSV; returns (embeddings, identities) paths."""
    def write(records, identity_rows, header="identity_id,gender,ethnicity"):
        embeddings = tmp_path / "embeddings.jsonl"
        with open(embeddings, "w", encoding="utf-8") as f:
            for record in records:
                f.write((record if isinstance(record, str) else json.dumps(record)) + "\n")
        identities = tmp_path / "identities.csv"
        identities.write_text("\n".join([header, *identity_rows]) + "\n", encoding="utf-8")
        return embeddings, identities
    return write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
