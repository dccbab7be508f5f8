#!/usr/bin/env python3
"""
Sample script for generating synthetic embedding datasets
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from config.settings import EMBEDDINGS_DIR, ensure_directories
from src.data_collection import DemographicScheme, SyntheticSpec, generate_synthetic, validate, write_dataset

SCHEME = DemographicScheme((
    ("gender", ("Men", "Women")),
    ("ethnicity", ("Asian", "Black", "Caucasian")),
))


def generate_dataset(name: str, **params) -> dict:
    """
    Generate a synthetic dataset and write it under the embeddings directory

    Args:
        name: Subdirectory name for the dataset
        **params: SyntheticSpec fields (dim, seed, sigma_id, ...)

    Returns:
        dict of written file paths (empty on failure)
    """
    try:
        dataset = generate_synthetic(SyntheticSpec(SCHEME, **params))
        problems = validate(dataset)
        if problems:
            print(f"Dataset {name} failed validation: {problems[0]}")
            return {}
        paths = write_dataset(dataset, EMBEDDINGS_DIR / name)
        print(f"Data saved to: {EMBEDDINGS_DIR / name}")
        return paths
    except ValueError as e:
        print(f"Error generating dataset {name}: {e}")
        return {}


def main():
    """Main function"""
    print("Face Ranking Fairness Audit - Synthetic Embedding Data")
    print("=" * 50)
    ensure_directories()

    datasets = {
        "balanced": {"dim": 64, "seed": 0},
        "tight_asian_women": {"dim": 64, "seed": 0, "sigma_id_by_group": {"Women/Asian": 0.25}},
        "close_and_long_range": {"dim": 64, "seed": 0, "sigma_long": 0.3},
    }

    for name, params in datasets.items():
        print(f"\nGenerating {name}...")
        paths = generate_dataset(name, **params)
        if paths:
            with open(paths["embeddings"], encoding="utf-8") as f:
                print(f"Wrote {sum(1 for _ in f)} records")


if __name__ == "__main__":
    main()
