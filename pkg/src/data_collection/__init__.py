# Embedding Dataset Module
"""
Loading, validation, synthesis and probe/gallery splitting of embedding
datasets annotated with demographic labels.
"""

from .dataset import (
    DatasetError,
    EmptySplitError,
    DemographicScheme,
    IdentityInfo,
    EmbeddingRecord,
    Dataset,
    Violation,
    SplitConfig,
    Split,
    group_label,
    load_scheme,
    load_dataset,
    write_dataset,
    validate,
    split_probe_gallery,
)
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    'DatasetError',
    'EmptySplitError',
    'DemographicScheme',
    'IdentityInfo',
    'EmbeddingRecord',
    'Dataset',
    'Violation',
    'SplitConfig',
    'Split',
    'group_label',
    'load_scheme',
    'load_dataset',
    'write_dataset',
    'validate',
    'split_probe_gallery',
    'SyntheticSpec',
    'generate_synthetic',
]
