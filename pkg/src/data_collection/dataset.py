# dataset.py - Embedding Datasets Annotated with Demographic Labels
import itertools
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.preprocessing import normalize as l2_normalize

logger = logging.getLogger(__name__)

RANGE_TAGS = ("close", "long")
GROUP_SEPARATOR = "/"
NORM_TOLERANCE = 1e-9

EMBEDDINGS_FILE = "embeddings.jsonl"
IDENTITIES_FILE = "identities.csv"
SCHEME_FILE = "scheme.json"


class DatasetError(ValueError):
    """Invalid dataset content, reported with the offending record's locator."""

    def __init__(self, message, locator=None):
        self.locator = locator
        super().__init__(f"{message} at {locator}" if locator else message)


class EmptySplitError(DatasetError):
    """No identity satisfied the split's eligibility threshold."""


@dataclass(frozen=True)
class DemographicScheme:
    """
    Ordered protected attributes and their classes.

    A demographic group is one class per attribute, so the groups of a scheme
    are the cartesian product of its class lists. With gender {Men, Women} and
    ethnicity {Asian, Black, Caucasian} there are six groups, labelled
    'Men/Asian', 'Women/Asian', ... in attribute order.

    Args:
        attributes (sequence): (attribute-name, [class-name, ...]) pairs
    """
    attributes: Tuple[Tuple[str, Tuple[str, ...]], ...]

    def __post_init__(self):
        attributes = tuple((str(name), tuple(str(c) for c in classes)) for name, classes in self.attributes)
        object.__setattr__(self, "attributes", attributes)
        problems = scheme_problems(attributes)
        if problems:
            raise DatasetError(f"Invalid demographic scheme: {'; '.join(problems)}")

    @property
    def attribute_names(self):
        return [name for name, _ in self.attributes]

    def groups(self):
        """All groups as class tuples, in attribute-major order."""
        return list(itertools.product(*(classes for _, classes in self.attributes)))

    def labels(self):
        return [group_label(group) for group in self.groups()]

    def check_group(self, group, locator=None):
        """
        Validate a class assignment against the scheme.

        Args:
            group (sequence or str): one class per attribute, or a group label
            locator (str, optional): record locator used in the error message

        Returns:
            tuple: the group as a tuple of class names
        """
        if isinstance(group, str):
            group = tuple(group.split(GROUP_SEPARATOR))
        group = tuple(group)
        if len(group) != len(self.attributes):
            raise DatasetError(
                f"Group {group} has {len(group)} classes, scheme has {len(self.attributes)} attributes",
                locator,
            )
        for (name, classes), value in zip(self.attributes, group):
            if value not in classes:
                raise DatasetError(f"Unknown class '{value}' for attribute '{name}'", locator)
        return group

    def to_dict(self):
        return {"attributes": [{"name": name, "classes": list(classes)} for name, classes in self.attributes]}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(tuple((item["name"], tuple(item["classes"])) for item in data["attributes"]))
        except (KeyError, TypeError) as e:
            raise DatasetError(f"Malformed scheme definition: missing {e}")


def scheme_problems(attributes):
    """Return human-readable problems with a raw attribute list (empty when valid)."""
    problems = []
    if not attributes:
        problems.append("at least one attribute is required")
    names = [name for name, _ in attributes]
    if len(set(names)) != len(names):
        problems.append("attribute names must be unique")
    for name, classes in attributes:
        if not classes:
            problems.append(f"attribute '{name}' has no classes")
        if len(set(classes)) != len(classes):
            problems.append(f"class names of attribute '{name}' must be unique")
        if any(GROUP_SEPARATOR in c for c in classes):
            problems.append(f"class names of attribute '{name}' may not contain '{GROUP_SEPARATOR}'")
    return problems


def group_label(group):
    return GROUP_SEPARATOR.join(group)


def load_scheme(path):
    """Load a DemographicScheme from a JSON file."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"Scheme file is not valid JSON: {e}", str(path))
    return DemographicScheme.from_dict(data)


@dataclass(frozen=True)
class IdentityInfo:
    identity_id: str
    group: Tuple[str, ...]

    @property
    def label(self):
        return group_label(self.group)


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One image's latent vector with its identity and acquisition range."""
    image_id: str
    identity_id: str
    vector: np.ndarray
    range_tag: str = "close"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable collection of embedding records with identity metadata.

    Args:
        scheme (DemographicScheme): demographic attributes and classes
        identities (dict): identity_id -> IdentityInfo
        records (tuple): EmbeddingRecord instances
        dim (int): shared embedding dimension e
        normalized (bool): whether vectors were L2-normalized at ingestion
    """
    scheme: DemographicScheme
    identities: Mapping[str, IdentityInfo]
    records: Tuple[EmbeddingRecord, ...]
    dim: int
    normalized: bool = True

    @property
    def n_identities(self):
        return len(self.identities)

    def records_by_identity(self):
        """Records grouped by identity, identities and images both in id order."""
        grouped = {}
        for record in self.records:
            grouped.setdefault(record.identity_id, []).append(record)
        return {
            identity_id: sorted(grouped[identity_id], key=lambda r: r.image_id)
            for identity_id in sorted(grouped)
        }

    def identity_groups(self):
        """identity_id -> group label."""
        return {identity_id: info.label for identity_id, info in self.identities.items()}

    def group_members(self):
        """Group label -> frozenset of identity ids, for every group of the scheme."""
        members = {label: set() for label in self.scheme.labels()}
        for identity_id, info in self.identities.items():
            members.setdefault(info.label, set()).add(identity_id)
        return {label: frozenset(ids) for label, ids in members.items()}


@dataclass(frozen=True)
class Violation:
    code: str
    locator: str
    message: str


def _read_identities(path, scheme):
    """Read the identity metadata CSV (identity_id,<attr1>,<attr2>,...)."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetError(f"Identity metadata is not valid CSV: {e}", str(path))

    required = ["identity_id"] + scheme.attribute_names
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise DatasetError(f"Identity metadata lacks columns {missing}", str(path))

    identities = {}
    for row_number, row in enumerate(frame[required].itertuples(index=False), start=2):
        identity_id = row[0]
        locator = f"identity_id={identity_id} ({path.name} line {row_number})"
        if identity_id in identities:
            raise DatasetError("Duplicate identity metadata row", locator)
        group = scheme.check_group(row[1:], locator)
        identities[identity_id] = IdentityInfo(identity_id, group)
    return identities


def _parse_record(line, line_number, path_name):
    locator = f"{path_name} line {line_number}"
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetError(f"Malformed JSON ({e.msg})", locator)
    if not isinstance(raw, dict):
        raise DatasetError("Record is not a JSON object", locator)
    for key in ("image_id", "identity_id", "embedding"):
        if key not in raw:
            raise DatasetError(f"Record lacks '{key}'", locator)

    image_id = str(raw["image_id"])
    range_tag = raw.get("range", "close")
    if range_tag not in RANGE_TAGS:
        raise DatasetError(f"Invalid range tag '{range_tag}'", f"image_id={image_id}")
    try:
        vector = np.asarray(raw["embedding"], dtype=np.float64)
    except (TypeError, ValueError):
        raise DatasetError("Embedding is not a list of numbers", f"image_id={image_id}")
    if vector.ndim != 1 or vector.size == 0:
        raise DatasetError("Embedding must be a non-empty flat list", f"image_id={image_id}")
    return image_id, str(raw["identity_id"]), vector, range_tag


def load_dataset(path, scheme, identities_path, normalize=True):
    """
    Load an embedding dataset from JSONL plus an identity metadata CSV.

    Each JSONL line is {"image_id", "identity_id", "range", "embedding"}. The
    dimension is inferred from the first record and enforced on the rest.

    Args:
        path (str or Path): embeddings JSONL file
        scheme (DemographicScheme): scheme the metadata classes belong to
        identities_path (str or Path): identity metadata CSV
        normalize (bool): L2-normalize every vector (default True)

    Returns:
        Dataset: validated, immutable dataset

    Raises:
        DatasetError: on the first invalid record, with its locator
    """
    path = Path(path)
    identities = _read_identities(identities_path, scheme)

    image_ids, identity_ids, vectors, range_tags = [], [], [], []
    seen = set()
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            image_id, identity_id, vector, range_tag = _parse_record(line, line_number, path.name)
            locator = f"image_id={image_id}"

            if dim is None:
                dim = vector.size
            elif vector.size != dim:
                raise DatasetError(f"Dimension mismatch: expected {dim}, got {vector.size}", locator)
            if not np.all(np.isfinite(vector)):
                raise DatasetError("NaN or infinite component", locator)
            scale = np.max(np.abs(vector))
            if scale == 0.0:
                raise DatasetError("zero-norm vector", locator)
            if normalize:
                # Divide by the largest component first so the L2 norm neither overflows nor underflows
                vector = vector / scale
            elif not np.isfinite(np.linalg.norm(vector)):
                raise DatasetError("Vector norm overflows float64", locator)
            if identity_id not in identities:
                raise DatasetError(f"Identity '{identity_id}' has no metadata row", locator)
            if image_id in seen:
                raise DatasetError("Duplicate image_id", locator)

            seen.add(image_id)
            image_ids.append(image_id)
            identity_ids.append(identity_id)
            vectors.append(vector)
            range_tags.append(range_tag)

    if dim is None:
        raise DatasetError("Embedding file contains no records", str(path))

    matrix = np.vstack(vectors)
    if normalize:
        matrix = l2_normalize(matrix, norm="l2")
    matrix.setflags(write=False)

    records = tuple(
        EmbeddingRecord(image_id, identity_id, matrix[i], range_tag)
        for i, (image_id, identity_id, range_tag) in enumerate(zip(image_ids, identity_ids, range_tags))
    )
    logger.info(f"Loaded {len(records)} records of dim {dim} for {len(identities)} identities from {path}")
    return Dataset(scheme, identities, records, dim, normalized=normalize)


def write_dataset(ds, out_dir):
    """
    Write a dataset as the embeddings JSONL / identities CSV / scheme JSON triple.

    Args:
        ds (Dataset): dataset to write
        out_dir (str or Path): target directory (created if missing)

    Returns:
        dict: paths keyed by 'embeddings', 'identities', 'scheme'
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings": out_dir / EMBEDDINGS_FILE,
        "identities": out_dir / IDENTITIES_FILE,
        "scheme": out_dir / SCHEME_FILE,
    }

    with open(paths["embeddings"], "w", encoding="utf-8", newline="\n") as f:
        for record in ds.records:
            f.write(json.dumps({
                "image_id": record.image_id,
                "identity_id": record.identity_id,
                "range": record.range_tag,
                "embedding": record.vector.tolist(),
            }) + "\n")

    rows = [[identity_id, *info.group] for identity_id, info in sorted(ds.identities.items())]
    frame = pd.DataFrame(rows, columns=["identity_id"] + ds.scheme.attribute_names)
    frame.to_csv(paths["identities"], index=False, lineterminator="\n")

    with open(paths["scheme"], "w", encoding="utf-8", newline="\n") as f:
        json.dump(ds.scheme.to_dict(), f, indent=2)
        f.write("\n")

    return paths


def validate(ds):
    """
    Check every dataset invariant without raising.

    Returns:
        list: Violation records, empty iff the dataset is valid
    """
    violations = []
    for problem in scheme_problems(ds.scheme.attributes):
        violations.append(Violation("invalid-scheme", "scheme", problem))

    for identity_id, info in ds.identities.items():
        try:
            ds.scheme.check_group(info.group)
        except DatasetError as e:
            violations.append(Violation("unknown-class", f"identity_id={identity_id}", str(e)))

    seen = set()
    for record in ds.records:
        locator = f"image_id={record.image_id}"
        vector = np.asarray(record.vector)
        if record.image_id in seen:
            violations.append(Violation("duplicate-image-id", locator, "image_id appears more than once"))
        seen.add(record.image_id)
        if record.identity_id not in ds.identities:
            violations.append(Violation(
                "orphan-record", locator, f"identity '{record.identity_id}' has no metadata"))
        if record.range_tag not in RANGE_TAGS:
            violations.append(Violation("invalid-range-tag", locator, f"range tag '{record.range_tag}'"))
        if vector.ndim != 1 or vector.size != ds.dim:
            violations.append(Violation(
                "dimension-mismatch", locator, f"expected dim {ds.dim}, got shape {vector.shape}"))
            continue
        if not np.all(np.isfinite(vector)):
            violations.append(Violation("non-finite-component", locator, "NaN or infinite component"))
            continue
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            violations.append(Violation("zero-norm-vector", locator, "vector has zero norm"))
        elif ds.normalized and abs(norm - 1.0) > NORM_TOLERANCE:
            violations.append(Violation("not-normalized", locator, f"norm {norm!r} is not 1"))
    return violations


@dataclass(frozen=True)
class SplitConfig:
    """
    Probe/gallery protocol parameters.

    Args:
        l (int): images sampled per identity
        probe_frac (float): fraction of the l images used as probes
        k (int): ranking cutoff
        seed (int): sampling seed
    """
    l: int = 10
    probe_frac: float = 0.3
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.l < 2:
            raise ValueError(f"l must be at least 2, got {self.l}")
        if not 0.0 < self.probe_frac < 1.0:
            raise ValueError(f"probe_frac must be in (0, 1), got {self.probe_frac}")
        if not 1 <= self.n_probes <= self.l - 1:
            raise ValueError(
                f"probe_frac={self.probe_frac} with l={self.l} gives {self.n_probes} probes; "
                f"need between 1 and {self.l - 1}"
            )
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")

    @property
    def n_probes(self):
        # Tolerance keeps e.g. 0.57 * 100 from flooring to 56
        return math.floor(self.probe_frac * self.l + 1e-9)

    @property
    def n_gallery(self):
        return self.l - self.n_probes

    def to_dict(self):
        return {"l": self.l, "probe_frac": self.probe_frac, "k": self.k, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class Split:
    """Probe images and per-identity gallery images drawn from a dataset."""
    probes: Tuple[EmbeddingRecord, ...]
    gallery_images: Mapping[str, Tuple[EmbeddingRecord, ...]]
    eligible_identities: FrozenSet[str]
    config: SplitConfig
    probe_range: Optional[str] = None
    gallery_range: Optional[str] = None
    excluded_identities: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def n(self):
        return len(self.probes)

    def to_manifest(self):
        """JSON-serializable listing of which images went where."""
        probes_by_identity = {}
        for probe in self.probes:
            probes_by_identity.setdefault(probe.identity_id, []).append(probe.image_id)
        return {
            "config": self.config.to_dict(),
            "probe_range": self.probe_range,
            "gallery_range": self.gallery_range,
            "excluded_identities": sorted(self.excluded_identities),
            "identities": {
                identity_id: {
                    "probes": probes_by_identity.get(identity_id, []),
                    "gallery": [record.image_id for record in self.gallery_images[identity_id]],
                }
                for identity_id in sorted(self.eligible_identities)
            },
        }


def _identity_rng(seed, identity_id):
    # One stream per identity: a sample never depends on which other identities exist
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(identity_id.encode("utf-8"))])


def _draw(rng, pool, size):
    chosen = rng.choice(len(pool), size=size, replace=False)
    return [pool[i] for i in chosen]


def split_probe_gallery(ds, cfg, probe_range=None, gallery_range=None):
    """
    Split each eligible identity's images into probes and gallery images.

    Identities with fewer than l usable images are excluded. For the others,
    l images are drawn uniformly without replacement (PCG64 seeded from the
    config seed and the identity id); the first floor(probe_frac * l) drawn
    become probes, the rest gallery images. When probe_range and gallery_range
    name different tags, probes come only from the probe-range images and
    gallery images only from the gallery-range ones.

    Args:
        ds (Dataset): dataset to split
        cfg (SplitConfig): protocol parameters
        probe_range (str, optional): range tag probes must carry
        gallery_range (str, optional): range tag gallery images must carry

    Returns:
        Split: probes in (identity_id, image_id) order

    Raises:
        EmptySplitError: when no identity is eligible
    """
    for tag in (probe_range, gallery_range):
        if tag is not None and tag not in RANGE_TAGS:
            raise ValueError(f"Unknown range tag '{tag}'; expected one of {RANGE_TAGS}")

    def pool_of(records, tag):
        return records if tag is None else [r for r in records if r.range_tag == tag]

    single_pool = probe_range == gallery_range
    probes, gallery_images, excluded = [], {}, set()

    for identity_id, records in ds.records_by_identity().items():
        rng = _identity_rng(cfg.seed, identity_id)

        if single_pool:
            pool = pool_of(records, probe_range)
            if len(pool) < cfg.l:
                excluded.add(identity_id)
                continue
            sampled = _draw(rng, pool, cfg.l)
            chosen_probes, chosen_gallery = sampled[:cfg.n_probes], sampled[cfg.n_probes:]
        else:
            probe_pool = pool_of(records, probe_range)
            if len(probe_pool) < cfg.n_probes:
                excluded.add(identity_id)
                continue
            chosen_probes = _draw(rng, probe_pool, cfg.n_probes)
            taken = {r.image_id for r in chosen_probes}
            gallery_pool = [r for r in pool_of(records, gallery_range) if r.image_id not in taken]
            if len(gallery_pool) < cfg.n_gallery:
                excluded.add(identity_id)
                continue
            chosen_gallery = _draw(rng, gallery_pool, cfg.n_gallery)

        probes.extend(sorted(chosen_probes, key=lambda r: r.image_id))
        gallery_images[identity_id] = tuple(sorted(chosen_gallery, key=lambda r: r.image_id))

    if not gallery_images:
        raise EmptySplitError(
            f"No identity has enough images for l={cfg.l} "
            f"(probe_range={probe_range}, gallery_range={gallery_range})"
        )
    if excluded:
        logger.info(f"Excluded {len(excluded)} identities with fewer than l={cfg.l} usable images")

    return Split(
        probes=tuple(probes),
        gallery_images=gallery_images,
        eligible_identities=frozenset(gallery_images),
        config=cfg,
        probe_range=probe_range,
        gallery_range=gallery_range,
        excluded_identities=frozenset(excluded),
    )
