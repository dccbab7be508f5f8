# audit.py - Fairness Audit Pipeline: split -> rank -> metrics -> report
import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd

from config import settings
from src import __version__
from src.data_collection.dataset import (
    EMBEDDINGS_FILE,
    IDENTITIES_FILE,
    RANGE_TAGS,
    SCHEME_FILE,
    DatasetError,
    DemographicScheme,
    SplitConfig,
    load_dataset,
    load_scheme,
    split_probe_gallery,
    write_dataset,
)
from src.data_collection.synthetic import SyntheticSpec, generate_synthetic
from src.analysis.ranking.ranker import (
    build_gallery,
    calibrate_threshold,
    rank1_identification_rate,
    rank_all,
    read_rankings,
    verification_pairs,
)
from .metrics import (
    EXPOSURE,
    METRICS,
    VISIBILITY,
    DisparityReport,
    group_metrics,
    hit_ratio_curve,
    overall_disparity,
    per_ranking_exposure,
    probe_conditioned,
)
from .significance import SignificanceMatrix, significance_matrix

logger = logging.getLogger(__name__)

RANKINGS_FILE = "rankings.jsonl"
MANIFEST_FILE = "split_manifest.json"
REPORT_FILE = "audit_report.json"
REPORT_FORMATS = ("json", "csv")

# config file section -> AuditConfig field names
CONFIG_SECTIONS = {
    "dataset": {"embeddings": "embeddings_path", "identities": "identities_path", "scheme": "scheme_path"},
    "split": {"l": "l", "probe_frac": "probe_frac", "k": "k", "seed": "seed"},
    "ranking": {"gallery_range": "gallery_range", "probe_range": "probe_range",
                "workers": "workers", "rankings": "rankings_path"},
    "metrics": {"exclude_mates": "exclude_mates", "alpha": "alpha", "hit_ratio_max_k": "hit_ratio_max_k",
                "tau": "tau", "grid_size": "grid_size"},
    "output": {"dir": "output_dir", "formats": "formats"},
}


class ConfigError(ValueError):
    """Invalid or incomplete audit configuration."""


@dataclass(frozen=True)
class AuditConfig:
    """
    Effective configuration of one audit run.

    Path values are kept as written and resolved against base_dir (the
    config file's directory), so the echoed config does not depend on the
    working directory. Dataset paths default to the files cmd_synth writes
    into output_dir.
    """
    embeddings_path: Optional[str] = None
    identities_path: Optional[str] = None
    scheme_path: Optional[str] = None
    l: int = settings.DEFAULT_L
    probe_frac: float = settings.DEFAULT_PROBE_FRAC
    k: int = settings.DEFAULT_K
    seed: int = settings.DEFAULT_SEED
    gallery_range: Optional[str] = None
    probe_range: Optional[str] = None
    workers: int = settings.DEFAULT_WORKERS
    rankings_path: Optional[str] = None
    exclude_mates: bool = False
    alpha: float = settings.DEFAULT_ALPHA
    hit_ratio_max_k: Optional[int] = None
    tau: Optional[float] = None
    grid_size: int = settings.DEFAULT_GRID_SIZE
    output_dir: str = str(settings.AUDIT_REPORTS_DIR)
    formats: Tuple[str, ...] = REPORT_FORMATS
    synthetic: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))
        if self.gallery_range is not None and self.probe_range is None:
            # Forensic protocol: probes are long-range captures
            object.__setattr__(self, "probe_range", "long")
        self.validate()

    def validate(self):
        try:
            self.split_config()
        except ValueError as e:
            raise ConfigError(f"Invalid split settings: {e}")
        for name in ("gallery_range", "probe_range"):
            value = getattr(self, name)
            if value is not None and value not in RANGE_TAGS:
                raise ConfigError(f"{name} must be one of {RANGE_TAGS}, got '{value}'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 1 <= self.max_hit_k <= self.k:
            raise ConfigError(f"hit_ratio_max_k must be between 1 and k={self.k}, got {self.max_hit_k}")
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.grid_size < 2:
            raise ConfigError(f"grid_size must be at least 2, got {self.grid_size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        unknown = set(self.formats) - set(REPORT_FORMATS)
        if unknown or not self.formats:
            raise ConfigError(f"formats must be a non-empty subset of {REPORT_FORMATS}, got {list(self.formats)}")

    @property
    def max_hit_k(self):
        return self.k if self.hit_ratio_max_k is None else self.hit_ratio_max_k

    def split_config(self):
        return SplitConfig(l=self.l, probe_frac=self.probe_frac, k=self.k, seed=self.seed)

    def resolve(self, value):
        path = Path(value)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def out_dir(self):
        return self.resolve(self.output_dir)

    def input_path(self, name):
        """Resolved dataset/rankings path, falling back to the output directory."""
        defaults = {
            "embeddings_path": EMBEDDINGS_FILE,
            "identities_path": IDENTITIES_FILE,
            "scheme_path": SCHEME_FILE,
            "rankings_path": RANKINGS_FILE,
        }
        value = getattr(self, name)
        return self.resolve(value) if value is not None else self.out_dir / defaults[name]

    def to_dict(self):
        """Config echo in the config file's section layout."""
        echo = {
            section: {key: getattr(self, attr) for key, attr in mapping.items()}
            for section, mapping in CONFIG_SECTIONS.items()
        }
        echo["output"]["formats"] = list(self.formats)
        echo["synthetic"] = dict(self.synthetic)
        return echo


def load_config(path=None, **overrides):
    """
    Build an AuditConfig from a JSON config file and flag overrides.

    Args:
        path (str or Path, optional): JSON config with sections dataset, split,
            ranking, metrics, output, synthetic
        **overrides: AuditConfig field values; None means "not given"

    Returns:
        AuditConfig
    """
    values = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")

        unknown_sections = set(raw) - set(CONFIG_SECTIONS) - {"synthetic"}
        if unknown_sections:
            raise ConfigError(f"Unknown config sections: {sorted(unknown_sections)}")
        for section, mapping in CONFIG_SECTIONS.items():
            content = raw.get(section, {})
            unknown = set(content) - set(mapping)
            if unknown:
                raise ConfigError(f"Unknown keys in '{section}': {sorted(unknown)}")
            values.update({mapping[key]: value for key, value in content.items()})
        values["synthetic"] = raw.get("synthetic", {})
        values["base_dir"] = str(path.parent)

    known = {f.name for f in fields(AuditConfig)}
    for name, value in overrides.items():
        if name not in known:
            raise ConfigError(f"Unknown setting '{name}'")
        if value is not None:
            values[name] = value

    try:
        return AuditConfig(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration: {e}")


def file_digest(path):
    """sha256 of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def _require(path, what):
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def synthetic_spec(config):
    """SyntheticSpec from the config's synthetic section."""
    data = dict(config.synthetic)
    if "scheme" not in data and config.scheme_path is None:
        raise ConfigError("The synthetic section needs a 'scheme' (or dataset.scheme must be set)")
    try:
        if "scheme" in data:
            scheme = DemographicScheme.from_dict(data["scheme"])
        else:
            scheme = load_scheme(_require(config.input_path("scheme_path"), "Scheme file"))
        data.setdefault("seed", config.seed)
        return SyntheticSpec.from_dict(data, scheme)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Invalid synthetic settings: {e}")


def run_synth(config):
    """
    Generate a synthetic dataset and write it into the output directory.

    Returns:
        dict: written paths keyed by 'embeddings', 'identities', 'scheme'
    """
    spec = synthetic_spec(config)
    dataset = generate_synthetic(spec)
    paths = write_dataset(dataset, config.out_dir)
    logger.info(f"Wrote synthetic dataset ({len(dataset.records)} records) to {config.out_dir}")
    return paths


def load_inputs(config):
    """Load the scheme and dataset named by the config."""
    scheme = load_scheme(_require(config.input_path("scheme_path"), "Scheme file"))
    return load_dataset(
        _require(config.input_path("embeddings_path"), "Embeddings file"),
        scheme,
        _require(config.input_path("identities_path"), "Identity metadata file"),
    )


def prepare_ranking(config, dataset):
    """Split the dataset and average the gallery."""
    split = split_probe_gallery(
        dataset, config.split_config(), probe_range=config.probe_range, gallery_range=config.gallery_range
    )
    gallery = build_gallery(split.gallery_images)
    return split, gallery


def run_rank(config, dataset=None, progress=False):
    """
    Split -> build gallery -> rank, writing rankings and the split manifest.

    Returns:
        tuple: (Split, gallery list, RankingSet)
    """
    dataset = dataset if dataset is not None else load_inputs(config)
    split, gallery = prepare_ranking(config, dataset)
    rankings = rank_all(split, gallery, config.k, workers=config.workers, progress=progress)

    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rankings_path = config.input_path("rankings_path")
    rankings.to_jsonl(rankings_path)
    with open(out_dir / MANIFEST_FILE, "w", encoding="utf-8", newline="\n") as f:
        json.dump(split.to_manifest(), f, indent=2)
        f.write("\n")
    logger.info(f"Wrote {rankings.n} rankings to {rankings_path}")
    return split, gallery, rankings


def ranking_mismatch(rankings, split, gallery, k):
    """
    Describe how stored rankings differ from the split and gallery of the current config.

    Returns:
        str or None: first difference found, None when the rankings belong to this protocol
    """
    stored = [r.probe_image_id for r in rankings.rankings]
    expected = [p.image_id for p in split.probes]
    if stored != expected:
        missing = len(set(expected) - set(stored))
        return f"{len(stored)} stored probes, {len(expected)} expected, {missing} expected probes missing"
    length = min(k, len(gallery))
    gallery_ids = {entry.identity_id for entry in gallery}
    for ranking in rankings.rankings:
        if len(ranking.entries) != length:
            return (f"ranking of {ranking.probe_image_id} has {len(ranking.entries)} entries, "
                    f"expected {length} for k={k}")
        unknown = set(ranking.identities) - gallery_ids
        if unknown:
            return f"ranking of {ranking.probe_image_id} names identities outside the gallery: {sorted(unknown)[:3]}"
    return None


def run_audit(config, progress=False):
    """
    Compute every fairness output for a dataset and its rankings.

    Rankings are read from the configured rankings file, which is produced
    first when missing; metrics always see the scores as stored on disk. A
    stored file whose probes or ranking lengths disagree with the current
    split is ranked again, or rejected when the rankings path was configured
    explicitly. The
    report is a plain dict and a pure function of the input files and the
    config.

    Returns:
        dict: the audit report
    """
    dataset = load_inputs(config)
    rankings_path = config.input_path("rankings_path")
    if rankings_path.exists():
        split, gallery = prepare_ranking(config, dataset)
        rankings = read_rankings(rankings_path, k=config.k, gallery_range=config.gallery_range)
        mismatch = ranking_mismatch(rankings, split, gallery, config.k)
        if mismatch is not None:
            if config.rankings_path is not None:
                raise ConfigError(
                    f"Rankings file {rankings_path} does not match the configured protocol ({mismatch}); "
                    f"rerun rank with the same settings"
                )
            logger.warning(f"Stale rankings in {rankings_path} ({mismatch}); ranking again")
            run_rank(config, dataset, progress=progress)
            rankings = read_rankings(rankings_path, k=config.k, gallery_range=config.gallery_range)
    else:
        split, gallery, _ = run_rank(config, dataset, progress=progress)
        rankings = read_rankings(rankings_path, k=config.k, gallery_range=config.gallery_range)
    if not rankings.rankings:
        raise DatasetError("Rankings file holds no rankings", str(rankings_path))
    logger.info(f"Read {rankings.n} rankings from {rankings_path}")

    identity_groups = dataset.identity_groups()
    for ranking in rankings.rankings:
        if ranking.probe_identity_id not in identity_groups:
            raise DatasetError("Probe identity has no demographic labels", f"identity_id={ranking.probe_identity_id}")

    labels = dataset.scheme.labels()
    groups = dataset.group_members()
    k = config.k

    metrics = group_metrics(rankings, groups, k)
    if len(groups) >= 2:
        disparity = overall_disparity(rankings, groups, k)
    else:
        disparity = DisparityReport(k, {}, {}, 0.0, 0.0)

    distributions = {label: per_ranking_exposure(rankings, members, k, group=label) for label, members in groups.items()}
    if len(distributions) >= 2:
        significance = significance_matrix(distributions, config.alpha)
    else:
        significance = SignificanceMatrix({}, config.alpha)

    conditioned = {
        metric: {
            ("without_mates" if exclude else "with_mates"): probe_conditioned(
                rankings, identity_groups, metric, k, exclude_mates=exclude, labels=labels
            ).to_dict()
            for exclude in (False, True)
        }
        for metric in METRICS
    }

    if config.tau is None:
        calibration = calibrate_threshold(verification_pairs(split, gallery, config.seed), config.grid_size)
        tau = calibration.tau
    else:
        calibration, tau = None, config.tau

    inputs = {
        name: {"path": str(getattr(config, attr) or config.input_path(attr).name),
               "sha256": file_digest(config.input_path(attr))}
        for name, attr in (("embeddings", "embeddings_path"), ("identities", "identities_path"),
                           ("scheme", "scheme_path"), ("rankings", "rankings_path"))
    }

    report = {
        "schema_version": settings.REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "config": config.to_dict(),
        "inputs": inputs,
        "protocol": {
            "n_probes": rankings.n,
            "n_gallery_identities": len(gallery),
            "n_excluded_identities": len(split.excluded_identities),
            "k": k,
            "probe_range": config.probe_range,
            "gallery_range": config.gallery_range,
        },
        "groups": labels,
        "group_metrics": [m.to_dict() for m in metrics],
        "disparity": disparity.to_dict(),
        "probe_conditioned": conditioned,
        "hit_ratio": hit_ratio_curve(rankings, config.max_hit_k).to_dict(),
        "exposure_distributions": {
            "probe_image_ids": [r.probe_image_id for r in rankings.rankings],
            "probe_groups": [identity_groups[r.probe_identity_id] for r in rankings.rankings],
            "values": {label: list(dist.per_ranking_values) for label, dist in distributions.items()},
        },
        "significance": significance.to_dict(),
        "identification": {
            "tau": tau,
            "calibration": calibration.to_dict() if calibration is not None else None,
            "rank1_identification_rate": rank1_identification_rate(rankings, tau),
        },
    }

    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in config.formats:
        write_report(report, out_dir / REPORT_FILE)
    if "csv" in config.formats:
        write_report_tables(report, out_dir, exclude_mates=config.exclude_mates)
    return report


def write_report(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report, f, indent=2, allow_nan=False)
        f.write("\n")


def load_report(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"No audit report at {path}; run the audit first")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def matrix_frame(report, metric, exclude_mates=False):
    """Probe-conditioned matrix from a report as a DataFrame (rows = probe groups)."""
    matrix = report["probe_conditioned"][metric]["without_mates" if exclude_mates else "with_mates"]
    labels = report["groups"]
    frame = pd.DataFrame(
        [[matrix["cells"][p][g] for g in labels] for p in labels],
        index=labels, columns=labels, dtype=float,
    )
    frame.index.name = "probe_group"
    return frame


def write_report_tables(report, out_dir, exclude_mates=False):
    """
    Write the plot-ready CSV tables behind an audit report.

    Tables: per-ranking exposure by group, hit-ratio curve, probe-conditioned
    visibility and exposure matrices, group metrics and pairwise KS results.

    Returns:
        dict: table name -> written path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dists = report["exposure_distributions"]
    tables = {
        "exposure_distribution": pd.DataFrame({
            "probe_image_id": dists["probe_image_ids"],
            "probe_group": dists["probe_groups"],
            **{label: dists["values"][label] for label in report["groups"]},
        }),
        "hit_ratio": pd.DataFrame(report["hit_ratio"], columns=["k", "hit_ratio"]),
        "visibility_matrix": matrix_frame(report, VISIBILITY, exclude_mates).reset_index(),
        "exposure_matrix": matrix_frame(report, EXPOSURE, exclude_mates).reset_index(),
        "group_metrics": pd.DataFrame(report["group_metrics"], columns=["group", "k", "visibility", "exposure"]),
        "significance": pd.DataFrame(
            [{"group_a": p["groups"][0], "group_b": p["groups"][1], "D": p["D"], "p_value": p["p"],
              "n1": p["n1"], "n2": p["n2"], "significant": p["significant"]}
             for p in report["significance"]["pairs"]],
            columns=["group_a", "group_b", "D", "p_value", "n1", "n2", "significant"],
        ),
    }

    paths = {}
    for name, frame in tables.items():
        paths[name] = out_dir / f"{name}.csv"
        frame.to_csv(paths[name], index=False, lineterminator="\n")
    logger.info(f"Wrote {len(paths)} report tables to {out_dir}")
    return paths
