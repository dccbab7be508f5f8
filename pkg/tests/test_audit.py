# test_audit.py - Config loading and the synth -> rank -> audit -> report pipeline
import json

import numpy as np
import pandas as pd
import pytest

from src.data_collection.dataset import DatasetError
from src.analysis.ranking.ranker import read_rankings
from src.analysis.fairness.audit import (
    REPORT_FILE,
    AuditConfig,
    ConfigError,
    load_config,
    load_report,
    run_audit,
    run_rank,
    run_synth,
    write_report_tables,
)
from src.analysis.fairness.metrics import exposure, visibility

SIX_GROUPS = {"attributes": [
    {"name": "gender", "classes": ["Men", "Women"]},
    {"name": "ethnicity", "classes": ["Asian", "Black", "Caucasian"]},
]}


def _write_config(tmp_path, synthetic=None, **sections):
    config = {
        "split": {"seed": 0},
        "output": {"dir": "out"},
        "synthetic": synthetic or {
            "scheme": SIX_GROUPS, "identities_per_group": 8, "images_per_identity": 10, "dim": 16,
        },
    }
    for name, content in sections.items():
        config.setdefault(name, {}).update(content)
    path = tmp_path / "audit.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture
def audited(tmp_path):
    """Synthetic dataset audited end to end; returns (config, report)."""
    config = load_config(_write_config(tmp_path))
    run_synth(config)
    return config, run_audit(config)


class TestLoadConfig:
    def test_defaults(self):
        config = load_config()
        assert (config.l, config.probe_frac, config.k, config.alpha) == (10, 0.3, 10, 0.05)
        assert config.max_hit_k == config.k

    def test_sections_and_relative_paths(self, tmp_path):
        path = _write_config(tmp_path, dataset={"embeddings": "data/e.jsonl"}, split={"k": 5},
                             metrics={"hit_ratio_max_k": 3})
        config = load_config(path)
        assert config.k == 5
        assert config.max_hit_k == 3
        assert config.input_path("embeddings_path") == tmp_path / "data" / "e.jsonl"
        assert config.input_path("scheme_path") == tmp_path / "out" / "scheme.json"

    def test_overrides_win(self, tmp_path):
        config = load_config(_write_config(tmp_path, split={"k": 5}), k=7, alpha=None)
        assert config.k == 7
        assert config.alpha == 0.05

    def test_gallery_range_implies_long_range_probes(self):
        config = load_config(gallery_range="close")
        assert config.probe_range == "long"

    @pytest.mark.parametrize("overrides", [
        {"alpha": 1.0},
        {"alpha": 0.0},
        {"k": 5, "hit_ratio_max_k": 6},
        {"gallery_range": "far"},
        {"probe_frac": 0.05},
        {"formats": ("pdf",)},
        {"tau": 1.5},
        {"workers": 0},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            load_config(**overrides)

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"plots": {}}), encoding="utf-8")
        with pytest.raises(ConfigError, match="plots"):
            load_config(path)

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="kk"):
            load_config(_write_config(tmp_path, split={"kk": 3}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_missing_dataset_file(self, tmp_path):
        config = load_config(output_dir=str(tmp_path / "empty"))
        with pytest.raises(ConfigError, match="not found"):
            run_rank(config)


class TestPipeline:
    def test_synth_writes_expected_records(self, tmp_path):
        path = _write_config(tmp_path, synthetic={
            "scheme": SIX_GROUPS, "identities_per_group": 20, "images_per_identity": 10, "dim": 8,
        })
        paths = run_synth(load_config(path))
        with open(paths["embeddings"], encoding="utf-8") as f:
            assert sum(1 for _ in f) == 1200

    def test_synth_is_byte_identical(self, tmp_path):
        first = run_synth(load_config(_write_config(tmp_path), output_dir="a"))
        second = run_synth(load_config(_write_config(tmp_path), output_dir="b"))
        for name in ("embeddings", "identities", "scheme"):
            assert first[name].read_bytes() == second[name].read_bytes()

    def test_rank_defaults(self, tmp_path):
        config = load_config(_write_config(tmp_path))
        run_synth(config)
        split, gallery, rankings = run_rank(config)
        assert rankings.n == 3 * 48
        assert all(len(r.entries) == 10 for r in rankings.rankings)
        manifest = json.loads((config.out_dir / "split_manifest.json").read_text(encoding="utf-8"))
        assert all(len(entry["probes"]) == 3 and len(entry["gallery"]) == 7
                   for entry in manifest["identities"].values())

    def test_rank_rerun_identical(self, tmp_path):
        config = load_config(_write_config(tmp_path))
        run_synth(config)
        run_rank(config)
        first = config.input_path("rankings_path").read_bytes()
        run_rank(load_config(_write_config(tmp_path), workers=3))
        assert config.input_path("rankings_path").read_bytes() == first

    def test_k_above_gallery_size(self, tmp_path):
        path = _write_config(tmp_path, split={"k": 60})
        config = load_config(path)
        run_synth(config)
        _, gallery, rankings = run_rank(config)
        assert len(gallery) == 48
        assert all(len(r.entries) == 48 for r in rankings.rankings)


class TestReport:
    def test_report_shape(self, audited):
        config, report = audited
        assert report["schema_version"] == "1.0"
        assert len(report["groups"]) == 6
        assert len(report["group_metrics"]) == 6
        assert len(report["disparity"]["pairs"]) == 15
        assert report["significance"]["n_comparisons"] == 15
        assert set(report["probe_conditioned"]["exposure"]) == {"with_mates", "without_mates"}
        assert len(report["hit_ratio"]) == config.k
        assert all(len(entry["sha256"]) == 64 for entry in report["inputs"].values())
        assert report["config"]["split"]["k"] == config.k

    def test_report_recomputable_from_rankings(self, audited):
        config, report = audited
        rankings = read_rankings(config.input_path("rankings_path"))
        groups = pd.read_csv(config.input_path("identities_path"), dtype=str)
        groups["label"] = groups["gender"] + "/" + groups["ethnicity"]
        for entry in report["group_metrics"]:
            members = set(groups.loc[groups["label"] == entry["group"], "identity_id"])
            assert entry["visibility"] == pytest.approx(visibility(rankings, members, config.k), abs=1e-12)
            assert entry["exposure"] == pytest.approx(exposure(rankings, members, config.k), abs=1e-12)
        assert sum(m["visibility"] for m in report["group_metrics"]) == pytest.approx(1.0, abs=1e-9)

    def test_rerun_is_bit_identical(self, audited):
        config, _ = audited
        first = (config.out_dir / REPORT_FILE).read_bytes()
        run_audit(config)
        assert (config.out_dir / REPORT_FILE).read_bytes() == first

    def test_rankings_with_smaller_k_are_replaced(self, tmp_path):
        path = _write_config(tmp_path)
        run_synth(load_config(path))
        run_rank(load_config(path, k=3))
        config = load_config(path, k=10)
        report = run_audit(config)
        assert report["config"]["split"]["k"] == 10
        assert sum(m["visibility"] for m in report["group_metrics"]) == pytest.approx(1.0, abs=1e-9)
        assert sum(m["exposure"] for m in report["group_metrics"]) == pytest.approx(1.0, abs=1e-9)
        stored = read_rankings(config.input_path("rankings_path"))
        assert all(len(r.entries) == 10 for r in stored.rankings)

    def test_rankings_from_another_seed_are_replaced(self, tmp_path):
        path = _write_config(tmp_path)
        run_synth(load_config(path))
        run_rank(load_config(path, seed=1))
        config = load_config(path, seed=2)
        report = run_audit(config)
        expected, _, _ = run_rank(config)
        assert report["exposure_distributions"]["probe_image_ids"] == [p.image_id for p in expected.probes]
        assert report["protocol"]["n_probes"] == 3 * 48

    def test_configured_rankings_file_must_match(self, tmp_path):
        path = _write_config(tmp_path, ranking={"rankings": "stored/rankings.jsonl"})
        run_synth(load_config(path))
        run_rank(load_config(path, k=3))
        before = (tmp_path / "stored" / "rankings.jsonl").read_bytes()
        with pytest.raises(ConfigError, match="does not match"):
            run_audit(load_config(path, k=10))
        assert (tmp_path / "stored" / "rankings.jsonl").read_bytes() == before

    def test_tables(self, audited):
        config, report = audited
        paths = write_report_tables(load_report(config.out_dir / REPORT_FILE), config.out_dir / "tables")
        assert len(pd.read_csv(paths["hit_ratio"])) == config.k
        matrix = pd.read_csv(paths["visibility_matrix"], index_col="probe_group")
        assert matrix.shape == (6, 6)
        distribution = pd.read_csv(paths["exposure_distribution"])
        assert len(distribution) == report["protocol"]["n_probes"]
        assert (distribution.groupby("probe_group").size() == 3 * 8).all()

    def test_missing_report(self, tmp_path):
        with pytest.raises(ConfigError, match="No audit report"):
            load_report(tmp_path / REPORT_FILE)

    def test_fixed_tau_skips_calibration(self, tmp_path):
        config = load_config(_write_config(tmp_path, metrics={"tau": 0.5}))
        run_synth(config)
        report = run_audit(config)
        assert report["identification"]["tau"] == 0.5
        assert report["identification"]["calibration"] is None

    def test_unlabelled_probe_identity(self, audited):
        config, _ = audited
        path = config.input_path("rankings_path")
        lines = path.read_text(encoding="utf-8").splitlines()
        record = json.loads(lines[0])
        record["probe_identity_id"] = "stranger"
        path.write_text("\n".join([json.dumps(record)] + lines[1:]) + "\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="identity_id=stranger"):
            run_audit(config)

    def test_single_group(self, tmp_path):
        path = _write_config(tmp_path, synthetic={
            "scheme": {"attributes": [{"name": "cohort", "classes": ["All"]}]},
            "identities_per_group": 12, "dim": 8,
        })
        config = load_config(path)
        run_synth(config)
        report = run_audit(config)
        metrics, = report["group_metrics"]
        assert metrics["visibility"] == 1.0
        assert metrics["exposure"] == pytest.approx(1.0)
        assert report["disparity"]["overall_visibility"] == 0.0
        assert report["disparity"]["overall_exposure"] == 0.0

    def test_tighter_group_gets_most_exposure(self, tmp_path):
        path = _write_config(tmp_path, synthetic={
            "scheme": SIX_GROUPS, "identities_per_group": 40, "images_per_identity": 10, "dim": 32,
            "seed": 5, "sigma_id": 1.0, "sigma_id_by_group": {"Women/Black": 0.5},
        }, metrics={"tau": 0.5})
        config = load_config(path)
        run_synth(config)
        report = run_audit(config)

        exposures = {m["group"]: m["exposure"] for m in report["group_metrics"]}
        assert max(exposures, key=exposures.get) == "Women/Black"
        assert all(exposures["Women/Black"] > value for label, value in exposures.items() if label != "Women/Black")

        probe_counts = report["probe_conditioned"]["exposure"]["with_mates"]["probe_counts"]
        assert min(probe_counts.values()) >= 100
        for pair in report["significance"]["pairs"]:
            if "Women/Black" in pair["groups"]:
                assert pair["p"] < 0.05

    def test_zero_image_noise_identifies_everyone(self, tmp_path):
        path = _write_config(tmp_path, synthetic={
            "scheme": SIX_GROUPS, "identities_per_group": 5, "dim": 16, "sigma_img": 0.0,
        }, metrics={"tau": 0.5})
        config = load_config(path)
        run_synth(config)
        report = run_audit(config)
        assert report["identification"]["rank1_identification_rate"] == 1.0
        assert report["hit_ratio"][0]["hit_ratio"] == 1.0
        assert np.all(np.diff([p["hit_ratio"] for p in report["hit_ratio"]]) >= 0)


def test_config_echo_is_json_serializable():
    assert json.loads(json.dumps(AuditConfig().to_dict()))["split"]["l"] == 10
