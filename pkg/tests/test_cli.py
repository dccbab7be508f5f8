# test_cli.py - Command line front end and exit codes
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from src.cli import EXIT_CONFIG, EXIT_DATASET, cli


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "audit.json"
    path.write_text(json.dumps({
        "output": {"dir": "out"},
        "synthetic": {
            "scheme": {"attributes": [
                {"name": "gender", "classes": ["Men", "Women"]},
                {"name": "ethnicity", "classes": ["Asian", "Black", "Caucasian"]},
            ]},
            "identities_per_group": 6,
            "dim": 8,
        },
    }), encoding="utf-8")
    return path


def _invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def test_full_pipeline(config_path):
    out = config_path.parent / "out"
    assert _invoke("synth", "--config", config_path).exit_code == 0
    assert (out / "embeddings.jsonl").exists()

    result = _invoke("rank", "--config", config_path, "--seed", 4)
    assert result.exit_code == 0, result.output
    assert "Ranked 108 probes" in result.output

    result = _invoke("audit", "--config", config_path, "--seed", 4, "--format", "json")
    assert result.exit_code == 0, result.output
    assert "Overall disparate exposure" in result.output
    assert (out / "audit_report.json").exists()
    assert not (out / "hit_ratio.csv").exists()

    result = _invoke("report", "--config", config_path, "--exclude-mates", "true")
    assert result.exit_code == 0, result.output
    assert len(pd.read_csv(out / "hit_ratio.csv")) == 10
    matrix = pd.read_csv(out / "exposure_matrix.csv", index_col="probe_group")
    assert matrix.shape == (6, 6)


def test_flags_reach_the_report(config_path):
    _invoke("synth", "--config", config_path)
    result = _invoke("audit", "--config", config_path, "--k", 5, "--alpha", 0.01)
    assert result.exit_code == 0, result.output
    report = json.loads((config_path.parent / "out" / "audit_report.json").read_text(encoding="utf-8"))
    assert report["config"]["split"]["k"] == 5
    assert report["significance"]["alpha"] == 0.01
    assert len(report["hit_ratio"]) == 5


def test_config_error_exit_code(config_path):
    result = _invoke("audit", "--config", config_path, "--alpha", 2.0)
    assert result.exit_code == EXIT_CONFIG


def test_missing_report_exit_code(tmp_path):
    result = _invoke("report", "--out", tmp_path / "nothing")
    assert result.exit_code == EXIT_CONFIG


def test_dataset_error_exit_code(config_path):
    _invoke("synth", "--config", config_path)
    embeddings = config_path.parent / "out" / "embeddings.jsonl"
    with open(embeddings, "a", encoding="utf-8") as f:
        f.write('{"image_id": "bad", "identity_id": "g0-i00000", "embedding": [0, 0, 0, 0, 0, 0, 0, 0]}\n')
    result = _invoke("rank", "--config", config_path)
    assert result.exit_code == EXIT_DATASET
    assert "image_id=bad" in result.output


def test_usage_error_exit_code():
    assert _invoke("audit", "--gallery-range", "far").exit_code == 2
