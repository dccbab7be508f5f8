"""
Configuration settings for the Face Ranking Fairness Audit project
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Project root directory
PROJECT_ROOT = Path(__file__).parent.parent

# Data directories
DATA_DIR = Path(os.getenv("AUDIT_DATA_DIR", PROJECT_ROOT / "data"))
INPUTS_DIR = DATA_DIR / "inputs"
OUTPUTS_DIR = DATA_DIR / "outputs"

# Input / output directories
EMBEDDINGS_DIR = INPUTS_DIR / "embeddings"
AUDIT_REPORTS_DIR = OUTPUTS_DIR / "audit_reports"

# Ranking protocol defaults (l images per identity, 30% probes, top-10)
DEFAULT_L = int(os.getenv("AUDIT_L", 10))
DEFAULT_PROBE_FRAC = float(os.getenv("AUDIT_PROBE_FRAC", 0.3))
DEFAULT_K = int(os.getenv("AUDIT_K", 10))
DEFAULT_SEED = int(os.getenv("AUDIT_SEED", 0))

# Metrics defaults
DEFAULT_ALPHA = float(os.getenv("AUDIT_ALPHA", 0.05))
DEFAULT_GRID_SIZE = int(os.getenv("AUDIT_GRID_SIZE", 1001))

# Ranking engine
DEFAULT_WORKERS = int(os.getenv("AUDIT_WORKERS", 1))
RANK_CHUNK_SIZE = 256

# Report
REPORT_SCHEMA_VERSION = "1.0"

# Logging Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE")


def ensure_directories():
    """Create the data directories if they don't exist."""
    for directory in [DATA_DIR, INPUTS_DIR, OUTPUTS_DIR, EMBEDDINGS_DIR, AUDIT_REPORTS_DIR]:
        directory.mkdir(parents=True, exist_ok=True)
