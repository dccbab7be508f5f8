# Face Ranking Fairness Audit Source Package

__version__ = "0.1.0"
