#!/usr/bin/env python3
"""
Fairness Audit Demo Script

This script generates a six-group synthetic embedding set in which one
group's identities are packed more tightly, audits the resulting rankings and
prints how exposure is distributed across the groups.
"""

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from config.settings import AUDIT_REPORTS_DIR
from src.analysis.fairness import load_config, run_audit, run_synth

SCHEME = {"attributes": [
    {"name": "gender", "classes": ["Men", "Women"]},
    {"name": "ethnicity", "classes": ["Asian", "Black", "Caucasian"]},
]}


def main():
    """Demo the audit pipeline on synthetic embeddings."""

    print("=== Face Ranking Fairness Audit Demo ===\n")

    tight_group = "Women/Asian"
    config = load_config(
        output_dir=str(AUDIT_REPORTS_DIR / "demo"),
        synthetic={
            "scheme": SCHEME,
            "identities_per_group": 40,
            "images_per_identity": 10,
            "dim": 32,
            "sigma_id": 1.0,
            "sigma_id_by_group": {tight_group: 0.5},
        },
    )
    print(f"Identity spread halved for {tight_group}")
    print()

    try:
        run_synth(config)
        report = run_audit(config)

        print("=== Group Exposure (k=10) ===")
        for metrics in sorted(report['group_metrics'], key=lambda m: -m['exposure']):
            print(f"  {metrics['group']:<18} visibility {metrics['visibility']*100:5.1f}%   "
                  f"exposure {metrics['exposure']*100:5.1f}%")
        print()

        disparity = report['disparity']
        print("=== Disparity ===")
        print(f"Overall disparate visibility: {disparity['overall_visibility']:.4f}")
        print(f"Overall disparate exposure:   {disparity['overall_exposure']:.4f}")
        print()

        print("=== KS Tests Against the Tight Group ===")
        for pair in report['significance']['pairs']:
            if tight_group in pair['groups']:
                other = [g for g in pair['groups'] if g != tight_group][0]
                flag = "significant" if pair['significant'] else "not significant"
                print(f"  vs {other:<18} D={pair['D']:.3f}  p={pair['p']:.2e}  ({flag})")
        print()

        identification = report['identification']
        print(f"Calibrated threshold: {identification['tau']:.3f}")
        print(f"Rank-1 identification rate: {identification['rank1_identification_rate']*100:.1f}%")
        print(f"\nResults saved to: {config.out_dir}")

    except Exception as e:
        print(f"Error running audit: {e}")
        return 1

    return 0


if __name__ == "__main__":
    exit(main())
