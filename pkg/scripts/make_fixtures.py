#!/usr/bin/env python3
"""Regenerate the synthetic fixture histograms in fixtures/.

Masses are exact CDF differences of the declared component mixtures on a
60-bin log grid, so the files are deterministic and carry no sampling noise.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from incomefit import models
from incomefit.empirical import IncomeHistogram, save_histogram

EDGES = np.geomspace(30.0, 60000.0, 61)

BIMODAL = (
    models.lognormal_model(0.55, np.log(600.0), 0.60),
    models.lognormal_model(0.45, np.log(9000.0), 0.55),
)

WORLD3 = (
    ("poor", models.lognormal_model(0.45, np.log(800.0), 0.55)),
    ("chinaindia", models.lognormal_model(0.25, np.log(2500.0), 0.45)),
    ("rich", models.lognormal_model(0.30, np.log(16000.0), 0.50)),
)


def binned_mass(parts):
    total = np.zeros(EDGES.size - 1)
    for model in parts:
        total += models.cdf(model, EDGES[1:]) - models.cdf(model, EDGES[:-1])
    return total


def main():
    out_dir = Path(__file__).resolve().parent.parent / "fixtures"
    out_dir.mkdir(exist_ok=True)

    jobs = {
        "synthetic_bimodal.csv": ("synthetic-bimodal", [m for m in BIMODAL]),
        "synthetic_world3.csv": ("synthetic-world", [m for _, m in WORLD3]),
        "synthetic_chinaindia.csv": (
            "synthetic-chinaindia",
            [m for name, m in WORLD3 if name == "chinaindia"],
        ),
    }
    for filename, (label, parts) in jobs.items():
        hist = IncomeHistogram(
            EDGES,
            binned_mass(parts),
            label=label,
            currency_note="synthetic 2011 PPP USD",
        )
        save_histogram(hist, out_dir / filename)
        print(f"wrote {out_dir / filename} (total mass {hist.total_mass():.6f})")


if __name__ == "__main__":
    main()
