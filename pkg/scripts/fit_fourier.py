"""Fit rank-5 Fourier activations to sigmoid and tanh by least squares.

For each frequency on a grid the coefficients (A, a_n, b_n) are the ordinary
least-squares solution over 401 evenly spaced points in [-4, 4]; the frequency
with the smallest max-abs error wins. Writes tests/fixtures/fourier_fits.json.

    python scripts/fit_fourier.py [output.json]
"""

import json
import sys
from pathlib import Path

import numpy as np
from scipy.special import expit

RANK = 5
GRID = np.linspace(-4.0, 4.0, 401)
OMEGAS = np.linspace(0.05, 1.5, 2901)
TARGETS = {"sigmoid": expit, "tanh": np.tanh}


def design(omega, x):
    n = np.arange(1, RANK + 1)
    angles = np.outer(x, n) * omega
    return np.hstack([np.ones((x.size, 1)), np.cos(angles), np.sin(angles)])


def fit(target):
    y = target(GRID)
    best = None
    for omega in OMEGAS:
        m = design(omega, GRID)
        coef, *_ = np.linalg.lstsq(m, y, rcond=None)
        err = float(np.max(np.abs(m @ coef - y)))
        if best is None or err < best[0]:
            best = (err, omega, coef)
    err, omega, coef = best
    return {
        "A": float(coef[0]),
        "omega": float(omega),
        "a": [float(c) for c in coef[1:RANK + 1]],
        "b": [float(c) for c in coef[RANK + 1:]],
        "max_abs_error": err,
    }


def main(argv):
    out = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parents[1] / "tests/fixtures/fourier_fits.json"
    fits = {name: fit(f) for name, f in TARGETS.items()}
    fits["grid"] = {"lo": -4.0, "hi": 4.0, "points": int(GRID.size)}
    out.write_text(json.dumps(fits, indent=2) + "\n")
    for name in TARGETS:
        print(f"{name}: omega {fits[name]['omega']:.4f}  max abs error {fits[name]['max_abs_error']:.2e}")


if __name__ == "__main__":
    main(sys.argv)
