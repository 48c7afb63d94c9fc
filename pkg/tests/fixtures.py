"""Calibration fixtures shared by the selection and acceptance tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from spinquench.noise import Calibration, EdgeCal, QubitCal, load_calibration

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TABLE_FIXTURE = CONFIGS / "calibration_2019-03-12.txt"

# 20-qubit heavy-square layout of the 2019 device family
GRID_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (4, 9), (5, 6), (6, 7), (7, 8), (8, 9),
              (5, 10), (7, 12), (9, 14), (10, 11), (11, 12), (12, 13), (13, 14), (10, 15),
              (14, 19), (15, 16), (16, 17), (17, 18), (18, 19)]


def table_calibration() -> Calibration:
    return load_calibration(TABLE_FIXTURE)


def random_calibration(seed: int) -> Calibration:
    rng = np.random.default_rng(seed)
    qubits = tuple(QubitCal(i, float(rng.uniform(0.01, 0.1)), 80.0, float(rng.uniform(30, 130)))
                   for i in range(20))
    edges = tuple(EdgeCal(a, b, float(rng.uniform(0.005, 0.06)), 0.4) for a, b in GRID_EDGES)
    return Calibration(qubits, edges, 0.1, f"random-{seed}")
