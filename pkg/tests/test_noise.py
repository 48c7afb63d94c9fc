from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from spinquench.circuit import CNOT, Circuit, H, X
from spinquench.mitigation import postselect
from spinquench.model import InitialState, build_case
from spinquench.noise import (
    Calibration,
    CalibrationError,
    EdgeCal,
    NoiseModel,
    QubitCal,
    dephasing_probability,
    load_calibration,
    noisy_counts,
    parse_calibration,
    uniform_calibration,
)
from spinquench.observables import loschmidt_echo
from spinquench.sim import apply_circuit, sample_counts
from spinquench.trotter import Scheme, TrotterPlan, evolution_circuit, prepare_circuit

FIXTURE = Path(__file__).resolve().parents[1] / "configs" / "calibration_2019-03-12.txt"


def zero(n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    return psi


def test_noiseless_limit_equals_sample_counts():
    c = Circuit(3, (H(0), CNOT(0, 1), CNOT(1, 2)))
    cal = uniform_calibration(3)
    got = noisy_counts(c, range(3), NoiseModel(cal), 5000, seed=4)
    assert got == sample_counts(apply_circuit(zero(3), c), 5000, 4)


def test_idle_qubit_readout_rate():
    cal = uniform_calibration(1, readout_error=0.05)
    counts = noisy_counts(Circuit(1, ()), [0], NoiseModel(cal), 100_000, seed=1)
    frac = counts.table.get("1", 0) / counts.shots
    assert abs(frac - 0.05) < 0.002


def test_domain_wall_retention():
    init = InitialState.domain_wall(6)
    cal = uniform_calibration(6, readout_error=0.05)
    counts = noisy_counts(prepare_circuit(init.pattern), range(6), NoiseModel(cal), 100_000, seed=2)
    kept = postselect(counts, init.sz).retained_fraction
    # exact: no flip, or k up->down flips paired with k down->up flips
    p = 0.05
    exact = sum(math.comb(3, k) ** 2 * p ** (2 * k) * (1 - p) ** (6 - 2 * k) for k in range(4))
    assert abs(kept - exact) < 4 * math.sqrt(exact * (1 - exact) / 100_000)
    assert abs(0.95**6 - 0.735) < 1e-3


def test_readout_only_factorizes():
    # Bell pair with independent flips: outcome law is the noiseless law convolved with flips.
    c = Circuit(2, (H(0), CNOT(0, 1)))
    p0, p1 = 0.1, 0.2
    cal = Calibration((QubitCal(0, p0, 50, 50), QubitCal(1, p1, 50, 50)),
                      (EdgeCal(0, 1, 0.0),), label="t")
    shots = 200_000
    counts = noisy_counts(c, [0, 1], NoiseModel(cal, dephasing=False), shots, seed=3).histogram() / shots
    ideal = np.array([0.5, 0, 0, 0.5])
    flip = np.kron([[1 - p0, p0], [p0, 1 - p0]], [[1 - p1, p1], [p1, 1 - p1]])
    expected = flip @ ideal
    assert np.max(np.abs(counts - expected)) < 4 * np.sqrt(0.25 / shots)


def test_single_cnot_depolarizing_statistics():
    # |00> -> CNOT -> 15 equiprobable Paulis: each qubit flips with prob (8/15) * p.
    p = 0.3
    cal = uniform_calibration(2, cnot_error=p)
    shots = 60_000
    counts = noisy_counts(Circuit(2, (CNOT(0, 1),)), [0, 1], NoiseModel(cal), shots, seed=5)
    h = counts.histogram() / shots
    assert abs(h[0] - (1 - p + p * 3 / 15)) < 4 * np.sqrt(0.25 / shots)
    for k in (1, 2, 3):
        assert abs(h[k] - p * 4 / 15) < 4 * np.sqrt(0.25 / shots)


def test_dephasing_kills_coherence():
    # H . (idle phase noise) . H: Z errors become bit flips with probability p_z.
    t2 = 1.0
    cal = Calibration((QubitCal(0, 0.0, 1.0, t2),), (), gate_duration=0.2, label="t")
    c = Circuit(1, (H(0), H(0)))
    shots = 100_000
    counts = noisy_counts(c, [0], NoiseModel(cal), shots, seed=6)
    pz = dephasing_probability(0.2, t2)
    # a Z after the first H flips the outcome; one after the second does nothing
    assert abs(counts.table.get("1", 0) / shots - pz) < 4 * np.sqrt(pz / shots)


def test_trajectories_independent_of_threads():
    p = build_case("I", 4)
    c = prepare_circuit((1, 1, 0, 0)) + evolution_circuit(p, TrotterPlan(Scheme.Symmetric, 0.25, 2))
    cal = uniform_calibration(4, readout_error=0.03, cnot_error=0.02, t2=80.0)
    runs = [noisy_counts(c, range(4), NoiseModel(cal), 5000, seed=8, threads=t) for t in (1, 3, 8)]
    assert runs[0] == runs[1] == runs[2]
    assert noisy_counts(c, range(4), NoiseModel(cal), 5000, seed=9) != runs[0]


def test_echo_monotone_in_cnot_error():
    p = build_case("I", 4)
    init = InitialState.neel(4)
    plan = TrotterPlan(Scheme.Symmetric, 0.25, 2)
    vals = []
    for rate in (0.0, 0.02, 0.05):
        cal = uniform_calibration(4, cnot_error=rate)
        vals.append(loschmidt_echo(p, plan, init, NoiseModel(cal), 10_000, seed=1, return_stderr=True))
    for (a, sa), (b, sb) in zip(vals, vals[1:]):
        assert b <= a + 2 * math.hypot(sa, sb)


def test_layout_errors():
    cal = uniform_calibration(3)
    c = Circuit(3, (CNOT(0, 2),))
    with pytest.raises(ValueError):
        noisy_counts(c, [0, 1, 2], NoiseModel(cal), 10, seed=0)  # 0-2 is not an edge
    with pytest.raises(ValueError):
        noisy_counts(Circuit(2, (X(0),)), [0, 0], NoiseModel(cal), 10, seed=0)
    with pytest.raises(ValueError):
        noisy_counts(Circuit(2, (X(0),)), [0, 7], NoiseModel(cal), 10, seed=0)


def test_table_fixture_round_trip_and_stats():
    cal = load_calibration(FIXTURE)
    assert parse_calibration(cal.to_text()) == cal
    assert parse_calibration(cal.to_text()).to_text() == cal.to_text()
    chain = [3, 2, 1, 0, 5, 6]
    ro = [cal.qubit(q).readout_error for q in chain]
    t2 = [cal.qubit(q).t2 for q in chain]
    cx = [cal.edge(a, b).cnot_error for a, b in zip(chain, chain[1:])]
    assert (min(ro), round(sum(ro) / 6, 4), max(ro)) == (0.0370, 0.0442, 0.0670)
    assert (min(cx), round(sum(cx) / 5, 4), max(cx)) == (0.0127, 0.0215, 0.0288)
    assert (min(t2), round(sum(t2) / 6, 2), max(t2)) == (58.03, 89.62, 125.01)


@pytest.mark.parametrize("text,fragment", [
    ("", "no qubits"),
    ("qubit 0 readout_error=0.1 t1=10 t2=-5\n", "t2"),
    ("qubit 0 readout_error=1.5 t1=10 t2=5\n", "readout_error"),
    ("qubit 0 readout_error=0.1 t1=10\n", "missing"),
    ("qubit 0 readout_error=0.1 t1=10 t2=5 colour=3\n", "unknown field"),
    ("qubit 0 readout_error=0.1 t1=10 t2=5\nedge 0 4 cnot_error=0.1\n", "edge"),
    ("qubit 0 readout_error=0.1 t1=10 t2=5\nwidget 3\n", "line 2"),
])
def test_calibration_validation(text, fragment):
    with pytest.raises(CalibrationError) as err:
        parse_calibration(text)
    assert fragment in str(err.value)


def test_noise_description():
    m = NoiseModel(uniform_calibration(2), readout=False)
    assert m.describe() == "emulated[uniform]:cnot_depolarizing+dephasing"
