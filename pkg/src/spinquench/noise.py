"""Device calibration data and Monte Carlo emulation of a noisy device.

Every shot is one stochastic trajectory of the circuit:

* after each CNOT, with probability ``cnot_error``, one of the 15 non-identity
  two-qubit Paulis (chosen uniformly) hits the pair;
* after each gate, every qubit it touched picks up a Z with probability
  ``(1 - exp(-duration / T2)) / 2``;
* at readout each bit flips with the qubit's ``readout_error``.

T1 relaxation, cross-talk and coherent errors are not modeled.

Calibration documents are line oriented::

    label 2019-03-12
    gate_duration 0.1
    qubit 0 readout_error=0.037 t1=60.0 t2=58.03
    edge 0 1 cnot_error=0.0127 duration=0.4

Times are in microseconds. Floats are written with ``repr`` so a document
survives a load/dump cycle bit-for-bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import Circuit
from .sim import (
    Counts,
    apply_gate,
    apply_pauli_masks,
    probabilities,
    rng_for,
    run_batch,
    sample_counts,
)

DEFAULT_GATE_DURATION = 0.1
DEFAULT_CNOT_DURATION = 0.4
CHUNK = 1024


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class QubitCal:
    index: int
    readout_error: float
    t1: float
    t2: float


@dataclass(frozen=True)
class EdgeCal:
    a: int
    b: int
    cnot_error: float
    duration: float = DEFAULT_CNOT_DURATION

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.a, self.b), max(self.a, self.b))


@dataclass(frozen=True)
class Calibration:
    qubits: tuple[QubitCal, ...]
    edges: tuple[EdgeCal, ...]
    gate_duration: float = DEFAULT_GATE_DURATION
    label: str = ""
    _by_index: dict = field(init=False, repr=False, compare=False)
    _by_edge: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.qubits:
            raise CalibrationError("calibration has no qubits")
        if self.gate_duration <= 0:
            raise CalibrationError("gate_duration must be positive")
        by_index = {}
        for q in self.qubits:
            if q.index in by_index:
                raise CalibrationError(f"qubit {q.index}: duplicate record")
            _check_prob(q.readout_error, f"qubit {q.index}", "readout_error")
            _check_time(q.t1, f"qubit {q.index}", "t1")
            _check_time(q.t2, f"qubit {q.index}", "t2")
            by_index[q.index] = q
        by_edge = {}
        for e in self.edges:
            where = f"edge {e.a}-{e.b}"
            for end in (e.a, e.b):
                if end not in by_index:
                    raise CalibrationError(f"{where}: unknown qubit {end}")
            if e.a == e.b:
                raise CalibrationError(f"{where}: self loop")
            _check_prob(e.cnot_error, where, "cnot_error")
            _check_time(e.duration, where, "duration")
            if e.key in by_edge:
                raise CalibrationError(f"{where}: duplicate record")
            by_edge[e.key] = e
        object.__setattr__(self, "_by_index", by_index)
        object.__setattr__(self, "_by_edge", by_edge)

    def qubit(self, index: int) -> QubitCal:
        return self._by_index[index]

    def edge(self, a: int, b: int) -> EdgeCal | None:
        return self._by_edge.get((min(a, b), max(a, b)))

    def has_qubit(self, index: int) -> bool:
        return index in self._by_index

    def neighbors(self, index: int) -> list[int]:
        out = []
        for a, b in self._by_edge:
            if a == index:
                out.append(b)
            elif b == index:
                out.append(a)
        return sorted(out)

    def to_text(self) -> str:
        lines = []
        if self.label:
            lines.append(f"label {self.label}")
        lines.append(f"gate_duration {self.gate_duration!r}")
        for q in self.qubits:
            lines.append(f"qubit {q.index} readout_error={q.readout_error!r} t1={q.t1!r} t2={q.t2!r}")
        for e in self.edges:
            lines.append(f"edge {e.a} {e.b} cnot_error={e.cnot_error!r} duration={e.duration!r}")
        return "\n".join(lines) + "\n"


def _check_prob(value: float, where: str, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise CalibrationError(f"{where}: {name}={value} outside [0, 1]")


def _check_time(value: float, where: str, name: str) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise CalibrationError(f"{where}: {name}={value} must be positive")


_QUBIT_FIELDS = {"readout_error", "t1", "t2"}
_EDGE_FIELDS = {"cnot_error", "duration"}


def _parse_fields(tokens: list[str], allowed: set[str], required: set[str], lineno: int
                  ) -> dict[str, float]:
    values = {}
    for tok in tokens:
        name, eq, raw = tok.partition("=")
        if not eq:
            raise CalibrationError(f"line {lineno}: expected name=value, got {tok!r}")
        if name not in allowed:
            raise CalibrationError(f"line {lineno}: unknown field {name!r}")
        try:
            values[name] = float(raw)
        except ValueError:
            raise CalibrationError(f"line {lineno}: field {name!r} is not a number: {raw!r}") from None
    missing = required - values.keys()
    if missing:
        raise CalibrationError(f"line {lineno}: missing field(s) {', '.join(sorted(missing))}")
    return values


def parse_calibration(text: str) -> Calibration:
    qubits, edges = [], []
    gate_duration, label = DEFAULT_GATE_DURATION, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *tokens = line.split()
        where = f"line {lineno}"
        try:
            if kind == "label":
                label = " ".join(tokens)
            elif kind == "gate_duration":
                gate_duration = float(tokens[0])
                _check_time(gate_duration, where, "gate_duration")
            elif kind == "qubit":
                vals = _parse_fields(tokens[1:], _QUBIT_FIELDS, _QUBIT_FIELDS, lineno)
                _check_prob(vals["readout_error"], where, "readout_error")
                _check_time(vals["t1"], where, "t1")
                _check_time(vals["t2"], where, "t2")
                qubits.append(QubitCal(int(tokens[0]), vals["readout_error"], vals["t1"], vals["t2"]))
            elif kind == "edge":
                vals = _parse_fields(tokens[2:], _EDGE_FIELDS, {"cnot_error"}, lineno)
                _check_prob(vals["cnot_error"], where, "cnot_error")
                edges.append(EdgeCal(int(tokens[0]), int(tokens[1]), vals["cnot_error"],
                                     vals.get("duration", DEFAULT_CNOT_DURATION)))
            else:
                raise CalibrationError(f"{where}: unknown record {kind!r}")
        except CalibrationError:
            raise
        except (IndexError, ValueError) as exc:
            raise CalibrationError(f"{where}: malformed {kind!r} record: {raw.strip()!r}") from exc
    return Calibration(tuple(qubits), tuple(edges), gate_duration, label)


def load_calibration(path: str | Path) -> Calibration:
    return parse_calibration(Path(path).read_text())


def uniform_calibration(n_qubits: int, readout_error: float = 0.0, cnot_error: float = 0.0,
                        t2: float = math.inf, t1: float | None = None,
                        gate_duration: float = DEFAULT_GATE_DURATION,
                        cnot_duration: float = DEFAULT_CNOT_DURATION) -> Calibration:
    """A line of ``n_qubits`` identical qubits; ``t2=inf`` disables dephasing."""
    t2 = 1e300 if math.isinf(t2) else t2
    t1 = t2 if t1 is None else t1
    return Calibration(
        tuple(QubitCal(i, readout_error, t1, t2) for i in range(n_qubits)),
        tuple(EdgeCal(i, i + 1, cnot_error, cnot_duration) for i in range(n_qubits - 1)),
        gate_duration,
        "uniform",
    )


@dataclass(frozen=True)
class NoiseModel:
    source: Calibration
    cnot_depolarizing: bool = True
    readout: bool = True
    dephasing: bool = True

    def describe(self) -> str:
        on = [name for name, flag in (("cnot_depolarizing", self.cnot_depolarizing),
                                      ("readout", self.readout),
                                      ("dephasing", self.dephasing)) if flag]
        label = self.source.label or "unlabeled"
        return f"emulated[{label}]:{'+'.join(on) or 'none'}"


def dephasing_probability(duration: float, t2: float) -> float:
    return 0.5 * (1.0 - math.exp(-duration / t2))


@dataclass(frozen=True)
class _GateNoise:
    cnot_error: float
    dephase: tuple[tuple[int, float], ...]  # (logical qubit, probability)


def _gate_noise(circuit: Circuit, layout: Sequence[int], noise: NoiseModel) -> list[_GateNoise]:
    cal = noise.source
    plan = []
    for g in circuit.gates:
        phys = [layout[q] for q in g.qubits]
        if g.is_two_qubit:
            edge = cal.edge(*phys)
            if edge is None:
                raise ValueError(f"CNOT on sites {g.qubits} maps to {phys}, not a calibration edge")
            p_cnot = edge.cnot_error if noise.cnot_depolarizing else 0.0
            duration = edge.duration
        else:
            p_cnot, duration = 0.0, cal.gate_duration
        deph = ()
        if noise.dephasing:
            deph = tuple(
                (q, dephasing_probability(duration, cal.qubit(p).t2))
                for q, p in zip(g.qubits, phys)
            )
            deph = tuple((q, p) for q, p in deph if p > 0)
        plan.append(_GateNoise(p_cnot, deph))
    return plan


def _check_layout(circuit: Circuit, layout: Sequence[int], cal: Calibration) -> list[int]:
    layout = [int(p) for p in layout]
    if len(layout) != circuit.n_qubits:
        raise ValueError(f"layout has {len(layout)} entries for {circuit.n_qubits} qubits")
    if len(set(layout)) != len(layout):
        raise ValueError(f"layout {layout} is not injective")
    for p in layout:
        if not cal.has_qubit(p):
            raise ValueError(f"layout qubit {p} missing from calibration")
    return layout


# Two-qubit Pauli k = 4*a + b (k = 1..15); single-qubit code 0=I 1=X 2=Y 3=Z.
_PAULI_X = np.array([False, True, True, False])
_PAULI_Z = np.array([False, False, True, True])


def _run_chunk(circuit: Circuit, gate_noise: list[_GateNoise], readout: np.ndarray,
               size: int, seed: int, chunk: int) -> np.ndarray:
    n = circuit.n_qubits
    rng = rng_for(seed, chunk)
    psi = np.zeros((size, 2**n), dtype=complex)
    psi[:, 0] = 1.0
    for g, gn in zip(circuit.gates, gate_noise):
        psi = apply_gate(psi, g, n)
        if gn.cnot_error > 0:
            hit = rng.random(size) < gn.cnot_error
            k = rng.integers(1, 16, size)
            for q, code in ((g.qubits[0], k // 4), (g.qubits[1], k % 4)):
                apply_pauli_masks(psi, q, hit & _PAULI_X[code], hit & _PAULI_Z[code], n)
        for q, p in gn.dephase:
            z = rng.random(size) < p
            apply_pauli_masks(psi, q, np.zeros(size, dtype=bool), z, n)
    probs = np.abs(psi) ** 2
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(size) * cdf[:, -1]
    outcome = np.minimum((cdf < u[:, None]).sum(axis=1), 2**n - 1)
    return _flip_and_histogram(outcome, readout, n, rng)


def _flip_and_histogram(outcome: np.ndarray, readout: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    if np.any(readout > 0):
        flips = rng.random((outcome.size, n)) < readout[None, :]
        weights = 1 << np.arange(n - 1, -1, -1)
        outcome = outcome ^ (flips.astype(np.int64) @ weights)
    return np.bincount(outcome, minlength=2**n)


def noisy_counts(circuit: Circuit, layout: Sequence[int], noise: NoiseModel, shots: int,
                 seed: int, threads: int = 1) -> Counts:
    """Sample ``shots`` noisy trajectories of ``circuit`` started from all-zeros.

    ``layout[q]`` is the calibration qubit hosting circuit qubit ``q``.
    Trajectories are grouped in fixed chunks, each with its own random
    stream, so the result does not depend on ``threads``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    cal = noise.source
    layout = _check_layout(circuit, layout, cal)
    gate_noise = _gate_noise(circuit, layout, noise)
    n = circuit.n_qubits
    readout = np.array(
        [cal.qubit(p).readout_error if noise.readout else 0.0 for p in layout]
    )
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1.0

    stochastic = any(gn.cnot_error > 0 or gn.dephase for gn in gate_noise)
    if not stochastic:
        final = run_batch(zero[None, :], circuit)[0]
        if not np.any(readout > 0):
            return sample_counts(final, shots, seed)
        rng = rng_for(seed, 0)
        outcome = rng.choice(2**n, size=shots, p=probabilities(final))
        return Counts.from_histogram(_flip_and_histogram(outcome, readout, n, rng), n)

    sizes = [min(CHUNK, shots - start) for start in range(0, shots, CHUNK)]
    jobs = [(circuit, gate_noise, readout, size, seed, c) for c, size in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _run_chunk(*job), jobs))
    else:
        parts = [_run_chunk(*job) for job in jobs]
    return Counts.from_histogram(np.sum(parts, axis=0), n)
