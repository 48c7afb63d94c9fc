"""Observables estimated from measurement counts.

Every estimator takes either a :class:`~spinquench.sim.Counts` record or a
state vector. With a state the exact expectation is returned (and a zero
standard error); with counts the empirical frequencies are used and the
standard error comes from the delta method applied to the per-shot values.

Site indices are 0-based.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .circuit import Axis, Circuit, CNOT, H, X, basis_change, compose, inverse
from .model import InitialState, ModelParams, z_diagonals
from .noise import NoiseModel, noisy_counts
from .sim import Counts, apply_circuit, n_qubits_of, probabilities, sample_counts
from .trotter import TrotterPlan, evolution_circuit, prepare_circuit

Source = Union[Counts, np.ndarray]

# S_vN ~ F_Q / ENTROPY_QFI_SCALE for free-fermion chains
ENTROPY_QFI_SCALE = 32 / 5


def _spins(source: Source) -> tuple[np.ndarray, np.ndarray, float]:
    """Distinct outcomes as +-1 spins ``(K, n)``, their weights, and shot count.

    The shot count is ``inf`` for an exact state.
    """
    if isinstance(source, Counts):
        if not source:
            raise ValueError("empty counts: observable undefined")
        bits, weights = source.bits_and_weights()
        return 1.0 - 2.0 * bits, weights, float(source.shots)
    n = n_qubits_of(source)
    p = probabilities(source)
    keep = p > 0
    return z_diagonals(n).T[keep], p[keep], math.inf


def _estimate(features: np.ndarray, weights: np.ndarray, shots: float,
              combine, gradient) -> tuple[float, float]:
    total = weights.sum()
    mean = weights @ features / total
    value = float(combine(mean))
    if math.isinf(shots):
        return value, 0.0
    centered = features - mean
    cov = (centered * weights[:, None]).T @ centered / total
    g = np.asarray(gradient(mean), dtype=float)
    var = max(float(g @ cov @ g), 0.0) / shots
    return value, math.sqrt(var)


def _ret(pair: tuple[float, float], return_stderr: bool):
    return pair if return_stderr else pair[0]


def magnetization(counts: Source, site: int, return_stderr: bool = False):
    """<Z_site> in [-1, 1]."""
    z, w, n = _spins(counts)
    if not 0 <= site < z.shape[1]:
        raise IndexError(f"site {site} out of range")
    return _ret(_estimate(z[:, [site]], w, n, lambda m: m[0], lambda m: [1.0]), return_stderr)


def n_half(counts: Source, n_sites: int | None = None, return_stderr: bool = False):
    """Number of up spins in the left half, sum_{j < N/2} (Z_j + 1) / 2."""
    z, w, n = _spins(counts)
    N = z.shape[1]
    if n_sites is not None and n_sites != N:
        raise ValueError(f"counts have {N} sites, expected {n_sites}")
    if N % 2:
        raise ValueError("n_half needs an even number of sites")
    ups = ((z[:, : N // 2] + 1) / 2).sum(axis=1, keepdims=True)
    return _ret(_estimate(ups, w, n, lambda m: m[0], lambda m: [1.0]), return_stderr)


def connected_correlator(counts: Source, j: int, k: int, return_stderr: bool = False):
    """<Z_j Z_k> - <Z_j><Z_k>."""
    if j == k:
        raise ValueError("connected correlator needs two distinct sites")
    z, w, n = _spins(counts)
    feats = np.stack([z[:, j] * z[:, k], z[:, j], z[:, k]], axis=1)
    return _ret(
        _estimate(feats, w, n, lambda m: m[0] - m[1] * m[2], lambda m: [1.0, -m[2], -m[1]]),
        return_stderr,
    )


def half_signs(n_sites: int) -> tuple[int, ...]:
    """+1 on the left half of the chain, -1 on the right half."""
    return tuple(1 if j < n_sites / 2 else -1 for j in range(n_sites))


def qfi(counts: Source, signs: Sequence[int] | None = None, return_stderr: bool = False):
    """Pure-state Fisher information of ``O = 1/2 sum_j s_j Z_j``, i.e. ``Var(sum s_j Z_j)``."""
    z, w, n = _spins(counts)
    s = np.asarray(half_signs(z.shape[1]) if signs is None else signs, dtype=float)
    if s.shape != (z.shape[1],) or not np.all(np.abs(s) == 1):
        raise ValueError("signs must be a +-1 vector with one entry per site")
    total = z @ s
    feats = np.stack([total**2, total], axis=1)
    return _ret(
        _estimate(feats, w, n, lambda m: m[0] - m[1] ** 2, lambda m: [1.0, -2 * m[1]]),
        return_stderr,
    )


def _parity(counts: Source) -> tuple[float, float]:
    z, w, n = _spins(counts)
    return _estimate(z[:, :3].prod(axis=1, keepdims=True), w, n, lambda m: m[0], lambda m: [1.0])


def mermin(counts_xxx: Source, counts_xyy: Source, counts_yxy: Source, counts_yyx: Source,
           return_stderr: bool = False):
    """|<XYY> + <YXY> + <YYX> - <XXX>| from the four rotated-basis measurements."""
    terms = [_parity(c) for c in (counts_xxx, counts_xyy, counts_yxy, counts_yyx)]
    value = abs(terms[1][0] + terms[2][0] + terms[3][0] - terms[0][0])
    stderr = math.sqrt(sum(e**2 for _, e in terms))
    return (value, stderr) if return_stderr else value


MERMIN_BASES = ("XXX", "XYY", "YXY", "YYX")


def ghz_circuit(n_qubits: int = 3) -> Circuit:
    """Prepares (|000> - |111>)/sqrt(2) on qubits 0..2 from all-zeros."""
    if n_qubits < 3:
        raise ValueError("GHZ preparation needs at least 3 qubits")
    return Circuit(n_qubits, (X(0), H(0), CNOT(0, 1), CNOT(1, 2)))


def mermin_circuits(n_qubits: int = 3) -> dict[str, Circuit]:
    """GHZ preparation followed by the measurement rotation for each basis."""
    out = {}
    for basis in MERMIN_BASES:
        c = ghz_circuit(n_qubits)
        for q, axis in enumerate(basis):
            c = compose(c, basis_change(Axis(axis), q, n_qubits=n_qubits))
        out[basis] = c
    return out


def physical_fraction(counts: Source, target_sz: int, return_stderr: bool = False):
    """Fraction of shots whose total Z equals ``target_sz``."""
    z, w, n = _spins(counts)
    N = z.shape[1]
    if abs(target_sz) > N or (N - target_sz) % 2:
        raise ValueError(f"total Z of {target_sz} impossible for {N} sites")
    inside = (np.rint(z.sum(axis=1)) == target_sz).astype(float)[:, None]
    return _ret(_estimate(inside, w, n, lambda m: m[0], lambda m: [1.0]), return_stderr)


def echo_circuit(params: ModelParams, plan: TrotterPlan, init: InitialState) -> Circuit:
    """Prepare ``init``, evolve forward with ``plan``, then run the inverse evolution."""
    evo = evolution_circuit(params, plan)
    return prepare_circuit(init.pattern) + evo + inverse(evo)


def loschmidt_echo(params: ModelParams, plan: TrotterPlan, init: InitialState,
                   noise: NoiseModel | None = None, shots: int | None = None, seed: int = 0,
                   layout: Sequence[int] | None = None, threads: int = 1,
                   return_stderr: bool = False):
    """Probability of measuring the initial bitstring after the echo circuit.

    Without noise and shots the exact return probability is computed from
    the state vector.
    """
    circuit = echo_circuit(params, plan, init)
    n = params.n_sites
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1.0
    if noise is None and shots is None:
        value = float(abs(apply_circuit(zero, circuit)[init.index]) ** 2)
        return (value, 0.0) if return_stderr else value
    if shots is None:
        raise ValueError("noisy echo needs a shot count")
    if noise is None:
        counts = sample_counts(apply_circuit(zero, circuit), shots, seed)
    else:
        counts = noisy_counts(circuit, layout if layout is not None else range(n), noise, shots,
                              seed, threads)
    p = counts.table.get(init.bitstring, 0) / counts.shots
    stderr = math.sqrt(p * (1 - p) / counts.shots)
    return (p, stderr) if return_stderr else p


@dataclass(frozen=True)
class ObservableRecord:
    time: float
    name: str
    value: float | None  # None marks an undefined value (e.g. nothing survived post-selection)
    stderr: float | None = 0.0
    retained_fraction: float | None = None
    source: str = ""

    def __post_init__(self):
        if self.stderr is not None and self.stderr < 0:
            raise ValueError("stderr must be non-negative")


CSV_COLUMNS = ("t", "name", "value", "stderr", "retained_fraction", "source")
UNDEFINED = "undefined"


def _fmt(x: float | None, missing: str) -> str:
    if x is None:
        return missing
    return repr(float(x))


def records_to_csv(records: Iterable[ObservableRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([
            repr(float(r.time)),
            r.name,
            _fmt(r.value, UNDEFINED),
            _fmt(r.stderr, UNDEFINED),
            _fmt(r.retained_fraction, ""),
            r.source,
        ])
    return buf.getvalue()


def records_from_csv(text: str) -> list[ObservableRecord]:
    def parse(x: str) -> float | None:
        return None if x in (UNDEFINED, "") else float(x)

    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        ObservableRecord(float(r["t"]), r["name"], parse(r["value"]), parse(r["stderr"]),
                         parse(r["retained_fraction"]), r["source"])
        for r in rows
    ]
