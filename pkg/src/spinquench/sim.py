"""Exact state-vector simulation, ED reference evolution and shot sampling.

States are plain complex numpy arrays of length ``2**n``. Internally the
kernel works on a batch of states with shape ``(batch, 2**n)``; the batch
axis carries independent trajectories (noise emulation) or basis columns
(unitary extraction).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .circuit import Circuit, Gate
from .model import ORACLE_MAX_SITES, ModelParams, hamiltonian_matrix

UNITARY_MAX_QUBITS = 10


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for stream ``keys`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=keys)))


def n_qubits_of(state: np.ndarray) -> int:
    n = int(np.log2(state.shape[-1]))
    if 2**n != state.shape[-1]:
        raise ValueError(f"state length {state.shape[-1]} is not a power of two")
    return n


# -- batched kernel -----------------------------------------------------------

def apply_1q(psi: np.ndarray, matrix: np.ndarray, q: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    view = psi.reshape(b * 2**q, 2, 2 ** (n - q - 1))
    return (matrix @ view).reshape(b, 2**n)


def apply_cnot(psi: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    """In-place CNOT on a contiguous ``(batch, 2**n)`` array."""
    view = psi.reshape((psi.shape[0],) + (2,) * n)
    sel = [slice(None)] * (n + 1)
    sel[1 + control] = 1
    sub = view[tuple(sel)]
    axis = 1 + target if target < control else target
    sub[...] = np.flip(sub, axis=axis).copy()
    return psi


def apply_gate(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if gate.is_two_qubit:
        return apply_cnot(psi, gate.qubits[0], gate.qubits[1], n)
    return apply_1q(psi, gate.matrix(), gate.qubits[0], n)


def apply_pauli_masks(psi: np.ndarray, q: int, x_mask: np.ndarray, z_mask: np.ndarray,
                      n: int) -> np.ndarray:
    """Apply X^x Z^z on qubit ``q`` with per-row booleans (Y = iXZ up to phase)."""
    view = psi.reshape(psi.shape[0], 2**q, 2, 2 ** (n - q - 1))
    if z_mask.any():
        view[z_mask, :, 1, :] *= -1
    if x_mask.any():
        view[x_mask] = view[x_mask][:, :, ::-1, :]
    return psi


def run_batch(psi: np.ndarray, circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    psi = np.ascontiguousarray(psi, dtype=complex)
    for g in circuit.gates:
        psi = apply_gate(psi, g, n)
    return psi


# -- public operations -------------------------------------------------------

def apply_circuit(state: np.ndarray, circuit: Circuit) -> np.ndarray:
    """Return ``U_circuit |state>``; the input array is not modified."""
    n = n_qubits_of(state)
    if n != circuit.n_qubits:
        raise ValueError(f"state has {n} qubits, circuit has {circuit.n_qubits}")
    return run_batch(np.array(state, dtype=complex)[None, :], circuit)[0]


def unitary_of(circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    if n > UNITARY_MAX_QUBITS:
        raise ValueError(f"unitary extraction limited to {UNITARY_MAX_QUBITS} qubits, got {n}")
    # Row k of the batch is the image of basis state k, i.e. column k of U.
    return run_batch(np.eye(2**n, dtype=complex), circuit).T.copy()


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max-norm distance after matching the phase of v's largest element."""
    k = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    phase = u[k] / v[k]
    phase /= abs(phase)
    return float(np.max(np.abs(u - phase * v)))


@lru_cache(maxsize=16)
def _eigensystem(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(hamiltonian_matrix(params))


class ExactPropagator:
    """``exp(-iHt)`` via a cached eigendecomposition of the dense Hamiltonian."""

    def __init__(self, params: ModelParams):
        if params.n_sites > ORACLE_MAX_SITES:
            raise ValueError(f"ED limited to {ORACLE_MAX_SITES} sites, got {params.n_sites}")
        self.params = params
        self.energies, self.vectors = _eigensystem(params)

    def evolve(self, state: np.ndarray, t: float) -> np.ndarray:
        coeff = self.vectors.conj().T @ state
        return self.vectors @ (np.exp(-1j * self.energies * t) * coeff)

    def unitary(self, t: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.energies * t)) @ self.vectors.conj().T


def exact_evolve(params: ModelParams, state: np.ndarray, t: float) -> np.ndarray:
    return ExactPropagator(params).evolve(state, t)


def exact_unitary(params: ModelParams, t: float) -> np.ndarray:
    return ExactPropagator(params).unitary(t)


def entanglement_entropy(state: np.ndarray, cut: int) -> float:
    """Von Neumann entropy (natural log) of qubits ``0..cut-1``."""
    n = n_qubits_of(state)
    if not 1 <= cut < n:
        raise ValueError(f"cut must be in [1, {n - 1}], got {cut}")
    s = np.linalg.svd(state.reshape(2**cut, 2 ** (n - cut)), compute_uv=False)
    p = s**2
    p = p[p > 1e-16]
    return float(max(0.0, -np.sum(p * np.log(p))))


# -- measurement records -----------------------------------------------------

@dataclass(frozen=True)
class Counts:
    """Measured bitstrings (site 0 first) and how often each occurred."""

    n_qubits: int
    table: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        table = {k: int(v) for k, v in sorted(self.table.items()) if int(v) != 0}
        for k, v in table.items():
            if len(k) != self.n_qubits or set(k) - {"0", "1"}:
                raise ValueError(f"bad bitstring {k!r} for {self.n_qubits} qubits")
            if v < 0:
                raise ValueError(f"negative count for {k}")
        object.__setattr__(self, "table", table)

    @property
    def shots(self) -> int:
        return sum(self.table.values())

    def __bool__(self) -> bool:
        return self.shots > 0

    def bits_and_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """``(K, n)`` 0/1 array of distinct outcomes and their counts."""
        if not self.table:
            return np.zeros((0, self.n_qubits), dtype=np.int8), np.zeros(0)
        keys = list(self.table)
        bits = np.frombuffer("".join(keys).encode(), dtype=np.uint8).reshape(len(keys), -1) - 48
        return bits.astype(np.int8), np.array([self.table[k] for k in keys], dtype=float)

    @classmethod
    def from_indices(cls, indices: Iterable[int], n_qubits: int) -> Counts:
        tally = Counter(int(i) for i in indices)
        return cls(n_qubits, {format(i, f"0{n_qubits}b"): c for i, c in tally.items()})

    @classmethod
    def from_histogram(cls, histogram: np.ndarray, n_qubits: int) -> Counts:
        nz = np.flatnonzero(histogram)
        return cls(n_qubits, {format(int(i), f"0{n_qubits}b"): int(histogram[i]) for i in nz})

    def histogram(self) -> np.ndarray:
        h = np.zeros(2**self.n_qubits, dtype=np.int64)
        for k, v in self.table.items():
            h[int(k, 2)] = v
        return h

    def to_text(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in self.table.items())

    @classmethod
    def from_text(cls, text: str) -> Counts:
        table: dict[str, int] = {}
        width = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                key, value = line.split()
                table[key] = table.get(key, 0) + int(value)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: expected 'bitstring count', got {raw!r}") from exc
            if width is None:
                width = len(key)
        if width is None:
            raise ValueError("no counts in input")
        return cls(width, table)


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    return p / p.sum()


def sample_counts(state: np.ndarray, shots: int, seed: int) -> Counts:
    """Draw ``shots`` i.i.d. z-basis outcomes from ``|state|^2``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    n = n_qubits_of(state)
    hist = rng_for(seed, 0).multinomial(shots, probabilities(state))
    return Counts.from_histogram(hist, n)
