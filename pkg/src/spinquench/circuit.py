"""Gate-level circuit representation for the CNOT + single-qubit gate set.

Circuits are immutable: every operation returns a new :class:`Circuit`.
Gate order is application order, so the circuit ``[A, B]`` implements the
matrix ``B @ A``.

Qubit 0 is the leftmost tensor factor (most significant bit of a basis
index), which makes a two-qubit gate on ``(0, 1)`` read exactly like the
textbook 4x4 matrix with the first qubit as control.

Text format, one gate per line::

    KIND q[,q2][;angle,...]

e.g. ``CNOT 0,1`` or ``U3 2;0.5,0.1,-0.3``. Blank lines and ``#`` comments
are ignored. The first line may be ``qubits N`` to fix the width.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class GateKind(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"
    H = "H"
    S = "S"
    Sdg = "Sdg"
    T = "T"
    Rx = "Rx"
    Ry = "Ry"
    Rz = "Rz"
    U1 = "U1"
    U2 = "U2"
    U3 = "U3"
    CNOT = "CNOT"


N_ANGLES = {
    GateKind.Rx: 1,
    GateKind.Ry: 1,
    GateKind.Rz: 1,
    GateKind.U1: 1,
    GateKind.U2: 2,
    GateKind.U3: 3,
}

_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.H: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    GateKind.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.Sdg: np.array([[1, 0], [0, -1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, cmath.exp(1j * math.pi / 4)]], dtype=complex),
}
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -cmath.exp(1j * lam) * s],
            [cmath.exp(1j * phi) * s, cmath.exp(1j * (lam + phi)) * c],
        ],
        dtype=complex,
    )


@dataclass(frozen=True)
class Gate:
    """A single gate. ``qubits`` holds (control, target) for CNOT."""

    kind: GateKind
    qubits: tuple[int, ...]
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        n_q = 2 if kind is GateKind.CNOT else 1
        if len(self.qubits) != n_q:
            raise ValueError(f"{kind.value} acts on {n_q} qubit(s), got {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError(f"negative qubit index in {self.qubits}")
        if n_q == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError("CNOT control and target must differ")
        if len(self.angles) != N_ANGLES.get(kind, 0):
            raise ValueError(
                f"{kind.value} takes {N_ANGLES.get(kind, 0)} angle(s), got {len(self.angles)}"
            )

    @property
    def is_two_qubit(self) -> bool:
        return self.kind is GateKind.CNOT

    def matrix(self) -> np.ndarray:
        """Matrix of the gate on its own qubits (2x2, or 4x4 for CNOT)."""
        k, a = self.kind, self.angles
        if k in _FIXED:
            return _FIXED[k]
        if k is GateKind.CNOT:
            return CNOT_MATRIX
        if k is GateKind.Rx:
            c, s = math.cos(a[0] / 2), math.sin(a[0] / 2)
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        if k is GateKind.Ry:
            c, s = math.cos(a[0] / 2), math.sin(a[0] / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if k is GateKind.Rz:
            return np.diag([cmath.exp(-0.5j * a[0]), cmath.exp(0.5j * a[0])])
        if k is GateKind.U1:
            return u3_matrix(0.0, 0.0, a[0])
        if k is GateKind.U2:
            return u3_matrix(math.pi / 2, a[0], a[1])
        return u3_matrix(*a)

    def adjoint(self) -> Gate:
        k, a, q = self.kind, self.angles, self.qubits
        if k is GateKind.S:
            return Gate(GateKind.Sdg, q)
        if k is GateKind.Sdg:
            return Gate(GateKind.S, q)
        if k is GateKind.T:
            # T^dagger is not in the gate set; U1(-pi/4) is the same matrix.
            return Gate(GateKind.U1, q, (-math.pi / 4,))
        if k in (GateKind.Rx, GateKind.Ry, GateKind.Rz, GateKind.U1):
            return Gate(k, q, (-a[0],))
        if k is GateKind.U2:
            return Gate(GateKind.U3, q, (-math.pi / 2, -a[1], -a[0]))
        if k is GateKind.U3:
            return Gate(GateKind.U3, q, (-a[0], -a[2], -a[1]))
        return self

    def to_text(self) -> str:
        s = f"{self.kind.value} {','.join(str(q) for q in self.qubits)}"
        if self.angles:
            s += ";" + ",".join(repr(a) for a in self.angles)
        return s

    @classmethod
    def from_text(cls, line: str) -> Gate:
        head, _, angles = line.strip().partition(";")
        kind, _, qubits = head.strip().partition(" ")
        return cls(
            GateKind(kind),
            tuple(int(q) for q in qubits.split(",")),
            tuple(float(a) for a in angles.split(",")) if angles.strip() else (),
        )


# Convenience constructors
def X(q): return Gate(GateKind.X, (q,))  # noqa: E704
def Y(q): return Gate(GateKind.Y, (q,))  # noqa: E704
def Z(q): return Gate(GateKind.Z, (q,))  # noqa: E704
def H(q): return Gate(GateKind.H, (q,))  # noqa: E704
def S(q): return Gate(GateKind.S, (q,))  # noqa: E704
def Sdg(q): return Gate(GateKind.Sdg, (q,))  # noqa: E704
def T(q): return Gate(GateKind.T, (q,))  # noqa: E704
def Rx(q, theta): return Gate(GateKind.Rx, (q,), (theta,))  # noqa: E704
def Ry(q, theta): return Gate(GateKind.Ry, (q,), (theta,))  # noqa: E704
def Rz(q, theta): return Gate(GateKind.Rz, (q,), (theta,))  # noqa: E704
def U3(q, theta, phi, lam): return Gate(GateKind.U3, (q,), (theta, phi, lam))  # noqa: E704
def CNOT(control, target): return Gate(GateKind.CNOT, (control, target))  # noqa: E704


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default=())

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise IndexError(f"{g.to_text()} out of range for {self.n_qubits} qubits")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: Circuit) -> Circuit:
        return compose(self, other)

    def count(self, kind: GateKind) -> int:
        return sum(g.kind is kind for g in self.gates)

    @property
    def cnot_count(self) -> int:
        return self.count(GateKind.CNOT)

    def to_text(self) -> str:
        return "\n".join([f"qubits {self.n_qubits}"] + [g.to_text() for g in self.gates]) + "\n"

    @classmethod
    def from_text(cls, text: str, n_qubits: int | None = None) -> Circuit:
        gates = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("qubits "):
                n_qubits = int(line.split()[1])
                continue
            gates.append(Gate.from_text(line))
        if n_qubits is None:
            n_qubits = 1 + max((max(g.qubits) for g in gates), default=0)
        return cls(n_qubits, tuple(gates))


def empty(n_qubits: int) -> Circuit:
    return Circuit(n_qubits, ())


def append(circuit: Circuit, gate: Gate) -> Circuit:
    """Return a new circuit with ``gate`` applied after everything in ``circuit``."""
    return Circuit(circuit.n_qubits, circuit.gates + (gate,))


def extend(circuit: Circuit, gates: Iterable[Gate]) -> Circuit:
    return Circuit(circuit.n_qubits, circuit.gates + tuple(gates))


def compose(first: Circuit, second: Circuit) -> Circuit:
    """``first`` followed by ``second``; widths must agree."""
    if first.n_qubits != second.n_qubits:
        raise ValueError(f"width mismatch: {first.n_qubits} vs {second.n_qubits}")
    return Circuit(first.n_qubits, first.gates + second.gates)


def inverse(circuit: Circuit) -> Circuit:
    return Circuit(circuit.n_qubits, tuple(g.adjoint() for g in reversed(circuit.gates)))


def remap(circuit: Circuit, mapping: Sequence[int], n_qubits: int | None = None) -> Circuit:
    """Relabel qubit ``q`` as ``mapping[q]``."""
    width = n_qubits if n_qubits is not None else max(mapping) + 1
    return Circuit(
        width,
        tuple(Gate(g.kind, tuple(mapping[q] for q in g.qubits), g.angles) for g in circuit.gates),
    )


def u3_params(u: np.ndarray) -> tuple[float, float, float]:
    """Angles ``(theta, phi, lam)`` with ``u = e^{i delta} U3(theta, phi, lam)``."""
    eps = 1e-14
    if abs(u[0, 0]) > eps:
        v = u * cmath.exp(-1j * cmath.phase(u[0, 0]))
    else:
        v = u * cmath.exp(-1j * cmath.phase(u[1, 0]))
    theta = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[1, 0]) > eps:
        phi = cmath.phase(v[1, 0])
        lam = cmath.phase(-v[0, 1])
    else:
        phi = 0.0
        lam = cmath.phase(v[1, 1])
    return theta, phi, lam


def is_identity_up_to_phase(u: np.ndarray, atol: float = 1e-13) -> bool:
    return abs(u[0, 1]) < atol and abs(u[1, 0]) < atol and abs(u[0, 0] - u[1, 1]) < atol


def fuse_single_qubit_runs(circuit: Circuit) -> Circuit:
    """Merge every run of single-qubit gates on a qubit into one gate.

    A run is broken only by a CNOT touching that qubit. Runs of length one
    are kept verbatim (so fusion is idempotent), longer runs become a single
    U3, and runs that multiply to the identity are dropped.
    """
    pending: dict[int, list[Gate]] = {}
    out: list[Gate] = []

    def flush(q: int) -> None:
        run = pending.pop(q, [])
        if not run:
            return
        m = np.eye(2, dtype=complex)
        for g in run:
            m = g.matrix() @ m
        if is_identity_up_to_phase(m):
            return
        if len(run) == 1:
            out.append(run[0])
        else:
            out.append(Gate(GateKind.U3, (q,), u3_params(m)))

    for g in circuit.gates:
        if g.is_two_qubit:
            for q in g.qubits:
                flush(q)
            out.append(g)
        else:
            pending.setdefault(g.qubits[0], []).append(g)
    for q in sorted(pending):
        flush(q)
    return Circuit(circuit.n_qubits, tuple(out))


def reversed_cnot(control: int, target: int, n_qubits: int | None = None) -> Circuit:
    """CNOT(control, target) built from the opposite-direction CNOT and Hadamards."""
    if control == target:
        raise ValueError("control and target must differ")
    n = n_qubits if n_qubits is not None else max(control, target) + 1
    return Circuit(
        n,
        (H(control), H(target), CNOT(target, control), H(control), H(target)),
    )


class Axis(str, Enum):
    X = "X"
    Y = "Y"


class Direction(str, Enum):
    Forward = "Forward"
    Inverse = "Inverse"


def basis_change(axis: Axis | str, qubit: int, direction: Direction | str = Direction.Forward,
                 n_qubits: int | None = None) -> Circuit:
    """Gates ``V`` with ``V^dagger Z V`` equal to the requested Pauli.

    Applying the forward circuit before a z measurement measures ``axis``.
    X uses H (self-inverse); Y uses H S H forward and H Sdg H inverse.
    """
    axis, direction = Axis(axis), Direction(direction)
    n = n_qubits if n_qubits is not None else qubit + 1
    if axis is Axis.X:
        gates = (H(qubit),)
    elif direction is Direction.Forward:
        gates = (H(qubit), S(qubit), H(qubit))
    else:
        gates = (H(qubit), Sdg(qubit), H(qubit))
    return Circuit(n, gates)
