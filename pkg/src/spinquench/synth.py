"""CNOT-based circuits for the canonical two-qubit interaction.

``canonical_unitary(a, b, g)`` is ``exp[i(a XX + b YY + g ZZ)]``. Each bond
term of the chain Hamiltonian is exactly of this form, so no general U(4)
Cartan decomposition is needed: the circuits below are fixed templates with
angles read off the bond couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .circuit import CNOT, Circuit, Rx, Ry, Rz

_XX = np.kron([[0, 1], [1, 0]], [[0, 1], [1, 0]]).astype(complex)
_YY = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
_ZZ = np.diag([1, -1, -1, 1]).astype(complex)

# Frame rotation taking the XX+ZZ template to XX+YY: Rx(-pi/2) maps Z -> Y
# and fixes X under conjugation, so N(a, a, 0) = (V x V) N(a, 0, a) (V x V)^dag
# with V = Rx(-pi/2).
_FRAME_IN = math.pi / 2
_FRAME_OUT = -math.pi / 2


@dataclass(frozen=True)
class CanonicalAngles:
    alpha: float
    beta: float
    gamma: float

    def __iter__(self):
        return iter((self.alpha, self.beta, self.gamma))


def canonical_unitary(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Reference 4x4 matrix exponential; used as the synthesis oracle."""
    return expm(1j * (alpha * _XX + beta * _YY + gamma * _ZZ))


def block_angles(J: float, U: float, dt: float) -> CanonicalAngles:
    """Angles with ``N(a, b, g) = exp(-i (U ZZ - J (XX + YY)) dt)``."""
    return CanonicalAngles(J * dt, J * dt, -U * dt)


def synth_general(angles: CanonicalAngles, q0: int = 0, q1: int = 1,
                  n_qubits: int | None = None) -> Circuit:
    """Three-CNOT circuit for ``N(alpha, beta, gamma)`` up to global phase."""
    a, b, g = angles
    theta = math.pi / 2 - 2 * g
    phi = 2 * a - math.pi / 2
    lam = math.pi / 2 - 2 * b
    n = n_qubits if n_qubits is not None else max(q0, q1) + 1
    return Circuit(n, (
        Rz(q1, -math.pi / 2),
        CNOT(q1, q0),
        Rz(q0, theta),
        Ry(q1, phi),
        CNOT(q0, q1),
        Ry(q1, lam),
        CNOT(q1, q0),
        Rz(q0, math.pi / 2),
    ))


def synth_xz(alpha: float, gamma: float, q0: int = 0, q1: int = 1,
             n_qubits: int | None = None) -> Circuit:
    """Two-CNOT circuit for ``N(alpha, 0, gamma)`` up to global phase."""
    n = n_qubits if n_qubits is not None else max(q0, q1) + 1
    return Circuit(n, (
        CNOT(q0, q1),
        Rx(q0, -2 * alpha),
        Rz(q1, -2 * gamma),
        CNOT(q0, q1),
    ))


def synth_xy(alpha: float, q0: int = 0, q1: int = 1, n_qubits: int | None = None) -> Circuit:
    """Two-CNOT circuit for ``N(alpha, alpha, 0)``, the XX+YY hopping block."""
    n = n_qubits if n_qubits is not None else max(q0, q1) + 1
    core = synth_xz(alpha, alpha, q0, q1, n).gates
    return Circuit(n, (
        (Rx(q0, _FRAME_IN), Rx(q1, _FRAME_IN))
        + core
        + (Rx(q0, _FRAME_OUT), Rx(q1, _FRAME_OUT))
    ))


def synth_block(J: float, U: float, dt: float, use_two_cnot: bool = True,
                q0: int = 0, q1: int = 1, n_qubits: int | None = None) -> Circuit:
    """Circuit for one bond evolution ``exp(-i (U ZZ - J (XX + YY)) dt)``.

    Picks the 2-CNOT construction when ``U == 0`` (and ``use_two_cnot``), the
    3-CNOT one otherwise, and an empty circuit when the block is trivial.
    """
    n = n_qubits if n_qubits is not None else max(q0, q1) + 1
    angles = block_angles(J, U, dt)
    if angles.alpha == 0 and angles.gamma == 0:
        return Circuit(n, ())
    if U == 0 and use_two_cnot:
        return synth_xy(angles.alpha, q0, q1, n)
    return synth_general(angles, q0, q1, n)
