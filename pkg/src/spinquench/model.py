"""Spin-chain Hamiltonian family, parameter cases and initial product states.

The chain is open with ``n_sites`` spins and

    H = -J sum_j (X_j X_{j+1} + Y_j Y_{j+1}) + U sum_j Z_j Z_{j+1} + sum_j h_j Z_j

Sites are 0-based in code (site ``j`` of a 1-based chain is qubit ``j - 1``).
Spin up is bit 0 (Z = +1) and spin down is bit 1 (Z = -1); bitstrings are
written site-0 first, which is also the most significant bit of the basis
index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

ORACLE_MAX_SITES = 12



class Case(str, Enum):
    I = "I"  # noqa: E741  XX chain
    II = "II"  # disordered XX chain
    III = "III"  # XXZ chain
    IV = "IV"  # XXZ chain in a linear potential


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    hopping: float
    interaction: float
    fields: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(float(h) for h in self.fields))
        if self.n_sites < 2:
            raise ValueError(f"need at least 2 sites, got {self.n_sites}")
        if len(self.fields) != self.n_sites:
            raise ValueError(f"{len(self.fields)} fields for {self.n_sites} sites")

    @property
    def bonds(self) -> list[tuple[int, int]]:
        return [(j, j + 1) for j in range(self.n_sites - 1)]


@dataclass(frozen=True)
class DisorderSpec:
    strength: float
    seed: int

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("disorder strength must be non-negative")

    def sample(self, n_sites: int) -> tuple[float, ...]:
        """Uniform fields in ``[-strength, strength]``.

        Philox is counter based, so a given seed yields the same realization
        on every platform and numpy version that keeps the Philox stream.
        """
        rng = np.random.Generator(np.random.Philox(key=self.seed & (2**64 - 1)))
        return tuple(float(x) for x in rng.uniform(-self.strength, self.strength, n_sites))


def build_case(case: Case | str, n_sites: int, J: float = 1.0, U: float = 0.0,
               h: float = 0.0, seed: int | None = None) -> ModelParams:
    """Parameters for one of the four model cases.

    Case I forces ``U = 0`` and zero fields, II samples uniform disorder of
    strength ``h`` from ``seed``, III has zero fields and IV uses the linear
    potential ``h_j = h * j`` with ``j = 1..N``. Arguments that contradict the
    chosen case raise ``ValueError``.
    """
    case = Case(case)
    if case in (Case.I, Case.II) and U != 0:
        raise ValueError(f"case {case.value} has U = 0, got U={U}")
    if case in (Case.I, Case.III) and h != 0:
        raise ValueError(f"case {case.value} has no fields, got h={h}")
    if case is Case.IV and U < 0:
        raise ValueError(f"case IV has U >= 0, got U={U}")

    if case is Case.II:
        if seed is None:
            raise ValueError("case II needs a disorder seed")
        fields = DisorderSpec(h, seed).sample(n_sites)
    elif case is Case.IV:
        fields = tuple(h * j for j in range(1, n_sites + 1))
    else:
        fields = (0.0,) * n_sites
    return ModelParams(n_sites, J, U, fields)


@lru_cache(maxsize=32)
def z_diagonals(n_sites: int) -> np.ndarray:
    """Row ``j`` holds the diagonal of Z_j in the computational basis (read-only)."""
    idx = np.arange(2**n_sites)
    bits = (idx[None, :] >> (n_sites - 1 - np.arange(n_sites)[:, None])) & 1
    out = 1.0 - 2.0 * bits
    out.setflags(write=False)
    return out


def total_sz(n_sites: int) -> np.ndarray:
    return np.diag(z_diagonals(n_sites).sum(axis=0)).astype(complex)


def hamiltonian_matrix(params: ModelParams) -> np.ndarray:
    n = params.n_sites
    if n > ORACLE_MAX_SITES:
        raise ValueError(f"dense Hamiltonian limited to {ORACLE_MAX_SITES} sites, got {n}")
    zd = z_diagonals(n)
    diag = sum(h * zd[j] for j, h in enumerate(params.fields))
    diag = diag + params.interaction * sum(zd[j] * zd[j + 1] for j in range(n - 1))
    ham = np.diag(np.asarray(diag, dtype=complex))
    if params.hopping != 0:
        # XX + YY maps |01> <-> |10> on the bond with amplitude 2 and kills |00>, |11>.
        idx = np.arange(2**n)
        for j in range(n - 1):
            flip = idx[zd[j] != zd[j + 1]]
            mask = 3 << (n - 2 - j)
            ham[flip ^ mask, flip] -= 2 * params.hopping
    return ham


class InitialKind(str, Enum):
    DomainWall = "DomainWall"
    Neel = "Neel"
    Bitstring = "Bitstring"


@dataclass(frozen=True)
class InitialState:
    """A z-basis product state; ``pattern`` is a 0/1 bit per site (1 = down)."""

    kind: InitialKind
    pattern: tuple[int, ...] = field(default=())

    @classmethod
    def domain_wall(cls, n_sites: int) -> InitialState:
        if n_sites % 2:
            raise ValueError("domain wall needs an even number of sites")
        return cls(InitialKind.DomainWall, (1,) * (n_sites // 2) + (0,) * (n_sites // 2))

    @classmethod
    def neel(cls, n_sites: int) -> InitialState:
        return cls(InitialKind.Neel, tuple(j % 2 for j in range(n_sites)))

    @classmethod
    def from_bits(cls, bits: str | Sequence[int]) -> InitialState:
        pattern = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in pattern):
            raise ValueError(f"bit pattern must be 0/1, got {bits!r}")
        return cls(InitialKind.Bitstring, pattern)

    @classmethod
    def named(cls, name: str, n_sites: int) -> InitialState:
        key = name.lower().replace("_", "").replace("-", "")
        if key == "domainwall":
            return cls.domain_wall(n_sites)
        if key == "neel":
            return cls.neel(n_sites)
        state = cls.from_bits(name)
        if len(state.pattern) != n_sites:
            raise ValueError(f"pattern {name!r} has {len(state.pattern)} bits, need {n_sites}")
        return state

    @property
    def bitstring(self) -> str:
        return "".join(str(b) for b in self.pattern)

    @property
    def sz(self) -> int:
        """Sum of Z eigenvalues, the conserved sector of the state."""
        return sum(1 - 2 * b for b in self.pattern)

    @property
    def index(self) -> int:
        return int(self.bitstring, 2)


def initial_statevector(init: InitialState, n_sites: int) -> np.ndarray:
    if len(init.pattern) != n_sites:
        raise ValueError(f"pattern length {len(init.pattern)} != n_sites {n_sites}")
    psi = np.zeros(2**n_sites, dtype=complex)
    psi[init.index] = 1.0
    return psi
