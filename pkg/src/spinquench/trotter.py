"""Trotterized evolution circuits for the spin-chain Hamiltonian.

A step is described as a list of layers before any gates are emitted:

* ``field``  -- ``exp(-i h_j Z_j tau)`` on every site,
* ``even``   -- bond blocks on bonds (j, j+1) with even 1-based j,
* ``odd``    -- bond blocks on bonds with odd 1-based j.

Gates inside one layer commute, so two adjacent layers of the same kind
combine exactly into one layer with the summed duration. The merge pass
first drops layers that are the identity (e.g. a field layer with all
``h_j = 0``), then sums neighbours. For consecutive symmetric steps this
folds the trailing half layers of one step into the leading half layers of
the next.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .circuit import Circuit, Rz, X, fuse_single_qubit_runs
from .model import ModelParams
from .synth import synth_block


class Scheme(str, Enum):
    Basic = "Basic"
    Symmetric = "Symmetric"


@dataclass(frozen=True)
class Layer:
    kind: str  # "field", "even" or "odd"
    tau: float


@dataclass(frozen=True)
class TrotterPlan:
    """Evolution to ``t = n_steps * dt + sub_dt``.

    ``sub_dt`` defaults to ``dt`` (the last step is a full one). ``sub_dt = 0``
    with ``n_steps = 0`` is the t = 0 point.
    """

    scheme: Scheme
    dt: float
    n_steps: int = 0
    sub_dt: float | None = None
    substep_divisor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.sub_dt is None:
            object.__setattr__(self, "sub_dt", self.dt)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if not 0 <= self.sub_dt <= self.dt * (1 + 1e-12):
            raise ValueError(f"sub_dt must lie in [0, dt], got {self.sub_dt}")
        if self.substep_divisor < 1:
            raise ValueError("substep_divisor must be >= 1")

    @property
    def time(self) -> float:
        return self.n_steps * self.dt + self.sub_dt

    @property
    def total_steps(self) -> int:
        """Number of Trotter steps in the circuit, counting a partial one."""
        return self.n_steps + (1 if self.sub_dt > 0 else 0)


def time_grid(scheme: Scheme | str, dt: float, max_steps: int, substep_divisor: int = 1
              ) -> list[TrotterPlan]:
    """Plans for t = 0 and ``t = M dt + k dt / r`` with ``k = 1..r``, ``M < max_steps``."""
    plans = [TrotterPlan(scheme, dt, 0, 0.0, substep_divisor)]
    r = substep_divisor
    for m in range(max_steps):
        for k in range(1, r + 1):
            plans.append(TrotterPlan(scheme, dt, m, dt * k / r, r))
    return plans


def step_layers(scheme: Scheme | str, dt: float) -> list[Layer]:
    if Scheme(scheme) is Scheme.Basic:
        return [Layer("field", dt), Layer("even", dt), Layer("odd", dt)]
    return [
        Layer("field", dt / 2),
        Layer("even", dt / 2),
        Layer("odd", dt),
        Layer("even", dt / 2),
        Layer("field", dt / 2),
    ]


def _bonds(params: ModelParams, kind: str) -> list[tuple[int, int]]:
    # 1-based bond j joins sites j, j+1; 0-based its first site is j - 1.
    first = 1 if kind == "even" else 0
    return [(q, q + 1) for q in range(first, params.n_sites - 1, 2)]


def _is_identity(params: ModelParams, layer: Layer) -> bool:
    if layer.tau == 0:
        return True
    if layer.kind == "field":
        return all(h == 0 for h in params.fields)
    return (params.hopping == 0 and params.interaction == 0) or not _bonds(params, layer.kind)


def merge_layers(params: ModelParams, layers: list[Layer]) -> list[Layer]:
    out: list[Layer] = []
    for layer in layers:
        if _is_identity(params, layer):
            continue
        if out and out[-1].kind == layer.kind:
            out[-1] = Layer(layer.kind, out[-1].tau + layer.tau)
        else:
            out.append(layer)
    return out


def layers_to_circuit(params: ModelParams, layers: list[Layer], two_cnot: bool = True) -> Circuit:
    n = params.n_sites
    gates = []
    for layer in layers:
        if layer.kind == "field":
            gates.extend(Rz(q, 2 * h * layer.tau) for q, h in enumerate(params.fields) if h != 0)
        else:
            for q0, q1 in _bonds(params, layer.kind):
                block = synth_block(params.hopping, params.interaction, layer.tau,
                                    two_cnot, q0, q1, n)
                gates.extend(block.gates)
    return Circuit(n, tuple(gates))


def basic_step(params: ModelParams, dt: float, two_cnot: bool = True) -> Circuit:
    """One first-order step: fields, then even bonds, then odd bonds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return layers_to_circuit(params, merge_layers(params, step_layers(Scheme.Basic, dt)), two_cnot)


def symmetric_step(params: ModelParams, dt: float, two_cnot: bool = True) -> Circuit:
    """One second-order step: A(dt/2) B_even(dt/2) C_odd(dt) B_even(dt/2) A(dt/2)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    layers = merge_layers(params, step_layers(Scheme.Symmetric, dt))
    return layers_to_circuit(params, layers, two_cnot)


def plan_layers(plan: TrotterPlan) -> list[Layer]:
    layers: list[Layer] = []
    for _ in range(plan.n_steps):
        layers += step_layers(plan.scheme, plan.dt)
    if plan.sub_dt > 0:
        layers += step_layers(plan.scheme, plan.sub_dt)
    return layers


def evolution_circuit(params: ModelParams, plan: TrotterPlan, merge: bool = True,
                      fuse: bool = True, two_cnot: bool = True) -> Circuit:
    """Full circuit for ``plan``: ``n_steps`` steps of ``dt`` then one of ``sub_dt``.

    ``merge=False`` concatenates the per-step circuits as-is (a reference
    for the merge pass); ``fuse`` collapses single-qubit runs afterwards.
    """
    if merge:
        circuit = layers_to_circuit(params, merge_layers(params, plan_layers(plan)), two_cnot)
    else:
        step = basic_step if plan.scheme is Scheme.Basic else symmetric_step
        circuit = Circuit(params.n_sites, ())
        for _ in range(plan.n_steps):
            circuit = circuit + step(params, plan.dt, two_cnot)
        if plan.sub_dt > 0:
            circuit = circuit + step(params, plan.sub_dt, two_cnot)
    return fuse_single_qubit_runs(circuit) if fuse else circuit


def prepare_circuit(pattern: tuple[int, ...]) -> Circuit:
    """X gates taking the all-up register to the product state ``pattern``."""
    return Circuit(len(pattern), tuple(X(q) for q, b in enumerate(pattern) if b))
