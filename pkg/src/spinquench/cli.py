"""Command-line experiment runner.

Subcommands::

    spinquench run          --config quench.toml [--out results.csv]
    spinquench echo         --config echo.toml
    spinquench ghz-mermin   --config ghz.toml
    spinquench select-qubits --config select.toml   (or --calibration FILE --length N)
    spinquench synth-check  [--trials 1000]

Configs are TOML with ``schema_version = 1``; unknown keys are rejected.
Results are CSV with columns ``t,name,value,stderr,retained_fraction,source``
plus a ``<out>.meta.json`` sidecar recording how every source was produced.

Exit codes: 0 success, 2 config error, 3 infeasible qubit selection or
layout, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .circuit import Circuit
from .device_select import (
    NoChainError,
    SelectionConfig,
    chain_stats,
    format_stats,
    select_chain,
)
from .mitigation import postselect
from .model import (
    ORACLE_MAX_SITES,
    Case,
    InitialState,
    ModelParams,
    build_case,
    initial_statevector,
    z_diagonals,
)
from .noise import Calibration, CalibrationError, NoiseModel, load_calibration, noisy_counts
from .observables import (
    MERMIN_BASES,
    ObservableRecord,
    Source,
    connected_correlator,
    echo_circuit,
    magnetization,
    mermin,
    mermin_circuits,
    n_half,
    physical_fraction,
    qfi,
    records_to_csv,
)
from .sim import (
    Counts,
    ExactPropagator,
    apply_circuit,
    entanglement_entropy,
    phase_aligned_distance,
    sample_counts,
    unitary_of,
)
from .synth import CanonicalAngles, canonical_unitary, synth_general, synth_xz
from .trotter import Scheme, TrotterPlan, evolution_circuit, prepare_circuit, time_grid

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 2, 3, 4
OBSERVABLES = ("magnetization", "n_half", "correlator", "qfi", "entropy", "physical_fraction")
SOURCES = ("ed", "trotter", "shots")
STDERR_METHOD = "delta method on per-shot values; exact sources report 0"


class ConfigError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass


class InvariantError(RuntimeError):
    pass


# ---------------------------------------------------------------- config

_SCHEMA: dict[str, set[str]] = {
    "model": {"case", "n_sites", "J", "U", "h", "seed", "realizations"},
    "initial": {"state"},
    "trotter": {"scheme", "dt", "max_steps", "substeps", "two_cnot"},
    "measurement": {"shots", "seed", "mitigation"},
    "noise": {"calibration", "cnot_depolarizing", "readout", "dephasing"},
    "layout": {"qubits", "meas_threshold", "t2_threshold", "relax_factor"},
    "observables": {"names", "correlator_pairs", "qfi_signs"},
    "output": {"path", "sources"},
    "selection": {"calibration", "chain_length", "meas_threshold", "t2_threshold", "relax_factor"},
    "synth": {"trials"},
}


@dataclass(frozen=True)
class ModelSection:
    case: Case
    n_sites: int
    J: float = 1.0
    U: float = 0.0
    h: float = 0.0
    seed: int | None = None
    realizations: int = 1

    def params(self, k: int = 0) -> ModelParams:
        seed = None if self.seed is None else self.seed + k
        return build_case(self.case, self.n_sites, self.J, self.U, self.h, seed)


@dataclass(frozen=True)
class LayoutSection:
    qubits: tuple[int, ...] | None = None  # None = auto
    meas_threshold: float = 1.0
    t2_threshold: float = 0.0
    relax_factor: float = 1.25


@dataclass(frozen=True)
class ExperimentConfig:
    base_dir: Path
    model: ModelSection | None = None
    initial: str | None = None
    scheme: Scheme = Scheme.Symmetric
    dt: float | None = None
    max_steps: int = 0
    substeps: int = 1
    two_cnot: bool = True
    shots: int | None = None
    seed: int = 0
    mitigation: bool = True
    calibration: Path | None = None
    channels: tuple[bool, bool, bool] = (True, True, True)
    layout: LayoutSection = field(default_factory=LayoutSection)
    observables: tuple[str, ...] = ("magnetization",)
    correlator_pairs: tuple[tuple[int, int], ...] | None = None
    qfi_signs: tuple[int, ...] | None = None
    output: Path | None = None
    sources: tuple[str, ...] = SOURCES
    selection: dict[str, Any] = field(default_factory=dict)
    synth_trials: int = 1000

    def initial_state(self) -> InitialState:
        assert self.model is not None and self.initial is not None
        return InitialState.named(self.initial, self.model.n_sites)


def _get(section: dict, key: str, kind: type | tuple, where: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _require(section: dict, key: str, kind, where: str):
    if key not in section:
        raise ConfigError(f"{where}.{key}: required")
    return _get(section, key, kind, where)


def parse_config(data: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Validate a decoded TOML document, with a ``section.key`` path in every error."""
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for key, value in data.items():
        if key == "schema_version":
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown section")
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a table")
        unknown = set(value) - _SCHEMA[key]
        if unknown:
            raise ConfigError(f"{key}: unknown key(s) {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {"base_dir": base_dir}

    if "model" in data:
        m = data["model"]
        raw_case = _require(m, "case", str, "model")
        try:
            case = Case(raw_case)
        except ValueError:
            raise ConfigError(f"model.case: expected one of I, II, III, IV, got {raw_case!r}") from None
        section = ModelSection(
            case,
            _require(m, "n_sites", int, "model"),
            _get(m, "J", float, "model", 1.0),
            _get(m, "U", float, "model", 0.0),
            _get(m, "h", float, "model", 0.0),
            _get(m, "seed", int, "model"),
            _get(m, "realizations", int, "model", 1),
        )
        if section.realizations < 1:
            raise ConfigError("model.realizations: must be >= 1")
        if section.realizations > 1 and case is not Case.II:
            raise ConfigError("model.realizations: only meaningful for case II")
        try:
            section.params()
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
        kw["model"] = section

    if "initial" in data:
        kw["initial"] = _require(data["initial"], "state", str, "initial")

    if "trotter" in data:
        t = data["trotter"]
        raw_scheme = _get(t, "scheme", str, "trotter", "Symmetric")
        try:
            kw["scheme"] = Scheme(raw_scheme)
        except ValueError:
            raise ConfigError(f"trotter.scheme: expected Basic or Symmetric, got {raw_scheme!r}") from None
        kw["dt"] = _require(t, "dt", float, "trotter")
        if not kw["dt"] > 0:
            raise ConfigError("trotter.dt: must be positive")
        kw["max_steps"] = _get(t, "max_steps", int, "trotter", 0)
        kw["substeps"] = _get(t, "substeps", int, "trotter", 1)
        kw["two_cnot"] = _get(t, "two_cnot", bool, "trotter", True)
        if kw["max_steps"] < 0 or kw["substeps"] < 1:
            raise ConfigError("trotter: max_steps must be >= 0 and substeps >= 1")

    if "measurement" in data:
        s = data["measurement"]
        kw["shots"] = _get(s, "shots", int, "measurement")
        if kw["shots"] is not None and kw["shots"] < 1:
            raise ConfigError("measurement.shots: must be >= 1")
        kw["seed"] = _get(s, "seed", int, "measurement", 0)
        kw["mitigation"] = _get(s, "mitigation", bool, "measurement", True)

    if "noise" in data:
        n = data["noise"]
        kw["calibration"] = base_dir / _require(n, "calibration", str, "noise")
        kw["channels"] = tuple(_get(n, k, bool, "noise", True)
                               for k in ("cnot_depolarizing", "readout", "dephasing"))

    if "layout" in data:
        lay = data["layout"]
        qubits = lay.get("qubits", "auto")
        if qubits == "auto":
            qubits = None
        elif isinstance(qubits, list) and all(isinstance(q, int) for q in qubits):
            qubits = tuple(qubits)
        else:
            raise ConfigError(f"layout.qubits: expected \"auto\" or a list of integers, got {qubits!r}")
        kw["layout"] = LayoutSection(
            qubits,
            _get(lay, "meas_threshold", float, "layout", 1.0),
            _get(lay, "t2_threshold", float, "layout", 0.0),
            _get(lay, "relax_factor", float, "layout", 1.25),
        )

    if "observables" in data:
        o = data["observables"]
        names = tuple(_get(o, "names", list, "observables", ["magnetization"]))
        bad = [x for x in names if x not in OBSERVABLES]
        if bad:
            raise ConfigError(f"observables.names: unknown {bad}; choose from {list(OBSERVABLES)}")
        kw["observables"] = names
        if "correlator_pairs" in o:
            pairs = _get(o, "correlator_pairs", list, "observables")
            if not all(isinstance(p, list) and len(p) == 2 and p[0] != p[1] for p in pairs):
                raise ConfigError("observables.correlator_pairs: expected [[j, k], ...] with j != k")
            kw["correlator_pairs"] = tuple((int(a), int(b)) for a, b in pairs)
        if "qfi_signs" in o:
            kw["qfi_signs"] = tuple(_get(o, "qfi_signs", list, "observables"))

    if "output" in data:
        out = data["output"]
        if "path" in out:
            kw["output"] = base_dir / _get(out, "path", str, "output")
        sources = tuple(_get(out, "sources", list, "output", list(SOURCES)))
        bad = [x for x in sources if x not in SOURCES]
        if bad:
            raise ConfigError(f"output.sources: unknown {bad}; choose from {list(SOURCES)}")
        kw["sources"] = sources

    if "selection" in data:
        sel = data["selection"]
        kw["selection"] = {
            "calibration": base_dir / _require(sel, "calibration", str, "selection"),
            "chain_length": _require(sel, "chain_length", int, "selection"),
            "meas_threshold": _get(sel, "meas_threshold", float, "selection", 1.0),
            "t2_threshold": _get(sel, "t2_threshold", float, "selection", 0.0),
            "relax_factor": _get(sel, "relax_factor", float, "selection", 1.25),
        }

    if "synth" in data:
        kw["synth_trials"] = _get(data["synth"], "trials", int, "synth", 1000)

    cfg = ExperimentConfig(**kw)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig) -> None:
    if cfg.model is None:
        return
    n = cfg.model.n_sites
    if cfg.initial is not None:
        try:
            cfg.initial_state()
        except ValueError as exc:
            raise ConfigError(f"initial.state: {exc}") from None
    if "n_half" in cfg.observables and n % 2:
        raise ConfigError("observables.names: n_half needs an even number of sites")
    for j, k in cfg.correlator_pairs or ():
        if not (0 <= j < n and 0 <= k < n):
            raise ConfigError(f"observables.correlator_pairs: ({j}, {k}) outside 0..{n - 1}")
    if cfg.qfi_signs is not None and (len(cfg.qfi_signs) != n
                                      or any(s not in (1, -1) for s in cfg.qfi_signs)):
        raise ConfigError(f"observables.qfi_signs: need {n} entries of +1/-1")
    if "ed" in cfg.sources and n > ORACLE_MAX_SITES:
        raise ConfigError(f"output.sources: ed is limited to {ORACLE_MAX_SITES} sites")
    if cfg.layout.qubits is not None and len(cfg.layout.qubits) < n:
        raise ConfigError(f"layout.qubits: need {n} qubits, got {len(cfg.layout.qubits)}")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path.parent)


# ---------------------------------------------------------------- shared plumbing

def derived_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for stream ``keys`` of ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=keys)
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _noise(cfg: ExperimentConfig) -> NoiseModel | None:
    if cfg.calibration is None:
        return None
    try:
        cal = load_calibration(cfg.calibration)
    except OSError as exc:
        raise ConfigError(f"noise.calibration: {exc}") from None
    except CalibrationError as exc:
        raise ConfigError(f"noise.calibration: {exc}") from None
    return NoiseModel(cal, *cfg.channels)


def resolve_layout(cfg: ExperimentConfig, cal: Calibration, n: int) -> tuple[int, ...]:
    """Physical chain for ``n`` logical sites: explicit or chosen from the calibration."""
    lay = cfg.layout
    if lay.qubits is None:
        try:
            sel = select_chain(cal, SelectionConfig(n, lay.meas_threshold, lay.t2_threshold,
                                                    lay.relax_factor))
        except NoChainError as exc:
            raise InfeasibleError(str(exc)) from None
        return sel.chain
    chain = lay.qubits[:n]
    for p in chain:
        if not cal.has_qubit(p):
            raise InfeasibleError(f"layout qubit {p} is not in the calibration")
    if len(set(chain)) != n:
        raise InfeasibleError(f"layout {list(chain)} repeats a qubit")
    for a, b in zip(chain, chain[1:]):
        if cal.edge(a, b) is None:
            raise InfeasibleError(f"layout qubits {a} and {b} share no CNOT edge")
    return chain


def _shots(cfg: ExperimentConfig, circuit: Circuit, state: np.ndarray | None,
           noise: NoiseModel | None, layout: Sequence[int] | None, seed: int) -> Counts:
    assert cfg.shots is not None
    if noise is None:
        if state is None:
            zero = np.zeros(2**circuit.n_qubits, dtype=complex)
            zero[0] = 1.0
            state = apply_circuit(zero, circuit)
        return sample_counts(state, cfg.shots, seed)
    return noisy_counts(circuit, layout, noise, cfg.shots, seed)


def _map_ordered(fn: Callable[[int], list], count: int, threads: int) -> list:
    """``[fn(0), ..., fn(count - 1)]`` computed on ``threads`` workers, gathered in index order."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(count)))
    return [fn(i) for i in range(count)]


def _write_outputs(records: list[ObservableRecord], out: Path | None, meta: dict) -> str:
    text = records_to_csv(records)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return text


def _base_meta(cfg: ExperimentConfig, command: str, noise: NoiseModel | None,
               layout: Sequence[int] | None) -> dict:
    meta: dict[str, Any] = {
        "command": command,
        "package_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "shots": cfg.shots,
        "stderr_method": STDERR_METHOD,
        "noise": noise.describe() if noise else "off",
        "layout": list(layout) if layout is not None else None,
    }
    if cfg.model is not None:
        meta["model"] = {"case": cfg.model.case.value, "n_sites": cfg.model.n_sites,
                         "J": cfg.model.J, "U": cfg.model.U, "h": cfg.model.h,
                         "seed": cfg.model.seed, "realizations": cfg.model.realizations}
    if cfg.dt is not None:
        meta["trotter"] = {"scheme": cfg.scheme.value, "dt": cfg.dt, "max_steps": cfg.max_steps,
                           "substeps": cfg.substeps, "two_cnot": cfg.two_cnot}
    return meta


# ---------------------------------------------------------------- run (quench)

def _state_rows(cfg: ExperimentConfig, src: Source, t: float, source: str,
                retained: float | None, exact_state: bool) -> list[ObservableRecord]:
    n = cfg.model.n_sites
    rows: list[ObservableRecord] = []

    def add(name: str, fn: Callable[[], tuple[float, float]]) -> None:
        if retained is not None and isinstance(src, Counts) and not src:
            rows.append(ObservableRecord(t, name, None, None, retained, source))
        else:
            value, err = fn()
            rows.append(ObservableRecord(t, name, value, err, retained, source))

    for obs in cfg.observables:
        if obs == "magnetization":
            for j in range(n):
                add(f"M_{j}", lambda j=j: magnetization(src, j, return_stderr=True))
        elif obs == "n_half":
            add("N_half", lambda: n_half(src, return_stderr=True))
        elif obs == "correlator":
            pairs = cfg.correlator_pairs or tuple((0, k) for k in range(1, n))
            for j, k in pairs:
                add(f"C_{j}_{k}", lambda j=j, k=k: connected_correlator(src, j, k, return_stderr=True))
        elif obs == "qfi":
            add("F_Q", lambda: qfi(src, cfg.qfi_signs, return_stderr=True))
        elif obs == "entropy":
            if exact_state:
                add("S_vN", lambda: (entanglement_entropy(src, n // 2), 0.0))
        elif obs == "physical_fraction":
            sz = cfg.initial_state().sz
            add("physical_fraction", lambda: physical_fraction(src, sz, return_stderr=True))
    return rows


def _quench_rows(cfg: ExperimentConfig, params: ModelParams, plans: list[TrotterPlan],
                 noise: NoiseModel | None, layout: Sequence[int] | None, realization: int,
                 threads: int) -> list[list[ObservableRecord]]:
    n = params.n_sites
    init = cfg.initial_state()
    psi0 = initial_statevector(init, n)
    prop = ExactPropagator(params) if "ed" in cfg.sources else None
    prep = prepare_circuit(init.pattern)
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1.0

    def point(i: int) -> list[ObservableRecord]:
        plan = plans[i]
        t = plan.time
        rows: list[ObservableRecord] = []
        if prop is not None:
            rows += _state_rows(cfg, prop.evolve(psi0, t), t, "ed", None, True)
        circuit = prep + evolution_circuit(params, plan, two_cnot=cfg.two_cnot)
        state = None
        if "trotter" in cfg.sources or (cfg.shots and noise is None):
            state = apply_circuit(zero, circuit)
            sz = float(np.real(np.vdot(state, _sz_diag(n) * state)))
            if abs(sz - init.sz) > 1e-9:
                raise InvariantError(f"Trotter circuit broke S_z conservation at t={t}: {sz}")
            if "trotter" in cfg.sources:
                rows += _state_rows(cfg, state, t, "trotter", None, True)
        if cfg.shots and "shots" in cfg.sources:
            counts = _shots(cfg, circuit, state, noise, layout, derived_seed(cfg.seed, realization, i))
            rows += _state_rows(cfg, counts, t, "shots_raw", None, False)
            if cfg.mitigation:
                report = postselect(counts, init.sz)
                rows += _state_rows(cfg, report.kept, t, "shots_mitigated",
                                    report.retained_fraction, False)
        return rows

    return _map_ordered(point, len(plans), threads)


def _sz_diag(n: int) -> np.ndarray:
    return z_diagonals(n).sum(axis=0)


def _average(per_realization: list[list[list[ObservableRecord]]]) -> list[ObservableRecord]:
    """Average matching rows over disorder realizations (standard error of the mean)."""
    if len(per_realization) == 1:
        return [r for point in per_realization[0] for r in point]
    out = []
    for rows in zip(*per_realization):
        for group in zip(*rows):
            first = group[0]
            values = [r.value for r in group]
            if any(v is None for v in values):
                out.append(ObservableRecord(first.time, first.name, None, None,
                                            _mean_or_none([r.retained_fraction for r in group]),
                                            first.source))
                continue
            k = len(group)
            err = math.sqrt(sum(r.stderr**2 for r in group)) / k
            out.append(ObservableRecord(first.time, first.name, math.fsum(values) / k, err,
                                        _mean_or_none([r.retained_fraction for r in group]),
                                        first.source))
    return out


def _mean_or_none(xs: list[float | None]) -> float | None:
    return None if any(x is None for x in xs) else math.fsum(xs) / len(xs)


def _need(cfg: ExperimentConfig, command: str) -> None:
    missing = [name for name, value in (("model", cfg.model), ("initial", cfg.initial),
                                         ("trotter", cfg.dt)) if value is None]
    if missing:
        raise ConfigError(f"{command}: missing section(s) {', '.join(missing)}")


def run_quench(cfg: ExperimentConfig, threads: int = 1, out: Path | None = None) -> str:
    _need(cfg, "run")
    noise = _noise(cfg)
    n = cfg.model.n_sites
    layout = resolve_layout(cfg, noise.source, n) if noise else None
    plans = time_grid(cfg.scheme, cfg.dt, cfg.max_steps, cfg.substeps)
    per_realization = [
        _quench_rows(cfg, cfg.model.params(k), plans, noise, layout, k, threads)
        for k in range(cfg.model.realizations)
    ]
    records = _average(per_realization)
    meta = _base_meta(cfg, "run", noise, layout)
    meta["sources"] = {
        "ed": "continuous-time exact diagonalization",
        "trotter": "noiseless Trotter circuit, exact expectations",
        "shots_raw": "sampled Trotter circuit" + (" with emulated noise" if noise else ""),
        "shots_mitigated": "shots_raw post-selected on the initial total-Z sector",
    }
    meta["observables"] = list(cfg.observables)
    meta["fields"] = [list(cfg.model.params(k).fields) for k in range(cfg.model.realizations)]
    return _write_outputs(records, out or cfg.output, meta)


# ---------------------------------------------------------------- echo

def run_echo(cfg: ExperimentConfig, threads: int = 1, out: Path | None = None) -> str:
    """Echo return probability and forward-circuit physical fraction per time point."""
    _need(cfg, "echo")
    noise = _noise(cfg)
    params = cfg.model.params(0)
    n = params.n_sites
    layout = resolve_layout(cfg, noise.source, n) if noise else None
    init = cfg.initial_state()
    plans = time_grid(cfg.scheme, cfg.dt, cfg.max_steps, cfg.substeps)
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1.0
    prep = prepare_circuit(init.pattern)

    def point(i: int) -> list[ObservableRecord]:
        plan = plans[i]
        t = plan.time
        echo = echo_circuit(params, plan, init)
        forward = prep + evolution_circuit(params, plan, two_cnot=cfg.two_cnot)
        back = apply_circuit(zero, echo)
        p_exact = float(abs(back[init.index]) ** 2)
        if abs(p_exact - 1.0) > 1e-9:
            raise InvariantError(f"noiseless echo is {p_exact} at t={t}")
        rows = [ObservableRecord(t, "echo", p_exact, 0.0, None, "exact"),
                ObservableRecord(t, "physical_fraction", 1.0, 0.0, None, "exact")]
        if cfg.shots:
            counts = _shots(cfg, echo, back, noise, layout, derived_seed(cfg.seed, 0, i))
            p = counts.table.get(init.bitstring, 0) / counts.shots
            rows.append(ObservableRecord(t, "echo", p, math.sqrt(p * (1 - p) / counts.shots),
                                         None, "shots_raw"))
            fwd = _shots(cfg, forward, None, noise, layout, derived_seed(cfg.seed, 1, i))
            frac, err = physical_fraction(fwd, init.sz, return_stderr=True)
            rows.append(ObservableRecord(t, "physical_fraction", frac, err, None, "shots_raw"))
        return rows

    records = [r for rows in _map_ordered(point, len(plans), threads) for r in rows]
    meta = _base_meta(cfg, "echo", noise, layout)
    meta["sources"] = {"exact": "noiseless state vector",
                       "shots_raw": "sampled circuits" + (" with emulated noise" if noise else "")}
    return _write_outputs(records, out or cfg.output, meta)


# ---------------------------------------------------------------- GHZ / Mermin

def run_ghz_mermin(cfg: ExperimentConfig, threads: int = 1, out: Path | None = None) -> str:
    noise = _noise(cfg)
    layout = resolve_layout(cfg, noise.source, 3) if noise else None
    circuits = mermin_circuits(3)
    zero = np.zeros(8, dtype=complex)
    zero[0] = 1.0
    states = {b: apply_circuit(zero, circuits[b]) for b in MERMIN_BASES}
    exact = mermin(*(states[b] for b in MERMIN_BASES))
    if abs(exact - 4.0) > 1e-9:
        raise InvariantError(f"exact GHZ Mermin value is {exact}, expected 4")
    records = [ObservableRecord(0.0, "M_GHZ", exact, 0.0, None, "exact")]
    meta = _base_meta(cfg, "ghz-mermin", noise, layout)
    if cfg.shots:
        def basis(i: int) -> Counts:
            b = MERMIN_BASES[i]
            return _shots(cfg, circuits[b], states[b], noise, layout, derived_seed(cfg.seed, i))

        counts = _map_ordered(basis, len(MERMIN_BASES), threads)
        value, err = mermin(*counts, return_stderr=True)
        records.append(ObservableRecord(0.0, "M_GHZ", value, err, None, "shots_raw"))
        meta["violates_classical_bound"] = bool(value > 2.0)
        sys.stderr.write(f"M_GHZ = {value:.4f} +- {err:.4f} "
                         f"({'quantum' if value > 2 else 'classical'})\n")
    return _write_outputs(records, out or cfg.output, meta)


# ---------------------------------------------------------------- qubit selection

def run_select(cal: Calibration, config: SelectionConfig, out: Path | None = None) -> str:
    try:
        sel = select_chain(cal, config)
    except NoChainError as exc:
        raise InfeasibleError(str(exc)) from None
    text = format_stats(sel.chain, chain_stats(cal, sel.chain))
    text += f"meas_threshold {sel.meas_threshold!r}\nrestricted_edges {sel.n_edges}\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    return text


# ---------------------------------------------------------------- synthesis fuzz

def synth_check(trials: int, seed: int) -> tuple[float, float]:
    """Max phase-aligned error of the 3-CNOT and 2-CNOT constructions over random angles."""
    rng = np.random.default_rng(seed)
    worst_general = worst_xz = 0.0
    for _ in range(trials):
        a, b, g = rng.uniform(-np.pi, np.pi, 3)
        c = synth_general(CanonicalAngles(a, b, g))
        if c.cnot_count != 3:
            raise InvariantError("general synthesis must use 3 CNOTs")
        worst_general = max(worst_general,
                            phase_aligned_distance(unitary_of(c), canonical_unitary(a, b, g)))
        c = synth_xz(a, g)
        if c.cnot_count != 2:
            raise InvariantError("XZ synthesis must use 2 CNOTs")
        worst_xz = max(worst_xz, phase_aligned_distance(unitary_of(c), canonical_unitary(a, 0, g)))
    return worst_general, worst_xz


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinquench", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--out", help="output path (default: config output.path or stdout)")
        p.add_argument("--seed", type=int, help="override measurement.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    common(sub.add_parser("run", help="quench dynamics: ED, Trotter and sampled observables"))
    common(sub.add_parser("echo", help="Loschmidt echo and physical fraction"))
    common(sub.add_parser("ghz-mermin", help="Mermin witness on a 3-qubit GHZ state"))
    p = sub.add_parser("select-qubits", help="choose a qubit chain from calibration data")
    common(p, config_required=False)
    p.add_argument("--calibration", help="calibration document (instead of a config)")
    p.add_argument("--length", type=int, help="chain length")
    p.add_argument("--meas-threshold", type=float, default=1.0)
    p.add_argument("--t2-threshold", type=float, default=0.0)
    p = sub.add_parser("synth-check", help="fuzz the two-qubit gate synthesis")
    common(p, config_required=False)
    p.add_argument("--trials", type=int, help="random angle sets (default 1000)")
    return parser


def _override_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return cfg
    return replace(cfg, seed=seed)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return EXIT_CONFIG
    try:
        if args.command == "synth-check":
            trials = args.trials
            if trials is None:
                trials = load_config(args.config).synth_trials if args.config else 1000
            general, xz = synth_check(trials, args.seed or 0)
            sys.stdout.write(f"trials {trials}\nmax_error_3cnot {general:.3e}\n"
                             f"max_error_2cnot {xz:.3e}\n")
            if max(general, xz) >= 1e-9:
                raise InvariantError("synthesis error above 1e-9")
            return EXIT_OK
        if args.command == "select-qubits":
            if args.config:
                sel = load_config(args.config).selection
                if not sel:
                    raise ConfigError("select-qubits: config needs a [selection] section")
                path = sel["calibration"]
                config = SelectionConfig(sel["chain_length"], sel["meas_threshold"],
                                         sel["t2_threshold"], sel["relax_factor"])
            else:
                if not args.calibration or not args.length:
                    raise ConfigError("select-qubits: give --config or --calibration and --length")
                path = Path(args.calibration)
                config = SelectionConfig(args.length, args.meas_threshold, args.t2_threshold)
            try:
                cal = load_calibration(path)
            except (OSError, CalibrationError) as exc:
                raise ConfigError(f"calibration: {exc}") from None
            run_select(cal, config, out)
            return EXIT_OK
        cfg = _override_seed(load_config(args.config), args.seed)
        runner = {"run": run_quench, "echo": run_echo, "ghz-mermin": run_ghz_mermin}[args.command]
        runner(cfg, args.threads, out)
        return EXIT_OK
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except ValueError as exc:
        # Parameter validation inside the library (e.g. SelectionConfig thresholds).
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except InvariantError as exc:
        sys.stderr.write(f"invariant violated: {exc}\n")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
