from __future__ import annotations

import json
import textwrap
from pathlib import Path

import pytest

from fixtures import TABLE_FIXTURE
from spinquench.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    ConfigError,
    derived_seed,
    main,
    parse_config,
)
from spinquench.observables import records_from_csv

BASE = """
schema_version = 1

[model]
case = "I"
n_sites = 4

[initial]
state = "domain_wall"

[trotter]
scheme = "Symmetric"
dt = 0.25
max_steps = 2
substeps = 2
"""


def write(tmp_path: Path, body: str, name: str = "cfg.toml") -> Path:
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return path


def run(args) -> int:
    return main([str(a) for a in args])


def test_run_noiseless(tmp_path):
    cfg = write(tmp_path, BASE + """
[measurement]
shots = 2000
seed = 1

[observables]
names = ["magnetization", "n_half", "correlator", "qfi", "entropy", "physical_fraction"]
""")
    out = tmp_path / "r.csv"
    assert run(["run", "--config", cfg, "--out", out]) == EXIT_OK
    rows = records_from_csv(out.read_text())
    sources = {r.source for r in rows}
    assert sources == {"ed", "trotter", "shots_raw", "shots_mitigated"}
    t0 = [r for r in rows if r.time == 0 and r.source in ("ed", "trotter")]
    m = {r.name: r.value for r in t0 if r.source == "ed"}
    assert [m[f"M_{j}"] for j in range(4)] == pytest.approx([-1, -1, 1, 1])
    assert [m["N_half"], m["F_Q"], m["S_vN"]] == pytest.approx([0, 0, 0], abs=1e-12)
    assert not any(r.name == "S_vN" for r in rows if r.source.startswith("shots"))
    mitigated = [r for r in rows if r.source == "shots_mitigated"]
    assert all(r.retained_fraction == 1.0 for r in mitigated)
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert meta["trotter"]["dt"] == 0.25 and meta["noise"] == "off" and meta["seed"] == 1


def test_run_zero_steps_is_initial_state(tmp_path):
    cfg = write(tmp_path, BASE.replace("max_steps = 2", "max_steps = 0"))
    out = tmp_path / "r.csv"
    assert run(["run", "--config", cfg, "--out", out]) == EXIT_OK
    rows = records_from_csv(out.read_text())
    assert {r.time for r in rows} == {0.0}
    assert [r.value for r in rows if r.source == "trotter"] == [-1, -1, 1, 1]


def test_ed_and_trotter_agree(tmp_path):
    cfg = write(tmp_path, BASE.replace('n_sites = 4', 'n_sites = 6'))
    out = tmp_path / "r.csv"
    assert run(["run", "--config", cfg, "--out", out]) == EXIT_OK
    rows = records_from_csv(out.read_text())
    ed = {(r.time, r.name): r.value for r in rows if r.source == "ed"}
    tr = {(r.time, r.name): r.value for r in rows if r.source == "trotter"}
    assert ed.keys() == tr.keys()
    assert max(abs(ed[k] - tr[k]) for k in ed) < 0.05


def test_disorder_ordering(tmp_path):
    # Stronger disorder slows the spreading of the domain wall.
    values = []
    for h in (0.5, 2.0, 5.0):
        cfg = write(tmp_path, f"""
schema_version = 1
[model]
case = "II"
n_sites = 6
h = {h}
seed = 3
realizations = 8
[initial]
state = "domain_wall"
[trotter]
dt = 0.25
max_steps = 4
[observables]
names = ["n_half"]
[output]
sources = ["ed"]
""")
        out = tmp_path / f"h{h}.csv"
        assert run(["run", "--config", cfg, "--out", out]) == EXIT_OK
        rows = records_from_csv(out.read_text())
        values.append([r.value for r in rows if r.time == 1.0][0])
    assert values[0] > values[1] > values[2]


def test_noisy_run_with_auto_layout(tmp_path):
    cfg = write(tmp_path, BASE + f"""
[measurement]
shots = 1000
seed = 4

[noise]
calibration = "{TABLE_FIXTURE}"

[layout]
meas_threshold = 0.05
t2_threshold = 50.0
""")
    out = tmp_path / "r.csv"
    assert run(["run", "--config", cfg, "--out", out]) == EXIT_OK
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert len(meta["layout"]) == 4 and meta["noise"].startswith("emulated[2019-03-12]")
    rows = records_from_csv(out.read_text())
    fractions = [r.retained_fraction for r in rows if r.source == "shots_mitigated"]
    assert all(0 < f < 1 for f in fractions)


def test_seed_flag_changes_shots(tmp_path):
    cfg = write(tmp_path, BASE + "[measurement]\nshots = 500\nseed = 1\n")
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert run(["run", "--config", cfg, "--out", a]) == EXIT_OK
    assert run(["run", "--config", cfg, "--out", b, "--seed", "1"]) == EXIT_OK
    assert run(["run", "--config", cfg, "--out", c, "--seed", "2"]) == EXIT_OK
    assert a.read_text() == b.read_text() != c.read_text()


@pytest.mark.parametrize("body,fragment", [
    ("schema_version = 2\n", "schema_version"),
    (BASE + "[model2]\nx = 1\n", "model2: unknown section"),
    (BASE.replace('case = "I"', 'case = "I"\ncolour = 1'), "unknown key(s) colour"),
    (BASE.replace('case = "I"', 'case = "V"'), "model.case"),
    (BASE.replace('case = "I"', 'case = "I"\nU = 0.5'), "model:"),
    (BASE.replace("dt = 0.25", "dt = -1.0"), "trotter.dt"),
    (BASE.replace("n_sites = 4", "n_sites = 5"), "initial.state"),
    (BASE + "[measurement]\nshots = 0\n", "measurement.shots"),
    (BASE + '[observables]\nnames = ["spin"]\n', "observables.names"),
    (BASE.replace('dt = 0.25', 'dt = "fast"'), "trotter.dt"),
])
def test_config_errors(tmp_path, body, fragment, capsys):
    cfg = write(tmp_path, body)
    assert run(["run", "--config", cfg]) == EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_missing_section_and_file(tmp_path, capsys):
    cfg = write(tmp_path, "schema_version = 1\n")
    assert run(["run", "--config", cfg]) == EXIT_CONFIG
    assert run(["run", "--config", tmp_path / "nope.toml"]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "model": {"n_sites": 4}})


def test_infeasible_layouts(tmp_path, capsys):
    noise = f'[noise]\ncalibration = "{TABLE_FIXTURE}"\n'
    cfg = write(tmp_path, BASE + noise + "[layout]\nqubits = [0, 1, 2, 4]\n")
    assert run(["run", "--config", cfg]) == EXIT_INFEASIBLE
    assert "share no CNOT edge" in capsys.readouterr().err
    cfg = write(tmp_path, BASE + noise + "[layout]\nt2_threshold = 1000.0\n")
    assert run(["run", "--config", cfg]) == EXIT_INFEASIBLE


def test_echo_and_ghz(tmp_path):
    cfg = write(tmp_path, BASE.replace('"domain_wall"', '"neel"') + "[measurement]\nshots = 1000\nseed = 2\n")
    out = tmp_path / "e.csv"
    assert run(["echo", "--config", cfg, "--out", out]) == EXIT_OK
    rows = records_from_csv(out.read_text())
    assert all(r.value == pytest.approx(1.0) for r in rows)
    cfg = write(tmp_path, "schema_version = 1\n[measurement]\nshots = 8192\nseed = 5\n", "g.toml")
    out = tmp_path / "g.csv"
    assert run(["ghz-mermin", "--config", cfg, "--out", out]) == EXIT_OK
    rows = records_from_csv(out.read_text())
    assert rows[0].value == 4.0 and abs(rows[1].value - 4.0) < 0.1


def test_select_qubits(tmp_path, capsys):
    assert run(["select-qubits", "--calibration", TABLE_FIXTURE, "--length", 6,
                "--meas-threshold", 0.05, "--t2-threshold", 50]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[3 2 1 0 5 6]" in out and "CNOT error     avg  0.0215" in out
    assert run(["select-qubits", "--calibration", TABLE_FIXTURE, "--length", 6,
                "--t2-threshold", 1e4]) == EXIT_INFEASIBLE
    assert run(["select-qubits"]) == EXIT_CONFIG


def test_synth_check(capsys):
    assert run(["synth-check", "--trials", 50]) == EXIT_OK
    assert "max_error_3cnot" in capsys.readouterr().out


def test_derived_seed_is_stable():
    assert derived_seed(1, 0, 3) == derived_seed(1, 0, 3)
    assert derived_seed(1, 0, 3) != derived_seed(1, 0, 4)
    assert 0 <= derived_seed(2**40, 7) < 2**63


def test_example_configs_parse():
    from spinquench.cli import load_config
    for path in sorted(TABLE_FIXTURE.parent.glob("*.toml")):
        load_config(path)


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write(tmp_path, BASE + f"""
[measurement]
shots = 3000
seed = 9

[noise]
calibration = "{TABLE_FIXTURE}"
""")
    outs = []
    for threads in (1, 8):
        out = tmp_path / f"t{threads}.csv"
        assert run(["run", "--config", cfg, "--out", out, "--threads", threads]) == EXIT_OK
        outs.append((out.read_bytes(), Path(str(out) + ".meta.json").read_bytes()))
    assert outs[0] == outs[1]
