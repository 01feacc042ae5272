import json
import os
from pathlib import Path

import pytest

from magnusgate import __version__
from magnusgate.cli import main
from magnusgate.config import ConfigError, parse_config
from magnusgate.experiments import EXPERIMENT_DEFAULTS, REGISTRY, listing, write_outputs

# tiny but complete physics runs, fixed delta so no calibration is needed
FAST_SIM = """
simulation:
  n_c_cut: 5
  n_s_cut: 2
  steps: 1500
  delta_hz: 8007.18
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, monkeypatch, text, *extra):
    monkeypatch.chdir(tmp_path)
    return main(["run", _write(tmp_path, text), *extra])


def _files(tmp_path):
    return sorted(str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*")
                  if p.is_file() and p.suffix != ".yaml")


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


# --- config parsing ------------------------------------------------------------

def test_scientific_notation_and_units():
    ec = parse_config("experiment: params\nphysics:\n  detuning_hz: 1.5e13\n  trap_freq_hz: 2e6\n")
    assert ec.physics["detuning_hz"] == 1.5e13
    cfg = ec.physical_config()
    assert cfg.trap_freq == pytest.approx(2 * 3.141592653589793 * 2e6)


def test_unknown_key_reports_path_and_line():
    text = "experiment: params\nphysics:\n  waist_m: 5.0e-7\n  wiast_m: 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == "physics.wiast_m"
    assert exc.value.line == 4


def test_type_errors_and_missing_experiment():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment: params\nsimulation:\n  n_c_cut: 4.5\n")
    assert exc.value.key == "simulation.n_c_cut" and exc.value.line == 3
    with pytest.raises(ConfigError):
        parse_config("seed: 1\n")
    with pytest.raises(ConfigError):
        parse_config("experiment: params\nformat: xml\n")
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment: params\nphysics: [1, 2\n")
    assert exc.value.line is not None


def test_experiment_defaults_sit_below_file():
    ec = parse_config("experiment: error-budget\n", EXPERIMENT_DEFAULTS)
    assert ec.sweep["eps_m"] == [30e-9]
    ec = parse_config("experiment: error-budget\nsweep:\n  eps_m: [1.0e-8]\n", EXPERIMENT_DEFAULTS)
    assert ec.sweep["eps_m"] == [1e-8]


def test_example_configs_validate(capsys):
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.yaml"))
    names = {parse_config(f.read_text()).experiment for f in files}
    assert names == {e.name for e in REGISTRY}
    for f in files:
        assert main(["validate", str(f)]) == 0


# --- registry ------------------------------------------------------------------

def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    first = capsys.readouterr().out
    assert main(["list-experiments"]) == 0
    assert capsys.readouterr().out == first
    assert first.strip()
    for ref in ("Fig. 2(a)", "Fig. 2(b)", "Table 1", "Fig. S-1", "Fig. S-2"):
        assert ref in first
    assert first.strip() == listing()


# --- run: errors ---------------------------------------------------------------

def test_malformed_config_exit_2_no_output(tmp_path, monkeypatch, capsys):
    code = _run(tmp_path, monkeypatch, "experiment: params\noutput: out/p\nphysics: {a: [\n")
    assert code == 2
    assert _err(capsys)["error"] == "config"
    assert _files(tmp_path) == []


def test_unknown_key_exit_2(tmp_path, monkeypatch, capsys):
    code = _run(tmp_path, monkeypatch, "experiment: params\nbogus: 1\n")
    err = _err(capsys)
    assert code == 2 and err["key"] == "bogus" and err["line"] == 2


def test_unknown_experiment_exit_2(tmp_path, monkeypatch, capsys):
    assert _run(tmp_path, monkeypatch, "experiment: nope\n") == 2


def test_physics_rejection_exit_3(tmp_path, monkeypatch, capsys):
    code = _run(tmp_path, monkeypatch, "experiment: params\nphysics:\n  waist_m: 1.0e-7\n")
    assert code == 3
    assert _err(capsys)["error"] == "physics"
    assert _files(tmp_path) == []
    assert main(["validate", str(tmp_path / "cfg.yaml")]) == 3


def test_numerical_failure_exit_4(tmp_path, monkeypatch, capsys):
    text = "experiment: fidelity-ground\noutput: out/f\n" + FAST_SIM.replace("1500", "3")
    assert _run(tmp_path, monkeypatch, text) == 4
    assert _err(capsys)["error"] == "numerical"
    assert _files(tmp_path) == []


def test_large_cutoff_guard(tmp_path, monkeypatch, capsys):
    text = ("experiment: fidelity-ground\noutput: out/f\nsimulation:\n  n_c_cut: 120\n"
            "  delta_hz: 8007.18\n")
    assert _run(tmp_path, monkeypatch, text) == 2
    assert "allow-large-cutoff" in _err(capsys)["message"]
    assert _files(tmp_path) == []


def test_failed_sidecar_leaves_nothing(tmp_path, monkeypatch):
    from magnusgate.experiments import Table
    ec = parse_config(f"experiment: params\noutput: {tmp_path}/o/p\n")
    real = os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        return real(src, dst)

    monkeypatch.setattr(os, "replace", flaky)
    with pytest.raises(OSError):
        write_outputs(ec, Table(["a"], [(1.0,)]))
    assert list((tmp_path / "o").iterdir()) == []


# --- run: outputs --------------------------------------------------------------

def test_csv_output_and_sidecar(tmp_path, monkeypatch):
    text = "experiment: fidelity-ground\noutput: out/fg\n" + FAST_SIM
    assert _run(tmp_path, monkeypatch, text) == 0
    body = (tmp_path / "out/fg.csv").read_text().splitlines()
    assert body[0] == f"# magnusgate {__version__}"
    assert body[1] == "# schema_version 1"
    header = [l for l in body if not l.startswith("#")][0]
    assert header == "delta_rad_s,delta_hz,tau_s,F,infidelity"
    side = json.loads((tmp_path / "out/fg.config.json").read_text())
    assert side["version"] == __version__
    assert side["config"]["simulation"]["n_c_cut"] == 5
    assert side["summary"]["delta_source"] == "config"
    cfg_line = [l for l in body if l.startswith("# config ")][0]
    assert json.loads(cfg_line[len("# config "):])["simulation"]["steps"] == 1500


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_reruns_byte_identical(tmp_path, monkeypatch, fmt):
    text = (f"experiment: intensity-noise-scan\noutput: out/n\nformat: {fmt}\nseed: 11\n"
            + FAST_SIM + "sweep:\n  lambda: [0.005]\n  n_real: 3\n")
    assert _run(tmp_path, monkeypatch, text) == 0
    first = {p: (tmp_path / p).read_bytes() for p in _files(tmp_path)}
    assert _run(tmp_path, monkeypatch, text, "--threads", "2") == 0
    second = {p: (tmp_path / p).read_bytes() for p in _files(tmp_path)}
    assert first == second and len(first) == 2


def test_json_rows(tmp_path, monkeypatch):
    text = ("experiment: misalignment-scan\noutput: out/m\nformat: json\n" + FAST_SIM
            + "sweep:\n  eps_m: [0.0, 1.0e-8, 2.0e-8]\n")
    assert _run(tmp_path, monkeypatch, text) == 0
    doc = json.loads((tmp_path / "out/m.json").read_text())
    assert doc["schema_version"] == 1 and doc["version"] == __version__
    assert [r["eps_m"] for r in doc["rows"]] == [0.0, 1e-8, 2e-8]
    assert doc["config"]["sweep"]["eps_m"] == [0.0, 1e-8, 2e-8]


@pytest.mark.parametrize("name, extra, rows", [
    ("params", "", None),
    ("error-budget", "", 5),
    ("fidelity-thermal", "sweep:\n  nbar_c: 0.1\n  nbar_s: 0.05\n", 1),
    ("timing-scan", "sweep:\n  dtau_s: [-5.0e-6, 5.0e-6]\n", 2),
    ("trajectories", "sweep:\n  spin_labels: ['00', '01']\n  record_every: 100\n", None),
    ("gate-time-scan", "sweep:\n  tau_s: [2.0e-4]\n  thermal: false\n", 1),
])
def test_every_physics_experiment_runs(tmp_path, monkeypatch, name, extra, rows):
    text = f"experiment: {name}\noutput: out/x\n" + FAST_SIM + extra
    if name == "error-budget":
        text += "sweep:\n  n_real: 2\n"
    assert _run(tmp_path, monkeypatch, text) == 0
    side = json.loads((tmp_path / "out/x.config.json").read_text())
    if rows is not None:
        assert side["rows"] == rows


def test_error_budget_row_structure(tmp_path, monkeypatch):
    text = ("experiment: error-budget\noutput: out/eb\nformat: json\n" + FAST_SIM
            + "sweep:\n  n_real: 2\n")
    assert _run(tmp_path, monkeypatch, text) == 0
    doc = json.loads((tmp_path / "out/eb.json").read_text())
    assert [r["source"] for r in doc["rows"]] == ["gamma_ph", "eps", "Lambda", "dtau", "dtau"]
    assert doc["columns"][:3] == ["source", "setting", "infidelity"]


def test_focal_field_experiment(tmp_path, monkeypatch):
    text = ("experiment: focal-field\noutput: out/ff\nfocal:\n  kinds: [gaussian]\n"
            "  resolution: 31\n")
    assert _run(tmp_path, monkeypatch, text) == 0
    lines = (tmp_path / "out/ff.csv").read_text().splitlines()
    assert "x_m,z_m,I_sigma_plus,I_sigma_minus,I_pi,I_total" in lines[4]
    assert len(lines) == 5 + 31 * 31
    side = json.loads((tmp_path / "out/ff.config.json").read_text())
    assert side["summary"]["per_kind"]["gaussian"]["offset_mode"] == "centroid"


def test_calibrate_experiment(tmp_path, monkeypatch):
    text = ("experiment: calibrate-delta\noutput: out/c\nsimulation:\n  n_c_cut: 4\n"
            "  n_s_cut: 2\n  steps: 1000\n")
    assert _run(tmp_path, monkeypatch, text) == 0
    side = json.loads((tmp_path / "out/c.config.json").read_text())
    s = side["summary"]
    assert s["F_star"] >= s["F_reference"]
    assert side["rows"] == 17
