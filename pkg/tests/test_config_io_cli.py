import csv
import json

import numpy as np
import pytest

from fluxnv import cli, io
from fluxnv.config import DeviceConfig, dump_config, load_config, parse_overrides
from fluxnv.dynamics import TimeTrace, vacuum_rabi_trace
from fluxnv.errors import ConfigError, OutputError


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- config -----------------------------------------------------------------


def test_empty_file_gives_defaults(tmp_path):
    assert load_config(_write(tmp_path, "")) == DeviceConfig()
    assert load_config(None) == DeviceConfig()


def test_partial_override(tmp_path):
    cfg = load_config(_write(tmp_path, "qubit:\n  t1_ns: 200\nensemble:\n  e_ghz: 0.0005\n"))
    assert cfg.qubit.t1_ns == 200.0
    assert cfg.ensemble.e_ghz == 0.0005
    assert cfg.qubit.delta_ghz == 2.878


def test_unit_suffix_mismatch(tmp_path):
    with pytest.raises(ConfigError, match="expected key 'delta_ghz'"):
        load_config(_write(tmp_path, "qubit:\n  delta: 2.9\n"))
    with pytest.raises(ConfigError, match="expected key 't1_ns'"):
        load_config(_write(tmp_path, "qubit:\n  t1_us: 0.15\n"))


def test_unknown_key_and_section(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(_write(tmp_path, "qubit:\n  colour: 3\n"))
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(_write(tmp_path, "cavity:\n  q: 3\n"))


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "qubit:\n  t1_ns: -1\n"))
    with pytest.raises(ConfigError, match="number"):
        load_config(_write(tmp_path, "qubit:\n  t1_ns: fast\n"))
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        load_config(_write(tmp_path, "qubit:\n  t1_ns: [1\n"))
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.yaml"))


def test_dump_reload_identity(tmp_path):
    cfg = DeviceConfig().override({"ensemble": {"e_ghz": 0.0005, "n_spins": 1.234567891e7}, "grid": {"t_max_ns": 0.1 + 0.2}})
    again = load_config(_write(tmp_path, dump_config(cfg)))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_parse_overrides():
    ov = parse_overrides(["t_max_ns=50", "ensemble.n_spins=1e7"])
    assert set(ov) == {"grid", "ensemble"}
    cfg = DeviceConfig().override(ov)
    assert cfg.grid.t_max_ns == 50.0
    assert cfg.ensemble.n_spins == 1e7
    with pytest.raises(ConfigError):
        parse_overrides(["t_max_ns"])


# --- io ---------------------------------------------------------------------


def _trace_env(cfg):
    return io.envelope("time_trace", vacuum_rabi_trace(cfg, t_max=10, samples=11), cfg)


def test_time_trace_csv_schema(cfg):
    text = io.to_csv(_trace_env(cfg))
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["time_ns", "p_ground", "p_qubit_excited", "p_bright", "p_dark", "p_switch"]
    assert len(rows) == 12
    assert text.endswith("\r\n")


def test_chevron_and_spectrum_csv_schema(cfg):
    from fluxnv.dynamics import chevron_scan
    from fluxnv.spectroscopy import sweep_spectrum

    grid = chevron_scan(cfg, detunings=[0.0, 0.1], t_max=10, samples=11)
    rows = list(csv.reader(io.to_csv(io.envelope("chevron", grid)).splitlines()))
    assert rows[0] == ["detuning_ghz", "time_ns", "p_switch"]
    assert len(rows) == 1 + 2 * 11
    s = sweep_spectrum(cfg, bias_grid=[0.0, 0.5])
    rows = list(csv.reader(io.to_csv(io.envelope("spectrum", s)).splitlines()))
    assert rows[0] == ["flux_offset_mphi0", "epsilon_ghz", "transition_index", "frequency_ghz", "weight"]
    assert len(rows) == 1 + 2 * 3


def test_json_roundtrip(cfg, tmp_path):
    env = _trace_env(cfg)
    path = tmp_path / "t.json"
    io.emit(env, "json", str(path))
    back = io.read_json(str(path))
    assert back.kind == "time_trace"
    assert back.config == cfg.to_dict()
    tr = TimeTrace.from_dict(back.payload)
    orig = TimeTrace.from_dict(env.payload)
    assert np.max(np.abs(tr.populations - orig.populations)) <= 1e-12
    assert json.loads(path.read_text())["schema"] == io.SCHEMA_VERSION


def test_csv_trace_roundtrip(cfg, tmp_path):
    env = _trace_env(cfg)
    path = tmp_path / "t.csv"
    io.emit(env, "csv", str(path))
    tr = io.read_trace_csv(str(path))
    np.testing.assert_array_equal(tr.p_excited, TimeTrace.from_dict(env.payload).p_excited)


def test_emit_errors(cfg, tmp_path):
    env = _trace_env(cfg)
    with pytest.raises(OutputError):
        io.emit(env, "xlsx")
    with pytest.raises(OutputError):
        io.emit(env, "csv", str(tmp_path / "no" / "such" / "dir.csv"))
    with pytest.raises(OutputError):
        io.to_svg(io.envelope("report", {"x": 1.0}))


def test_svg_deterministic(cfg):
    env = _trace_env(cfg)
    a, b = io.to_svg(env), io.to_svg(env)
    assert a == b and a.lstrip().startswith("<?xml")


# --- cli --------------------------------------------------------------------


def _run(capsys, *argv):
    code = cli.main(["-q", *argv] if argv[0].startswith("-") else [argv[0], "-q", *argv[1:]])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_spectrum(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, stdout, _ = _run(capsys, "spectrum", "--out", str(out))
    assert code == 0
    assert "gap_ghz=0.0704" in stdout
    assert out.read_text().startswith("flux_offset_mphi0,")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_cli_byte_identical_reruns(capsys, tmp_path, fmt):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.{fmt}"
        code, *_ = _run(capsys, "fit-rabi", "--noise", "0.01", "--seed", "7", "--format", fmt, "--out", str(path))
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_cli_thread_invariance(capsys, tmp_path):
    outs = []
    for threads in ("1", "4"):
        path = tmp_path / f"c{threads}.csv"
        code, *_ = _run(capsys, "chevron", "--grid", "t_max_ns=20", "--grid", "detuning_points=9", "--threads", threads, "--out", str(path))
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_cli_timestamp_opt_in(capsys, tmp_path):
    path = tmp_path / "e.json"
    _run(capsys, "estimate-n", "--format", "json", "--out", str(path))
    assert json.loads(path.read_text())["provenance"]["created"] is None
    _run(capsys, "estimate-n", "--format", "json", "--timestamp", "--out", str(path))
    assert json.loads(path.read_text())["provenance"]["created"]


def test_cli_estimate(capsys):
    code, stdout, _ = _run(capsys, "estimate-n")
    assert code == 0
    assert "n_from_splitting=3.16374e+07" in stdout
    assert "n_from_density=3.08e+07" in stdout


def test_cli_fit_from_file(capsys, tmp_path):
    trace = tmp_path / "t.json"
    assert _run(capsys, "rabi", "--coherent", "--format", "json", "--out", str(trace))[0] == 0
    code, stdout, _ = _run(capsys, "fit-rabi", "--input", str(trace))
    assert code == 0
    assert "frequency_ghz=0.0704" in stdout


def test_cli_config_error_exit_2(capsys, tmp_path):
    bad = _write(tmp_path, "qubit:\n  delta: 2.9\n")
    code, _, err = _run(capsys, "spectrum", "--config", bad)
    assert code == 2
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["code"] == 2 and "delta_ghz" in msg["message"]


def test_cli_numerical_error_exit_3(capsys):
    code, _, err = _run(capsys, "fit-rabi", "--grid", "ensemble.g_single_khz=0", "--grid", "t_max_ns=20")
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "FitError"


def test_cli_output_error_exit_4(capsys, tmp_path):
    code, _, err = _run(capsys, "report", "--format", "svg", "--out", str(tmp_path / "r.svg"))
    assert code == 4
    assert json.loads(err.strip().splitlines()[-1])["code"] == 4


def test_cli_report_uncoupled(capsys):
    code, stdout, _ = _run(capsys, "report", "--grid", "ensemble.g_single_khz=0")
    assert code == 0
    assert "coupled=False" in stdout
    assert "no coupling" in stdout
