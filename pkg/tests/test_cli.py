import json
import os
import stat

import numpy as np
import pytest

from sympal import cli
from sympal.config import ExperimentConfig, bundled_systems, load_config, load_system
from sympal.errors import ConfigError, SolveFailure
from sympal.output import atomic_write, canonical_json, emit_plots
from sympal.systems import SYSTEMS
from sympal.verification import ordered_map, thread_count


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def write_json(path, data):
    path.write_text(json.dumps(data, indent=2))
    return path


# --- configuration -------------------------------------------------------


def test_bundled_systems_match_constructors():
    assert bundled_systems() == ["sys_a", "sys_b", "sys_c", "sys_d"]
    for name in bundled_systems():
        assert load_system(name).to_dict() == SYSTEMS[name]().to_dict()
        assert load_system(name + ".json").factors == SYSTEMS[name]().factors


def test_system_from_relative_path(tmp_path):
    write_json(tmp_path / "mine.json", SYSTEMS["sys_c"]().to_dict())
    write_json(tmp_path / "run.json", {"system": "mine.json", "periods": [1]})
    cfg = load_config(tmp_path / "run.json")
    assert cfg.system.label == "SYS-C" and cfg.periods == (1,)


def test_malformed_json_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"system": "sys_c",\n  "seed": }')
    assert run_cli("orbits", "--config", bad) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_key_reports_line(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text('{\n  "system": "sys_c",\n  "sede": 1\n}')
    assert run_cli("orbits", "--config", path) == 2
    err = capsys.readouterr().err
    assert "sede" in err and "(line 3)" in err


def test_unknown_block_key(tmp_path):
    with pytest.raises(ConfigError, match="sdm.modee"):
        ExperimentConfig.from_dict({"system": "sys_b", "sdm": {"modee": "max"}})


@pytest.mark.parametrize("block", [{"vanish": {"R": -0.1}}, {"vanish": {"epsilon": 0}},
                                   {"search_config": {"newton_tol": 0.0}}, {"seed": -1},
                                   {"output": {"format": "xml"}}, {"periods": [0, 1]}])
def test_invalid_values_rejected(block):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"system": "sys_b", **block})


def test_missing_system(capsys):
    assert run_cli("orbits") == 2


def test_seed_override_reaches_search():
    cfg = load_config(system="sys_c").with_overrides(seed=4)
    assert cfg.seed == 4 and cfg.search_config.seed == 4


def test_period_list_syntax():
    assert cli._int_list("1..4,8") == [1, 2, 3, 4, 8]
    assert run_cli("orbits", "--system", "sys_c", "--periods", "x..y") == 2


# --- output helpers ------------------------------------------------------


def test_canonical_json():
    text = canonical_json({"b": 1.0, "a": [np.float64(0.1), 2], "c": {"z": float("nan"), "y": -0.0}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert '"b": 1.0' in text and "0.10000000000000001" in text
    assert '"z": null' in text and '"y": 0.0' in text
    assert text.endswith("\n")
    assert json.loads(text)["a"][1] == 2


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "out.json"
    atomic_write(target, "x")
    atomic_write(target, "y")
    assert target.read_text() == "y"
    assert os.listdir(target.parent) == ["out.json"]
    umask = os.umask(0)
    os.umask(umask)
    assert stat.S_IMODE(target.stat().st_mode) == 0o666 & ~umask


def test_plots(tmp_path, caplog):
    entries = [{"period": 1, "average_action": 0.02}]
    a = emit_plots(entries, tmp_path / "a.svg", reference=0.0)
    b = emit_plots(entries, tmp_path / "b.svg", reference=0.0)
    svg = a.read_text()
    assert svg == b.read_text()
    assert "<svg" in svg and "Date" not in svg
    assert emit_plots([], tmp_path / "c.svg") is None
    assert not (tmp_path / "c.svg").exists()
    assert "empty" in caplog.text


# --- commands ------------------------------------------------------------


def test_map_command(tmp_path):
    out = tmp_path / "map.json"
    assert run_cli("map", "--system", "sys_c", "--output", out) == 0
    rep = json.loads(out.read_text())
    assert rep["symplecticity"]["ok"]


def test_orbits_command(tmp_path):
    out = tmp_path / "orbits.json"
    assert run_cli("orbits", "--system", "sys_c", "--periods", "1", "--output", out) == 0
    rep = json.loads(out.read_text())
    assert len(rep["periods"]["1"]["orbits"]) == 4


def test_maslov_command_with_orbit_file(tmp_path):
    orbit = write_json(tmp_path / "o.json", {"point": [0.0, 0.0], "period": 3})
    out = tmp_path / "m.json"
    assert run_cli("maslov", "--system", "sys_b", "--orbit", orbit, "--output", out) == 0
    text = out.read_text()
    rows = json.loads(text)["orbits"]
    assert rows[0]["mas"] == -1 and rows[0]["avmas"] == 0.0
    assert "bounds_report" in rows[0]


def test_sdm_command(tmp_path):
    out = tmp_path / "sdm.json"
    assert run_cli("sdm", "--system", "sys_b", "--point", "0,0", "--mode", "max", "--periods", "1..8",
                   "--output", out) == 0
    rep = json.loads(out.read_text())
    assert rep["reports"][0]["K_candidate"] == list(range(1, 9))


def test_vanish_command(tmp_path):
    sysfile = write_json(tmp_path / "cos.json", {"d": 1, "k": 1, "label": "cos-0.1", "factors": [
        {"dim": 2, "terms": [{"c": 0.1, "m": [1, 0], "ph": "cos"}, {"c": 0.1, "m": [0, 1], "ph": "cos"}]}]})
    params = write_json(tmp_path / "p.json", {"R": 0.1, "epsilon": 1.0, "sample_count": 512, "boundary_count": 512})
    out = tmp_path / "v.json"
    assert run_cli("vanish", "--system", sysfile, "--params", params, "--output", out) == 0
    assert json.loads(out.read_text())["report"]["ok"]
    bad = write_json(tmp_path / "bad.json", {"Radius": 0.1})
    assert run_cli("vanish", "--system", sysfile, "--params", bad) == 2


def test_vanish_unreachable_loop_length():
    assert run_cli("vanish", "--system", "sys_b") == 1


def test_spectrum_identity_flags_family(tmp_path):
    out = tmp_path / "s.json"
    assert run_cli("spectrum", "--system", "sys_a", "--periods", "1", "--output", out) == 0
    rep = json.loads(out.read_text())
    assert rep["degenerate_family"]["1"] is True and rep["entries"] == []


def test_spectrum_csv_and_plot(tmp_path):
    out, svg = tmp_path / "s.csv", tmp_path / "s.svg"
    assert run_cli("spectrum", "--system", "sys_c", "--periods", "1,2", "--window", "0.02,0.001",
                   "--format", "csv", "--output", out, "--plot", svg) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "period,orbit_key,action,avg_action,mor,nul,mas,basic_period"
    assert len(lines) == 3
    assert svg.exists()


def test_plot_from_file(tmp_path):
    table = tmp_path / "t.json"
    assert run_cli("spectrum", "--system", "sys_c", "--periods", "1", "--output", table) == 0
    svg = tmp_path / "p.svg"
    assert run_cli("plot", "--input", table, "--reference", "0", "--output", svg) == 0
    assert svg.read_text().count("<svg") == 1
    empty = tmp_path / "e.svg"
    assert run_cli("plot", "--input", table, "--window", "5,0.1", "--output", empty) == 0
    assert not empty.exists()


def test_conley_modes(tmp_path):
    assert run_cli("conley", "--system", "sys_b", "--primes", "2,3", "--mode", "single-gf",
                   "--output", tmp_path / "a.json") == 0
    assert run_cli("conley", "--system", "sys_b", "--primes", "2", "--mode", "nondegenerate") == 1
    out = tmp_path / "c.json"
    assert run_cli("conley", "--system", "sys_c", "--primes", "2,3", "--output", out) == 0
    assert json.loads(out.read_text())["experiment"] == "pair"


def test_numerical_failure_exit_3(monkeypatch):
    def boom(cfg):
        raise SolveFailure("no convergence", 1.0)

    monkeypatch.setitem(cli.HANDLERS, "map", boom)
    assert run_cli("map", "--system", "sys_c") == 3


def test_csv_only_for_spectrum():
    assert run_cli("map", "--system", "sys_c", "--format", "csv") == 2


def test_bad_subcommand():
    assert run_cli("frobnicate") == 2


def _verify_bytes(tmp_path, name, env_threads, monkeypatch):
    monkeypatch.setenv("SYMPAL_THREADS", env_threads)
    cfg = write_json(tmp_path / "v.json", {"system": "sys_c", "seed": 5, "verify": {"periods": [1, 2], "n_max": 4, "samples": 200}})
    out = tmp_path / name
    assert run_cli("verify", "--config", cfg, "--output", out) == 0
    return out.read_bytes()


def test_verify_deterministic_across_threads(tmp_path, monkeypatch):
    one = _verify_bytes(tmp_path, "a.json", "1", monkeypatch)
    many = _verify_bytes(tmp_path, "b.json", "4", monkeypatch)
    assert one == many
    assert json.loads(one)["ok"]


def test_thread_count(monkeypatch):
    monkeypatch.setenv("SYMPAL_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("SYMPAL_THREADS", "0")
    assert thread_count() == (os.cpu_count() or 1)
    monkeypatch.setenv("SYMPAL_THREADS", "many")
    assert thread_count() >= 1
    assert ordered_map(lambda v: v * v, range(10), workers=4) == [v * v for v in range(10)]
