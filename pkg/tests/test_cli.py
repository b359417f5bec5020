import json
import subprocess
import sys

import pytest

from tatdyn import cli
from tatdyn.config import ConfigError, parse_config
from tatdyn.presets import get_preset, presets

TINY_DTWA = """\
engine = dtwa
dimension = 2
alpha = 3
sizes = 4
fields = 0.2
t_max = 0.5
n_times = 11
n_traj = 300
block_size = 64
seed = 5
correlation_times = 0.5
label = tiny
"""


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _bodies(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.suffix in (".csv", ".json")
            and p.name != "manifest.json"}


def test_validate_accepts_good_config(tmp_path, capsys):
    assert cli.main(["validate", str(_write(tmp_path, TINY_DTWA))]) == 0
    assert "ok" in capsys.readouterr().out


def test_empty_field_grid_is_rejected_with_line(tmp_path, capsys):
    text = TINY_DTWA.replace("fields = 0.2", "fields =")
    assert cli.main(["validate", str(_write(tmp_path, text))]) == 2
    err = capsys.readouterr().err
    assert "exp.cfg:5:" in err and "field grid is empty" in err


@pytest.mark.parametrize("bad, line", [("colour = red", 13), ("sizes = 4, x", 13), ("engine = qmc", 13),
                                       ("alpha = 1", 13)])
def test_line_precise_diagnostics(bad, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(TINY_DTWA + bad + "\n", "exp.cfg")
    assert exc.value.line == line


def test_lattice_size_cap_and_large_override(tmp_path):
    text = TINY_DTWA.replace("sizes = 4", "sizes = 40")
    path = _write(tmp_path, text)
    assert cli.main(["validate", str(path)]) == 2
    assert cli.main(["validate", str(path), "--large"]) == 0
    with pytest.raises(ConfigError):
        parse_config(text.replace("sizes = 40", "sizes = 100"), large=True)


def test_unknown_preset_lists_available(capsys):
    assert cli.main(["preset", "fig99", "--out", "unused"]) == 2
    err = capsys.readouterr().err
    assert "fig3a" in err and "fig7" in err


def test_presets_cover_every_panel(capsys):
    names = [p.name for p in presets()]
    expected = ["fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c",
                "fig4a", "fig4b", "fig4c", "fig5a", "fig6", "fig7", "fig8"]
    assert names == expected
    assert all(p.runtime for p in presets())
    assert cli.main(["list-presets"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == len(expected)
    f3 = get_preset("fig3a").config
    assert (f3.engine, f3.alpha, f3.dimension, min(f3.sizes), max(f3.sizes)) == ("stability", 3.0, 2, 8, 128)
    assert min(f3.fields) == pytest.approx(0.05) and max(f3.fields) == pytest.approx(1.0)
    assert get_preset("fig7").config.fields == (0.1, 0.3, 0.5, 0.7, 0.9)


def test_preset_configs_validate():
    for p in presets():
        parse_config(p.config.to_text(), p.name, large=False)


def test_stability_preset_writes_map_and_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["preset", "fig3a", "--out", str(a)]) == 0
    assert cli.main(["preset", "fig3a", "--out", str(b)]) == 0
    lines = (a / "fig3a.csv").read_text().splitlines()
    assert lines[0] == "omega,L,lambda_max,omega_c"
    assert len(lines) == 1 + 31 * 96
    assert not any(line.startswith("#") for line in lines)
    fits = json.loads((a / "fig3a_fits.json").read_text())
    assert fits["power_law"]["exponent"] == pytest.approx(-1.0, abs=0.1)
    assert _bodies(a) == _bodies(b)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config"]["engine"] == "stability"
    assert {"version", "build_id", "started", "finished", "runtime_s", "outputs", "warnings"} <= set(manifest)


def test_collective_preset_writes_nu_fits(tmp_path):
    out = tmp_path / "fig1b"
    assert cli.main(["preset", "fig1b", "--out", str(out)]) == 0
    fits = json.loads((out / "fig1b_fits.json").read_text())
    cfg = get_preset("fig1b").config
    assert len(fits) == len(cfg.fields)
    for entry in fits.values():
        assert entry["squeezing"]["model"] == "power_law"
        assert entry["nu"] == -entry["squeezing"]["exponent"]
    assert (out / "fig1b_optimal.csv").read_text().startswith("size,N,omega,t_opt,xi2_opt")


def test_dtwa_run_is_byte_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, TINY_DTWA)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert _bodies(a) == _bodies(b)
    assert (a / "tiny_L4_omega0.2_correlations.csv").read_text().startswith("t,d,mean,stderr")
    meta = json.loads((a / "tiny_L4_omega0.2_meta.json").read_text())
    assert meta["seed"] == 5 and meta["n_traj"] == 300
    c = tmp_path / "c"
    assert cli.main(["run", str(cfg), "--out", str(c), "--seed", "6"]) == 0
    assert _bodies(a) != _bodies(c)


def test_engine_error_sets_status(tmp_path, monkeypatch):
    from tatdyn import runner

    def boom(cfg, ctx):
        raise RuntimeError("engine exploded")

    monkeypatch.setitem(runner.ENGINE_RUNNERS, "stability", boom)
    out = tmp_path / "x"
    assert cli.main(["preset", "fig3b", "--out", str(out)]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "error" and "engine exploded" in manifest["error"]


def test_rsw_breakdown_reaches_manifest(tmp_path):
    text = "engine = rsw\ndimension = 2\nalpha = 3\nsizes = 8\nfields = 4.0\nt_max = 5\nn_times = 51\nlabel = r\n"
    out = tmp_path / "r"
    assert cli.main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert any("breakdown" in w for w in manifest["warnings"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tatdyn", "list-presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "fig1a" in res.stdout
