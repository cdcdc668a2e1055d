import csv
import json

import pytest

from gwspeed import engine as E

SMALL = """
pmf = [[1, 0.5], [2, 0.5]]
conductance_atoms = [[1.0, 1.0]]
alpha = 0.2
epsilon_grid = [0.2, 0.1, 0.05, 0.02, 0.01]
replicas = 4
steps = 2000
master_seed = 7
"""


def _cfg(text=SMALL, **kw):
    cfg = E.ExperimentConfig.from_toml(text)
    return cfg.with_overrides(**kw) if kw else cfg


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ---------------------------------------------------------------------
def test_round_trip_lossless():
    cfg = _cfg(SMALL + 'out = "x"\nworkers = 3\ndelta = 0.5\n')
    back = E.ExperimentConfig.from_toml(cfg.to_toml())
    assert back == cfg


def test_fingerprint_ignores_order_format_and_runtime_fields():
    a = _cfg()
    lines = [line for line in SMALL.strip().splitlines()]
    shuffled = "\n".join(reversed(lines)).replace(" = ", "=") + "\n\n# comment\n"
    b = _cfg(shuffled)
    assert a.fingerprint == b.fingerprint
    assert _cfg(SMALL + "workers = 8\nout = 'elsewhere'\n").fingerprint == a.fingerprint
    assert _cfg(SMALL.replace("replicas = 4", "replicas = 5")).fingerprint != a.fingerprint
    assert len(a.fingerprint) == 64


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(E.SEED_ENV, raising=False)
    assert _cfg().with_overrides().master_seed == 7
    monkeypatch.setenv(E.SEED_ENV, "123")
    assert _cfg().with_overrides().master_seed == 123
    assert _cfg().with_overrides(seed=5).master_seed == 5


def test_parse_error_names_line_and_field():
    bad = SMALL + "replicas_typo = 3\n"
    with pytest.raises(E.ConfigError, match=r"line 9: unknown field 'replicas_typo'"):
        _cfg(bad)
    with pytest.raises(E.ConfigError, match=r"line 6: field 'replicas'"):
        _cfg(SMALL.replace("replicas = 4", "replicas = 'many'"))
    with pytest.raises(E.ConfigError, match="parse error"):
        _cfg("pmf = [[1, 0.5\n")


def test_invalid_laws_rejected():
    with pytest.raises(E.ConfigError):
        _cfg(SMALL.replace("[[1, 0.5], [2, 0.5]]", "[[1, 0.5], [2, 0.4]]"))
    with pytest.raises(E.ConfigError):
        _cfg(SMALL + "sampler = 'magic'\n")
    with pytest.raises(E.ConfigError):
        _cfg(SMALL.replace("master_seed = 7", "master_seed = -1"))


# -- records and persistence -----------------------------------------------------------------
def test_limit_check_outputs(tmp_path):
    cfg = _cfg(out=str(tmp_path))
    rec = E.run("limit-check", cfg)
    assert rec.fingerprint == cfg.fingerprint
    data = json.loads((tmp_path / "limit-check.json").read_text())
    assert data["fingerprint"] == cfg.fingerprint and data["master_seed"] == 7
    assert "wall_clock" not in data
    assert "wall_clock_seconds" in json.loads((tmp_path / "timing.json").read_text())
    grid = _read_csv(tmp_path / "limit-check.csv")
    assert grid[0] == list(E.GRID_COLUMNS)
    assert len(grid) == 1 + 5 + 1 and grid[-1][0] == "0"
    plot = _read_csv(tmp_path / "limit-check_plot.csv")
    assert plot[0] == list(E.PLOT_COLUMNS)
    assert len(plot) == 1 + 5 + 1
    assert all(len(r) == len(E.PLOT_COLUMNS) for r in plot)
    # 17 significant digits, dot decimal separator
    assert float(plot[1][1]) == rec.grid_rows[0][1]


def test_plot_data_empty_grid_and_wrong_kind(tmp_path):
    rec = E.run("limit-check", _cfg(SMALL.replace("[0.2, 0.1, 0.05, 0.02, 0.01]", "[]"),
                                    out=str(tmp_path)), persist=False)
    E.emit_plot_data(rec, tmp_path / "p.csv")
    assert _read_csv(tmp_path / "p.csv") == [list(E.PLOT_COLUMNS)]
    bounds = E.RunRecord("bounds", "", 0, {}, {}, True)
    with pytest.raises(TypeError):
        E.emit_plot_data(bounds, tmp_path / "q.csv")


def test_sweep_rows_and_plot(tmp_path):
    rec = E.run("sweep-epsilon", _cfg(out=str(tmp_path)))
    assert [r[0] for r in rec.grid_rows] == [0.2, 0.1, 0.05, 0.02, 0.01]
    plot = _read_csv(tmp_path / "sweep-epsilon_plot.csv")
    assert len(plot) == 6 and plot[1][4] == ""


def test_rerun_is_bit_identical(tmp_path):
    a = E.run("sweep-epsilon", _cfg(out=str(tmp_path / "a")))
    b = E.run("sweep-epsilon", _cfg(out=str(tmp_path / "b")))
    assert a.to_json() == b.to_json()
    for name in ("sweep-epsilon.json", "sweep-epsilon.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_independence(tmp_path):
    text = SMALL.replace("[0.2, 0.1, 0.05, 0.02, 0.01]", "[0.1, 0.05]")
    outs = []
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}"
        E.run("limit-check", _cfg(text, workers=workers, out=str(out)))
        outs.append((out / "limit-check.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_speed_record_blocks():
    text = SMALL + "formula_replicas = 30\nM = 32\nepsilon = 0.1\n"
    rec = E.run("speed", _cfg(text), persist=False)
    for name in ("lln", "conductance_formula", "invariant_formula"):
        assert rec.result[name]["fingerprint"] == rec.fingerprint
        assert {"value", "stderr", "ci_low", "ci_high", "replicas"} <= set(rec.result[name])
    assert len(rec.result["agreement"]) == 3


def test_speed_record_skips_formulas_at_zero_epsilon():
    rec = E.run("speed", _cfg(SMALL + "formula_replicas = 5\n"), persist=False)
    assert "skipped" in rec.result["conductance_formula"]
    assert rec.result["agreement"] == {}


def test_continuity_needs_sequence():
    with pytest.raises(E.ConfigError):
        E.run("continuity", _cfg(), persist=False)


def test_unknown_kind():
    with pytest.raises(ValueError):
        E.run("nope", _cfg(), persist=False)
