"""Configuration loading: defaults, expressions, rejection, hashing."""

import math

import numpy as np
import pytest

from heatctrl import (
    ConfigFileError,
    config_hash,
    load_config,
    space_function,
    space_time_function,
    time_function,
)


def _write(tmp_path, text, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_empty_file_gives_documented_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, ""))
    assert cfg.grid.L == 1.0 and cfg.grid.n == 50
    assert cfg.region.alpha == 0.3 and cfg.region.beta == 0.7
    assert cfg.T == 0.2 and cfg.m == 100
    assert cfg.p == 2.0
    assert cfg.potential.is_separable
    assert abs(cfg.grid.norm(cfg.y0) - 1.0) <= 1e-12
    assert len(cfg.hash) == 12


def test_expressions_and_inf_exponent(tmp_path):
    cfg = load_config(_write(tmp_path, """
grid: {L: 1.0, n: 40}
potential:
  a1: 2*sin(2*pi*x)
  a2: cos(t)
initial: {y0: sin(pi*x) + 0.4*sin(2*pi*x)}
exponent: {p: inf}
horizon: {T: 0.3, m: 60}
"""))
    assert cfg.p == math.inf
    x = cfg.grid.nodes
    assert np.allclose(cfg.potential.a1_values(cfg.grid), 2 * np.sin(2 * math.pi * x))


def test_unknown_keys_rejected_with_lines(tmp_path):
    path = _write(tmp_path, """grid:
  n: 30
regino:
  alpha: 0.2
horizon:
  T: 0.2
  mm: 50
""")
    with pytest.raises(ConfigFileError) as exc:
        load_config(path)
    messages = exc.value.messages
    assert any("line 3" in m and "regino" in m for m in messages)
    assert any("line 7" in m and "horizon.mm" in m for m in messages)


def test_value_errors_accumulate(tmp_path):
    path = _write(tmp_path, """
grid: {L: -1, n: 2}
exponent: {p: 0.5}
horizon: {T: 0.2, m: 100}
""")
    with pytest.raises(ConfigFileError) as exc:
        load_config(path)
    messages = "\n".join(exc.value.messages)
    assert "grid.L must be positive" in messages
    assert "grid.n must be an integer" in messages
    assert "exponent.p must exceed 1" in messages


def test_expression_whitelist_blocks_escape(tmp_path):
    path = _write(tmp_path, """
potential:
  a1: "sin(x) + __import__('os').system('true')"
""")
    with pytest.raises(ConfigFileError) as exc:
        load_config(path)
    assert any("__import__" in m for m in exc.value.messages)
    with pytest.raises(ValueError):
        space_function("x.__class__")
    with pytest.raises(ValueError):
        time_function("open('/etc/passwd')")
    with pytest.raises(ValueError):
        space_time_function("")


def test_expression_functions_evaluate():
    f = space_function("sin(pi*x)")
    x = np.linspace(0.1, 0.9, 5)
    assert np.allclose(f(x), np.sin(math.pi * x))
    g = time_function("exp(-t)")
    assert abs(g(0.5) - math.exp(-0.5)) <= 1e-15
    h = space_time_function("sin(pi*x)*(1+t)")
    assert np.allclose(h(x, 0.5), np.sin(math.pi * x) * 1.5)
    # constants broadcast over the node array
    c = space_function("2")
    assert np.allclose(c(x), 2.0)


def test_table_potential_shape_check(tmp_path):
    table = tmp_path / "a.csv"
    np.savetxt(table, np.full((30, 20), 1.5), delimiter=",")
    good = _write(tmp_path, f"""
grid: {{L: 1.0, n: 20}}
horizon: {{T: 0.3, m: 30}}
potential: {{table: {table}}}
""", name="good.yaml")
    cfg = load_config(good)
    assert not cfg.potential.is_separable

    bad = _write(tmp_path, f"""
grid: {{L: 1.0, n: 25}}
horizon: {{T: 0.3, m: 30}}
potential: {{table: {table}}}
""", name="bad.yaml")
    with pytest.raises(ConfigFileError) as exc:
        load_config(bad)
    assert any("shape" in m for m in exc.value.messages)


def test_norm_curve_horizons_validated(tmp_path):
    path = _write(tmp_path, """
norm_curve: {horizons: [0.2, 0.1]}
""")
    with pytest.raises(ConfigFileError) as exc:
        load_config(path)
    assert any("strictly increasing" in m for m in exc.value.messages)


def test_required_section_keys(tmp_path):
    with pytest.raises(ConfigFileError):
        load_config(_write(tmp_path, "time_optimal: {tol: 1e-4}\n"))
    with pytest.raises(ConfigFileError):
        load_config(_write(tmp_path, "observability: {t: 0.05}\n"))


def test_yaml_syntax_error_reports_line(tmp_path):
    path = _write(tmp_path, "grid: {L: 1.0\n  n: 30\n")
    with pytest.raises(ConfigFileError) as exc:
        load_config(path)
    assert any("invalid YAML" in m for m in exc.value.messages)
    with pytest.raises(ConfigFileError):
        load_config(str(tmp_path / "missing.yaml"))


def test_config_hash_stability():
    a = {"grid": {"n": 30, "L": 1.0}, "seed": 3}
    b = {"seed": 3, "grid": {"L": 1.0, "n": 30}}
    assert config_hash(a) == config_hash(b)
    c = {"grid": {"n": 31, "L": 1.0}, "seed": 3}
    assert config_hash(a) != config_hash(c)


def test_top_level_seed_feeds_solver(tmp_path):
    cfg = load_config(_write(tmp_path, "seed: 11\n"))
    assert cfg.solver.seed == 11
    cfg2 = load_config(_write(tmp_path, "seed: 11\nsolver: {seed: 4}\n", name="b.yaml"))
    assert cfg2.solver.seed == 4
