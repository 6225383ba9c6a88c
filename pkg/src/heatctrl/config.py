"""YAML experiment configuration: strict schema, line-level diagnostics.

A configuration file fully determines a run: grid, control region,
potential, initial state, horizon, exponent, solver knobs, and the
per-command sections.  Unknown keys anywhere are rejected with the line
they appear on, and every artifact a run writes carries the hash of the
parsed configuration so results can be traced back to their inputs.

Potential and state entries accept either numbers, arrays, or expression
strings in a deliberately tiny language: the names sin, cos, exp, tanh,
sqrt, abs, pi and the free variable (x for space, t for time).  Anything
else, including attribute access and double-underscore names, is rejected
at load time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dual import SolverConfig
from .pde import ControlRegion, Potential, SpatialGrid, TimeMesh

__all__ = [
    "ConfigFileError",
    "ExperimentConfig",
    "load_config",
    "config_hash",
    "space_function",
    "time_function",
    "space_time_function",
]


class ConfigFileError(ValueError):
    """Configuration rejected; each message carries a line number when known."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_CONSTANTS = {"pi": math.pi}


def _compile_expression(expr, variable):
    """Compile a whitelisted expression of one variable; reject everything else."""
    if not isinstance(expr, str) or not expr.strip():
        raise ValueError(f"expression must be a nonempty string, got {expr!r}")
    try:
        code = compile(expr, "<config expression>", "eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc.msg}") from exc
    allowed = set(_FUNCS) | set(_CONSTANTS) | set(variable)
    bad = sorted(set(code.co_names) - allowed)
    if bad:
        raise ValueError(
            f"expression {expr!r} uses names outside the allowed set "
            f"{sorted(allowed)}: {bad}"
        )
    return code


def space_function(expr):
    """Callable of the node array x from a whitelisted expression string."""
    code = _compile_expression(expr, ("x",))

    def f(x):
        env = dict(_FUNCS, **_CONSTANTS, x=x)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float) * np.ones_like(x)

    return f


def time_function(expr):
    """Callable of time t from a whitelisted expression string."""
    code = _compile_expression(expr, ("t",))

    def f(t):
        env = dict(_FUNCS, **_CONSTANTS, t=t)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float) * np.ones_like(np.asarray(t, dtype=float))

    return f


def space_time_function(expr):
    """Callable of (x, t) from a whitelisted expression string."""
    code = _compile_expression(expr, ("x", "t"))

    def f(x, t):
        env = dict(_FUNCS, **_CONSTANTS, x=x, t=t)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float) * np.ones_like(x)

    return f


def config_hash(raw: dict) -> str:
    """Stable short hash of the parsed configuration mapping."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# allowed keys per section; values are the full nested schema
_SCHEMA = {
    "grid": {"L", "n"},
    "region": {"alpha", "beta"},
    "potential": {"a1", "a2", "a", "table"},
    "initial": {"y0", "normalize"},
    "horizon": {"T", "m"},
    "exponent": {"p"},
    "solver": {"delta", "epsilon", "tol", "max_iter", "starts", "seed",
               "continuation_decades"},
    "norm_curve": {"horizons"},
    "time_optimal": {"M", "bracket", "tol"},
    "attainable": {"q_list", "trials", "tol"},
    "shift_density": {"fractions"},
    "observability": {"t", "horizons", "dt", "trials", "max_iter", "tol"},
    "seed": None,
}


def _key_lines(path):
    """Map 'section' and 'section.key' to 1-based line numbers via yaml marks."""
    lines = {}
    try:
        with open(path) as fh:
            root = yaml.compose(fh)
    except (OSError, yaml.YAMLError):
        return lines
    if root is None or not hasattr(root, "value"):
        return lines
    try:
        for knode, vnode in root.value:
            lines[knode.value] = knode.start_mark.line + 1
            if hasattr(vnode, "value") and isinstance(vnode.value, list):
                for sub in vnode.value:
                    if isinstance(sub, tuple) and len(sub) == 2:
                        sk, _ = sub
                        if hasattr(sk, "value") and isinstance(sk.value, str):
                            lines[f"{knode.value}.{sk.value}"] = sk.start_mark.line + 1
    except (TypeError, AttributeError):
        pass
    return lines


@dataclass
class ExperimentConfig:
    """Everything a command needs, parsed and validated."""

    grid: SpatialGrid
    region: ControlRegion
    potential: Potential
    y0: np.ndarray
    T: float
    m: int
    p: float
    solver: SolverConfig
    raw: dict = field(repr=False)
    hash: str = ""
    norm_curve_horizons: list | None = None
    time_optimal: dict | None = None
    attainable: dict | None = None
    shift_fractions: list | None = None
    observability: dict | None = None

    def mesh(self) -> TimeMesh:
        return TimeMesh(self.T, self.m)


def _as_float(val, name, errors, line=None, positive=False):
    loc = f"line {line}: " if line else ""
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{loc}{name} must be a number, got {val!r}")
        return None
    v = float(val)
    if positive and not v > 0.0:
        errors.append(f"{loc}{name} must be positive, got {v}")
        return None
    return v


def _parse_potential(section, errors, lines):
    if section is None:
        return Potential.zero()
    a_expr = section.get("a")
    table = section.get("table")
    if a_expr is not None or table is not None:
        if section.get("a1") is not None or section.get("a2") is not None:
            errors.append("potential: give either a1/a2 or a general a/table, not both")
            return None
        if a_expr is not None:
            try:
                return Potential.general(space_time_function(a_expr))
            except ValueError as exc:
                errors.append(f"line {lines.get('potential.a', '?')}: {exc}")
                return None
        try:
            arr = np.loadtxt(table, delimiter=",", ndmin=2)
        except OSError as exc:
            errors.append(f"potential.table: cannot read {table!r}: {exc}")
            return None
        return ("table", arr)
    a1 = section.get("a1", 0.0)
    a2 = section.get("a2")
    try:
        if isinstance(a1, str):
            a1 = space_function(a1)
        elif isinstance(a1, list):
            a1 = np.asarray(a1, dtype=float)
        if isinstance(a2, str):
            a2 = time_function(a2)
        elif isinstance(a2, list):
            a2 = np.asarray(a2, dtype=float)
    except ValueError as exc:
        errors.append(f"potential: {exc}")
        return None
    return Potential.separable(a1=a1, a2=a2)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML configuration file.

    Raises ConfigFileError carrying one message per problem, each with the
    offending line when the parser can point at one; nothing numeric runs
    until the whole file is clean.
    """
    lines = _key_lines(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigFileError([f"cannot read {path!r}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigFileError([f"{where}invalid YAML: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigFileError(["configuration root must be a mapping"])

    errors = []
    for key, val in raw.items():
        if key not in _SCHEMA:
            errors.append(
                f"line {lines.get(key, '?')}: unknown section {key!r}; "
                f"allowed: {sorted(k for k in _SCHEMA)}"
            )
            continue
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(val, dict):
            errors.append(f"line {lines.get(key, '?')}: section {key!r} must be a mapping")
            continue
        for sub in val:
            if sub not in allowed:
                errors.append(
                    f"line {lines.get(f'{key}.{sub}', '?')}: unknown key "
                    f"{key}.{sub}; allowed: {sorted(allowed)}"
                )
    if errors:
        raise ConfigFileError(errors)

    gsec = raw.get("grid") or {}
    L = _as_float(gsec.get("L", 1.0), "grid.L", errors, lines.get("grid.L"), positive=True)
    n = gsec.get("n", 50)
    if not isinstance(n, int) or n < 3:
        errors.append(f"line {lines.get('grid.n', '?')}: grid.n must be an integer >= 3")
        n = 50

    rsec = raw.get("region") or {}
    alpha = _as_float(rsec.get("alpha", 0.3), "region.alpha", errors, lines.get("region.alpha"))
    beta = _as_float(rsec.get("beta", 0.7), "region.beta", errors, lines.get("region.beta"))

    hsec = raw.get("horizon") or {}
    T = _as_float(hsec.get("T", 0.2), "horizon.T", errors, lines.get("horizon.T"), positive=True)
    m = hsec.get("m", 100)
    if not isinstance(m, int) or m < 2:
        errors.append(f"line {lines.get('horizon.m', '?')}: horizon.m must be an integer >= 2")
        m = 100

    esec = raw.get("exponent") or {}
    p_raw = esec.get("p", 2)
    if isinstance(p_raw, str):
        if p_raw.lower() in ("inf", "infinity"):
            p = math.inf
        else:
            errors.append(f"line {lines.get('exponent.p', '?')}: exponent.p must be a "
                          f"number > 1 or 'inf', got {p_raw!r}")
            p = 2.0
    else:
        p = _as_float(p_raw, "exponent.p", errors, lines.get("exponent.p"))
        if p is not None and p <= 1.0:
            errors.append(f"line {lines.get('exponent.p', '?')}: exponent.p must exceed 1")

    ssec = raw.get("solver") or {}
    solver_kwargs = {}
    for k in ("delta", "epsilon", "tol", "max_iter", "starts", "seed",
              "continuation_decades"):
        if k in ssec:
            solver_kwargs[k] = ssec[k]
    if "seed" in raw and "seed" not in solver_kwargs:
        solver_kwargs["seed"] = raw["seed"]
    try:
        solver = SolverConfig(**solver_kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"solver: {exc}")
        solver = SolverConfig()

    pot = _parse_potential(raw.get("potential"), errors, lines)
    if isinstance(pot, tuple) and pot[0] == "table":
        table = pot[1]
        if table.shape != (m, n):
            errors.append(
                f"potential.table has shape {table.shape}, expected (m, n) = {(m, n)}"
            )
            pot = Potential.zero()
        else:
            dt = T / m

            def _lookup(x, t, _table=table, _dt=dt):
                row = min(max(int(round(t / _dt - 0.5)), 0), _table.shape[0] - 1)
                return _table[row]

            pot = Potential.general(_lookup)

    isec = raw.get("initial") or {}
    y0_spec = isec.get("y0", "sin(pi*x)")
    normalize = bool(isec.get("normalize", True))

    region = None
    grid = None
    if not errors:
        try:
            grid = SpatialGrid(L, n)
            region = ControlRegion(alpha, beta)
            region.mask(grid)
        except ValueError as exc:
            errors.append(str(exc))
    y0 = None
    if grid is not None:
        try:
            if isinstance(y0_spec, str):
                y0 = space_function(y0_spec)(grid.nodes)
            else:
                y0 = np.asarray(y0_spec, dtype=float)
                if y0.shape != (grid.n,):
                    raise ValueError(
                        f"initial.y0 has {y0.size} entries, grid has {grid.n} nodes"
                    )
            if normalize:
                nrm = grid.norm(y0)
                if nrm > 0.0:
                    y0 = y0 / nrm
        except ValueError as exc:
            errors.append(f"line {lines.get('initial.y0', '?')}: {exc}")

    ncsec = raw.get("norm_curve")
    horizons = None
    if ncsec is not None:
        horizons = ncsec.get("horizons")
        if (not isinstance(horizons, list) or len(horizons) < 2
                or any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in horizons)
                or any(v <= 0 for v in horizons if isinstance(v, (int, float)))
                or any(b <= a for a, b in zip(horizons, horizons[1:]))):
            errors.append(
                f"line {lines.get('norm_curve.horizons', '?')}: norm_curve.horizons "
                "must be a strictly increasing list of positive numbers"
            )
            horizons = None
        else:
            horizons = [float(v) for v in horizons]

    tosec = raw.get("time_optimal")
    if tosec is not None:
        if "M" not in tosec:
            errors.append(f"line {lines.get('time_optimal', '?')}: time_optimal needs M")
            tosec = None

    obsec = raw.get("observability")
    if obsec is not None:
        missing = [k for k in ("t", "horizons", "dt") if k not in obsec]
        if missing:
            errors.append(
                f"line {lines.get('observability', '?')}: observability needs {missing}"
            )
            obsec = None

    if errors:
        raise ConfigFileError(errors)

    return ExperimentConfig(
        grid=grid,
        region=region,
        potential=pot,
        y0=y0,
        T=T,
        m=m,
        p=p,
        solver=solver,
        raw=raw,
        hash=config_hash(raw),
        norm_curve_horizons=horizons,
        time_optimal=tosec,
        attainable=raw.get("attainable"),
        shift_fractions=(raw.get("shift_density") or {}).get("fractions"),
        observability=obsec,
    )
