"""Run configurations, CSV emission and gnuplot recipes.

A run configuration file holds plain ``key = value`` lines; ``#`` starts a
comment.  Each ``subcommand = <name>`` line opens a new run, so one file can
chain e.g. a quench and the scaling analysis of the same ramp.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConfigError


# ---------------------------------------------------------------- value types

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_render_value(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Param:
    kind: Callable[[str], Any]
    default: Any = None
    required: bool = False
    check: Callable[[Any], bool] | None = None
    requirement: str = ""
    choices: tuple[str, ...] | None = None
    help: str = ""


def _pos(x):
    return x > 0


def _finite(x):
    return math.isfinite(x)


SCHEMAS: dict[str, dict[str, Param]] = {
    "verify-mapping": {
        "lx": Param(int, None, check=lambda v: v >= 2, requirement=">= 2", help="single lattice width"),
        "ly": Param(int, None, check=lambda v: v >= 2, requirement=">= 2", help="single lattice height"),
        "max_size": Param(int, 8, check=lambda v: 2 <= v <= 12, requirement="in [2, 12]",
                          help="sweep every lx, ly in [2, max-size] when no lattice is given"),
        "convention": Param(str, "yxyx", choices=("yxyx", "xyxy")),
        "out": Param(str, None, help="optional CSV summary"),
    },
    "statics": {
        "g": Param(_parse_float_list, required=True, check=lambda v: all(_finite(x) and x > 0 for x in v),
                   requirement="finite and > 0", help="coupling or comma-separated list"),
        "n": Param(int, 64, check=lambda v: 2 <= v <= 512, requirement="in [2, 512]"),
        "nk": Param(int, 1024, check=lambda v: v >= 64 and v % 2 == 0, requirement="even and >= 64"),
        "out": Param(str, "statics.csv"),
        "plot_script": Param(str, None),
    },
    "quench": {
        "tau_q": Param(float, required=True, check=lambda v: _finite(v) and v > 0, requirement="> 0"),
        "g_start": Param(float, 10.0, check=lambda v: _finite(v) and v > 1, requirement="> 1"),
        "nk": Param(int, 1024, check=lambda v: v >= 2 and v % 2 == 0, requirement="even and >= 2"),
        "samples": Param(int, 2000, check=_pos, requirement="> 0"),
        "method": Param(str, "ode", choices=("ode", "lz", "approx")),
        "rel_tol": Param(float, 1e-9, check=lambda v: 0 < v < 1e-3, requirement="in (0, 1e-3)"),
        "abs_tol": Param(float, 1e-12, check=_pos, requirement="> 0"),
        "out": Param(str, "quench.csv"),
        "dump_modes": Param(str, None, help="per-mode CSV (ode method only)"),
        "plot_script": Param(str, None),
    },
    "ed": {
        "model": Param(str, "ising", choices=("ising", "wen")),
        "n": Param(int, None, check=lambda v: 2 <= v <= 14, requirement="in [2, 14]"),
        "lx": Param(int, None, check=lambda v: v >= 2, requirement=">= 2"),
        "ly": Param(int, None, check=lambda v: v >= 2, requirement=">= 2"),
        "g": Param(float, required=True, check=lambda v: _finite(v) and v >= 0, requirement="finite and >= 0"),
        "j": Param(float, 1.0, check=_finite, requirement="finite"),
        "tau_q": Param(float, None, check=_pos, requirement="> 0", help="ramp from g-start down to g = 0"),
        "g_start": Param(float, 10.0, check=lambda v: v > 1, requirement="> 1"),
        "out": Param(str, "ed.csv"),
    },
    "scaling": {
        "tau_q": Param(float, required=True, check=lambda v: _finite(v) and v > 0, requirement="> 0"),
        "window": Param(_parse_float_list, (0.01, 0.2), check=lambda v: len(v) == 2 and 0 < v[0] < v[1] <= 1,
                        requirement="lo,hi with 0 < lo < hi <= 1"),
        "method": Param(str, "approx", choices=("approx", "approx-clamped", "ode")),
        "nk": Param(int, 4096, check=lambda v: v >= 64 and v % 2 == 0, requirement="even and >= 64"),
        "out": Param(str, "scaling.csv"),
        "series_out": Param(str, None, help="CSV of t, <F>, |d<F>/dt|"),
        "plot_script": Param(str, None),
    },
    "fig2": {
        "tau_q_list": Param(_parse_float_list, (10.0, 50.0, 100.0, 500.0),
                            check=lambda v: all(x >= 1 for x in v), requirement="every entry >= 1"),
        "clip_negative": Param(_parse_bool, True),
        "out": Param(str, "fig2.csv"),
        "plot_script": Param(str, None),
    },
}


def flag_name(key: str) -> str:
    return key.replace("_", "-")


@dataclass
class RunConfig:
    subcommand: str
    params: dict[str, Any] = field(default_factory=dict)
    verbosity: int = 0

    @property
    def outputs(self) -> dict[str, str]:
        return {k: v for k, v in self.params.items()
                if v is not None and (k == "out" or k.endswith("_out") or k in ("dump_modes", "plot_script"))}


def validate(subcommand: str, raw: dict[str, Any], verbosity: int = 0) -> RunConfig:
    """Coerce and check raw values against the schema; fill defaults.

    Raw values may be strings (from argv or a file) or already typed.
    """
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{subcommand}: unknown key {flag_name(key)!r}")
    params = {}
    for key, p in schema.items():
        value = raw.get(key)
        if value is None:
            if p.required:
                raise ConfigError(f"{subcommand}: {flag_name(key)} is required")
            params[key] = p.default
            continue
        if isinstance(value, str):
            try:
                value = p.kind(value)
            except ValueError as exc:
                raise ConfigError(f"{subcommand}: {flag_name(key)}: cannot parse {value!r} ({exc})") from None
        if p.choices and value not in p.choices:
            raise ConfigError(f"{subcommand}: {flag_name(key)} must be one of {', '.join(p.choices)}")
        if p.check is not None and not p.check(value):
            raise ConfigError(f"{subcommand}: {flag_name(key)} must be {p.requirement}, got {value!r}")
        params[key] = value
    _cross_checks(subcommand, params)
    return RunConfig(subcommand, params, verbosity)


def _cross_checks(sub: str, p: dict) -> None:
    if sub == "verify-mapping" and (p["lx"] is None) != (p["ly"] is None):
        raise ConfigError("verify-mapping: give both lx and ly, or neither")
    if sub == "ed":
        if p["model"] == "ising":
            if p["n"] is None:
                raise ConfigError("ed: n is required for the ising model")
        else:
            if p["lx"] is None or p["ly"] is None:
                raise ConfigError("ed: lx and ly are required for the wen model")
            if p["lx"] * p["ly"] > 14:
                raise ConfigError("ed: lx*ly must be <= 14")
            if p["tau_q"] is not None:
                raise ConfigError("ed: tau-q ramps are implemented for the ising model only")
    if sub == "quench" and p["dump_modes"] is not None and p["method"] != "ode":
        raise ConfigError("quench: dump-modes needs method = ode")
    if sub == "scaling" and p["plot_script"] is not None and p["series_out"] is None:
        raise ConfigError("scaling: plot-script needs series-out")


def render(config: RunConfig) -> str:
    """Config-file text for one run; ``parse_config_text(render(c)) == [c]``."""
    lines = [f"subcommand = {config.subcommand}"]
    if config.verbosity:
        lines.append(f"verbosity = {config.verbosity}")
    for key, value in config.params.items():
        if value is not None:
            lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> list[RunConfig]:
    runs: list[tuple[str, dict, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.replace("-", "_")
        if key == "subcommand":
            runs.append((value, {}, 0, lineno))
            continue
        if not runs:
            raise ConfigError(f"line {lineno}: {key!r} appears before any 'subcommand ='")
        sub, raw, verb, start = runs[-1]
        if key == "verbosity":
            try:
                runs[-1] = (sub, raw, int(value), start)
            except ValueError:
                raise ConfigError(f"line {lineno}: verbosity must be an integer") from None
            continue
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    if not runs:
        raise ConfigError("configuration contains no 'subcommand =' line")
    return [validate(sub, raw, verb) for sub, raw, verb, _ in runs]


def parse_config_file(path: str) -> list[RunConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 ({exc})") from None
    return parse_config_text(text)


# ---------------------------------------------------------------- output

def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        if hasattr(value, "dtype") and value.dtype.kind in "iu":
            return str(int(value))
        return "%.17g" % float(value)
    return str(value)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(columns, rows, path: str) -> None:
    """Write a CSV with the exact header, ``\\n`` line ends and 17 significant digits.

    ``rows`` holds sequences in column order or mappings keyed by column.
    The file appears atomically: it is written next to ``path`` and renamed.
    """
    columns = list(columns)
    out = [",".join(columns)]
    for row in rows:
        cells = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        if len(cells) != len(columns):
            raise ValueError(f"row has {len(cells)} cells, header has {len(columns)}")
        out.append(",".join(format_cell(c) for c in cells))
    _atomic_write(path, "\n".join(out) + "\n")


@dataclass
class PlotRecipe:
    csv_path: str
    columns: list[str]
    x: str
    ys: list[str]
    xlabel: str
    ylabel: str
    title: str = ""
    logx: bool = False
    style: str = "lines"


def emit_plot_script(recipe: PlotRecipe, path: str) -> None:
    """gnuplot script that plots ``recipe.ys`` against ``recipe.x``.

    The CSV is referenced relative to the script's directory, so the pair
    can be moved together.
    """
    rel = os.path.relpath(os.path.abspath(recipe.csv_path), os.path.dirname(os.path.abspath(path)))
    xi = recipe.columns.index(recipe.x) + 1
    lines = [
        "# gnuplot recipe; run with: gnuplot -p " + os.path.basename(path),
        'set datafile separator ","',
        f'set xlabel "{recipe.xlabel}"',
        f'set ylabel "{recipe.ylabel}"',
    ]
    if recipe.title:
        lines.append(f'set title "{recipe.title}"')
    if recipe.logx:
        lines.append("set logscale x")
    series = []
    for y in recipe.ys:
        yi = recipe.columns.index(y) + 1
        series.append(f'"{rel}" every ::1 using {xi}:{yi} with {recipe.style} title "{y}"')
    lines.append("plot " + ", \\\n     ".join(series))
    _atomic_write(path, "\n".join(lines) + "\n")
