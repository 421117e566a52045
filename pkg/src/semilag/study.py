"""Convergence studies: one run per mesh size, errors, observed rates and timings.

Configuration files hold one ``key = value`` per line; ``#`` starts a comment.
Keys:

========== ==============================================================
test        benchmark id, 1 to 5 (required)
scheme      LINEAR, LEGEND N, TCHEB N, BERN N, CUBIC, SPLINE or MPCSL (required)
meshes      cells per dimension, comma or space separated
steps       number of time steps
controls    number of sampled controls
bound       control bound
k_tilde     truncation relaxation
workers     number of blocks of the domain decomposition
error_box   ``lo:hi`` per dimension, comma separated
out         CSV output path
========== ==============================================================

Missing keys take the benchmark's defaults.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .approx import ApproximatorKind, TruncationPolicy
from .grid import DomainBox
from .models import make_test_case
from .scheme import TimeGrid, run

__all__ = [
    "ConfigError",
    "StudyConfig",
    "ConvergenceReport",
    "convergence_rate",
    "parse_config",
    "parse_config_text",
    "apply_overrides",
    "run_study",
    "read_csv",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("NbM", "Err", "Rate", "Time")


class ConfigError(ValueError):
    """Malformed study configuration."""


@dataclass(frozen=True)
class StudyConfig:
    test: int
    scheme: ApproximatorKind
    meshes: tuple[int, ...]
    steps: int
    controls: int | None = None
    bound: float | None = None
    k_tilde: float = 0.0
    workers: int = 1
    error_box: DomainBox | None = None
    out: Path | None = None

    def __post_init__(self):
        if not self.meshes:
            raise ConfigError("meshes needs at least one entry")
        if any(m < 1 for m in self.meshes):
            raise ConfigError("meshes must be positive")
        if self.steps < 1:
            raise ConfigError("steps must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if self.k_tilde < 0.0:
            raise ConfigError("k_tilde must be nonnegative")


@dataclass
class ConvergenceReport:
    label: str
    test: int
    rows: list = field(default_factory=list)  # (NbM, Err, Rate or None, Time)

    @property
    def errors(self) -> list[float]:
        return [r[1] for r in self.rows]

    def summary(self) -> str:
        errs = ", ".join(f"{r[1]:.3g}" for r in self.rows)
        return f"{self.label} on test case {self.test}: Err = [{errs}]"

    def to_csv(self) -> str:
        buf = io.StringIO()
        _write_rows(buf, self.rows)
        return buf.getvalue()


def convergence_rate(err_n: float, err_2n: float, err_4n: float) -> float | None:
    """``log2((e_n - e_2n) / (e_2n - e_4n))``; ``None`` when the differences do not allow it."""
    num = err_n - err_2n
    den = err_2n - err_4n
    if den == 0.0 or num / den <= 0.0 or not math.isfinite(num / den):
        return None
    return math.log(num / den) / math.log(2.0)


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if not isinstance(x, int) else str(x)


def _write_rows(stream, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def read_csv(path) -> list[tuple]:
    """Rows of a report CSV as ``(NbM, Err, Rate or None, Time)``."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [
            (int(a), float(b), float(c) if c else None, float(d)) for a, b, c, d in r
        ]


# ------------------------------------------------------------------ parsing
_KEYS = ("test", "scheme", "meshes", "steps", "controls", "bound", "k_tilde", "workers", "error_box", "out")


def _ints(text: str) -> tuple[int, ...]:
    parts = text.replace(",", " ").split()
    return tuple(int(p) for p in parts)


def _box(text: str) -> DomainBox:
    lo, hi = [], []
    for part in text.split(","):
        a, b = part.split(":")
        lo.append(float(a))
        hi.append(float(b))
    return DomainBox(tuple(lo), tuple(hi))


def _raw_pairs(text: str, source: str = "<config>"):
    pairs = {}
    for num, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{num}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{num}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{num}: empty value for {key!r}")
        pairs[key] = (value, num)
    return pairs


def _build(pairs: dict, source: str) -> StudyConfig:
    def where(key):
        num = pairs[key][1]
        return f"{source}:{num}" if num else f"override {key}"

    vals = {}
    for key, (value, _) in pairs.items():
        try:
            if key in ("test", "steps", "controls", "workers"):
                vals[key] = int(value)
            elif key in ("bound", "k_tilde"):
                vals[key] = float(value)
            elif key == "scheme":
                vals[key] = ApproximatorKind.parse(value)
            elif key == "meshes":
                vals[key] = _ints(value)
            elif key == "error_box":
                vals[key] = _box(value)
            else:
                vals[key] = Path(value)
        except ValueError as exc:
            raise ConfigError(f"{where(key)}: bad value {value!r} for {key}: {exc}") from None
    for key in ("test", "scheme"):
        if key not in vals:
            raise ConfigError(f"{source}: missing required key {key!r}")
    try:
        case = make_test_case(vals["test"])
    except ValueError as exc:
        raise ConfigError(f"{where('test')}: {exc}") from None
    kind = vals["scheme"]
    if "meshes" not in vals:
        if kind.label not in case.default_meshes:
            raise ConfigError(f"{source}: no default meshes for {kind.label}; set 'meshes'")
        vals["meshes"] = tuple(case.default_meshes[kind.label])
    vals.setdefault("steps", case.steps)
    try:
        return StudyConfig(**vals)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>", overrides=()) -> StudyConfig:
    pairs = _raw_pairs(text, source)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"override: unknown key {key!r}")
        pairs[key] = (value, 0)
    return _build(pairs, source)


def parse_config(path, overrides=()) -> StudyConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path), overrides)


def apply_overrides(config: StudyConfig, **changes) -> StudyConfig:
    return dataclasses.replace(config, **changes)


# ------------------------------------------------------------------ running
def _study_error(case, layout, values, box: DomainBox) -> float:
    pts = np.stack(np.meshgrid(*layout.node_axes, indexing="ij"), axis=-1)
    mask = box.contains(pts)
    exact = case.exact_solution(case.horizon, pts[mask])
    return float(np.max(np.abs(values[mask] - exact)))


def run_study(config: StudyConfig, stream=None) -> ConvergenceReport:
    """Run every mesh size in turn; rows are written to ``config.out`` as they finish."""
    case = make_test_case(config.test, config.controls, config.bound)
    kind = config.scheme
    box = config.error_box or case.error_box
    report = ConvergenceReport(kind.label, config.test)
    fh = None
    if config.out is not None:
        config.out.parent.mkdir(parents=True, exist_ok=True)
        fh = open(config.out, "w", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        if writer:
            writer.writerow(CSV_HEADER)
            fh.flush()
        grid = TimeGrid(case.horizon, config.steps)
        policy = TruncationPolicy(config.k_tilde, grid.h)
        for nbm in config.meshes:
            layout = kind.layout(case.problem.domain, nbm)
            result = run(case.problem, layout, grid, kind, policy, workers=config.workers)
            err = _study_error(case, layout, result.field.values, box)
            errs = report.errors + [err]
            rate = convergence_rate(*errs[-3:]) if len(errs) >= 3 else None
            row = (int(nbm), err, rate, result.elapsed)
            report.rows.append(row)
            log.info("%s NbM=%d Err=%.6g Time=%.2fs", kind.label, nbm, err, result.elapsed)
            if writer:
                writer.writerow([_fmt(v) for v in row])
                fh.flush()
            if stream is not None:
                print(f"{nbm:>6d}  {err:.6g}  {'' if rate is None else f'{rate:.2f}':>6}  "
                      f"{result.elapsed:.2f}s", file=stream, flush=True)
    finally:
        if fh:
            fh.close()
    return report
