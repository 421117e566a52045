"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are repeated
at the end of the session) or directly as ``python tests/test_acceptance.py``.
Criteria 4 to 7 are desk-scale convergence studies and take minutes.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from semilag.approx import Approximator, ApproximatorKind, Field, TruncationPolicy, tensor_eval
from semilag.boundary import Method, resolve_feet_batch
from semilag.grid import DomainBox
from semilag.models import make_test_case
from semilag.scheme import FixedControls, Problem, TimeGrid, one_step_value, run
from semilag.study import StudyConfig, convergence_rate, run_study

RESULTS: dict[int, str] = {}


def _record(num: int, title: str, ok: bool, detail: str, seconds: float):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {title}: {detail} ({seconds:.1f}s)"
    RESULTS[num] = line
    print(line, flush=True)
    assert ok, line


def _within(err, ref, factor):
    return ref / factor <= err <= ref * factor


def _fmt(values):
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


def _study(test, label, meshes, steps, controls=None, bound=None):
    cfg = StudyConfig(test, ApproximatorKind.parse(label), tuple(meshes), steps, controls, bound)
    return run_study(cfg).errors


SQUARE = DomainBox((0.0, 0.0), (1.0, 1.0))


# ---------------------------------------------------------------- 1
def test_criterion_01_operator_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    pts = rng.random((500, 2))
    worst = {}

    def sample(label, cells, func):
        kind = ApproximatorKind.parse(label)
        lay = kind.layout(SQUARE, cells)
        return Approximator(kind, Field.sample(lay, func))

    for family in ("LINEAR", "TCHEB 2", "LEGEND 2", "TCHEB 3", "LEGEND 3"):
        degree = 1 if family == "LINEAR" else int(family[-1])
        for _ in range(5):
            cx, cy = rng.normal(size=(2, degree + 1))

            def poly(x, cx=cx, cy=cy):
                return np.polyval(cx, x[..., 0]) * np.polyval(cy, x[..., 1])

            a = sample(family, 3, poly)
            err = np.max(np.abs(tensor_eval(a, pts) - poly(pts)))
            worst[family] = max(worst.get(family, 0.0), err)
    ok_lagrange = all(v <= 1e-12 for v in worst.values())

    cx, cy = rng.normal(size=(2, 4))

    def cubic(x):
        return np.polyval(cx, x[..., 0]) * np.polyval(cy, x[..., 1])

    err_spline = np.max(np.abs(sample("SPLINE", 6, cubic).evaluate(pts) - cubic(pts)))

    def affine(x):
        return 0.3 - 1.7 * x[..., 0] + 2.2 * x[..., 1]

    err_bern = max(np.max(np.abs(sample(f"BERN {n}", 4, affine).evaluate(pts) - affine(pts))) for n in (1, 2, 3))
    err_mpcsl = np.max(np.abs(sample("MPCSL", 5, affine).evaluate(pts) - affine(pts)))
    ok = ok_lagrange and err_spline <= 1e-10 and err_bern <= 1e-12 and err_mpcsl <= 1e-14
    detail = (
        f"Lagrange max {max(worst.values()):.1e}, spline {err_spline:.1e}, "
        f"Bernstein {err_bern:.1e}, MPCSL {err_mpcsl:.1e}"
    )
    _record(1, "operator exactness", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 2
RANGE_KINDS = ["LINEAR", "LEGEND 2", "LEGEND 3", "TCHEB 2", "TCHEB 3", "CUBIC", "MPCSL", "BERN 2", "BERN 3"]


def _cell_ranges(values, degree):
    n = degree
    win = np.lib.stride_tricks.sliding_window_view(values, (n + 1, n + 1))[::n, ::n]
    return win.min(axis=(-2, -1)), win.max(axis=(-2, -1))


def test_criterion_02_range_property():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    cells = 4
    h = 0.01
    policies = {"strict": TruncationPolicy(0.0, h), "relaxed": TruncationPolicy(0.1 / h, h)}
    failures = []
    for label in RANGE_KINDS:
        kind = ApproximatorKind.parse(label)
        lay = kind.layout(SQUARE, cells)
        op = None
        pts = rng.random((100, 2))
        cell = np.minimum((pts * cells).astype(int), cells - 1)
        for name, policy in policies.items():
            worst = 0.0
            for _ in range(100):
                vals = rng.normal(size=lay.node_shape) * rng.uniform(0.1, 10)
                a = Approximator(kind, Field(lay, vals), policy, op)
                op = a.operator
                out = a.evaluate(pts)
                lo, hi = _cell_ranges(vals, lay.degree)
                lo, hi = lo[cell[:, 0], cell[:, 1]], hi[cell[:, 0], cell[:, 1]]
                band = policy.band
                lo, hi = lo - band * np.abs(lo), hi + band * np.abs(hi)
                tol = 1e-13 * np.max(np.abs(vals))
                worst = max(worst, np.max(lo - out) - tol, np.max(out - hi) - tol)
            if worst > 0:
                failures.append(f"{label}/{name} by {worst:.2e}")
    ok = not failures
    detail = f"{len(RANGE_KINDS)} kinds x 10^4 evaluations x 2 bands" + (f"; violations {failures}" if failures else "")
    _record(2, "range property", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 3
def test_criterion_03_moment_preservation():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    dom = DomainBox((-1.0, 0.0), (2.0, 0.5))
    n, q = 20000, 2
    # centers concentrated near edges and corners
    u = rng.beta(0.3, 0.3, size=(n, 2))
    center = dom.lo + u * (dom.hi - dom.lo)
    cols = rng.normal(scale=0.05, size=(n, q, 2)) * rng.uniform(0.1, 3.0, size=(n, 1, 1))
    pts, w, method = resolve_feet_batch(center, cols, dom)
    pts = pts.reshape(n, q, 2, 2)
    wq = w.reshape(n, q, 2) * q
    d = pts - center[:, None, None, :]
    first = np.einsum("nqk,nqkd->nqd", wq, d)
    second = np.einsum("nqk,nqkd,nqke->nqde", wq, d, d)
    target = np.einsum("nqd,nqe->nqde", cols, cols)
    mm = method == Method.MOMENT_MATCHED
    err1 = np.max(np.abs(first[mm]))
    err2 = np.max(np.abs(second[mm] - target[mm]))
    err_sum = np.max(np.abs(w.sum(axis=-1) - 1.0))
    inside = bool(np.all(dom.contains(pts.reshape(-1, 2))))
    ok = mm.sum() > 1000 and err1 <= 1e-13 and err2 <= 1e-13 and err_sum <= 1e-14 and inside
    detail = (
        f"{int(mm.sum())} matched pairs, first moment {err1:.1e}, second {err2:.1e}, "
        f"weight sum {err_sum:.1e}, all inside {inside}"
    )
    _record(3, "boundary moment preservation", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 4
@pytest.mark.slow
def test_criterion_04_test_case_1():
    start = time.perf_counter()
    ref_leg = (0.059, 0.0069, 0.0010)
    ref_cub = (0.461, 0.037, 0.005)
    leg = _study(1, "LEGEND 2", (20, 40, 80), 2000)
    cub = _study(1, "CUBIC", (20, 40, 80), 2000)
    rate = convergence_rate(*leg)
    ok_leg = all(_within(e, r, 2) for e, r in zip(leg, ref_leg)) and rate is not None and rate >= 2.5
    ok_cub = all(_within(e, r, 2) for e, r in zip(cub, ref_cub))
    detail = (
        f"LEGEND 2 Err {_fmt(leg)} vs {_fmt(ref_leg)}, rate {rate if rate is None else round(rate, 2)}; "
        f"CUBIC Err {_fmt(cub)} vs {_fmt(ref_cub)}"
    )
    _record(4, "test case 1 errors", ok_leg and ok_cub, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 5
@pytest.mark.slow
def test_criterion_05_test_case_2():
    start = time.perf_counter()
    ref = (0.00875, 0.00439, 0.00220)
    errs = _study(2, "CUBIC", (80, 160, 320), 2000)
    rate = convergence_rate(*errs)
    ok = all(_within(e, r, 2) for e, r in zip(errs, ref)) and rate is not None and abs(rate - 1.0) <= 0.3
    detail = f"CUBIC Err {_fmt(errs)} vs {_fmt(ref)}, rate {rate if rate is None else round(rate, 2)}"
    _record(5, "test case 2 errors", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 6
@pytest.mark.slow
def test_criterion_06_test_case_4():
    start = time.perf_counter()
    ref = (0.054, 0.034, 0.021)
    errs = _study(4, "LEGEND 2", (20, 40, 80), 1600, controls=800, bound=16.0)
    rate = convergence_rate(*errs)
    ok = all(_within(e, r, 2) for e, r in zip(errs, ref)) and rate is not None and abs(rate - 0.65) <= 0.35
    detail = f"LEGEND 2 Err {_fmt(errs)} vs {_fmt(ref)}, rate {rate if rate is None else round(rate, 2)}"
    _record(6, "test case 4 errors", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 7
@pytest.mark.slow
def test_criterion_07_test_case_3():
    start = time.perf_counter()
    ref = (0.0710, 0.0094)
    errs = _study(3, "LEGEND 2", (8, 16), 1000, controls=400)
    ok = all(_within(e, r, 3) for e, r in zip(errs, ref))
    detail = f"LEGEND 2 Err {_fmt(errs)} vs {_fmt(ref)} (factor 3)"
    _record(7, "test case 3 errors (reduced controls)", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 8
BOUND_KINDS = ["LINEAR", "LEGEND 2", "TCHEB 3", "CUBIC", "MPCSL", "BERN 2"]


def _no_source(problem, initial):
    return Problem(
        dim=problem.dim,
        brownian_dim=problem.brownian_dim,
        diffusion=problem.diffusion,
        initial=initial,
        controls=problem.controls,
        domain=problem.domain,
        horizon=problem.horizon,
        drift=problem.drift,
        maximize=problem.maximize,
    )


def test_criterion_08_discrete_bounds():
    start = time.perf_counter()
    tc1 = make_test_case(1).problem
    tc3 = make_test_case(3, control_count=8).problem
    settings = [
        ("diffusion", _no_source(tc1, tc1.initial)),
        # rough data and controlled drift
        ("controlled", _no_source(tc3, lambda x: np.sign(np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1])))),
    ]
    failures = []
    checked = 0
    for name, prob in settings:
        for label in BOUND_KINDS:
            kind = ApproximatorKind.parse(label)
            lay = kind.layout(prob.domain, 10)
            g = lay.sample(prob.initial)
            lo, hi = g.min(), g.max()
            res = run(prob, lay, TimeGrid(0.5, 40), kind, TruncationPolicy(0.0, 0.5 / 40), snapshot_every=1)
            for snap in res.snapshots:
                checked += 1
                if snap.values.min() < lo - 1e-12 or snap.values.max() > hi + 1e-12:
                    failures.append(f"{name}/{label} at t={snap.time:.3f}")
                    break
    ok = not failures
    detail = f"{checked} step fields checked for {len(BOUND_KINDS)} kinds" + (f"; violations {failures}" if failures else "")
    _record(8, "discrete bound property", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 9
def test_criterion_09_partition_independence():
    start = time.perf_counter()
    case = make_test_case(1)
    grid = TimeGrid(case.horizon, 200)
    parts = []
    ok = True
    for label, exact in (("LEGEND 2", True), ("LINEAR", True), ("CUBIC", False), ("MPCSL", False)):
        kind = ApproximatorKind.parse(label)
        lay = kind.layout(case.problem.domain, 20)
        base = None
        worst = 0.0
        for workers in (1, 2, 4):
            res = run(case.problem, lay, grid, kind, workers=workers)
            ok &= res.exchanges == grid.steps
            if base is None:
                base = res.field.values
                continue
            if exact:
                ok &= bool(np.array_equal(res.field.values, base))
            worst = max(worst, float(np.max(np.abs(res.field.values - base))))
        if not exact:
            ok &= worst <= 1e-8
        parts.append(f"{label} {'bitwise' if worst == 0.0 else f'{worst:.1e}'}")
    detail = ", ".join(parts) + f"; exchanges = steps = {grid.steps}"
    _record(9, "partition independence", ok, detail, time.perf_counter() - start)


# ---------------------------------------------------------------- 10
def test_criterion_10_heat_identity():
    start = time.perf_counter()
    dom = DomainBox((0.0,), (4.0,))
    h = 0.01
    prob = Problem(
        dim=1,
        brownian_dim=1,
        diffusion=lambda t, x, a: np.ones(x.shape[:-1] + (1, 1)),
        initial=lambda x: x[..., 0] ** 2,
        controls=FixedControls.none(),
        domain=dom,
        horizon=1.0,
    )
    worst = 0.0
    for label in ("LEGEND 2", "LEGEND 3", "LEGEND 4", "TCHEB 2", "TCHEB 3", "TCHEB 4"):
        kind = ApproximatorKind.parse(label)
        lay = kind.layout(dom, 8)
        approx = Approximator(kind, Field.sample(lay, prob.initial))
        x = lay.node_axes[0]
        for xi in x[(x > math.sqrt(h)) & (x < 4.0 - math.sqrt(h))]:
            value, _ = one_step_value(prob, approx, 0.0, [xi], h)
            worst = max(worst, abs(value - (xi * xi + h)))
    _record(10, "one-step heat identity", worst <= 1e-10, f"max deviation {worst:.1e}", time.perf_counter() - start)


def main() -> int:
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    for fn in tests:
        try:
            fn()
        except AssertionError:
            pass
    print()
    for num in sorted(RESULTS):
        print(RESULTS[num])
    return 0 if all(line.startswith("[PASS]") for line in RESULTS.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
