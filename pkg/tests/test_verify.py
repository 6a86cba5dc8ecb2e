"""The verification layer: parts, tolerances, thread fan-out, reports."""

import dataclasses
import os

import numpy as np
import pytest

from bundlecurv.fields import ConfigError
from bundlecurv.scenarios import sample_points
from bundlecurv.verify import (
    CHECK_NAMES,
    CheckPart,
    CheckResult,
    DEFAULT_TOLERANCES,
    gate_scenario,
    relative_gap,
    run_checks,
    worker_count,
)

from conftest import assert_close


CHEAP_CHECKS = ("christoffel", "secondform", "detfact", "sde")


def test_check_names_cover_tolerance_table():
    assert len(CHECK_NAMES) == 7
    for check, part in DEFAULT_TOLERANCES:
        assert check in CHECK_NAMES
    for name in CHECK_NAMES:
        assert any(check == name for check, _ in DEFAULT_TOLERANCES)


def test_relative_gap_definition():
    assert relative_gap(1.0, 1.0) == 0.0
    assert relative_gap(0.0, 1e-3) == pytest.approx(1e-3)       # floor at 1
    assert relative_gap(200.0, 100.0) == pytest.approx(0.5)     # scaled
    assert relative_gap(np.zeros(0), np.zeros(0)) == 0.0


def test_worker_count_env_control(monkeypatch):
    monkeypatch.setenv("BCL_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.setenv("BCL_THREADS", "not-a-number")
    with pytest.raises(ConfigError):
        worker_count(4)
    monkeypatch.setenv("BCL_THREADS", "0")
    with pytest.raises(ConfigError):
        worker_count(4)
    monkeypatch.delenv("BCL_THREADS")
    assert 1 <= worker_count(4) <= 4


def test_check_part_statistics():
    part = CheckPart(name="p", residuals=(1e-9, 3e-9, 2e-9), tolerance=1e-8)
    assert part.max_residual == pytest.approx(3e-9)
    assert part.mean_residual == pytest.approx(2e-9)
    assert part.passed
    failing = CheckPart(name="p", residuals=(1e-7,), tolerance=1e-8)
    assert not failing.passed
    result = CheckResult(name="c", parts=(part, failing))
    assert not result.passed
    assert result.max_residual == pytest.approx(1e-7)


def test_run_checks_flat_cheap_subset(flat, engine):
    points = sample_points(flat, 3, seed=11)
    report = run_checks(flat, points, CHEAP_CHECKS, engine=engine, seed=11,
                        config_echo={"origin": "unit test"})
    assert report.passed
    assert report.scenario == "flat_product"
    assert report.n_points == 3
    assert report.seed == 11
    assert report.config_echo == {"origin": "unit test"}
    assert set(report.not_run) == set(CHECK_NAMES) - set(CHEAP_CHECKS)
    names = [r.name for r in report.results]
    assert names == [c for c in CHECK_NAMES if c in CHEAP_CHECKS]
    for result in report.results:
        for part in result.parts:
            assert len(part.residuals) == 3
            assert part.tolerance == DEFAULT_TOLERANCES[(result.name,
                                                         part.name)]
    assert report.wall_time > 0.0


def test_run_checks_tolerance_overrides(flat, engine):
    points = sample_points(flat, 1)
    report = run_checks(flat, points, ("christoffel", "jacobian"),
                        engine=engine, tol_identity=1e-3, tol_oracle=1e-2)
    by_name = {r.name: r for r in report.results}
    for part in by_name["christoffel"].parts:
        assert part.tolerance == 1e-3     # identity class
    for part in by_name["jacobian"].parts:
        assert part.tolerance == 1e-2     # oracle class
    assert report.passed


def test_run_checks_input_gates(flat, engine):
    points = sample_points(flat, 1)
    with pytest.raises(ConfigError, match="unknown checks"):
        run_checks(flat, points, ("christoffel", "spectral"), engine=engine)
    with pytest.raises(ConfigError):
        run_checks(flat, points, (), engine=engine)
    with pytest.raises(ConfigError):
        run_checks(flat, [], engine=engine)


def test_run_checks_flat_jacobian_magnitude(flat, engine):
    report = run_checks(flat, sample_points(flat, 2, seed=13), ("jacobian",),
                        engine=engine)
    parts = {p.name: p for p in report.results[0].parts}
    assert "flat_absolute" in parts
    assert parts["flat_absolute"].max_residual <= 1e-10
    assert parts["flat_absolute"].tolerance == 1e-10


def test_run_checks_thread_fanout_is_deterministic(flat, engine,
                                                   monkeypatch):
    points = sample_points(flat, 3, seed=17)
    monkeypatch.setenv("BCL_THREADS", "1")
    serial = run_checks(flat, points, ("christoffel", "detfact"),
                        engine=engine)
    monkeypatch.setenv("BCL_THREADS", "3")
    threaded = run_checks(flat, points, ("christoffel", "detfact"),
                          engine=engine)
    for left, right in zip(serial.results, threaded.results):
        assert left.name == right.name
        for lp, rp in zip(left.parts, right.parts):
            assert lp.name == rp.name
            assert lp.residuals == rp.residuals


def test_gate_scenario_flags_broken_geometry(twisted, engine):
    gate_scenario(twisted, engine)  # healthy geometry passes

    def broken_metric(q):
        return np.asarray(twisted.orig.G_P(q), dtype=float) \
            + 0.1 * q[2] * np.eye(5)

    broken_orig = dataclasses.replace(twisted.orig, G_P=broken_metric)
    broken = dataclasses.replace(twisted, orig=broken_orig)
    with pytest.raises(ConfigError, match="validity gates"):
        gate_scenario(broken, engine)


def test_run_checks_twisted_cheap_subset(twisted, engine):
    report = run_checks(twisted, sample_points(twisted, 2, seed=19),
                        CHEAP_CHECKS, engine=engine)
    assert report.passed
    by_name = {r.name: r for r in report.results}
    assert {p.name for p in by_name["secondform"].parts} == {
        "raw_vs_closed", "norm_vs_decomposition"}
    assert {p.name for p in by_name["sde"].parts} == {
        "diffusion_square", "drift_vs_divergence"}
    assert {p.name for p in by_name["detfact"].parts} == {
        "det_product", "inverse_round_trip"}
