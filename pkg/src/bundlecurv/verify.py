"""Named identity checks over sampled points, with a report type.

Each check pins one of the library's cross-route identities: two
independently computed quantities are evaluated at every sampled chart
point and the relative gap ``|a - b| / max(1, |a|, |b|)`` is recorded.
The command line front end is the main consumer, but the runner is plain
library code and the test suite drives it directly.

Point evaluation may fan out across a thread pool (capped by the
``BCL_THREADS`` environment variable); the reduction into a report is an
ordered pass over point indices, so a config with a fixed seed always
produces the identical report.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import ConfigError, DEFAULT_ENGINE, DerivEngine, invert_spd
from .geometry import (assemble_block_metric, det_factorization_check,
                       point_frame, validate_original)
from .connection import (christoffel_general, christoffel_table,
                         covariant_D_orbit_metric)
from .curvature import decomposition_terms, ricci_scalar_pair, _widened
from .jacobian import (jacobian_direct, jacobian_geometric, j_norm_squared,
                       killing_identities_check, second_fundamental_form)
from .sde import (diffusion_coefficients, drift_coefficients,
                  drift_divergence_form)

__all__ = [
    "CHECK_NAMES",
    "DEFAULT_TOLERANCES",
    "CheckPart",
    "CheckResult",
    "VerificationReport",
    "relative_gap",
    "run_checks",
    "worker_count",
]

#: Canonical check order; reports always list selected checks in this order.
CHECK_NAMES = ("christoffel", "curvature", "jacobian", "secondform",
               "killingderiv", "detfact", "sde")

#: Default tolerance per (check, part). The ``curvature`` and ``jacobian``
#: checks compare formula routes against derivative-heavy oracles and are
#: overridden by ``tol_oracle``; the rest are algebraic or first-derivative
#: identities and follow ``tol_identity``.
DEFAULT_TOLERANCES = {
    ("christoffel", "table_vs_general"): 1e-8,
    ("curvature", "three_way"): 1e-6,
    ("jacobian", "direct_vs_geometric"): 1e-6,
    ("jacobian", "flat_absolute"): 1e-10,
    ("secondform", "raw_vs_closed"): 1e-7,
    ("secondform", "norm_vs_decomposition"): 1e-9,
    ("killingderiv", "raw_base"): 1e-7,
    ("killingderiv", "raw_vector"): 1e-7,
    ("killingderiv", "adapted_base"): 1e-7,
    ("killingderiv", "adapted_vector"): 1e-7,
    ("detfact", "det_product"): 1e-9,
    ("detfact", "inverse_round_trip"): 1e-10,
    ("sde", "diffusion_square"): 1e-9,
    ("sde", "drift_vs_divergence"): 1e-7,
}

_ORACLE_CHECKS = frozenset({"curvature", "jacobian"})


def relative_gap(a, b) -> float:
    """Max-norm relative gap ``|a - b| / max(1, |a|, |b|)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)),
                float(np.max(np.abs(b), initial=0.0)))
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def worker_count(n_jobs: int) -> int:
    """Thread-pool width: min(BCL_THREADS or cpu count, job count)."""
    raw = os.environ.get("BCL_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError("BCL_THREADS must be an integer, got %r" % raw)
        if cap < 1:
            raise ConfigError("BCL_THREADS must be positive, got %d" % cap)
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


@dataclass(frozen=True)
class CheckPart:
    """One identity inside a check: per-point residuals vs one tolerance."""

    name: str
    residuals: tuple
    tolerance: float

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals)) if self.residuals else 0.0

    @property
    def mean_residual(self) -> float:
        if not self.residuals:
            return 0.0
        return float(sum(self.residuals) / len(self.residuals))

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)


@dataclass(frozen=True)
class CheckResult:
    """All identity parts of one named check."""

    name: str
    parts: tuple = ()

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.parts)

    @property
    def max_residual(self) -> float:
        return max((p.max_residual for p in self.parts), default=0.0)


@dataclass(frozen=True)
class VerificationReport:
    """Result of one verification run.

    ``results`` holds the selected checks in canonical order; ``not_run``
    lists the checks the config skipped, so nothing disappears silently.
    ``wall_time`` is informational and never serialized into report
    artifacts (identical configs must produce identical bytes).
    """

    scenario: str
    n_points: int
    seed: int
    results: tuple
    not_run: tuple
    wall_time: float
    config_echo: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_residual(self) -> float:
        return max((r.max_residual for r in self.results), default=0.0)


def _check_christoffel(scenario, point, engine):
    table = christoffel_table(scenario.adapted, point, engine).gamma
    general = christoffel_general(scenario.adapted, point, engine).gamma
    return {"table_vs_general": relative_gap(table, general)}


def _check_curvature(scenario, point, engine):
    adapted = scenario.adapted
    breakdown = decomposition_terms(adapted, point, engine)
    wide = _widened(engine)

    def general_provider(p):
        return christoffel_general(adapted, p, wide)

    r_table, _ = ricci_scalar_pair(adapted, point, engine=engine)
    r_general, _ = ricci_scalar_pair(adapted, point,
                                     provider=general_provider,
                                     engine=engine)
    values = (breakdown.R_total, r_table, r_general)
    scale = max(1.0, max(abs(v) for v in values))
    spread = max(values) - min(values)
    return {"three_way": spread / scale}


def _check_jacobian(scenario, point, engine):
    direct = jacobian_direct(scenario.adapted, point, engine)
    geometric = jacobian_geometric(scenario.adapted, point, engine)
    parts = {"direct_vs_geometric": relative_gap(direct, geometric)}
    if scenario.expected.get("jacobian_zero"):
        parts["flat_absolute"] = max(abs(direct), abs(geometric))
    return parts


def _check_secondform(scenario, point, engine):
    adapted = scenario.adapted
    form = second_fundamental_form(adapted, point, engine)
    parts = {}
    if form.raw is not None:
        parts["raw_vs_closed"] = relative_gap(form.raw, form.closed)
    h_inv, _ = invert_spd(np.asarray(adapted.h_tilde(point), dtype=float))
    d_inv = np.asarray(adapted.d.d_inv(point), dtype=float)
    dd = covariant_D_orbit_metric(adapted, point, engine)
    dddd = 0.25 * float(np.einsum("ab,ms,nk,amn,bsk->", h_inv, d_inv, d_inv,
                                  dd, dd))
    norm2 = j_norm_squared(adapted, point, engine)
    parts["norm_vs_decomposition"] = relative_gap(norm2, dddd)
    return parts


def _check_killingderiv(scenario, point, engine):
    if scenario.orig is None:
        raise ConfigError("check 'killingderiv' needs bundle data; scenario "
                          "%r provides none" % scenario.name)
    res = killing_identities_check(scenario.orig, point, engine)
    return {"raw_base": res.raw_base, "raw_vector": res.raw_vector,
            "adapted_base": res.adapted_base,
            "adapted_vector": res.adapted_vector}


def _check_detfact(scenario, point, engine):
    parts = {}
    if scenario.orig is not None:
        parts["det_product"] = det_factorization_check(scenario.orig, point)
    block = assemble_block_metric(scenario.adapted, point)
    round_trip = block.matrix @ block.inverse - np.eye(scenario.adapted.n_t)
    parts["inverse_round_trip"] = float(np.max(np.abs(round_trip)))
    return parts


def _check_sde(scenario, point, engine):
    adapted = scenario.adapted
    blocks = diffusion_coefficients(adapted, point)
    squared = blocks.full @ blocks.full.T
    if adapted.orig is not None:
        target = point_frame(adapted.orig, point).h_tilde_inv
    else:
        target, _ = invert_spd(np.asarray(adapted.h_tilde(point),
                                          dtype=float))
    parts = {"diffusion_square": relative_gap(squared, target)}
    if adapted.orig is not None:
        drift = drift_coefficients(adapted, point, engine)
        divergence = drift_divergence_form(adapted, point, engine)
        parts["drift_vs_divergence"] = relative_gap(drift, divergence)
    return parts


_CHECK_FUNCS = {
    "christoffel": _check_christoffel,
    "curvature": _check_curvature,
    "jacobian": _check_jacobian,
    "secondform": _check_secondform,
    "killingderiv": _check_killingderiv,
    "detfact": _check_detfact,
    "sde": _check_sde,
}


def _resolve_tolerance(check, part, tol_identity, tol_oracle):
    default = DEFAULT_TOLERANCES[(check, part)]
    override = tol_oracle if check in _ORACLE_CHECKS else tol_identity
    return default if override is None else float(override)


def gate_scenario(scenario, engine: DerivEngine = DEFAULT_ENGINE,
                  seed: int = 20_240_817) -> None:
    """Re-run the bundle validity gates before any verification work.

    Raises ConfigError when the Killing, section, or transversality gates
    fail on probe points; scenarios without bundle data pass vacuously.
    """
    if scenario.orig is None:
        return
    from .scenarios import sample_points
    probes = sample_points(scenario, 3, seed=seed)
    validity = validate_original(scenario.orig, probes,
                                 fd_step=engine.fd_step)
    if not validity.ok:
        raise ConfigError(
            "scenario %r failed its validity gates (killing %.2e, "
            "section %.2e, transversality condition %.2e)"
            % (scenario.name, validity.killing_residual,
               validity.section_residual, validity.fp_condition))


def run_checks(scenario, points, checks=CHECK_NAMES, *,
               engine: DerivEngine = DEFAULT_ENGINE,
               tol_identity: float = None, tol_oracle: float = None,
               seed: int = 0, config_echo: dict = None
               ) -> VerificationReport:
    """Evaluate the selected checks at every point and assemble a report.

    ``checks`` must be a nonempty subset of CHECK_NAMES; unselected checks
    are reported under ``not_run``. ``tol_identity`` and ``tol_oracle``
    override the per-part defaults for their check classes (see
    DEFAULT_TOLERANCES). The per-point evaluations run on a small thread
    pool; results are reduced in point order.
    """
    selected = [c for c in CHECK_NAMES if c in set(checks)]
    unknown = set(checks) - set(CHECK_NAMES)
    if unknown:
        raise ConfigError("unknown checks: %s (choose from %s)"
                          % (", ".join(sorted(unknown)),
                             ", ".join(CHECK_NAMES)))
    if not selected:
        raise ConfigError("checks must be a nonempty subset of: %s"
                          % ", ".join(CHECK_NAMES))
    points = list(points)
    if not points:
        raise ConfigError("points: need at least one sample point")

    start = time.perf_counter()
    gate_scenario(scenario, engine)

    def evaluate(point):
        return {name: _CHECK_FUNCS[name](scenario, point, engine)
                for name in selected}

    workers = worker_count(len(points))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(evaluate, points))
    else:
        per_point = [evaluate(p) for p in points]

    results = []
    for name in selected:
        part_names = []
        for row in per_point:
            for pname in row[name]:
                if pname not in part_names:
                    part_names.append(pname)
        parts = tuple(
            CheckPart(name=pname,
                      residuals=tuple(row[name].get(pname, 0.0)
                                      for row in per_point),
                      tolerance=_resolve_tolerance(name, pname,
                                                   tol_identity, tol_oracle))
            for pname in part_names)
        results.append(CheckResult(name=name, parts=parts))

    return VerificationReport(
        scenario=scenario.name,
        n_points=len(points),
        seed=seed,
        results=tuple(results),
        not_run=tuple(c for c in CHECK_NAMES if c not in selected),
        wall_time=time.perf_counter() - start,
        config_echo=dict(config_echo or {}))
