"""Numerical verification suite for the bottleneck geometry.

Runs every geometric identity at its pinned tolerance: retraction
idempotence, differentiated projection, profile/rate orthogonality,
chart round trips, norm nesting, family orthonormality, and the shift
reflection symmetry.  Each check reports its measured residual so
regressions show up as numbers, not just booleans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (BumpFamily, GridFunction, ScaleStructure, beta, chart,
                       chart_inverse, grid_norm, inner, retract, retract_differential,
                       rho_tau, scale_norm)
from .omega import OmegaConfig, StatePoint


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def _random_function(rng, template):
    gf = template.zero_like()
    s = gf.s()
    for _ in range(3):
        gf.values += rng.normal() * np.exp(-((s - rng.uniform(-20, 5)) / rng.uniform(0.5, 3)) ** 2)
    return gf


def _sample_taus(rng, cfg, count, margin):
    below = rng.uniform(cfg.tau1 - 5.0, cfg.tau1 - margin, count // 2)
    above = rng.uniform(cfg.tau2 + margin, cfg.tau2 + 5.0, count - count // 2)
    return np.concatenate([below, above])


def run_geometry_checks(config: dict | None = None) -> list:
    """Execute the full invariant suite; returns CheckResults."""
    config = config or {}
    m = int(config.get("m", 2))
    tau1 = float(config.get("tau1", 0.0))
    tau2 = float(config.get("tau2", 1.0))
    grid = config.get("grid", {})
    lo, hi, h = (float(grid.get("lo", -40.0)), float(grid.get("hi", 10.0)),
                 float(grid.get("h", 0.01)))
    seed = int(config.get("seed", 7))
    scale = float(config.get("profile_scale", 1.0))
    kmax = int(config.get("kmax", 5))

    cfg = OmegaConfig(n=1, m=m, tau0=tau1 - 3.0, tau1=tau1, tau2=tau2,
                      tau_x=tau1 - 7.0, tau_y=tau2 + 7.0)
    family = BumpFamily.build(m, lo, hi, h, scale=scale)
    template = family.profiles[0].sample(0.0)
    rng = np.random.default_rng(seed)
    sc = ScaleStructure.default(kmax)
    results = []

    # family orthonormality
    gram = family.gram()
    results.append(CheckResult("bump family Gram matrix is identity",
                               float(np.max(np.abs(gram - np.eye(m)))), 1e-8))

    # retract idempotence over both branches
    worst = 0.0
    taus = np.concatenate([_sample_taus(rng, cfg, 80, 0.3),
                           rng.uniform(tau1, tau2, 20)])
    for tau in taus:
        f = _random_function(rng, template)
        xi = (float(tau), np.array([rng.normal()]), f)
        r1 = retract(xi, family, cfg)
        r2 = retract(r1, family, cfg)
        worst = max(worst, grid_norm(GridFunction(lo, hi, h, r2[2].values - r1[2].values)))
    results.append(CheckResult("retraction idempotence r(r(xi)) = r(xi)", worst, 1e-10))

    # differentiated projection property
    worst = 0.0
    for tau in _sample_taus(rng, cfg, 20, 0.85):
        f, g = _random_function(rng, template), _random_function(rng, template)
        xi = (float(tau), np.array([rng.normal()]), f)
        v = (rng.normal(), np.array([rng.normal()]), g)
        dv = retract_differential(xi, v, family, cfg)
        ddv = retract_differential(retract(xi, family, cfg), dv, family, cfg)
        worst = max(worst, grid_norm(GridFunction(lo, hi, h, ddv[2].values - dv[2].values)))
    results.append(CheckResult("differentiated projection Dr o Dr = Dr", worst, 1e-8))

    # orthogonality of shifted profile and its rate
    worst = 0.0
    for tau in _sample_taus(rng, cfg, 20, 0.85):
        for p, r in zip(family.shifted(float(tau), cfg), family.shifted_rate(float(tau), cfg)):
            worst = max(worst, abs(inner(p, r)))
    results.append(CheckResult("profile/rate orthogonality <g, dg/dtau> = 0", worst, 1e-6))

    # chart bijection round trips
    worst = 0.0
    for tau in _sample_taus(rng, cfg, 10, 0.3):
        p = StatePoint(float(tau), rng.normal(size=1), rng.normal(size=m))
        back = chart(chart_inverse(p, family, cfg), family, cfg)
        worst = max(worst, float(np.max(np.abs(back.y - p.y))))
        f = _random_function(rng, template)
        r1 = retract((float(tau), np.zeros(1), f), family, cfg)
        again = chart_inverse(chart(r1, family, cfg), family, cfg)
        worst = max(worst, grid_norm(GridFunction(lo, hi, h, again[2].values - r1[2].values)))
    results.append(CheckResult("chart round trips on both sides", worst, 1e-8))

    # weighted norm nesting
    worst = 0.0
    fns = [template] + [_random_function(rng, template) for _ in range(5)]
    for f in fns:
        norms = [scale_norm(f, k, sc) for k in range(kmax + 1)]
        for a, b in zip(norms, norms[1:]):
            worst = max(worst, max(0.0, (a - b) / max(b, 1e-300)))
    results.append(CheckResult("norm nesting ||f||_k <= ||f||_k+1", worst, 1e-12))

    # reflection symmetry of the shift amount
    worst = 0.0
    for d in (0.1, 0.25, 0.5, 1.0, 3.0, 10.0):
        a = beta(tau1 - d, tau1, tau2)
        b = beta(tau2 + d, tau1, tau2)
        worst = max(worst, abs(a - b) / a)
    results.append(CheckResult("shift amount reflection symmetry", worst, 1e-13))

    return results


def format_report(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'residual':>12}  {'tolerance':>10}  status"]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {r.residual:>12.3e}  {r.tolerance:>10.1e}  {status}")
    n_bad = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_bad}/{len(results)} checks passed")
    return "\n".join(lines)
