"""Randomized invariant suites over a family or custom generator.

Each suite draws random configurations, measures the largest discrepancy of
one identity, and compares it to a default tolerance. The CLI ``check``
command reports the resulting table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .divergence import bregman, conjugate_bregman, dual_bregman, mixed_bregman
from .dually_flat import (
    DUAL,
    PRIMAL,
    AffineSubmanifold,
    geodesic_projection,
    orthogonality_defect,
    projection_defects,
    pythagoras_residual,
)
from .errors import DomainError, InversionError
from .families import FamilySpec, kl_oracle, log_partition
from .generator import from_dual, legendre_dual, to_dual
from .riemannian import geodesic_shoot, hamiltonian_flow, metric_from_generator


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_residual: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)


_SPREAD = {
    "euclidean": 2.0,
    "gaussian_fixed_variance": 1.5,
    "bernoulli_product": 2.5,
    "poisson_product": 1.5,
}


def sample_points(fam: FamilySpec, rng, n: int) -> List[np.ndarray]:
    """Random in-domain natural parameters."""
    gen = log_partition(fam)
    spread = _SPREAD.get(fam.kind, 0.5)
    centre = gen.start()
    out = []
    for _ in range(1000 * n):
        if len(out) == n:
            break
        x = centre + rng.uniform(-spread, spread, size=fam.dim)
        if gen.contains(x):
            out.append(x)
    if len(out) < n:
        raise ValueError("could not sample in-domain points")
    return out


def random_flat_line(fam: FamilySpec, rng, chart: str = DUAL, half_width: float = 0.5, m: int = 1) -> AffineSubmanifold:
    """A bounded random ``m``-dimensional flat piece in one chart, through a random in-domain point.

    The parameter box is halved until all of its corners map back into the
    domain; convexity of the chart image then covers the interior.
    """
    gen = log_partition(fam)
    if not 1 <= m <= fam.dim:
        raise ValueError(f"m must lie in [1, {fam.dim}], got {m}")
    x0 = sample_points(fam, rng, 1)[0]
    offset = x0 if chart == PRIMAL else to_dual(gen, x0)
    basis, _ = np.linalg.qr(rng.normal(size=(fam.dim, m)))
    corners = 0.999 * (2.0 * np.array(list(itertools.product((0, 1), repeat=m)), dtype=float) - 1.0)
    w = half_width
    for _ in range(60):
        sub = AffineSubmanifold(chart, offset, basis, lower=[-w] * m, upper=[w] * m)
        try:
            for c in corners:
                sub.point(gen, w * c)
            return sub
        except (DomainError, InversionError):
            w *= 0.5
    raise ValueError("no in-domain flat piece found")


def point_above(fam: FamilySpec, rng, sub: AffineSubmanifold, dual: bool = False, scale: float = 1.0):
    """A random point whose (dual, if ``dual``) geodesic projection onto ``sub`` is its offset point.

    The geodesic projection onto a dual-chart line is stationary exactly when
    ``xi_P - xi_Q`` is Euclidean-orthogonal to the basis; the dual projection
    onto a primal-chart line when ``xi*_P - xi*_Q`` is. Displacing the foot
    along a random orthogonal direction therefore gives a point with a known
    projection.
    """
    gen = log_partition(fam)
    foot = sub.point(gen, np.zeros(sub.m))
    Q, _ = np.linalg.qr(sub.basis, mode="complete")
    normal = Q[:, sub.m:]
    if normal.shape[1] == 0:
        return foot, foot
    base = to_dual(gen, foot) if dual else foot
    s = scale
    for _ in range(60):
        z = base + normal @ rng.uniform(-s, s, size=normal.shape[1])
        try:
            p = from_dual(gen, z) if dual else gen.check(z)
            return p, foot
        except (DomainError, InversionError):
            s *= 0.5
    raise ValueError("no in-domain point above the submanifold")


def _pairs(fam, rng, n):
    pts = sample_points(fam, rng, 2 * n)
    return list(zip(pts[:n], pts[n:]))


def involution(fam, rng, n):
    gen = log_partition(fam)
    return max(np.max(np.abs(from_dual(gen, to_dual(gen, x)) - x)) for x in sample_points(fam, rng, n))


def biconjugation(fam, rng, n):
    """Conjugate of the value-only conjugate, compared with psi."""
    gen = log_partition(fam)
    star = legendre_dual(gen, analytic=False)
    worst = 0.0
    for x in sample_points(fam, rng, n):
        xs = from_dual(star, x, hint=to_dual(gen, x), tol=1e-9)
        worst = max(worst, abs(float(x @ xs) - star.psi(xs) - gen.psi(x)))
    return worst


def metric_duality(fam, rng, n):
    gen = log_partition(fam)
    star = legendre_dual(gen, analytic=False)
    worst = 0.0
    for x in sample_points(fam, rng, n):
        prod = gen.hess(x) @ star.hess(to_dual(gen, x))
        worst = max(worst, float(np.max(np.abs(prod - np.eye(fam.dim)))))
    return worst


def mixed_representation(fam, rng, n):
    gen = log_partition(fam)
    return max(abs(bregman(gen, p, q) - mixed_bregman(gen, p, to_dual(gen, q))) for p, q in _pairs(fam, rng, n))


def nonnegativity(fam, rng, n):
    gen = log_partition(fam)
    worst = 0.0
    for p, q in _pairs(fam, rng, n):
        worst = max(worst, -bregman(gen, p, q), abs(bregman(gen, p, p)))
    return worst


def dual_divergence(fam, rng, n):
    gen = log_partition(fam)
    return max(
        abs(dual_bregman(gen, p, q) - conjugate_bregman(gen, p, q, analytic=False)) for p, q in _pairs(fam, rng, n)
    )


def bregman_kl(fam, rng, n):
    gen = log_partition(fam)
    return max(abs(bregman(gen, a, b) - kl_oracle(fam, b, a)) for a, b in _pairs(fam, rng, n))


def defect_identity(fam, rng, n):
    gen = log_partition(fam)
    pts = sample_points(fam, rng, 3 * n)
    worst = 0.0
    for i in range(n):
        tri = (pts[i], pts[n + i], pts[2 * n + i])
        for dual in (False, True):
            worst = max(worst, abs(pythagoras_residual(gen, tri, dual) - orthogonality_defect(gen, tri, dual)))
    return worst


def _projected(fam, rng, n):
    gen = log_partition(fam)
    for _ in range(n):
        sub = random_flat_line(fam, rng, DUAL)
        p, _ = point_above(fam, rng, sub, scale=_SPREAD.get(fam.kind, 0.5))
        yield gen, sub, p, geodesic_projection(gen, p, sub)


def pythagoras(fam, rng, n):
    worst = 0.0
    for gen, sub, p, q in _projected(fam, rng, n):
        r = sub.sample(gen, rng, 1)[0]
        worst = max(worst, abs(pythagoras_residual(gen, (p, q, r))))
    return worst


def projection_optimality(fam, rng, n, samples=200):
    worst = 0.0
    for gen, sub, p, q in _projected(fam, rng, n):
        best = bregman(gen, p, q)
        others = min(bregman(gen, p, r) for r in sub.sample(gen, rng, samples))
        worst = max(worst, best - others)
    return worst


def projection_orthogonality(fam, rng, n):
    return max(float(np.max(np.abs(projection_defects(g, p, q, s)))) for g, s, p, q in _projected(fam, rng, n))


def conservation(fam, rng, n, step=1e-3):
    gen = log_partition(fam)
    metric = metric_from_generator(gen)
    worst = 0.0
    for x in sample_points(fam, rng, n):
        v = rng.normal(size=fam.dim)
        sol = geodesic_shoot(metric, (x, v), 1.0, step)
        flow = hamiltonian_flow(metric, (x, gen.hess(x) @ v), 1.0, step)
        if sol.completed:
            worst = max(worst, sol.kinetic_drift())
        if flow.terminal == "completed":
            worst = max(worst, flow.energy_drift())
    return worst


@dataclass(frozen=True)
class Suite:
    run: Callable
    tolerance: float
    max_samples: Optional[int] = None
    needs_oracle: bool = False


SUITES: Dict[str, Suite] = {
    "involution": Suite(involution, 1e-8),
    "biconjugation": Suite(biconjugation, 1e-7),
    "metric_duality": Suite(metric_duality, 1e-5),
    "mixed_representation": Suite(mixed_representation, 1e-9),
    "nonnegativity": Suite(nonnegativity, 0.0),
    "dual_divergence": Suite(dual_divergence, 1e-6),
    "bregman_kl": Suite(bregman_kl, 1e-8, needs_oracle=True),
    "defect_identity": Suite(defect_identity, 1e-9),
    "pythagoras": Suite(pythagoras, 1e-7),
    "projection_optimality": Suite(projection_optimality, 1e-9, max_samples=20),
    "projection_orthogonality": Suite(projection_orthogonality, 1e-7),
    "conservation": Suite(conservation, 1e-6, max_samples=5),
}


def available_suites(fam: FamilySpec) -> List[str]:
    return sorted(name for name, s in SUITES.items() if not (s.needs_oracle and fam.kind == "custom"))


def run_suites(
    fam: FamilySpec,
    names=None,
    *,
    samples: int = 20,
    seed: int = 0,
    tolerance: Optional[float] = None,
) -> List[SuiteResult]:
    """Run the named suites (default: all applicable), sorted by name.

    Every suite gets its own generator seeded from ``seed`` and its name, so
    results do not depend on which other suites run.
    """
    names = available_suites(fam) if names is None else sorted(set(names))
    results = []
    for name in names:
        suite = SUITES[name]
        n = samples if suite.max_samples is None else min(samples, suite.max_samples)
        rng = np.random.default_rng([seed, *name.encode()])
        residual = float(suite.run(fam, rng, n))
        tol = suite.tolerance if tolerance is None else tolerance
        results.append(SuiteResult(name, residual, tol, n))
    return results


__all__ = [
    "SUITES",
    "SuiteResult",
    "available_suites",
    "point_above",
    "random_flat_line",
    "run_suites",
    "sample_points",
]
