"""Bregman divergences, their dual and mixed forms, and the induced metric.

Orientation: ``bregman(gen, p, q)`` is

    psi(xi_p) - psi(xi_q) - grad psi(xi_q) . (xi_p - xi_q)

which is nonnegative and agrees with the mixed form
``psi(xi_p) + psi_star(xi_star_q) - xi_p . xi_star_q``. For an exponential
family with log-partition ``psi`` it equals ``KL(p_q || p_p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .generator import (
    GeneratorSpec,
    dual_value,
    legendre_dual,
    require_positive_definite,
    to_dual,
)

PRIMAL = "primal"
DUAL = "dual"


@dataclass(frozen=True)
class DivergencePair:
    """A generator together with the orientation of its divergence."""

    gen: GeneratorSpec
    orientation: str = PRIMAL

    def __post_init__(self):
        if self.orientation not in (PRIMAL, DUAL):
            raise ValueError(f"orientation must be 'primal' or 'dual', got {self.orientation!r}")

    def __call__(self, p, q) -> float:
        if self.orientation == PRIMAL:
            return bregman(self.gen, p, q)
        return dual_bregman(self.gen, p, q)


@dataclass(frozen=True)
class QuadraticForm:
    matrix: np.ndarray

    def __call__(self, u, v=None) -> float:
        u = np.asarray(u, dtype=float)
        v = u if v is None else np.asarray(v, dtype=float)
        return float(u @ self.matrix @ v)

    def inverse(self) -> "QuadraticForm":
        return QuadraticForm(np.linalg.inv(self.matrix))


def bregman(gen: GeneratorSpec, p, q) -> float:
    xp = gen.check(p)
    xq = gen.check(q)
    if np.array_equal(xp, xq):
        return 0.0
    a, b, c = gen.psi(xp), gen.psi(xq), float(gen.grad(xq) @ (xp - xq))
    value = a - b - c
    # cancellation can leave a negative of rounding size; anything larger
    # is a genuine convexity violation and is returned as is
    if value < 0 and -value <= 64 * np.finfo(float).eps * (abs(a) + abs(b) + abs(c)):
        return 0.0
    return float(value)


def dual_bregman(gen: GeneratorSpec, p, q) -> float:
    """The dual divergence: ``bregman`` with its arguments swapped."""
    return bregman(gen, q, p)


def conjugate_bregman(gen: GeneratorSpec, p, q, analytic: bool = True) -> float:
    """Bregman divergence of ``psi_star`` between the dual coordinates of p, q.

    Equal to ``dual_bregman(gen, p, q)``; computed through the conjugate
    potential, so it serves as an independent route to the same number.
    """
    star = legendre_dual(gen, analytic=analytic)
    return bregman(star, to_dual(gen, p), to_dual(gen, q))


def mixed_bregman(gen: GeneratorSpec, p, q_dual) -> float:
    """``psi(xi_p) + psi_star(xi_star_q) - xi_p . xi_star_q``."""
    xp = gen.check(p)
    xs = np.asarray(q_dual, dtype=float)
    return float(gen.psi(xp) + dual_value(gen, xs) - xp @ xs)


def induced_metric(gen: GeneratorSpec, p) -> QuadraticForm:
    """Fundamental matrix ``hess psi(xi_p)`` of the metric induced by D_psi."""
    H = gen.hess(gen.check(p))
    return QuadraticForm(require_positive_definite(H))


def dual_induced_metric(gen: GeneratorSpec, p) -> QuadraticForm:
    """Metric of the conjugate potential at the dual coordinates of ``p``."""
    star = legendre_dual(gen, analytic=False)
    H = star.hess(to_dual(gen, p))
    return QuadraticForm(require_positive_definite(H, "conjugate Hessian"))


def local_quadratic(gen: GeneratorSpec, p, dxi) -> float:
    """Half the squared line element, ``dxi^T G(xi_p) dxi / 2``."""
    xp = gen.check(p)
    d = np.asarray(dxi, dtype=float)
    gen.check(xp + d)
    return 0.5 * induced_metric(gen, xp)(d)


def kl_discrete(p, q, atol=1e-9) -> float:
    """Kullback-Leibler divergence between probability vectors.

    Returns ``math.inf`` when ``p`` puts mass where ``q`` has none.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    errors = []
    for name, v in (("p", p), ("q", q)):
        if v.ndim != 1 or v.size == 0:
            errors.append((f"/{name}", "must be a non-empty vector"))
        elif np.any(v < 0) or not np.all(np.isfinite(v)):
            errors.append((f"/{name}", "entries must be finite and nonnegative"))
        elif abs(v.sum() - 1.0) > atol:
            errors.append((f"/{name}", f"must sum to 1 (sums to {v.sum():.12g})"))
    if not errors and p.shape != q.shape:
        errors.append(("/q", f"length {q.size} differs from p's {p.size}"))
    if errors:
        raise ValidationError(errors)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


__all__ = [
    "DivergencePair",
    "QuadraticForm",
    "bregman",
    "conjugate_bregman",
    "dual_bregman",
    "dual_induced_metric",
    "induced_metric",
    "kl_discrete",
    "local_quadratic",
    "mixed_bregman",
]
