"""Exponential families as generators, with closed-form KL oracles.

Each family is a product of independent one-dimensional members, written in
natural coordinates. The log-partition function is the generator, the mean
parameters are the dual coordinates, and the Bregman divergence of the
log-partition reproduces KL with its arguments swapped:

    bregman(log_partition(fam), a, b) == kl_oracle(fam, b, a)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .divergence import kl_discrete
from .generator import DualCoords, GeneratorSpec, PrimalCoords, from_dual, to_dual

KINDS = ("euclidean", "bernoulli_product", "poisson_product", "gaussian_fixed_variance", "custom")

POISSON_TAIL = 1e-14


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    dim: int = 1
    variance: float = 1.0
    generator: Optional[GeneratorSpec] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if self.kind == "custom":
            if self.generator is None:
                raise ValueError("a custom family needs a generator")
            if self.generator.dim != self.dim:
                raise ValueError(f"generator has dim {self.generator.dim}, family has dim {self.dim}")


def _diag(v):
    return np.diag(np.asarray(v, dtype=float))


def _diag3(v):
    v = np.asarray(v, dtype=float)
    n = v.size
    T = np.zeros((n, n, n))
    T[np.arange(n), np.arange(n), np.arange(n)] = v
    return T


def _euclidean(dim):
    return GeneratorSpec(
        dim=dim,
        value=lambda x: 0.5 * float(x @ x),
        gradient=lambda x: x.copy(),
        hessian=lambda x: np.eye(dim),
        third=lambda x: np.zeros((dim,) * 3),
        name="euclidean",
    )


def _bernoulli(dim):
    def hessian(x):
        s = special.expit(x)
        return _diag(s * (1.0 - s))

    def third(x):
        s = special.expit(x)
        return _diag3(s * (1.0 - s) * (1.0 - 2.0 * s))

    return GeneratorSpec(
        dim=dim,
        value=lambda x: float(np.sum(np.logaddexp(0.0, x))),
        gradient=special.expit,
        hessian=hessian,
        third=third,
        dual_guard=lambda m: bool(np.all((m > 0.0) & (m < 1.0))),
        name="bernoulli_product",
    )


def _poisson(dim):
    return GeneratorSpec(
        dim=dim,
        value=lambda x: float(np.sum(np.exp(x))),
        gradient=np.exp,
        hessian=lambda x: _diag(np.exp(x)),
        third=lambda x: _diag3(np.exp(x)),
        dual_guard=lambda lam: bool(np.all(lam > 0.0)),
        name="poisson_product",
    )


def _gaussian(dim, variance):
    return GeneratorSpec(
        dim=dim,
        value=lambda x: 0.5 * variance * float(x @ x),
        gradient=lambda x: variance * x,
        hessian=lambda x: variance * np.eye(dim),
        third=lambda x: np.zeros((dim,) * 3),
        name="gaussian_fixed_variance",
    )


def log_partition(fam: FamilySpec) -> GeneratorSpec:
    """The generator of a family: its log-partition in natural coordinates."""
    if fam.kind == "euclidean":
        return _euclidean(fam.dim)
    if fam.kind == "bernoulli_product":
        return _bernoulli(fam.dim)
    if fam.kind == "poisson_product":
        return _poisson(fam.dim)
    if fam.kind == "gaussian_fixed_variance":
        return _gaussian(fam.dim, fam.variance)
    return fam.generator


def natural_to_mean(fam: FamilySpec, xi) -> DualCoords:
    return to_dual(log_partition(fam), xi)


def mean_to_natural(fam: FamilySpec, mu) -> PrimalCoords:
    return from_dual(log_partition(fam), mu)


def _poisson_kl(lam_a, lam_b, tail=POISSON_TAIL, bound=None):
    """KL(Poisson(lam_a) || Poisson(lam_b)) by direct summation over counts."""
    if bound is None:
        bound = int(stats.poisson.isf(tail, lam_a)) + 1
    k = np.arange(bound + 1)
    logp = stats.poisson.logpmf(k, lam_a)
    logq = stats.poisson.logpmf(k, lam_b)
    return float(np.sum(np.exp(logp) * (logp - logq)))


def poisson_truncation(lam, tail=POISSON_TAIL) -> int:
    """Largest count summed for rate ``lam``: the upper tail beyond is < ``tail``."""
    return int(stats.poisson.isf(tail, lam)) + 1


def kl_oracle(fam: FamilySpec, a, b, *, poisson_bound=None) -> float:
    """``KL(p_a || p_b)`` for natural parameters ``a``, ``b``, in closed form.

    Bernoulli and Poisson components are summed over outcomes; ``poisson_bound``
    overrides the truncation count (default: upper tail mass below 1e-14).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if fam.kind == "euclidean":
        return 0.5 * float(np.sum((a - b) ** 2))
    if fam.kind == "gaussian_fixed_variance":
        mu_a = fam.variance * a
        mu_b = fam.variance * b
        return 0.5 * float(np.sum((mu_a - mu_b) ** 2)) / fam.variance
    if fam.kind == "bernoulli_product":
        total = 0.0
        for xa, xb in zip(a, b):
            pa = 1.0 / (1.0 + math.exp(-xa))
            pb = 1.0 / (1.0 + math.exp(-xb))
            total += kl_discrete([1.0 - pa, pa], [1.0 - pb, pb])
        return total
    if fam.kind == "poisson_product":
        return float(sum(_poisson_kl(math.exp(xa), math.exp(xb), bound=poisson_bound) for xa, xb in zip(a, b)))
    raise ValueError("custom families have no KL oracle")
