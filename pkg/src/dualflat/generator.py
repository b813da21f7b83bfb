"""Convex generators and the Legendre transformation between their charts.

A generator is a strictly convex potential ``psi`` on an open convex domain.
Its gradient maps primal coordinates ``xi`` to dual coordinates
``xi_star``; the inverse map is computed by damped Newton iteration, and the
conjugate value ``psi_star(xi_star) = xi . xi_star - psi(xi)`` follows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NewType, Optional

import numpy as np

from .errors import ConvexityError, DomainError, InversionError

PrimalCoords = NewType("PrimalCoords", np.ndarray)
DualCoords = NewType("DualCoords", np.ndarray)

Guard = Callable[[np.ndarray], bool]

GRADIENT_STEP = 1e-6
HESSIAN_STEP = 1e-4


def fd_gradient(f, x, rel_step=GRADIENT_STEP):
    """Central-difference gradient with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def fd_jacobian(F, x, rel_step=HESSIAN_STEP):
    """Central-difference Jacobian of a vector map; column j is dF/dx_j."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = rel_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((np.asarray(F(xp)) - np.asarray(F(xm))) / (xp[j] - xm[j]))
    return np.stack(cols, axis=-1)


def fd_hessian(f, x, rel_step=HESSIAN_STEP):
    """Second-difference Hessian of a scalar function, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * (1.0 + np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        e_i = np.zeros(n)
        e_i[i] = h[i]
        H[i, i] = (f(x + e_i) - 2.0 * f0 + f(x - e_i)) / h[i] ** 2
        for j in range(i):
            e_j = np.zeros(n)
            e_j[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + e_i + e_j) - f(x + e_i - e_j) - f(x - e_i + e_j) + f(x - e_i - e_j)
            ) / (4.0 * h[i] * h[j])
    return H


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


@dataclass(frozen=True)
class GeneratorSpec:
    """A strictly convex potential with value, gradient and Hessian access.

    ``gradient`` and ``hessian`` are optional; missing derivatives fall back to
    central finite differences (the Hessian is differenced from the gradient
    when one is given, from values otherwise). ``third`` optionally returns the
    tensor ``T[k, i, j] = d^3 psi / dxi_k dxi_i dxi_j``, used for exact
    Christoffel symbols. ``domain_guard`` marks the open convex domain (``None``
    means all of R^dim) and ``dual_guard`` the image of the gradient map, when
    it is known.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    third: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain_guard: Optional[Guard] = None
    dual_guard: Optional[Guard] = None
    reference: Optional[np.ndarray] = field(default=None)
    name: str = "custom"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    def contains(self, xi) -> bool:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim,) or not np.all(np.isfinite(xi)):
            return False
        return self.domain_guard is None or bool(self.domain_guard(xi))

    def in_image(self, xi_star) -> bool:
        xi_star = np.asarray(xi_star, dtype=float)
        if xi_star.shape != (self.dim,) or not np.all(np.isfinite(xi_star)):
            return False
        return self.dual_guard is None or bool(self.dual_guard(xi_star))

    def check(self, xi) -> np.ndarray:
        """Return ``xi`` as a float array, raising DomainError if outside."""
        arr = np.asarray(xi, dtype=float)
        if arr.shape != (self.dim,):
            raise DomainError(
                f"expected a point of dimension {self.dim}, got shape {arr.shape}", point=arr
            )
        if not self.contains(arr):
            raise DomainError(f"point {arr.tolist()} is outside the domain of {self.name}", point=arr)
        return arr

    def start(self) -> np.ndarray:
        """Reference point for iterative solves: given one, else the origin."""
        if self.reference is not None:
            return np.array(self.reference, dtype=float)
        return np.zeros(self.dim)

    def psi(self, xi) -> float:
        return float(self.value(np.asarray(xi, dtype=float)))

    def grad(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(xi), dtype=float).reshape(self.dim)
        return fd_gradient(self.value, xi)

    def hess(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.hessian is not None:
            H = np.asarray(self.hessian(xi), dtype=float).reshape(self.dim, self.dim)
        elif self.gradient is not None:
            H = fd_jacobian(self.gradient, xi)
        else:
            H = fd_hessian(self.value, xi)
        return symmetrize(H)

    def third_derivative(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.third is not None:
            return np.asarray(self.third(xi), dtype=float).reshape((self.dim,) * 3)
        T = fd_jacobian(self.hess, xi)  # T[i, j, k] = d_k H_ij
        return np.moveaxis(T, -1, 0)

    def with_reference(self, reference) -> "GeneratorSpec":
        return replace(self, reference=np.asarray(reference, dtype=float))


def require_positive_definite(H, what="Hessian"):
    """Raise ConvexityError unless ``H`` is positive definite."""
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(symmetrize(H))
        raise ConvexityError(f"{what} is not positive definite (smallest eigenvalue {eig[0]:.3e})")
    return H


def to_dual(gen: GeneratorSpec, xi) -> DualCoords:
    """Dual coordinates ``grad psi(xi)``."""
    return DualCoords(gen.grad(gen.check(xi)))


def from_dual(gen: GeneratorSpec, xi_star, hint=None, *, tol=1e-10, max_iter=100) -> PrimalCoords:
    """Invert the gradient map by damped Newton iteration.

    Solves ``grad psi(xi) = xi_star`` until the residual norm is at most
    ``tol * (1 + |xi_star|)``. Steps that leave the domain or fail to decrease
    the residual are halved.
    """
    target = np.asarray(xi_star, dtype=float)
    if target.shape != (gen.dim,):
        raise InversionError(f"expected dual coordinates of dimension {gen.dim}, got {target.shape}")
    if not gen.in_image(target):
        raise InversionError(f"{target.tolist()} is outside the gradient image of {gen.name}")
    x = gen.start() if hint is None else np.asarray(hint, dtype=float).copy()
    if not gen.contains(x):
        raise DomainError(f"Newton start {x.tolist()} is outside the domain", point=x)
    threshold = tol * (1.0 + np.linalg.norm(target))

    r = gen.grad(x) - target
    rn = np.linalg.norm(r)
    for _ in range(max_iter):
        converged = rn <= threshold
        try:
            step = np.linalg.solve(gen.hess(x), r)
        except np.linalg.LinAlgError:
            raise InversionError("singular Hessian during inversion", residual=rn, iterate=x)
        if rn == 0.0:
            return PrimalCoords(x)
        t = 1.0
        # the polish step after convergence gets a single undamped trial
        for _ in range(1 if converged else 60):
            cand = x - t * step
            if gen.contains(cand):
                rc = gen.grad(cand) - target
                rcn = np.linalg.norm(rc)
                if np.isfinite(rcn) and rcn < rn:
                    x, r, rn = cand, rc, rcn
                    break
            t *= 0.5
        else:
            if converged:
                return PrimalCoords(x)
            raise InversionError(f"damped Newton stalled with residual {rn:.3e}", residual=rn, iterate=x)
        # one step past the threshold exploits quadratic convergence
        if converged:
            return PrimalCoords(x)
    if rn <= threshold:
        return PrimalCoords(x)
    raise InversionError(
        f"no convergence after {max_iter} Newton iterations (residual {rn:.3e})",
        residual=rn,
        iterate=x,
    )


def dual_value(gen: GeneratorSpec, xi_star, hint=None, *, tol=1e-10) -> float:
    """Legendre dual ``psi_star(xi_star) = max_xi (xi . xi_star - psi(xi))``."""
    xi_star = np.asarray(xi_star, dtype=float)
    xi = from_dual(gen, xi_star, hint, tol=tol)
    return float(xi @ xi_star - gen.psi(xi))


def legendre_dual(gen: GeneratorSpec, analytic: bool = True) -> GeneratorSpec:
    """The conjugate potential as a generator over the dual chart.

    With ``analytic`` the gradient is the inverse gradient map and the Hessian
    the inverse primal Hessian. Without it only values are supplied and all
    derivatives are finite differences of :func:`dual_value`.
    """

    def value(xs):
        return dual_value(gen, xs)

    gradient = hessian = None
    if analytic:
        def gradient(xs):
            return np.asarray(from_dual(gen, xs))

        def hessian(xs):
            return np.linalg.inv(gen.hess(from_dual(gen, xs)))

    ref = to_dual(gen, gen.start()) if gen.contains(gen.start()) else None
    return GeneratorSpec(
        dim=gen.dim,
        value=value,
        gradient=gradient,
        hessian=hessian,
        domain_guard=gen.dual_guard,
        dual_guard=gen.domain_guard,
        reference=ref,
        name=f"{gen.name}*",
    )
