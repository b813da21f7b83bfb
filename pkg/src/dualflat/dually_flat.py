"""Affine geodesics in both charts, the Pythagorean identity, and projections.

With ``D[P||Q] = psi(xi_P) - psi(xi_Q) - grad psi(xi_Q) . (xi_P - xi_Q)`` the
three-point identity is exact:

    D[P||Q] + D[Q||R] - D[P||R] = (xi_P - xi_Q) . (xi*_R - xi*_Q)

The right side is the metric inner product at Q between the primal geodesic
towards P and the dual geodesic towards R, so it vanishes exactly when the
triangle is orthogonal at Q. Minimizing ``D[P||.]`` over a dual-flat set
makes it orthogonal; minimizing ``D[.||P]`` over a primal-flat set does the
same for the swapped identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .divergence import bregman, dual_bregman
from .errors import DomainError, InversionError, ProjectionError
from .generator import GeneratorSpec, PrimalCoords, fd_jacobian, from_dual, to_dual

PRIMAL = "primal"
DUAL = "dual"


class NonUniqueProjectionWarning(UserWarning):
    """The restricted objective is nearly flat at the solution."""


@dataclass(frozen=True)
class AffineSubmanifold:
    """``{offset + basis @ u}`` in the primal or dual chart.

    ``basis`` has shape ``(dim, m)``; ``lower`` / ``upper`` optionally bound
    ``u`` (open box) to keep represented points in the domain.
    """

    chart: str
    offset: np.ndarray
    basis: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.chart not in (PRIMAL, DUAL):
            raise ValueError(f"chart must be 'primal' or 'dual', got {self.chart!r}")
        offset = np.asarray(self.offset, dtype=float).reshape(-1)
        basis = np.asarray(self.basis, dtype=float).reshape(offset.size, -1)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "basis", basis)
        m = basis.shape[1]
        if m > offset.size:
            raise ValueError(f"{m} basis vectors in dimension {offset.size}")
        if m and np.linalg.matrix_rank(basis) < m:
            raise ValueError("basis columns are linearly dependent")
        for name in ("lower", "upper"):
            b = getattr(self, name)
            if b is not None:
                b = np.asarray(b, dtype=float).reshape(m)
                object.__setattr__(self, name, b)
        if self.lower is not None and self.upper is not None and np.any(self.lower >= self.upper):
            raise ValueError("empty parameter box: lower >= upper")

    @property
    def dim(self) -> int:
        return self.offset.size

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    def in_box(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        if self.lower is not None and np.any(u <= self.lower):
            return False
        if self.upper is not None and np.any(u >= self.upper):
            return False
        return True

    def chart_point(self, u) -> np.ndarray:
        return self.offset + self.basis @ np.asarray(u, dtype=float).reshape(self.m)

    def point(self, gen: GeneratorSpec, u, hint=None) -> PrimalCoords:
        """Primal coordinates of the member with parameters ``u``."""
        if not self.in_box(u):
            raise DomainError(f"parameters {np.asarray(u).tolist()} are outside the box", point=u)
        z = self.chart_point(u)
        if self.chart == PRIMAL:
            return PrimalCoords(gen.check(z))
        return from_dual(gen, z, hint)

    def chart_coords(self, gen: GeneratorSpec, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float) if self.chart == PRIMAL else to_dual(gen, xi)

    def coordinates(self, gen: GeneratorSpec, xi) -> np.ndarray:
        """Least-squares parameters of the chart point nearest ``xi``."""
        if self.m == 0:
            return np.zeros(0)
        z = self.chart_coords(gen, xi)
        return np.linalg.lstsq(self.basis, z - self.offset, rcond=None)[0]

    def distance_to(self, gen: GeneratorSpec, xi) -> float:
        """Chart-Euclidean distance of ``xi`` from the affine set."""
        z = self.chart_coords(gen, xi)
        return float(np.linalg.norm(z - self.chart_point(self.coordinates(gen, xi))))

    def sample(self, gen: GeneratorSpec, rng, n: int):
        """``n`` random in-domain members, drawn uniformly from the box."""
        if self.lower is None or self.upper is None:
            raise ValueError("sampling needs finite lower and upper bounds")
        out = []
        tries = 0
        while len(out) < n:
            tries += 1
            if tries > 100 * n + 100:
                raise ValueError("could not draw in-domain samples from the submanifold")
            u = rng.uniform(self.lower, self.upper)
            if not self.in_box(u):
                continue
            try:
                out.append(self.point(gen, u))
            except (DomainError, InversionError):
                continue
        return out


@dataclass(frozen=True)
class Triangle:
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray


SEGMENT_SCAN = 64


def _first_exit(inside, t):
    """Parameter in (0, t] where a segment starting inside first leaves, or None.

    The segment is scanned on a uniform grid, so excursions shorter than
    ``t / SEGMENT_SCAN`` between grid points can be missed; the crossing
    itself is then refined by bisection.
    """
    grid = np.linspace(0.0, t, SEGMENT_SCAN + 1)[1:]
    lo = 0.0
    for s in grid:
        if not inside(s):
            hi = s
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if inside(mid):
                    lo = mid
                else:
                    hi = mid
            return hi
        lo = s
    return None


def primal_segment(gen: GeneratorSpec, p, q, t: float) -> PrimalCoords:
    """Point ``(1 - t) xi_p + t xi_q`` of the primal-affine geodesic."""
    xp = gen.check(p)
    xq = gen.check(q)

    def at(s):
        return (1.0 - s) * xp + s * xq

    t_exit = _first_exit(lambda s: gen.contains(at(s)), t)
    if t_exit is not None:
        raise DomainError(f"primal segment leaves the domain at t={t_exit:.6g}", point=at(t), parameter=t_exit)
    return PrimalCoords(at(t))


def dual_segment(gen: GeneratorSpec, p, q, t: float) -> PrimalCoords:
    """Point of the dual-affine geodesic: interpolate ``xi*`` then invert."""
    xp = gen.check(p)
    xq = gen.check(q)
    sp, sq = to_dual(gen, xp), to_dual(gen, xq)

    def at(s):
        return (1.0 - s) * sp + s * sq

    t_exit = _first_exit(lambda s: gen.in_image(at(s)), t)
    if t_exit is not None:
        raise DomainError(f"dual segment leaves the gradient image at t={t_exit:.6g}", point=at(t), parameter=t_exit)
    if t == 0:
        return PrimalCoords(xp)
    if t == 1:
        return PrimalCoords(xq)
    hint = (1.0 - t) * xp + t * xq
    return from_dual(gen, at(t), hint if gen.contains(hint) else None)


def _vertices(tri):
    if isinstance(tri, Triangle):
        return tri.p, tri.q, tri.r
    return tri


def orthogonality_defect(gen: GeneratorSpec, tri, dual: bool = False) -> float:
    """``(xi_P - xi_Q) . (xi*_R - xi*_Q)``: zero for a triangle right-angled at Q.

    With ``dual`` the roles of P and R swap, which is the angle relevant to
    the dual divergence.
    """
    p, q, r = (gen.check(v) for v in _vertices(tri))
    if dual:
        p, r = r, p
    return float((p - q) @ (to_dual(gen, r) - to_dual(gen, q)))


def pythagoras_residual(gen: GeneratorSpec, tri, dual: bool = False) -> float:
    """``D[P||Q] + D[Q||R] - D[P||R]`` (with the dual divergence if ``dual``)."""
    p, q, r = _vertices(tri)
    D = dual_bregman if dual else bregman
    return D(gen, p, q) + D(gen, q, r) - D(gen, p, r)


def _chart_gradient(gen, xp, xq, sub, dual):
    """Gradient of the objective with respect to the sub's chart coordinates."""
    if not dual:
        diff = xq - xp
        return gen.hess(xq) @ diff if sub.chart == PRIMAL else diff
    diff = to_dual(gen, xq) - to_dual(gen, xp)
    return diff if sub.chart == PRIMAL else np.linalg.solve(gen.hess(xq), diff)


def _chart_hessian(gen, xq, sub, dual):
    """Exact chart Hessian where the objective is convex in the sub's chart."""
    if not dual and sub.chart == DUAL:
        return np.linalg.inv(gen.hess(xq))
    if dual and sub.chart == PRIMAL:
        return gen.hess(xq)
    return None


def _project(gen, p, sub, dual, tol, max_iter):
    xp = gen.check(p)
    if sub.dim != gen.dim:
        raise ValueError(f"submanifold dimension {sub.dim} differs from generator dimension {gen.dim}")
    if sub.m == 0:
        return sub.point(gen, np.zeros(0)), np.zeros(0)

    def objective(xq):
        return dual_bregman(gen, xp, xq) if dual else bregman(gen, xp, xq)

    def reduced_gradient(u, hint=None):
        xq = sub.point(gen, u, hint)
        return sub.basis.T @ _chart_gradient(gen, xp, xq, sub, dual), xq

    u = sub.coordinates(gen, xp)
    try:
        if not sub.in_box(u):
            raise DomainError("start outside box")
        g, xq = reduced_gradient(u)
    except (DomainError, InversionError):
        u = np.zeros(sub.m)
        if not sub.in_box(u):
            u = 0.5 * (sub.lower + sub.upper)
        g, xq = reduced_gradient(u)
    f = objective(xq)
    scale = tol * (1.0 + np.linalg.norm(sub.basis, axis=0).max())

    for _ in range(max_iter):
        H_chart = _chart_hessian(gen, xq, sub, dual)
        if H_chart is not None:
            H = sub.basis.T @ H_chart @ sub.basis
        else:
            H = fd_jacobian(lambda w: reduced_gradient(w, xq)[0], u, 1e-6)
            H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise ProjectionError("singular restricted Hessian", best=xq, gradient_norm=np.linalg.norm(g))
        converged = np.linalg.norm(g) <= scale
        t = 1.0
        gn = np.linalg.norm(g)
        for _ in range(60):
            cand = u - t * step
            try:
                gc, xc = reduced_gradient(cand, xq)
            except (DomainError, InversionError):
                t *= 0.5
                continue
            fc = objective(xc)
            if fc < f - 1e-4 * t * (g @ step) or (
                np.linalg.norm(gc) < gn and fc <= f + 1e-13 * (1.0 + abs(f))
            ):
                u, g, xq, f = cand, gc, xc, fc
                break
            t *= 0.5
        else:
            # a stalled search within 1e3 of the threshold sits at the
            # rounding floor of the inverse gradient map
            if converged or gn <= 1e3 * scale:
                break
            raise ProjectionError(
                f"projection line search failed (gradient norm {gn:.3e}); "
                "the minimizer may lie on the domain boundary",
                best=xq,
                gradient_norm=gn,
            )
        if converged:
            break
    else:
        if np.linalg.norm(g) > scale:
            raise ProjectionError(
                f"projection did not converge (gradient norm {np.linalg.norm(g):.3e})",
                best=xq,
                gradient_norm=np.linalg.norm(g),
            )
    eig = np.linalg.eigvalsh(H)
    if eig[0] <= 1e-10 * max(1.0, eig[-1]) or eig[-1] > 1e12 * eig[0]:
        warnings.warn("restricted objective is nearly singular; the projection may not be unique",
                      NonUniqueProjectionWarning, stacklevel=3)
    return xq, u


def geodesic_projection(gen: GeneratorSpec, p, sub: AffineSubmanifold, *, tol=1e-12, max_iter=100) -> PrimalCoords:
    """Member of ``sub`` minimizing ``D[P||Q]``.

    Unique when ``sub`` is flat in the dual chart; the primal geodesic from
    the result to P is then orthogonal to ``sub``.
    """
    return PrimalCoords(_project(gen, p, sub, False, tol, max_iter)[0])


def dual_geodesic_projection(gen: GeneratorSpec, p, sub: AffineSubmanifold, *, tol=1e-12, max_iter=100) -> PrimalCoords:
    """Member of ``sub`` minimizing ``D[Q||P]``; unique for primal-flat ``sub``."""
    return PrimalCoords(_project(gen, p, sub, True, tol, max_iter)[0])


def projection_defects(gen: GeneratorSpec, p, q, sub: AffineSubmanifold, dual: bool = False) -> np.ndarray:
    """Scaled orthogonality defect at ``q`` for each basis direction of ``sub``.

    For the geodesic projection this is the cosine between ``xi_P - xi_Q`` and
    the dual-chart tangent of each basis direction; for the dual projection,
    between ``xi*_P - xi*_Q`` and the primal-chart tangent. Zero at an exact
    projection.
    """
    xp, xq = gen.check(p), gen.check(q)
    G = gen.hess(xq)
    if dual:
        a = to_dual(gen, xp) - to_dual(gen, xq)
        tangents = sub.basis if sub.chart == PRIMAL else np.linalg.solve(G, sub.basis)
    else:
        a = xp - xq
        tangents = G @ sub.basis if sub.chart == PRIMAL else sub.basis
    na = np.linalg.norm(a)
    if na == 0 or sub.m == 0:
        return np.zeros(sub.m)
    return (a @ tangents) / (na * np.linalg.norm(tangents, axis=0))
