"""Metric fields, Levi-Civita connection, and geodesic integration.

All integrators are classical fourth-order Runge-Kutta on a uniform grid that
ends exactly at ``t_end``. Metric partial derivatives come from the metric
itself when it supplies them (e.g. third derivatives of a generator) and
from central differences otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import DegeneracyError, DomainError, IntegrationError, SignatureError, UnreachableError
from .generator import GeneratorSpec, fd_jacobian, symmetrize

RIEMANNIAN = "riemannian"
PSEUDO = "pseudo"

METRIC_STEP = 1e-4
LIGHTLIKE_TOL = 1e-12


@dataclass(frozen=True)
class MetricField:
    """A field of symmetric non-degenerate matrices ``G(xi)``.

    ``partials``, if given, returns ``dG[k, i, j] = d g_ij / d xi_k``.
    """

    dim: int
    fundamental: Callable[[np.ndarray], np.ndarray]
    signature: str = RIEMANNIAN
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain_guard: Optional[Callable[[np.ndarray], bool]] = None
    source: str = "user"

    def __post_init__(self):
        if self.signature not in (RIEMANNIAN, PSEUDO):
            raise ValueError(f"signature must be 'riemannian' or 'pseudo', got {self.signature!r}")

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        return self.domain_guard is None or bool(self.domain_guard(x))

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise DomainError(f"point {x.tolist()} is outside the metric's domain", point=x)
        return x

    def matrix(self, x) -> np.ndarray:
        G = np.asarray(self.fundamental(np.asarray(x, dtype=float)), dtype=float)
        return symmetrize(G.reshape(self.dim, self.dim))

    def derivatives(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.partials is not None:
            dG = np.asarray(self.partials(x), dtype=float).reshape((self.dim,) * 3)
        else:
            dG = np.moveaxis(fd_jacobian(self.matrix, x, METRIC_STEP), -1, 0)
        return symmetrize(dG)

    def inverse(self, x) -> np.ndarray:
        G = self.matrix(x)
        try:
            Ginv = np.linalg.inv(G)
        except np.linalg.LinAlgError:
            raise DegeneracyError(f"fundamental matrix is singular at {np.asarray(x).tolist()}")
        if not np.all(np.isfinite(Ginv)):
            raise DegeneracyError(f"fundamental matrix is numerically singular at {np.asarray(x).tolist()}")
        return Ginv

    def _raw(self, x):
        return np.asarray(self.fundamental(x), dtype=float).reshape(self.dim, self.dim)

    def _raw_partials(self, x):
        if self.partials is not None:
            return np.asarray(self.partials(x), dtype=float).reshape((self.dim,) * 3)
        return self.derivatives(x)


def metric_from_generator(gen: GeneratorSpec) -> MetricField:
    """Hessian metric ``G = hess psi``; partials are the third derivatives."""
    return MetricField(
        dim=gen.dim,
        fundamental=gen.hessian if gen.hessian is not None else gen.hess,
        signature=RIEMANNIAN,
        partials=gen.third,
        domain_guard=gen.domain_guard,
        source="generator",
    )


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    components: np.ndarray


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray


@dataclass
class GeodesicSolution:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    kinetic: np.ndarray
    terminal: str = "completed"

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def completed(self) -> bool:
        return self.terminal == "completed"

    def kinetic_drift(self) -> float:
        """Largest relative deviation of ``g(v, v)`` from its initial value."""
        k0 = self.kinetic[0]
        if k0 == 0:
            return float(np.max(np.abs(self.kinetic)))
        return float(np.max(np.abs(self.kinetic - k0)) / abs(k0))


@dataclass
class HamiltonianSolution:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    terminal: str = "completed"

    def energy_drift(self) -> float:
        e0 = self.energy[0]
        if e0 == 0:
            return float(np.max(np.abs(self.energy)))
        return float(np.max(np.abs(self.energy - e0)) / abs(e0))


def christoffel(metric: MetricField, x) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[k, i, j]``, symmetric in ``i, j``."""
    x = metric.check(x)
    Ginv = metric.inverse(x)
    dG = metric.derivatives(x)  # dG[k, i, j] = d_k g_ij
    # lowered[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = dG.transpose(2, 0, 1) + dG.transpose(2, 1, 0) - dG
    gamma = 0.5 * np.einsum("kl,lij->kij", Ginv, lowered)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def _acceleration(metric, x, v):
    """``-Gamma^k_ij v^i v^j`` without forming the symbols.

    With ``A[k, i, j] = d_k g_ij`` this is
    ``-G^-1 (2 sum_i v_i A[i] v - (A v) v) / 2``.
    """
    d = metric.dim
    A = metric._raw_partials(x)
    M = (v @ A.reshape(d, d * d)).reshape(d, d)
    rhs = 2.0 * (v @ M) - (A @ v) @ v
    try:
        return -0.5 * np.linalg.solve(metric._raw(x), rhs)
    except np.linalg.LinAlgError:
        raise DegeneracyError(f"fundamental matrix is singular at {x.tolist()}")


def _grid(t_end, step):
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    n = max(1, int(math.ceil(t_end / step - 1e-9)))
    return np.linspace(0.0, t_end, n + 1)


def _rk4(rhs, y0, times, inside, what):
    """Integrate ``y' = rhs(y)``; stop early when a stage leaves the domain."""
    ys = [np.asarray(y0, dtype=float)]
    terminal = "completed"
    with np.errstate(over="ignore", invalid="ignore"):
        for t0, t1 in zip(times[:-1], times[1:]):
            h = t1 - t0
            y = ys[-1]
            try:
                k1 = rhs(y)
                y2 = y + 0.5 * h * k1
                if not inside(y2):
                    terminal = "left_domain"
                    break
                k2 = rhs(y2)
                y3 = y + 0.5 * h * k2
                if not inside(y3):
                    terminal = "left_domain"
                    break
                k3 = rhs(y3)
                y4 = y + h * k3
                if not inside(y4):
                    terminal = "left_domain"
                    break
                k4 = rhs(y4)
            except DegeneracyError as exc:
                raise IntegrationError(f"{what} met a degenerate metric after t={t0:.6g}: {exc}", last_time=t0)
            y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y_next)):
                raise IntegrationError(f"{what} produced a non-finite state after t={t0:.6g}", last_time=t0)
            if not inside(y_next):
                terminal = "left_domain"
                break
            ys.append(y_next)
    return np.array(ys), times[: len(ys)], terminal


def _unpack_tangent(start):
    if isinstance(start, TangentVector):
        return np.asarray(start.base, dtype=float), np.asarray(start.components, dtype=float)
    x, v = start
    return np.asarray(x, dtype=float), np.asarray(v, dtype=float)


def geodesic_shoot(metric: MetricField, start, t_end: float = 1.0, step: float = 1e-3) -> GeodesicSolution:
    """Integrate the geodesic equation from a point and initial velocity.

    ``start`` is a :class:`TangentVector` or an ``(x0, v0)`` pair.
    """
    x0, v0 = _unpack_tangent(start)
    metric.check(x0)
    d = metric.dim
    times = _grid(t_end, step)

    def rhs(y):
        v = y[d:]
        return np.concatenate([v, _acceleration(metric, y[:d], v)])

    def inside(y):
        return metric.contains(y[:d])

    ys, times, terminal = _rk4(rhs, np.concatenate([x0, v0]), times, inside, "geodesic integration")
    points, velocities = ys[:, :d], ys[:, d:]
    kinetic = np.array([v @ metric.matrix(x) @ v for x, v in zip(points, velocities)])
    return GeodesicSolution(times, points, velocities, kinetic, terminal)


def geodesic_connect(
    metric: MetricField,
    p,
    q,
    *,
    step: float = 1e-2,
    tol: float = 1e-7,
    max_iter: int = 50,
) -> GeodesicSolution:
    """Geodesic on [0, 1] from ``p`` to ``q`` by Newton shooting.

    The initial velocity starts at ``q - p``, halved while that shot fails to
    reach unit time, and is corrected by damped quasi-Newton steps on the
    endpoint map (a forward-difference Jacobian refreshed by Broyden updates)
    until the endpoint misses ``q`` by at most ``tol``.
    """
    p = metric.check(p)
    q = metric.check(q)

    def mismatch(v):
        sol = geodesic_shoot(metric, (p, v), 1.0, step)
        if not sol.completed:
            return sol, None
        return sol, sol.endpoint - q

    # the chord velocity is shortened until a first shot survives unit time
    v = q - p
    for _ in range(30):
        try:
            sol, r = mismatch(v)
        except IntegrationError as exc:
            sol, r, reason = None, None, str(exc)
        else:
            reason = "initial shot left the domain"
        if r is not None:
            break
        v = 0.5 * v
    else:
        raise UnreachableError(f"initial shot failed: {reason}")
    rn = np.linalg.norm(r)

    def jacobian(v, r):
        J = np.empty((metric.dim, metric.dim))
        for j in range(metric.dim):
            h = 1e-7 * (1.0 + abs(v[j]))
            w = v.copy()
            w[j] += h
            _, res = mismatch(w)
            if res is None:
                raise UnreachableError("shooting Jacobian probe left the domain", mismatch=rn)
            J[:, j] = (res - r) / h
        return J

    J, fresh = jacobian(v, r), True
    for _ in range(max_iter):
        if rn <= tol:
            return sol
        try:
            dv = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            if fresh:
                raise UnreachableError("singular shooting Jacobian (conjugate point?)", mismatch=rn)
            J, fresh = jacobian(v, r), True
            continue
        t = 1.0
        for _ in range(30):
            cand = v - t * dv
            try:
                s, res = mismatch(cand)
            except IntegrationError:
                res = None
            if res is not None and np.linalg.norm(res) < rn:
                # Broyden rank-one update along the accepted step
                dx, dr = cand - v, res - r
                J = J + np.outer(dr - J @ dx, dx) / (dx @ dx)
                v, sol, r, rn, fresh = cand, s, res, np.linalg.norm(res), False
                break
            t *= 0.5
        else:
            if fresh:
                raise UnreachableError(f"shooting stalled with endpoint error {rn:.3e}", mismatch=rn)
            J, fresh = jacobian(v, r), True
    if rn <= tol:
        return sol
    raise UnreachableError(f"shooting did not converge (endpoint error {rn:.3e})", mismatch=rn)


def _require_riemannian(metric):
    if metric.signature != RIEMANNIAN:
        raise SignatureError(
            "lengths are defined only for Riemannian metrics; use classify_tangent for pseudo metrics"
        )


def arc_length(metric: MetricField, curve, velocities=None, times=None) -> float:
    """Length of a sampled curve by composite Simpson quadrature.

    ``curve`` is a :class:`GeodesicSolution` or an array of points; for the
    latter ``times`` is required and missing velocities are differentiated
    numerically.
    """
    _require_riemannian(metric)
    if isinstance(curve, GeodesicSolution):
        times, points, velocities = curve.times, curve.points, curve.velocities
    else:
        points = np.asarray(curve, dtype=float)
        if times is None:
            raise ValueError("a sampled curve needs its times")
        times = np.asarray(times, dtype=float)
        if velocities is None:
            velocities = np.gradient(points, times, axis=0, edge_order=2)
    if len(times) < 2:
        return 0.0
    speed2 = np.array([v @ metric.matrix(metric.check(x)) @ v for x, v in zip(points, velocities)])
    if np.any(speed2 < -LIGHTLIKE_TOL):
        raise SignatureError("negative g(v, v) on the curve; use classify_tangent")
    return float(simpson(np.sqrt(np.maximum(speed2, 0.0)), x=times))


def distance(metric: MetricField, p, q, *, step: float = 1e-2, tol: float = 1e-7) -> float:
    """Geodesic distance; ``math.inf`` when no connecting geodesic is found.

    The shooting solution is a locally length-minimizing geodesic; no global
    search over initial velocities is attempted.
    """
    _require_riemannian(metric)
    p = metric.check(p)
    q = metric.check(q)
    if np.array_equal(p, q):
        return 0.0
    try:
        sol = geodesic_connect(metric, p, q, step=step, tol=tol)
    except (UnreachableError, IntegrationError, DegeneracyError):
        return math.inf
    return arc_length(metric, sol)


def hamiltonian(metric: MetricField, q, p) -> float:
    p = np.asarray(p, dtype=float)
    return 0.5 * float(p @ metric.inverse(q) @ p)


def _inverse_partials(metric, q):
    """``dGinv[k] = d(G^-1)/dq_k``."""
    if metric.partials is not None:
        Ginv = metric.inverse(q)
        dG = metric.derivatives(q)
        return -(Ginv @ dG @ Ginv)
    return np.moveaxis(fd_jacobian(metric.inverse, q, METRIC_STEP), -1, 0)


def hamiltonian_flow(metric: MetricField, start, t_end: float = 1.0, step: float = 1e-3) -> HamiltonianSolution:
    """Integrate Hamilton's equations for ``H(q, p) = p^T G(q)^-1 p / 2``."""
    if isinstance(start, PhasePoint):
        q0, p0 = np.asarray(start.q, dtype=float), np.asarray(start.p, dtype=float)
    else:
        q0, p0 = (np.asarray(a, dtype=float) for a in start)
    metric.check(q0)
    d = metric.dim
    times = _grid(t_end, step)

    def rhs(y):
        q, p = y[:d], y[d:]
        qdot = metric.inverse(q) @ p
        dH = 0.5 * (_inverse_partials(metric, q) @ p) @ p
        return np.concatenate([qdot, -dH])

    def inside(y):
        return metric.contains(y[:d])

    ys, times, terminal = _rk4(rhs, np.concatenate([q0, p0]), times, inside, "Hamiltonian flow")
    qs, ps = ys[:, :d], ys[:, d:]
    energy = np.array([hamiltonian(metric, q, p) for q, p in zip(qs, ps)])
    return HamiltonianSolution(times, qs, ps, energy, terminal)


def classify_tangent(metric: MetricField, v, tol: float = LIGHTLIKE_TOL) -> str:
    """'spacelike', 'lightlike' or 'timelike' by the sign of ``g(v, v)``."""
    x, comps = _unpack_tangent(v)
    g = float(comps @ metric.matrix(metric.check(x)) @ comps)
    if g > tol:
        return "spacelike"
    if g < -tol:
        return "timelike"
    return "lightlike"
