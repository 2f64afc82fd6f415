"""Minimisation of the dual objective and the resulting max-entropy model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .domain import BlockKind, Dataset, DomainSchema, clamp_interior, empirical_marginal, validate_interior
from .errors import (
    InconsistentMarginal,
    InvalidEta,
    NonFiniteInput,
    NotConverged,
    NumericalBreakdown,
    QPNotConverged,
    UnboundedRadius,
)
from .oracle import DualEvaluation, evaluate
from .prior import MixedPrior, ReweightedDistribution

log = logging.getLogger(__name__)


class SolverMode(str, Enum):
    DAMPED_NEWTON = "damped_newton"
    BOX_NEWTON = "box_newton"


class MarginalKind(str, Enum):
    EMPIRICAL = "empirical"
    REWEIGHTED = "reweighted"
    BALANCED = "balanced"


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``max_iterations=None`` picks a mode-dependent budget.  ``epsilon`` is the
    target dual accuracy used by the box-constrained method to size its box
    and inner tolerance.
    """

    epsilon: float = 1e-8
    mode: SolverMode = SolverMode.DAMPED_NEWTON
    max_iterations: int | None = None
    gradient_tolerance: float = 1e-9
    radius_override: float | None = None
    qp_seed: int = 0
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", SolverMode(self.mode))
        if not self.epsilon > 0 or not self.gradient_tolerance > 0:
            raise ValueError("epsilon and gradient_tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class MaxEntModel:
    """The distribution ``p(alpha) ∝ q(alpha) exp(<lam, alpha>)``."""

    prior: MixedPrior
    theta: NDArray[np.float64]
    lam: NDArray[np.float64]
    dual_value: float

    def __post_init__(self):
        for name in ("theta", "lam"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape[0] != self.prior.schema.d:
                raise ValueError(f"{name} has the wrong length")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def schema(self) -> DomainSchema:
        return self.prior.schema

    @classmethod
    def from_prior(cls, prior: MixedPrior, theta: ArrayLike | None = None) -> "MaxEntModel":
        """The prior itself, viewed as a model with ``lam = 0``."""
        d = prior.schema.d
        th = np.full(d, 0.5) if theta is None else theta
        return cls(prior, th, np.zeros(d), 0.0)

    @cached_property
    def log_partition(self) -> float:
        """``log sum_alpha q(alpha) exp(<lam, alpha>)``."""
        return evaluate(self.prior, self.theta, self.lam, order=0).log_partition

    def log_prob(self, points: ArrayLike) -> NDArray[np.float64]:
        pts = np.atleast_2d(np.asarray(points))
        self.schema.value_indices(pts)
        w = self.prior.weighted
        mass = np.array([self.prior.mass_floor + (1 - self.prior.C) * w.weight(p) for p in pts])
        with np.errstate(divide="ignore"):
            return np.log(mass) + pts.astype(np.float64) @ self.lam - self.log_partition

    def prob(self, point: ArrayLike) -> float:
        return float(np.exp(self.log_prob(point)[0]))


@dataclass(frozen=True)
class SolverResult:
    model: MaxEntModel
    iterations: int
    final_gradient_norm: float
    dual_trace: tuple[float, ...]
    converged: bool
    mode: SolverMode = SolverMode.DAMPED_NEWTON
    info: dict = field(default_factory=dict)


def bounding_radius(d: int, eta: float, C: float) -> float:
    """Norm bound ``(d / eta) * log(1 / C)`` on the optimal dual vector."""
    if not (0.0 < eta <= 0.5):
        raise InvalidEta(f"eta must lie in (0, 0.5], got {eta!r}")
    if not (0.0 < C <= 1.0):
        raise UnboundedRadius(f"no finite radius for C = {C!r}")
    return (d / eta) * math.log(1.0 / C)


def target_marginal(
    ds: Dataset,
    w: ReweightedDistribution | None = None,
    kind: MarginalKind | str = MarginalKind.EMPIRICAL,
    eta_min: float = 1e-6,
    clamp: bool = False,
) -> NDArray[np.float64]:
    """Build the marginal vector to match.

    ``empirical``: frequency-weighted data mean.  ``reweighted``: the mean
    under ``w``.  ``balanced``: data mean with the protected attribute set to
    an even split across its values.
    """
    kind = MarginalKind(kind)
    schema = ds.schema
    if kind is MarginalKind.REWEIGHTED:
        if w is None:
            raise ValueError("the reweighted marginal needs a weight distribution")
        theta = w.weights @ w.support_f64
    else:
        theta = empirical_marginal(ds)
        if kind is MarginalKind.BALANCED:
            zb = schema.blocks[schema.protected_block]
            theta[zb.coords] = 0.5 if zb.kind is BlockKind.BIT else 1.0 / zb.cardinality
    if clamp:
        theta = clamp_interior(theta, schema, eta_min)
    validate_interior(theta, eta_min)
    return theta


# -- inner quadratic program ---------------------------------------------

def inner_qp_solve(
    g: ArrayLike,
    H: ArrayLike,
    box: float,
    center: ArrayLike | None = None,
    R: float = math.inf,
    tol: float = 1e-10,
    seed: int = 0,
    max_sweeps: int = 20000,
) -> NDArray[np.float64]:
    """Minimise ``<g, y> + y^T H y / (2e)`` over ``|y|_inf <= box`` and
    ``|center + y|_inf <= R`` by projected coordinate descent.

    Sweeps visit coordinates in a seeded random order and stop once the
    Frank-Wolfe gap, an upper bound on the suboptimality, drops to ``tol``.
    """
    g = np.asarray(g, dtype=np.float64)
    A = np.asarray(H, dtype=np.float64) / math.e
    n = g.shape[0]
    c = np.zeros(n) if center is None else np.asarray(center, dtype=np.float64)
    lo = np.maximum(-box, -R - c)
    hi = np.minimum(box, R - c)
    if np.any(lo > hi):
        raise QPNotConverged("the box constraints are infeasible")
    y = np.clip(np.zeros(n), lo, hi)
    rng = np.random.default_rng(seed)
    diag = np.diag(A).copy()
    for _ in range(max_sweeps):
        grad = g + A @ y
        for i in rng.permutation(n):
            gi = grad[i]
            if diag[i] > 0:
                new = min(max(y[i] - gi / diag[i], lo[i]), hi[i])
            elif gi > 0:
                new = lo[i]
            elif gi < 0:
                new = hi[i]
            else:
                continue
            step = new - y[i]
            if step != 0.0:
                y[i] = new
                grad += step * A[:, i]
        grad = g + A @ y
        gap = float(np.sum(grad * y - np.where(grad > 0, grad * lo, grad * hi)))
        if gap <= tol:
            return y
    raise QPNotConverged(f"coordinate descent stopped with gap {gap:.3e} > {tol:.3e}")


# -- outer solvers --------------------------------------------------------

def _onehot_slices(schema: DomainSchema) -> list[slice]:
    return [b.coords for b in schema.blocks if b.kind is BlockKind.ONEHOT]


def _gauge(lam: NDArray, slices: list[slice]) -> NDArray:
    # lam + t * 1_block leaves the dual unchanged; keep the minimum-norm representative
    for sl in slices:
        lam[sl] -= lam[sl].mean()
    return lam


def _check_inputs(q: MixedPrior, theta: ArrayLike, eta_min: float):
    if q.C <= 0:
        raise UnboundedRadius("C = 0 gives a prior without full support; the dual may be unbounded")
    th = np.asarray(theta, dtype=np.float64).reshape(-1)
    if th.shape[0] != q.schema.d:
        raise ValueError("theta has the wrong length")
    eta = validate_interior(th, eta_min)
    for b in q.schema.blocks:
        if b.kind is BlockKind.ONEHOT and abs(th[b.coords].sum() - 1.0) > 1e-9:
            raise InconsistentMarginal(f"marginal of block {b.name!r} sums to {th[b.coords].sum()!r}")
    return th, eta


def _newton_direction(ev: DualEvaluation, slices: list[slice]) -> NDArray:
    H = ev.hessian.copy()
    d = H.shape[0]
    for sl in slices:
        k = sl.stop - sl.start
        H[sl, sl] += 1.0 / k
    scale = max(float(np.trace(H)) / d, 1e-300)
    mu = 0.0
    for _ in range(40):
        try:
            L = np.linalg.cholesky(H + mu * np.eye(d))
            p = -np.linalg.solve(L.T, np.linalg.solve(L, ev.gradient))
            if np.all(np.isfinite(p)):
                return _gauge(p, slices)
        except np.linalg.LinAlgError:
            pass
        mu = scale * 1e-12 if mu == 0.0 else mu * 10.0
    raise np.linalg.LinAlgError("Hessian could not be factorised")


def _solve_damped(q, theta, cfg: SolverConfig, slices):
    max_iter = cfg.max_iterations or 200
    lam = np.zeros(q.schema.d)
    ev = evaluate(q, theta, lam, 2)
    trace = [ev.value]
    it = 0
    stalled = False
    gnorm = float(np.abs(ev.gradient).max())
    while gnorm > cfg.gradient_tolerance and it < max_iter:
        it += 1
        try:
            p = _newton_direction(ev, slices)
            slope = float(ev.gradient @ p)
            if not slope < 0:
                raise np.linalg.LinAlgError("not a descent direction")
        except np.linalg.LinAlgError:
            lip = max(float(np.trace(ev.hessian)), 1e-12)
            p = _gauge(-ev.gradient / lip, slices)
            slope = float(ev.gradient @ p)
        accepted = None
        t = 1.0
        for _ in range(60):
            cand = lam + t * p
            try:
                v = evaluate(q, theta, cand, 0).value
            except NonFiniteInput:
                v = math.inf
            if v <= ev.value + 1e-4 * t * slope:
                accepted = cand
                break
            if v <= ev.value + 1e-13 * (1.0 + abs(ev.value)):
                # change is below rounding noise; accept if the gradient shrinks
                g_c = evaluate(q, theta, cand, 1).gradient
                if np.abs(g_c).max() < gnorm:
                    accepted = cand
                    break
            t *= 0.5
        if accepted is None:
            stalled = True
            break
        lam = _gauge(accepted, slices)
        ev = evaluate(q, theta, lam, 2)
        if not (math.isfinite(ev.value) and np.all(np.isfinite(ev.hessian))):
            raise NumericalBreakdown(f"non-finite dual evaluation at iteration {it}")
        trace.append(ev.value)
        gnorm = float(np.abs(ev.gradient).max())
    return lam, ev, trace, it, {"stalled": stalled}


def _solve_box(q, theta, cfg: SolverConfig, slices):
    d = q.schema.d
    log_term = math.log(1.0 / (q.C * cfg.epsilon))
    if log_term <= 0:
        raise ValueError("C * epsilon must be below 1 for the box-constrained method")
    R = cfg.radius_override if cfg.radius_override is not None else 8 * d * log_term
    T = math.ceil(16 * d * R * log_term)
    budget = min(T, cfg.max_iterations or 200_000)
    box = 1.0 / (8 * d)
    qp_tol = cfg.epsilon / (8 * d * R)
    lam = np.zeros(d)
    ev = evaluate(q, theta, lam, 2)
    trace = [ev.value]
    it = 0
    gnorm = float(np.abs(ev.gradient).max())
    while gnorm > cfg.gradient_tolerance and it < budget:
        it += 1
        y = inner_qp_solve(ev.gradient, ev.hessian, box, lam, R, qp_tol, seed=cfg.qp_seed + it)
        lam = _gauge(lam + y / math.e**2, slices)
        ev = evaluate(q, theta, lam, 2)
        if not math.isfinite(ev.value):
            raise NumericalBreakdown(f"non-finite dual value at iteration {it}")
        trace.append(ev.value)
        gnorm = float(np.abs(ev.gradient).max())
    return lam, ev, trace, it, {"R": R, "T": T, "box": box}


def solve(
    q: MixedPrior,
    theta: ArrayLike,
    cfg: SolverConfig | None = None,
    eta_min: float = 1e-6,
) -> SolverResult:
    """Minimise the dual objective starting from ``lam = 0``.

    Raises :class:`NotConverged` (carrying the partial result) when the
    gradient tolerance is not met and ``cfg.strict`` is set.
    """
    cfg = cfg or SolverConfig()
    th, eta = _check_inputs(q, theta, eta_min)
    slices = _onehot_slices(q.schema)
    if cfg.mode is SolverMode.BOX_NEWTON:
        lam, ev, trace, it, info = _solve_box(q, th, cfg, slices)
    else:
        lam, ev, trace, it, info = _solve_damped(q, th, cfg, slices)
    gnorm = float(np.abs(ev.gradient).max())
    converged = gnorm <= cfg.gradient_tolerance
    info["eta"] = eta
    model = MaxEntModel(q, th, lam, ev.value)
    result = SolverResult(model, it, gnorm, tuple(trace), converged, cfg.mode, info)
    log.debug("solver %s: %d iterations, |grad|=%.3e, h=%.12g", cfg.mode.value, it, gnorm, ev.value)
    if not converged and cfg.strict:
        raise NotConverged(
            f"{cfg.mode.value} stopped after {it} iterations with |grad|_inf = {gnorm:.3e}",
            result,
        )
    return result
