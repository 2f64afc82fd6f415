"""Value, gradient and Hessian of the max-entropy dual objective.

For a prior ``q = C*u + (1-C)*w`` and target marginal ``theta`` the dual is

    h(lam) = log sum_alpha q(alpha) exp(<alpha - theta, lam>)

The sum splits into a uniform part, which factorises over attribute blocks
because the uniform measure is a product measure, and a finite sum over the
support of ``w``.  Under the tilted uniform part the blocks stay independent,
so its second moment is block diagonal plus a rank-one term; everything is
carried in the log domain with shifted exponents ``<alpha - theta, lam>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .domain import ENUMERATION_LIMIT
from .errors import DimensionMismatch, DomainTooLarge, NonFiniteInput
from .prior import MixedPrior


@dataclass(frozen=True)
class DualEvaluation:
    """Dual objective and derivatives at one point.

    ``log_partition`` is the unshifted ``log sum q(alpha) exp(<alpha, lam>)``,
    i.e. ``value + <theta, lam>``.  ``mean`` is the expectation of ``alpha``
    under the tilted prior, so ``gradient == mean - theta``.
    """

    value: float
    gradient: NDArray[np.float64] | None
    hessian: NDArray[np.float64] | None
    log_partition: float
    mean: NDArray[np.float64] | None = None


def _as_vectors(q: MixedPrior, theta: ArrayLike, lam: ArrayLike):
    d = q.schema.d
    th = np.asarray(theta, dtype=np.float64).reshape(-1)
    lm = np.asarray(lam, dtype=np.float64).reshape(-1)
    if th.shape[0] != d or lm.shape[0] != d:
        raise DimensionMismatch(f"expected vectors of length {d}, got {th.shape[0]} and {lm.shape[0]}")
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(lm))):
        raise NonFiniteInput("theta and lambda must be finite")
    return th, lm


def _uniform_part(q: MixedPrior, theta, lam, order: int):
    """Log mass, mean and block-diagonal covariance of the tilted uniform part."""
    schema = q.schema
    d = schema.d
    log_mass = q.log_C
    mean = np.zeros(d)
    cov = np.zeros((d, d)) if order >= 2 else None
    for b in schema.blocks:
        sl = b.coords
        P = b.patterns
        phi = P @ lam[sl] - theta[sl] @ lam[sl]
        lse = logsumexp(phi)
        log_mass += lse - math.log(b.cardinality)
        if order >= 1:
            pi = np.exp(phi - lse)
            m = pi @ P
            mean[sl] = m
            if order >= 2:
                D = P - m
                cov[sl, sl] = D.T @ (pi[:, None] * D)
    return log_mass, mean, cov


def evaluate(q: MixedPrior, theta: ArrayLike, lam: ArrayLike, order: int = 2) -> DualEvaluation:
    """Evaluate the dual and its derivatives up to ``order`` (0, 1 or 2)."""
    th, lm = _as_vectors(q, theta, lam)
    w = q.weighted
    lu, mu_u, cov_u = _uniform_part(q, th, lm, order)
    S = w.support_f64
    a = q.log_1mC + w.log_weights + (S @ lm - th @ lm)
    value = float(logsumexp(np.concatenate(([lu], a))))
    if not math.isfinite(value):
        raise NonFiniteInput("dual value is not finite")
    log_partition = value + float(th @ lm)
    if order == 0:
        return DualEvaluation(value, None, None, log_partition)

    rho_u = math.exp(lu - value)
    rho = np.exp(a - value)
    mean = rho_u * mu_u + rho @ S
    grad = mean - th
    if order == 1:
        return DualEvaluation(value, grad, None, log_partition, mean)

    # mixture-of-covariances form keeps the result symmetric PSD up to rounding
    Du = mu_u - mean
    Ds = S - mean
    H = rho_u * (cov_u + np.outer(Du, Du)) + Ds.T @ (rho[:, None] * Ds)
    H = 0.5 * (H + H.T)
    return DualEvaluation(value, grad, H, log_partition, mean)


def dual_value(q: MixedPrior, theta: ArrayLike, lam: ArrayLike) -> float:
    return evaluate(q, theta, lam, order=0).value


def dual_gradient(q: MixedPrior, theta: ArrayLike, lam: ArrayLike) -> NDArray[np.float64]:
    return evaluate(q, theta, lam, order=1).gradient


def dual_hessian(q: MixedPrior, theta: ArrayLike, lam: ArrayLike) -> NDArray[np.float64]:
    return evaluate(q, theta, lam, order=2).hessian


def brute_force_dual(
    q: MixedPrior, theta: ArrayLike, lam: ArrayLike, order: int = 2
) -> DualEvaluation:
    """Reference evaluation by summing over every point of the domain.

    Uses the unshifted partition function and the prior mass of each
    enumerated point directly; none of the block factorisation is involved.
    """
    th, lm = _as_vectors(q, theta, lam)
    schema = q.schema
    if schema.domain_size > ENUMERATION_LIMIT:
        raise DomainTooLarge(f"domain of {schema.domain_size} points is too large to enumerate")
    values = schema.enumerate_values()
    pts = schema.points_from_values(values).astype(np.float64)
    mass = np.full(pts.shape[0], q.C / schema.domain_size)
    codes = schema.codes(q.weighted.support_values)
    mass[codes] += (1.0 - q.C) * q.weighted.weights
    with np.errstate(divide="ignore"):
        logq = np.log(mass)
    t = logq + pts @ lm
    log_g = float(logsumexp(t))
    value = log_g - float(th @ lm)
    if order == 0:
        return DualEvaluation(value, None, None, log_g)
    p = np.exp(t - log_g)
    mean = p @ pts
    grad = mean - th
    if order == 1:
        return DualEvaluation(value, grad, None, log_g, mean)
    D = pts - mean
    H = D.T @ (p[:, None] * D)
    return DualEvaluation(value, grad, H, log_g, mean)


def directional_derivatives(
    q: MixedPrior, theta: ArrayLike, lam: ArrayLike, y: ArrayLike, step: float = 1e-4
) -> tuple[float, float]:
    """Second directional derivative (exact) and third (central difference).

    ``D2 = y^T H(lam) y``; ``D3`` differentiates ``t -> y^T H(lam + t y) y``
    numerically at ``t = 0``.
    """
    th, lm = _as_vectors(q, theta, lam)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if yv.shape != lm.shape:
        raise DimensionMismatch("direction has the wrong length")
    if not np.any(yv):
        return 0.0, 0.0
    d2 = float(yv @ dual_hessian(q, th, lm) @ yv)
    fp = float(yv @ dual_hessian(q, th, lm + step * yv) @ yv)
    fm = float(yv @ dual_hessian(q, th, lm - step * yv) @ yv)
    return d2, (fp - fm) / (2.0 * step)
