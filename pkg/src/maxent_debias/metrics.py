"""Fairness and closeness metrics for distributions and datasets.

Rates on a fitted model are exact: group masses come from restricted
partition functions rather than from samples.  Rates on a dataset use its
frequencies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .domain import ENUMERATION_LIMIT, BlockKind, Dataset
from .errors import (
    DomainTooLarge,
    HypothesisViolated,
    SchemaError,
    SchemaMismatch,
    ZeroGroupMass,
    ZeroJointMass,
)
from .prior import MixedPrior
from .sampler import PartialAssignment, restricted_log_partition
from .solver import MaxEntModel

Source = Union[MaxEntModel, MixedPrior, Dataset]


class MetricSource(str, Enum):
    EXACT = "exact"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class FairnessReport:
    representation_rate: float
    statistical_rate: float
    group_masses: dict[int, float]
    group_conditionals: dict[int, float]
    label_value: int
    protected_block: int
    source: MetricSource

    def to_dict(self) -> dict:
        return {
            "representation_rate": self.representation_rate,
            "statistical_rate": self.statistical_rate,
            "group_masses": {str(k): v for k, v in self.group_masses.items()},
            "group_conditionals": {str(k): v for k, v in self.group_conditionals.items()},
            "label_value": self.label_value,
            "protected_block": self.protected_block,
            "source": self.source.value,
        }


def _as_model(src: Source) -> MaxEntModel | Dataset:
    if isinstance(src, MixedPrior):
        return MaxEntModel.from_prior(src)
    if isinstance(src, (MaxEntModel, Dataset)):
        return src
    raise TypeError(f"cannot compute metrics on {type(src).__name__}")


def group_tables(src: Source, label_value: int = 1) -> tuple[NDArray[np.float64], NDArray[np.float64], MetricSource]:
    """``P(Z=z)`` and ``P(Y=y, Z=z)`` for every protected category ``z``."""
    obj = _as_model(src)
    schema = obj.schema
    zb, yb = schema.protected_block, schema.label_block
    kz = schema.blocks[zb].cardinality
    if not 0 <= label_value < schema.blocks[yb].cardinality:
        raise ValueError(f"label value {label_value} out of range")
    if isinstance(obj, Dataset):
        vals = obj.value_indices()
        f = obj.freqs.astype(np.float64)
        mass = np.bincount(vals[:, zb], weights=f, minlength=kz) / obj.N
        hit = vals[:, yb] == label_value
        joint = np.bincount(vals[hit, zb], weights=f[hit], minlength=kz) / obj.N
        return mass, joint, MetricSource.EMPIRICAL
    logz = restricted_log_partition(obj, PartialAssignment(schema))
    mass = np.empty(kz)
    joint = np.empty(kz)
    for z in range(kz):
        mass[z] = math.exp(restricted_log_partition(obj, PartialAssignment(schema, {zb: z})) - logz)
        pa = PartialAssignment(schema, {zb: z, yb: label_value})
        joint[z] = math.exp(restricted_log_partition(obj, pa) - logz)
    return mass, joint, MetricSource.EXACT


def _min_ratio(x: NDArray[np.float64]) -> float:
    # the smallest ratio over ordered pairs is min / max
    return float(x.min() / x.max())


def representation_rate(src: Source) -> float:
    """Smallest ratio ``P(Z=z_i) / P(Z=z_j)`` over protected categories."""
    mass, _, _ = group_tables(src)
    if np.any(mass <= 0):
        raise ZeroGroupMass(f"a protected group has zero mass: {mass.tolist()}")
    return _min_ratio(mass)


def statistical_rate(src: Source, label_value: int = 1) -> float:
    """Smallest ratio ``P(Y=y | Z=z_i) / P(Y=y | Z=z_j)`` over protected categories."""
    mass, joint, _ = group_tables(src, label_value)
    if np.any(mass <= 0):
        raise ZeroGroupMass(f"a protected group has zero mass: {mass.tolist()}")
    if np.any(joint <= 0):
        raise ZeroJointMass(f"label {label_value} has zero mass in some group: {joint.tolist()}")
    return _min_ratio(joint / mass)


def fairness_report(src: Source, label_value: int = 1) -> FairnessReport:
    mass, joint, source = group_tables(src, label_value)
    if np.any(mass <= 0):
        raise ZeroGroupMass(f"a protected group has zero mass: {mass.tolist()}")
    if np.any(joint <= 0):
        raise ZeroJointMass(f"label {label_value} has zero mass in some group: {joint.tolist()}")
    cond = joint / mass
    return FairnessReport(
        representation_rate=_min_ratio(mass),
        statistical_rate=_min_ratio(cond),
        group_masses={z: float(m) for z, m in enumerate(mass)},
        group_conditionals={z: float(c) for z, c in enumerate(cond)},
        label_value=label_value,
        protected_block=_as_model(src).schema.protected_block,
        source=source,
    )


@dataclass(frozen=True)
class FairnessBound:
    """Guaranteed statistical rate ``tau_prime`` of a model fitted to a fair prior.

    ``delta`` is the largest gap between model and prior in the joint mass
    ``P(Y=y, Z=z)``.  Iterating yields ``(delta, tau_prime)``.
    """

    delta: float
    tau_prime: float
    theta_protected: float
    hypothesis_holds: bool

    def __iter__(self):
        return iter((self.delta, self.tau_prime))


def bound_formula(tau: float, C: float, delta: float) -> float:
    return tau - 4.0 * delta * (1.0 + tau) / (C + 4.0 * delta)


def fairness_bound(
    model: MaxEntModel,
    q: MixedPrior | None = None,
    label_value: int = 1,
    tau: float | None = None,
    C: float | None = None,
    slack: float = 1e-9,
) -> FairnessBound:
    """Lower bound on the statistical rate of ``model`` given its fair prior.

    The guarantee needs a binary protected attribute whose target marginal
    ``theta_l = P(Z=1)`` lies in ``[1/2, 1/(1+tau)]`` (with ``slack``).  When
    it does not, a :class:`HypothesisViolated` warning is issued and the
    numbers are still returned.
    """
    q = model.prior if q is None else q
    tau = (q.weighted.tau if q.weighted.tau is not None else 1.0) if tau is None else float(tau)
    C = q.C if C is None else float(C)
    schema = model.schema
    block = schema.blocks[schema.protected_block]
    if block.kind is not BlockKind.BIT:
        raise SchemaError("the fairness bound is defined for a binary protected attribute")
    _, joint_p, _ = group_tables(model, label_value)
    _, joint_q, _ = group_tables(q, label_value)
    delta = float(np.max(np.abs(joint_p - joint_q)))
    theta_l = float(model.theta[schema.protected_index])
    holds = 0.5 - slack <= theta_l <= 1.0 / (1.0 + tau) + slack
    if not holds:
        warnings.warn(
            HypothesisViolated(f"protected marginal {theta_l:.6g} outside [1/2, {1.0 / (1.0 + tau):.6g}]"),
            stacklevel=2,
        )
    return FairnessBound(delta, bound_formula(tau, C, delta), theta_l, holds)


def exact_probabilities(model: MaxEntModel | MixedPrior, limit: int = ENUMERATION_LIMIT) -> NDArray[np.float64]:
    """Probability of every domain point, in :meth:`DomainSchema.enumerate_values` order."""
    m = _as_model(model)
    schema = m.schema
    if schema.domain_size > limit:
        raise DomainTooLarge(
            f"domain of {schema.domain_size} points is too large to enumerate; use covariance_difference_norm"
        )
    pts = schema.enumerate_points(limit).astype(np.float64)
    prior = m.prior
    mass = np.full(pts.shape[0], prior.mass_floor)
    mass[schema.codes(prior.weighted.support_values)] += (1.0 - prior.C) * prior.weighted.weights
    with np.errstate(divide="ignore"):
        logp = np.log(mass) + pts @ m.lam - m.log_partition
    return np.exp(logp)


def empirical_probabilities(ds: Dataset, limit: int = ENUMERATION_LIMIT) -> NDArray[np.float64]:
    schema = ds.schema
    if schema.domain_size > limit:
        raise DomainTooLarge(f"domain of {schema.domain_size} points is too large to enumerate")
    p = np.zeros(schema.domain_size)
    np.add.at(p, schema.codes(ds.value_indices()), ds.freqs.astype(np.float64))
    return p / ds.N


def kl_divergence_smoothed(p: Source, reference_ds: Dataset, floor: float = 1e-7) -> float:
    """``KL(p || r)`` where ``r`` is the empirical distribution of
    ``reference_ds`` with empty points raised to ``floor`` and renormalised."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    obj = _as_model(p)
    if obj.schema != reference_ds.schema:
        raise SchemaMismatch("distributions live on different schemas")
    pv = empirical_probabilities(obj) if isinstance(obj, Dataset) else exact_probabilities(obj)
    r = empirical_probabilities(reference_ds)
    r = np.where(r > 0, r, floor)
    r /= r.sum()
    nz = pv > 0
    return float(np.sum(pv[nz] * (np.log(pv[nz]) - np.log(r[nz]))))


def _covariance(ds: Dataset) -> NDArray[np.float64]:
    vals = ds.value_indices().astype(np.float64)
    return np.atleast_2d(np.cov(vals, rowvar=False, fweights=ds.freqs, bias=True))


def covariance_difference_norm(ds_a: Dataset, ds_b: Dataset, squared: bool = False) -> float:
    """Frobenius norm of the difference of the attribute covariance matrices.

    Attributes enter as category indices (bits as 0/1).
    """
    if ds_a.schema != ds_b.schema:
        raise SchemaMismatch("datasets use different schemas")
    diff = _covariance(ds_a) - _covariance(ds_b)
    norm = float(np.linalg.norm(diff, "fro"))
    return norm * norm if squared else norm
