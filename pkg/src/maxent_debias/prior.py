"""Reweighted data distributions and the uniform/data mixture prior."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .domain import BlockKind, Dataset, DomainSchema
from .errors import EmptyCell, InvalidMixture, InvalidPoint, InvalidTau, SchemaError


@dataclass(frozen=True, eq=False)
class ReweightedDistribution:
    """A probability distribution supported on the distinct points of a dataset.

    ``tau`` is the statistical-rate parameter the weights were built with, or
    ``None`` for plain empirical weights.
    """

    schema: DomainSchema
    support: NDArray[np.uint8]
    weights: NDArray[np.float64]
    tau: float | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sup = np.ascontiguousarray(self.support, dtype=np.uint8).reshape(-1, self.schema.d)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if sup.shape[0] != w.shape[0]:
            raise ValueError("support and weights differ in length")
        if sup.shape[0] == 0:
            raise ValueError("a weighted distribution needs a non-empty support")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        sup.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_index", {row.tobytes(): i for i, row in enumerate(sup)})

    def __len__(self) -> int:
        return self.support.shape[0]

    @cached_property
    def support_f64(self) -> NDArray[np.float64]:
        return self.support.astype(np.float64)

    @cached_property
    def log_weights(self) -> NDArray[np.float64]:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    @cached_property
    def support_values(self) -> NDArray[np.int64]:
        return self.schema.value_indices(self.support)

    def weight(self, point: ArrayLike) -> float:
        """Weight of ``point``; zero off the support."""
        key = np.asarray(point, dtype=np.uint8).reshape(-1).tobytes()
        i = self._index.get(key)
        return 0.0 if i is None else float(self.weights[i])


def _protected_and_label(schema: DomainSchema) -> tuple[int, int]:
    zb, yb = schema.protected_block, schema.label_block
    if schema.blocks[zb].kind is not BlockKind.BIT:
        raise SchemaError("reweighting needs a binary protected attribute; binarise it at ingestion")
    return zb, yb


def reweight(ds: Dataset, tau: float = 1.0) -> ReweightedDistribution:
    """Assign weights to the points of ``ds`` so that every label value has
    joint mass in the ``tau_group`` exactly ``tau`` times that of the other
    protected group.

    Counts are accumulated as exact rationals; only the final normalised
    weights are rounded to floats.
    """
    if not (isinstance(tau, (int, float)) and math.isfinite(tau) and 0.0 < tau <= 1.0):
        raise InvalidTau(f"tau must lie in (0, 1], got {tau!r}")
    schema = ds.schema
    zb, yb = _protected_and_label(schema)
    vals = ds.value_indices()
    ys, zs = vals[:, yb], vals[:, zb]
    g = schema.tau_group
    ftau = Fraction(tau)

    c_y: dict[int, int] = {}
    c_yz: dict[tuple[int, int], Fraction] = {}
    for y, z, n in zip(ys.tolist(), zs.tolist(), ds.freqs.tolist()):
        c_y[y] = c_y.get(y, 0) + n
        c_yz[(y, z)] = c_yz.get((y, z), Fraction(0)) + n
    for y in c_y:
        for z in (0, 1):
            if (y, z) not in c_yz:
                raise EmptyCell(y, z)
    for key in c_yz:
        if key[1] == g:
            c_yz[key] /= ftau

    raw = [n * Fraction(c_y[y]) / c_yz[(y, z)] for y, z, n in zip(ys.tolist(), zs.tolist(), ds.freqs.tolist())]
    total = sum(raw)
    weights = np.array([float(r / total) for r in raw])
    return ReweightedDistribution(schema, ds.points, weights, tau=float(tau))


def empirical_weights(ds: Dataset) -> ReweightedDistribution:
    """Weights ``n_alpha / N``: the unadjusted empirical distribution."""
    total = ds.N
    weights = np.array([float(Fraction(int(n), total)) for n in ds.freqs])
    return ReweightedDistribution(ds.schema, ds.points, weights, tau=None)


@dataclass(frozen=True, eq=False)
class MixedPrior:
    """``C * uniform + (1 - C) * weighted`` over the whole domain."""

    C: float
    weighted: ReweightedDistribution

    def __post_init__(self):
        if not (math.isfinite(self.C) and 0.0 <= self.C <= 1.0):
            raise InvalidMixture(f"mixing weight C must lie in [0, 1], got {self.C!r}")
        object.__setattr__(self, "C", float(self.C))

    @property
    def schema(self) -> DomainSchema:
        return self.weighted.schema

    @property
    def log_C(self) -> float:
        return math.log(self.C) if self.C > 0 else -math.inf

    @property
    def log_1mC(self) -> float:
        return math.log1p(-self.C) if self.C < 1 else -math.inf

    @property
    def mass_floor(self) -> float:
        """Smallest mass any domain point receives."""
        try:
            return self.C / self.schema.domain_size
        except OverflowError:
            return math.exp(self.log_C - self.schema.log_domain_size)


def mix_prior(C: float, w: ReweightedDistribution) -> MixedPrior:
    return MixedPrior(C, w)


def prior_mass(q: MixedPrior, alpha: ArrayLike) -> float:
    """Prior probability of one domain point."""
    a = np.asarray(alpha)
    if a.shape != (q.schema.d,):
        raise InvalidPoint(f"expected a point with {q.schema.d} coordinates")
    q.schema.value_indices(a.reshape(1, -1))
    return q.mass_floor + (1.0 - q.C) * q.weighted.weight(a)
