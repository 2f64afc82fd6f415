"""Exact marginals, conditionals and sampling for a fitted model.

Every quantity reduces to a restricted partition function: the sum of
``q(alpha) exp(<lam, alpha>)`` over the domain points that agree with a
partial assignment of block values.  The uniform part of the prior factorises
over blocks, so fixing a block swaps its block sum for a single term; the
weighted part is a sum over the support points consistent with the fixed
blocks.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .domain import Dataset, DomainSchema
from .errors import BlockAlreadyAssigned, InconsistentAssignment
from .solver import MaxEntModel

#: Samples drawn per independent RNG stream in :func:`sample_dataset`.
BATCH_SIZE = 1024


@dataclass(frozen=True)
class PartialAssignment:
    """Category values for a subset of the blocks (block index -> value)."""

    schema: DomainSchema
    fixed: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for j, v in dict(self.fixed).items():
            j, v = int(j), int(v)
            if not 0 <= j < self.schema.n_blocks:
                raise InconsistentAssignment(f"no block with index {j}")
            if not 0 <= v < self.schema.blocks[j].cardinality:
                raise InconsistentAssignment(f"value {v} out of range for block {self.schema.blocks[j].name!r}")
            clean[j] = v
        object.__setattr__(self, "fixed", MappingProxyType(dict(sorted(clean.items()))))

    def __hash__(self):
        return hash((id(self.schema), tuple(self.fixed.items())))

    @classmethod
    def of_point(cls, schema: DomainSchema, point: ArrayLike) -> "PartialAssignment":
        vals = schema.value_indices(np.asarray(point).reshape(1, -1))[0]
        return cls(schema, dict(enumerate(vals.tolist())))

    def with_value(self, block: int, value: int) -> "PartialAssignment":
        if block in self.fixed:
            raise BlockAlreadyAssigned(f"block {block} is already assigned")
        return PartialAssignment(self.schema, {**self.fixed, block: value})


class _Tables:
    """Per-model quantities shared by every restricted partition."""

    def __init__(self, model: MaxEntModel):
        schema = model.schema
        lam = model.lam
        self.phi = [b.patterns @ lam[b.coords] for b in schema.blocks]
        self.lse = np.array([logsumexp(p) for p in self.phi])
        self.log_u0 = model.prior.log_C - schema.log_domain_size
        w = model.prior.weighted
        self.values = w.support_values
        self.a = model.prior.log_1mC + w.log_weights + w.support_f64 @ lam


_TABLES: "weakref.WeakKeyDictionary[MaxEntModel, _Tables]" = weakref.WeakKeyDictionary()


def _tables(model: MaxEntModel) -> _Tables:
    t = _TABLES.get(model)
    if t is None:
        t = _TABLES[model] = _Tables(model)
    return t


def restricted_log_partition(model: MaxEntModel, pa: PartialAssignment) -> float:
    """``log`` of the sum of ``q(alpha) exp(<lam, alpha>)`` over points matching ``pa``."""
    if pa.schema != model.schema:
        raise InconsistentAssignment("assignment belongs to a different schema")
    t = _tables(model)
    uniform = t.log_u0
    mask = np.ones(t.values.shape[0], dtype=bool)
    for j in range(model.schema.n_blocks):
        v = pa.fixed.get(j)
        if v is None:
            uniform += t.lse[j]
        else:
            uniform += t.phi[j][v]
            mask &= t.values[:, j] == v
    weighted = logsumexp(t.a[mask]) if mask.any() else -math.inf
    return float(np.logaddexp(uniform, weighted))


def conditional_block_distribution(
    model: MaxEntModel, pa: PartialAssignment, block: int
) -> NDArray[np.float64]:
    """Distribution of block ``block`` given the blocks fixed in ``pa``."""
    if block in pa.fixed:
        raise BlockAlreadyAssigned(f"block {block} is already assigned")
    k = model.schema.blocks[block].cardinality
    num = np.array([restricted_log_partition(model, pa.with_value(block, v)) for v in range(k)])
    return np.exp(num - logsumexp(num))


def _rng(seed: int, stream: int | None = None) -> np.random.Generator:
    ss = np.random.SeedSequence(seed) if stream is None else np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def _block_order(schema: DomainSchema, order: Sequence[int] | None) -> list[int]:
    if order is None:
        return list(range(schema.n_blocks))
    order = [int(j) for j in order]
    if sorted(order) != list(range(schema.n_blocks)):
        raise ValueError("order must be a permutation of the block indices")
    return order


def sample_point(model: MaxEntModel, rng_seed: int, order: Sequence[int] | None = None) -> NDArray[np.uint8]:
    """Draw one point by fixing blocks one at a time from their exact conditionals."""
    rng = _rng(rng_seed)
    pa = PartialAssignment(model.schema)
    for j in _block_order(model.schema, order):
        probs = conditional_block_distribution(model, pa, j)
        v = min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), probs.size - 1)
        pa = pa.with_value(j, v)
    vals = [pa.fixed[j] for j in range(model.schema.n_blocks)]
    return model.schema.points_from_values([vals])[0]


def _sample_batch(model: MaxEntModel, t: _Tables, size: int, order: list[int], rng: np.random.Generator):
    nb = model.schema.n_blocks
    out = np.empty((size, nb), dtype=np.int64)
    fixed = np.zeros(size)
    free = float(t.lse.sum())
    mask = np.ones((size, t.values.shape[0]), dtype=bool)
    has_weighted = np.isfinite(t.a).any()
    a_max = float(t.a.max()) if has_weighted else 0.0
    e = np.exp(t.a - a_max)
    for j in order:
        k = t.phi[j].size
        free -= t.lse[j]
        num = t.log_u0 + fixed[:, None] + t.phi[j][None, :] + free
        if has_weighted:
            match = t.values[:, j][:, None] == np.arange(k)[None, :]
            mf = mask.astype(np.float64)
            wsum = mf @ (e[:, None] * match)
            with np.errstate(divide="ignore"):
                lw = np.log(wsum) + a_max
            lost = (wsum == 0) & ((mf @ match) > 0)
            if lost.any():
                # exp underflow for rows far from the heaviest support point
                for r, v in zip(*np.nonzero(lost)):
                    sel = mask[r] & match[:, v]
                    lw[r, v] = logsumexp(t.a[sel])
            num = np.logaddexp(num, lw)
        probs = np.exp(num - logsumexp(num, axis=1, keepdims=True))
        u = rng.random(size)
        v = np.minimum((np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1), k - 1)
        out[:, j] = v
        fixed += t.phi[j][v]
        if has_weighted:
            mask &= t.values[:, j][None, :] == v[:, None]
    return out


def sample_values(
    model: MaxEntModel, count: int, rng_seed: int, order: Sequence[int] | None = None
) -> NDArray[np.int64]:
    """``count`` i.i.d. draws as block values, shape ``(count, n_blocks)``.

    Batch ``b`` of :data:`BATCH_SIZE` draws uses its own Philox stream keyed
    by ``(rng_seed, b)``, so output is a pure function of the seed.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    t = _tables(model)
    order = _block_order(model.schema, order)
    chunks = []
    for b, start in enumerate(range(0, count, BATCH_SIZE)):
        size = min(BATCH_SIZE, count - start)
        chunks.append(_sample_batch(model, t, size, order, _rng(rng_seed, b)))
    return np.vstack(chunks)


def sample_dataset(
    model: MaxEntModel, count: int, rng_seed: int, order: Sequence[int] | None = None
) -> Dataset:
    """Draw ``count`` samples and aggregate them into a frequency dataset."""
    vals = sample_values(model, count, rng_seed, order)
    uniq, first, counts = np.unique(vals, axis=0, return_index=True, return_counts=True)
    keep = np.argsort(first, kind="stable")
    return Dataset.from_values(model.schema, uniq[keep], counts[keep])
