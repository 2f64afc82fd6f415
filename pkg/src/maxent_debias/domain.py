"""Discrete product domains, record encoding and frequency datasets.

A domain is an ordered list of attribute blocks.  A ``bit`` block occupies a
single coordinate of the flattened 0/1 vector; a ``onehot`` block with ``k``
categories occupies ``k`` coordinates of which exactly one is set.  Every
block is therefore a finite set of allowed bit patterns and the domain is the
product of those sets.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ArityMismatch,
    BoundaryMarginal,
    DomainTooLarge,
    EmptyDataset,
    InvalidOneHot,
    InvalidPoint,
    SchemaError,
    UnknownCategory,
)

log = logging.getLogger(__name__)

#: Largest domain that any routine is allowed to enumerate point by point.
ENUMERATION_LIMIT = 2**20


class BlockKind(str, Enum):
    BIT = "bit"
    ONEHOT = "onehot"


class Role(str, Enum):
    FEATURE = "feature"
    LABEL = "label"
    PROTECTED = "protected"


@dataclass(frozen=True)
class AttributeBlock:
    """One attribute of the domain and the coordinates it occupies."""

    name: str
    kind: BlockKind
    role: Role = Role.FEATURE
    categories: tuple[str, ...] = ("0", "1")
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", BlockKind(self.kind))
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind is BlockKind.BIT and len(self.categories) != 2:
            raise SchemaError(f"bit block {self.name!r} needs exactly 2 categories")
        if self.kind is BlockKind.ONEHOT and len(self.categories) < 2:
            raise SchemaError(f"one-hot block {self.name!r} needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"duplicate category labels in block {self.name!r}")
        if self.offset < 0:
            raise SchemaError("negative block offset")

    @property
    def cardinality(self) -> int:
        return len(self.categories)

    @property
    def width(self) -> int:
        return 1 if self.kind is BlockKind.BIT else self.cardinality

    @property
    def coords(self) -> slice:
        return slice(self.offset, self.offset + self.width)

    @property
    def patterns(self) -> NDArray[np.float64]:
        """Row ``v`` is the bit pattern that encodes category ``v``."""
        if self.kind is BlockKind.BIT:
            return np.array([[0.0], [1.0]])
        return np.eye(self.cardinality)

    def value_index(self, raw: Any) -> int:
        """Map a raw value (category label or integer index) to its index."""
        if isinstance(raw, str):
            try:
                return self.categories.index(raw)
            except ValueError:
                pass
            try:
                raw = int(raw)
            except ValueError:
                raise UnknownCategory(
                    f"value {raw!r} is not a category of {self.name!r}"
                ) from None
        if isinstance(raw, (bool, np.bool_)):
            raw = int(raw)
        if isinstance(raw, (int, np.integer)) and 0 <= raw < self.cardinality:
            return int(raw)
        raise UnknownCategory(f"value {raw!r} is not a category of {self.name!r}")

    def coordinate_names(self) -> list[str]:
        if self.kind is BlockKind.BIT:
            return [self.name]
        return [f"{self.name}={c}" for c in self.categories]


@dataclass(frozen=True)
class DomainSchema:
    """Ordered attribute blocks making up the domain.

    ``tau_group`` is the protected value whose joint masses the reweighting
    scales by ``tau``; the other value is the reference group.
    """

    blocks: tuple[AttributeBlock, ...]
    tau_group: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise SchemaError("a schema needs at least one block")
        expected = 0
        for b in self.blocks:
            if b.offset != expected:
                raise SchemaError(f"block {b.name!r} starts at {b.offset}, expected {expected}")
            expected += b.width
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise SchemaError("block names must be unique")
        for role in (Role.PROTECTED, Role.LABEL):
            if sum(b.role is role for b in self.blocks) > 1:
                raise SchemaError(f"at most one {role.value} block is supported")
        if self.tau_group not in (0, 1):
            raise SchemaError("tau_group must be 0 or 1")

    @classmethod
    def build(cls, blocks: Iterable[Mapping[str, Any] | AttributeBlock], tau_group: int = 0):
        """Assemble a schema, assigning contiguous offsets in order."""
        out = []
        offset = 0
        for spec in blocks:
            if isinstance(spec, AttributeBlock):
                spec = {
                    "name": spec.name,
                    "kind": spec.kind,
                    "role": spec.role,
                    "categories": spec.categories,
                }
            spec = dict(spec)
            kind = BlockKind(spec.get("kind", "bit"))
            cats = spec.get("categories")
            if cats is None:
                k = spec.get("cardinality", 2)
                cats = [str(i) for i in range(k)]
            block = AttributeBlock(
                name=spec["name"],
                kind=kind,
                role=Role(spec.get("role", "feature")),
                categories=tuple(cats),
                offset=offset,
            )
            out.append(block)
            offset += block.width
        return cls(tuple(out), tau_group=tau_group)

    # -- shape -----------------------------------------------------------
    @property
    def d(self) -> int:
        return self.blocks[-1].offset + self.blocks[-1].width

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(b.cardinality for b in self.blocks)

    @property
    def domain_size(self) -> int:
        return math.prod(self.cardinalities)

    @property
    def log_domain_size(self) -> float:
        return float(sum(math.log(k) for k in self.cardinalities))

    def coordinate_names(self) -> list[str]:
        return [n for b in self.blocks for n in b.coordinate_names()]

    def block_index(self, name: str) -> int:
        for j, b in enumerate(self.blocks):
            if b.name == name:
                return j
        raise SchemaError(f"no block named {name!r}")

    def _role_block(self, role: Role) -> int | None:
        for j, b in enumerate(self.blocks):
            if b.role is role:
                return j
        return None

    @property
    def protected_block(self) -> int:
        j = self._role_block(Role.PROTECTED)
        if j is None:
            raise SchemaError("schema has no protected block")
        return j

    @property
    def label_block(self) -> int:
        j = self._role_block(Role.LABEL)
        if j is None:
            raise SchemaError("schema has no label block")
        return j

    @property
    def protected_index(self) -> int:
        """Coordinate of the protected attribute (its ``1`` bit for a bit block)."""
        return self.blocks[self.protected_block].offset

    @property
    def label_index(self) -> int:
        return self.blocks[self.label_block].offset

    # -- conversions -----------------------------------------------------
    def value_indices(self, points: ArrayLike) -> NDArray[np.int64]:
        """Per-block category indices of encoded points, shape ``(n, n_blocks)``."""
        pts = np.atleast_2d(np.asarray(points))
        if pts.shape[1] != self.d:
            raise InvalidPoint(f"expected {self.d} coordinates, got {pts.shape[1]}")
        if not np.all((pts == 0) | (pts == 1)):
            raise InvalidPoint("coordinates must be 0 or 1")
        out = np.empty((pts.shape[0], self.n_blocks), dtype=np.int64)
        for j, b in enumerate(self.blocks):
            sl = pts[:, b.coords]
            if b.kind is BlockKind.BIT:
                out[:, j] = sl[:, 0]
            else:
                hot = sl.sum(axis=1)
                if np.any(hot != 1):
                    bad = int(np.flatnonzero(hot != 1)[0])
                    raise InvalidOneHot(
                        f"block {b.name!r} of point {bad} has {int(hot[bad])} hot bits"
                    )
                out[:, j] = np.argmax(sl, axis=1)
        return out

    def points_from_values(self, values: ArrayLike) -> NDArray[np.uint8]:
        """Inverse of :meth:`value_indices`."""
        vals = np.atleast_2d(np.asarray(values, dtype=np.int64))
        pts = np.zeros((vals.shape[0], self.d), dtype=np.uint8)
        rows = np.arange(vals.shape[0])
        for j, b in enumerate(self.blocks):
            v = vals[:, j]
            if np.any((v < 0) | (v >= b.cardinality)):
                raise UnknownCategory(f"category index out of range for block {b.name!r}")
            if b.kind is BlockKind.BIT:
                pts[:, b.offset] = v
            else:
                pts[rows, b.offset + v] = 1
        return pts

    def codes(self, values: ArrayLike) -> NDArray[np.int64]:
        """Mixed-radix index of each point in :meth:`enumerate_values` order."""
        vals = np.atleast_2d(np.asarray(values, dtype=np.int64))
        code = np.zeros(vals.shape[0], dtype=np.int64)
        for j, k in enumerate(self.cardinalities):
            code = code * k + vals[:, j]
        return code

    def enumerate_values(self, limit: int = ENUMERATION_LIMIT) -> NDArray[np.int64]:
        """Every domain point as block values, in lexicographic block order."""
        if self.domain_size > limit:
            raise DomainTooLarge(
                f"domain has {self.domain_size} points; enumeration is capped at {limit}"
            )
        grids = itertools.product(*(range(k) for k in self.cardinalities))
        return np.array(list(grids), dtype=np.int64).reshape(-1, self.n_blocks)

    def enumerate_points(self, limit: int = ENUMERATION_LIMIT) -> NDArray[np.uint8]:
        return self.points_from_values(self.enumerate_values(limit))

    def to_dict(self) -> dict:
        return {
            "tau_group": self.tau_group,
            "blocks": [
                {
                    "name": b.name,
                    "kind": b.kind.value,
                    "role": b.role.value,
                    "categories": list(b.categories),
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DomainSchema":
        try:
            return cls.build(doc["blocks"], tau_group=int(doc.get("tau_group", 0)))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc


def encode_record(schema: DomainSchema, raw: Sequence[Any]) -> NDArray[np.uint8]:
    """Encode one raw record (one value per block) as a 0/1 vector."""
    if len(raw) != schema.n_blocks:
        raise ArityMismatch(f"record has {len(raw)} values, schema has {schema.n_blocks} blocks")
    vals = [b.value_index(v) for b, v in zip(schema.blocks, raw)]
    return schema.points_from_values([vals])[0]


def decode_point(schema: DomainSchema, p: ArrayLike) -> list[int]:
    """Category index of every block of an encoded point."""
    return [int(v) for v in schema.value_indices(np.asarray(p).reshape(1, -1))[0]]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Distinct encoded points with positive integer frequencies."""

    schema: DomainSchema
    points: NDArray[np.uint8]
    freqs: NDArray[np.int64]
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.uint8).reshape(-1, self.schema.d)
        fr = np.asarray(self.freqs, dtype=np.int64).reshape(-1)
        if pts.shape[0] != fr.shape[0]:
            raise ArityMismatch("points and frequencies differ in length")
        if np.any(fr < 1):
            raise ValueError("frequencies must be positive integers")
        self.schema.value_indices(pts)  # validates one-hot structure
        index = {}
        for i, row in enumerate(pts):
            key = row.tobytes()
            if key in index:
                raise ValueError("dataset points must be distinct; use Dataset.from_points")
            index[key] = i
        pts.flags.writeable = False
        fr.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "freqs", fr)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_points(cls, schema: DomainSchema, points: ArrayLike, freqs: ArrayLike | None = None):
        """Build a dataset, merging repeated points into one entry (first-seen order)."""
        pts = np.asarray(points, dtype=np.uint8).reshape(-1, schema.d)
        fr = np.ones(pts.shape[0], dtype=np.int64) if freqs is None else np.asarray(freqs, dtype=np.int64)
        if pts.shape[0] == 0:
            return cls(schema, pts, fr)
        uniq, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
        counts = np.zeros(uniq.shape[0], dtype=np.int64)
        np.add.at(counts, inverse.reshape(-1), fr)
        order = np.argsort(first, kind="stable")
        return cls(schema, uniq[order], counts[order])

    @classmethod
    def from_records(cls, schema: DomainSchema, records: Iterable[Sequence[Any]]):
        return cls.from_points(schema, [encode_record(schema, r) for r in records])

    @classmethod
    def from_values(cls, schema: DomainSchema, values: ArrayLike, freqs: ArrayLike | None = None):
        return cls.from_points(schema, schema.points_from_values(values), freqs)

    def merged_with(self, points: ArrayLike, freqs: ArrayLike | None = None) -> "Dataset":
        pts = np.asarray(points, dtype=np.uint8).reshape(-1, self.schema.d)
        fr = np.ones(pts.shape[0], dtype=np.int64) if freqs is None else np.asarray(freqs)
        return Dataset.from_points(
            self.schema,
            np.vstack([self.points, pts]),
            np.concatenate([self.freqs, fr]),
        )

    @property
    def N(self) -> int:
        return int(self.freqs.sum())

    def __len__(self) -> int:
        return self.points.shape[0]

    def index_of(self, point: ArrayLike) -> int | None:
        key = np.asarray(point, dtype=np.uint8).reshape(-1).tobytes()
        return self._index.get(key)

    def frequency(self, point: ArrayLike) -> int:
        i = self.index_of(point)
        return 0 if i is None else int(self.freqs[i])

    def value_indices(self) -> NDArray[np.int64]:
        return self.schema.value_indices(self.points)


def empirical_marginal(ds: Dataset) -> NDArray[np.float64]:
    """Frequency-weighted mean of the encoded points."""
    if ds.N < 1:
        raise EmptyDataset("empirical marginal of an empty dataset")
    return (ds.freqs @ ds.points.astype(np.float64)) / ds.N


def validate_interior(theta: ArrayLike, eta_min: float = 1e-6) -> float:
    """Return the distance of ``theta`` from the cube boundary.

    Raises :class:`BoundaryMarginal` naming the first coordinate that is not
    at least ``eta_min`` away from 0 and 1.
    """
    th = np.asarray(theta, dtype=np.float64)
    gap = np.minimum(th, 1.0 - th)
    bad = np.flatnonzero(~(gap >= eta_min))
    if bad.size:
        i = int(bad[0])
        raise BoundaryMarginal(i, float(th[i]), eta_min)
    return float(gap.min())


def clamp_interior(
    theta: ArrayLike, schema: DomainSchema, eta_min: float = 1e-6
) -> NDArray[np.float64]:
    """Pull boundary coordinates to ``eta_min`` / ``1 - eta_min``.

    One-hot blocks are renormalised afterwards so they still sum to one.
    """
    th = np.asarray(theta, dtype=np.float64).copy()
    clipped = np.clip(th, eta_min, 1.0 - eta_min)
    moved = np.flatnonzero(clipped != th)
    if moved.size:
        log.warning("clamped %d marginal coordinate(s) into the interior: %s", moved.size, moved.tolist())
    for b in schema.blocks:
        if b.kind is BlockKind.ONEHOT:
            clipped[b.coords] = _fill_block(th[b.coords], eta_min)
    return clipped


def _fill_block(p: NDArray[np.float64], eta_min: float) -> NDArray[np.float64]:
    # raise small entries to eta_min and shrink the rest so the block sums to one;
    # repeat because shrinking can push another entry below eta_min
    p = np.clip(p, 0.0, None)
    fixed = p < eta_min
    while True:
        out = np.full(p.shape, eta_min)
        free = ~fixed
        room = 1.0 - eta_min * fixed.sum()
        out[free] = p[free] * (room / p[free].sum())
        low = free & (out < eta_min)
        if not low.any():
            return out
        fixed |= low
