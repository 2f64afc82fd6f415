import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import random_prior, random_schema
from maxent_debias.domain import Dataset, DomainSchema
from maxent_debias.errors import BlockAlreadyAssigned, InconsistentAssignment
from maxent_debias.prior import MixedPrior, ReweightedDistribution, empirical_weights, mix_prior
from maxent_debias.sampler import (
    PartialAssignment,
    conditional_block_distribution,
    restricted_log_partition,
    sample_dataset,
    sample_point,
    sample_values,
)
from maxent_debias.solver import MaxEntModel


def bits(d):
    return DomainSchema.build([{"name": f"b{i}", "kind": "bit"} for i in range(d)])


def uniform_model(schema, lam=None):
    pts = schema.points_from_values([[0] * schema.n_blocks])
    q = mix_prior(1.0, empirical_weights(Dataset.from_points(schema, pts)))
    lam = np.zeros(schema.d) if lam is None else np.asarray(lam, dtype=float)
    return MaxEntModel(q, np.full(schema.d, 0.5), lam, 0.0)


def random_model(seed, d_max=8):
    rng = np.random.default_rng(seed)
    schema = random_schema(rng, int(rng.integers(2, d_max + 1)))
    q = random_prior(rng, schema, int(rng.integers(1, 20)), float(rng.choice([0.1, 0.5, 0.9])))
    return MaxEntModel(q, np.full(schema.d, 0.5), rng.normal(0, 1.5, schema.d), 0.0)


def enumerated_restricted(model, pa):
    """Brute-force restricted log partition."""
    s = model.schema
    vals = s.enumerate_values()
    sel = np.ones(len(vals), dtype=bool)
    for j, v in pa.fixed.items():
        sel &= vals[:, j] == v
    if not sel.any():
        return -math.inf
    lp = model.log_prob(s.enumerate_points()[sel])
    return float(np.logaddexp.reduce(lp)) + model.log_partition


class TestPartialAssignment:
    def test_out_of_range(self):
        s = bits(2)
        with pytest.raises(InconsistentAssignment):
            PartialAssignment(s, {0: 2})
        with pytest.raises(InconsistentAssignment):
            PartialAssignment(s, {5: 0})

    def test_reassign(self):
        pa = PartialAssignment(bits(2), {0: 1})
        with pytest.raises(BlockAlreadyAssigned):
            pa.with_value(0, 0)

    def test_of_point(self):
        s = DomainSchema.build([{"name": "a", "kind": "bit"}, {"name": "c", "kind": "onehot", "cardinality": 3}])
        assert dict(PartialAssignment.of_point(s, [1, 0, 0, 1]).fixed) == {0: 1, 1: 2}


class TestRestrictedPartition:
    def test_empty_is_full_partition(self):
        m = random_model(1)
        assert restricted_log_partition(m, PartialAssignment(m.schema)) == pytest.approx(m.log_partition, abs=1e-12)

    def test_full_assignment_is_point_mass(self):
        m = random_model(2)
        p = m.schema.enumerate_points()[3]
        got = restricted_log_partition(m, PartialAssignment.of_point(m.schema, p))
        assert got - m.log_partition == pytest.approx(float(m.log_prob(p[None])[0]), abs=1e-12)

    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration(self, seed, k):
        m = random_model(seed)
        rng = np.random.default_rng(seed + 1)
        blocks = rng.permutation(m.schema.n_blocks)[: min(k, m.schema.n_blocks)]
        pa = PartialAssignment(m.schema, {int(j): int(rng.integers(0, m.schema.cardinalities[j])) for j in blocks})
        want = enumerated_restricted(m, pa)
        assert restricted_log_partition(m, pa) == pytest.approx(want, rel=1e-10, abs=1e-10)


class TestConditional:
    def test_uniform_prior_zero_lambda(self):
        s = DomainSchema.build([{"name": "a", "kind": "bit"}, {"name": "c", "kind": "onehot", "cardinality": 4}])
        probs = conditional_block_distribution(uniform_model(s), PartialAssignment(s, {0: 1}), 1)
        np.testing.assert_allclose(probs, 0.25, atol=1e-15)

    def test_tilted_bit(self):
        m = uniform_model(bits(1), [math.log(3)])
        probs = conditional_block_distribution(m, PartialAssignment(m.schema), 0)
        np.testing.assert_allclose(probs, [0.25, 0.75], atol=1e-15)

    def test_assigned_block_rejected(self):
        m = uniform_model(bits(2))
        with pytest.raises(BlockAlreadyAssigned):
            conditional_block_distribution(m, PartialAssignment(m.schema, {1: 0}), 1)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_chain_rule(self, seed):
        m = random_model(seed, d_max=6)
        for p in m.schema.enumerate_points()[:8]:
            vals = m.schema.value_indices(p[None])[0]
            pa = PartialAssignment(m.schema)
            prod = 1.0
            for j, v in enumerate(vals):
                prod *= conditional_block_distribution(m, pa, j)[v]
                pa = pa.with_value(j, int(v))
            assert prod == pytest.approx(m.prob(p), rel=1e-10, abs=1e-14)


class TestSampling:
    def test_point_mass_prior(self):
        s = bits(3)
        w = ReweightedDistribution(s, np.array([[1, 0, 1]]), np.array([1.0]))
        m = MaxEntModel(MixedPrior(0.0, w), np.full(3, 0.5), np.array([0.4, -2.0, 1.0]), 0.0)
        assert sample_point(m, 4).tolist() == [1, 0, 1]
        vals = sample_values(m, 500, 9)
        assert np.all(vals == [1, 0, 1])

    def test_uniform_frequencies(self):
        s = bits(3)
        ds = sample_dataset(uniform_model(s), 100_000, 123)
        assert ds.N == 100_000 and len(ds) == 8
        np.testing.assert_allclose(ds.freqs / ds.N, 0.125, atol=0.004)

    def test_deterministic(self):
        m = random_model(4)
        a, b = sample_values(m, 3000, 77), sample_values(m, 3000, 77)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, sample_values(m, 3000, 78))

    def test_prefix_stable(self):
        m = random_model(4)
        np.testing.assert_array_equal(sample_values(m, 1500, 5)[:1024], sample_values(m, 1024, 5))

    def test_count_one(self):
        m = random_model(6)
        assert sample_values(m, 1, 0).shape == (1, m.schema.n_blocks)
        assert sample_dataset(m, 1, 0).N == 1

    def test_count_zero(self):
        with pytest.raises(ValueError):
            sample_values(random_model(6), 0, 0)

    def test_bad_order(self):
        m = random_model(6)
        with pytest.raises(ValueError):
            sample_values(m, 5, 0, order=[0, 0])

    def test_order_invariance(self):
        m = random_model(8, d_max=5)
        p = np.exp(m.log_prob(m.schema.enumerate_points()))
        n = 200_000
        rev = list(range(m.schema.n_blocks))[::-1]
        for order in (None, rev):
            codes = m.schema.codes(sample_values(m, n, 31, order))
            freq = np.bincount(codes, minlength=p.size) / n
            assert 0.5 * np.abs(freq - p).sum() <= 0.01

    def test_single_draw_distribution(self):
        m = uniform_model(bits(1), [math.log(3)])
        ones = sum(int(sample_point(m, s)[0]) for s in range(2000))
        assert abs(ones / 2000 - 0.75) <= 0.04
