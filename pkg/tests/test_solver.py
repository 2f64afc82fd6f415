import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import random_dataset, random_prior, random_schema, random_theta
from maxent_debias.domain import Dataset, DomainSchema
from maxent_debias.errors import InvalidEta, NotConverged, UnboundedRadius
from maxent_debias.oracle import dual_value
from maxent_debias.prior import MixedPrior, empirical_weights, mix_prior, prior_mass, reweight
from maxent_debias.solver import (
    MaxEntModel,
    SolverConfig,
    bounding_radius,
    inner_qp_solve,
    solve,
    target_marginal,
)

ZYF = DomainSchema.build([
    {"name": "z", "kind": "bit", "role": "protected"},
    {"name": "y", "kind": "bit", "role": "label"},
    {"name": "f", "kind": "bit"},
])


def model_kl(model: MaxEntModel) -> float:
    """KL(model || prior) by enumeration."""
    s = model.schema
    total = 0.0
    for p in s.enumerate_points():
        lp = float(model.log_prob(p[None, :])[0])
        total += math.exp(lp) * (lp - math.log(prior_mass(model.prior, p)))
    return total


def model_marginal(model: MaxEntModel) -> np.ndarray:
    pts = model.schema.enumerate_points().astype(float)
    return np.exp(model.log_prob(pts)) @ pts


def instance(seed, d_max=8):
    rng = np.random.default_rng(seed)
    schema = random_schema(rng, int(rng.integers(2, d_max + 1)))
    q = random_prior(rng, schema, int(rng.integers(1, 30)), float(rng.choice([0.1, 0.5, 0.9])))
    return q, random_theta(rng, schema, lo=0.1)


class TestBoundingRadius:
    def test_examples(self):
        assert bounding_radius(4, 0.25, 0.5) == pytest.approx(11.0904, abs=1e-4)
        assert bounding_radius(5, 0.1, 1.0) == 0.0
        assert bounding_radius(10, 0.1, 0.5) == pytest.approx(69.31, abs=1e-2)

    @pytest.mark.parametrize("eta", [0.0, 0.6, -1.0])
    def test_bad_eta(self, eta):
        with pytest.raises(InvalidEta):
            bounding_radius(3, eta, 0.5)

    def test_zero_c(self):
        with pytest.raises(UnboundedRadius):
            bounding_radius(3, 0.2, 0.0)


class TestTargetMarginal:
    def ds(self):
        return Dataset.from_points(ZYF, [[1, 1, 0], [1, 0, 1], [0, 1, 1], [0, 0, 0]], [5, 3, 1, 1])

    def test_empirical(self):
        np.testing.assert_allclose(target_marginal(self.ds()), [0.8, 0.6, 0.4])

    def test_balanced(self):
        th = target_marginal(self.ds(), kind="balanced")
        np.testing.assert_allclose(th, [0.5, 0.6, 0.4])

    def test_reweighted_protected_share(self):
        for tau in (0.5, 0.8, 1.0):
            w = reweight(self.ds(), tau)
            th = target_marginal(self.ds(), w, kind="reweighted")
            assert th[0] == pytest.approx(1 / (1 + tau), abs=1e-12)

    def test_reweighted_needs_weights(self):
        with pytest.raises(ValueError):
            target_marginal(self.ds(), kind="reweighted")


class TestInnerQP:
    def test_zero_gradient(self):
        y = inner_qp_solve(np.zeros(3), np.eye(3), 0.1)
        np.testing.assert_array_equal(y, 0.0)

    def test_box_active(self):
        y = inner_qp_solve([-10.0, 0.0], np.eye(2), 0.125)
        np.testing.assert_allclose(y, [0.125, 0.0], atol=1e-12)

    def test_radius_constraint(self):
        y = inner_qp_solve([-10.0], np.eye(1), 1.0, center=[0.7], R=1.0)
        np.testing.assert_allclose(y, [0.3], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        n, box = 5, 0.1
        A = rng.normal(size=(n, n))
        H = A @ A.T + 0.1 * np.eye(n)
        g = rng.normal(size=n)
        y = inner_qp_solve(g, H, box, tol=1e-14)

        def obj(v):
            return g @ v + v @ H @ v / (2 * math.e)

        grid = np.linspace(-box, box, 11)
        best = min(obj(np.array(v)) for v in itertools.product(grid, repeat=n))
        assert obj(y) <= best + 1e-12
        assert np.abs(y).max() <= box + 1e-15


class TestSolve:
    def test_uniform_prior_uniform_target(self):
        q = mix_prior(1.0, empirical_weights(Dataset.from_points(ZYF, [[1, 1, 0]])))
        res = solve(q, [0.5, 0.5, 0.5])
        assert res.iterations == 0 and res.converged
        np.testing.assert_array_equal(res.model.lam, 0.0)

    def test_two_bit_example(self):
        s = DomainSchema.build([{"name": "a", "kind": "bit"}, {"name": "b", "kind": "bit"}])
        q = mix_prior(1.0, empirical_weights(Dataset.from_points(s, [[0, 0]])))
        res = solve(q, [0.75, 0.5])
        np.testing.assert_allclose(res.model.lam, [math.log(3), 0.0], atol=1e-9)
        assert res.model.dual_value == pytest.approx(math.log(2) - 0.75 * math.log(3), abs=1e-12)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_optimality(self, seed):
        q, th = instance(seed)
        res = solve(q, th)
        m = res.model
        assert np.abs(model_marginal(m) - th).max() <= 1e-6
        assert -m.dual_value == pytest.approx(model_kl(m), abs=1e-6)
        assert m.dual_value <= 1e-12
        eta = min(th.min(), (1 - th).min())
        # every point has prior mass at least C / |domain|
        radius = (q.schema.log_domain_size + math.log(1 / q.C)) / eta
        assert np.linalg.norm(m.lam) <= radius + 1.0

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_trace_non_increasing(self, seed):
        q, th = instance(seed)
        tr = np.array(solve(q, th).dual_trace)
        assert np.all(np.diff(tr) <= 1e-12 * (1 + np.abs(tr[:-1])))

    def test_box_newton_agrees(self):
        rng = np.random.default_rng(11)
        schema = random_schema(rng, 4, onehot_prob=0.0)
        q = random_prior(rng, schema, 10, 0.5)
        th = random_theta(rng, schema, lo=0.2)
        eps = 1e-6
        damped = solve(q, th)
        box = solve(q, th, SolverConfig(epsilon=eps, mode="box_newton", gradient_tolerance=1e-7))
        assert box.model.dual_value <= damped.model.dual_value + 2 * eps
        assert box.info["box"] == pytest.approx(1 / 32)

    def test_formula_radius_can_be_exceeded(self):
        s = DomainSchema.build([{"name": "a", "kind": "bit"}])
        q = mix_prior(0.9, empirical_weights(Dataset.from_points(s, [[1]])))
        lam = solve(q, [0.1]).model.lam
        assert abs(lam[0]) > bounding_radius(1, 0.1, 0.9) + 1.0
        assert abs(lam[0]) <= (math.log(2) + math.log(1 / 0.9)) / 0.1

    def test_not_converged_carries_result(self):
        q, th = instance(5)
        with pytest.raises(NotConverged) as exc:
            solve(q, th, SolverConfig(max_iterations=1, gradient_tolerance=1e-14))
        assert exc.value.result.iterations == 1

    def test_non_strict_returns(self):
        q, th = instance(5)
        res = solve(q, th, SolverConfig(max_iterations=1, gradient_tolerance=1e-14, strict=False))
        assert not res.converged

    def test_zero_c(self):
        ds = Dataset.from_points(ZYF, [[1, 1, 0], [0, 0, 1]])
        with pytest.raises(UnboundedRadius):
            solve(MixedPrior(0.0, empirical_weights(ds)), [0.5, 0.5, 0.5])

    def test_reweighted_pipeline(self):
        rng = np.random.default_rng(3)
        ds = random_dataset(rng, ZYF, 40)
        w = reweight(ds, 0.8)
        q = mix_prior(0.5, w)
        th = target_marginal(ds, w, "reweighted")
        res = solve(q, th)
        assert np.abs(model_marginal(res.model) - th).max() <= 1e-6
        assert dual_value(q, th, res.model.lam) == pytest.approx(res.model.dual_value, abs=1e-14)
