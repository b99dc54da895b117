"""Projected policy iteration: score gradients, the four update rules and local regret."""

from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from regret_arena.errors import UndefinedValueError
from regret_arena.games import load_game, tree_for
from regret_arena.metrics import expected_returns, q_values_exact
from regret_arena.policy import SimplexParamPolicy, TabularPolicy, project_simplex
from regret_arena.projected import (
    INTERIOR_FLOOR,
    RULES,
    LocalRegretTracker,
    acpi_step,
    pgpi_step,
    project_flat,
    projected_step,
    rule_gradient,
    run_projected,
    sacpi_step,
    score_gradient,
    spgpi_step,
    step_size,
)


@pytest.fixture(scope="module")
def kuhn():
    return load_game("kuhn:2")


@pytest.fixture(scope="module")
def ktree(kuhn):
    return tree_for(kuhn)


@pytest.fixture(scope="module")
def joints(kuhn, ktree):
    rng = np.random.default_rng(21)
    return [TabularPolicy(oracles.random_joint(kuhn, rng)).to_flat(ktree) for _ in range(50)]


def on_simplex(tree, theta, tol=1e-12):
    sums = np.bincount(tree.sa_infoset, weights=theta, minlength=tree.num_infosets)
    return np.all(theta > 0) and np.allclose(sums, 1.0, atol=tol)


class TestScoreGradient:
    def test_score_gradient_factorizes(self, ktree, joints):
        for theta in joints:
            g = score_gradient(theta, ktree)
            np.testing.assert_allclose(g.v_eta, g.eta[ktree.sa_infoset] * g.v_c, atol=1e-10)

    def test_matches_oracle_parts(self, kuhn, ktree, joints):
        theta = joints[0]
        g = score_gradient(theta, ktree)
        joint = TabularPolicy.from_flat(ktree, theta).table
        vc = oracles.counterfactual_values(kuhn, joint)
        own = oracles.own_reach(kuhn, joint)
        bayes = oracles.bayes_normalizers(kuhn, joint)
        for key in ktree.keys:
            parts = g.for_key(key)
            np.testing.assert_allclose(parts["v_c"], [vc[(key, a)] for a in range(2)], atol=1e-12)
            assert parts["eta"] == pytest.approx(own[key], abs=1e-14)
            assert parts["B"] == pytest.approx(bayes[key], abs=1e-14)

    def test_matrix_uniform_zero(self):
        tree = tree_for(load_game("matrix:mp"))
        np.testing.assert_array_equal(score_gradient(tree.uniform_policy(), tree).v_eta, 0.0)

    def test_root_states_sum_to_expected_return(self, kuhn, ktree, joints):
        for theta in joints[:10]:
            g = score_gradient(theta, ktree)
            total = sum(theta[ktree.slots(ktree.key_index[f"p0|{c}|"])] @ g.for_key(f"p0|{c}|")["v_eta"] for c in "JQK")
            assert total == pytest.approx(expected_returns(theta, ktree)[0], abs=1e-12)

    def test_advantage_from_score_gradient(self, ktree, joints):
        for theta in joints:
            g = score_gradient(theta, ktree)
            for player in (0, 1):
                for key, q in q_values_exact(theta, player, ktree).items():
                    s = ktree.key_index[key]
                    sl = ktree.slots(s)
                    lhs = q - theta[sl] @ q
                    v_c_state = theta[sl] @ g.v_c[sl]
                    rhs = g.v_eta[sl] / (g.eta[s] * g.B[s]) - v_c_state / g.B[s]
                    np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_zero_bayes_raises(self, ktree):
        theta = ktree.uniform_policy()
        for c in "JK":
            theta[ktree.slots(ktree.key_index[f"p0|{c}|"])] = [0.0, 1.0]
        with pytest.raises(UndefinedValueError, match="p1\\|Q\\|p"):
            score_gradient(theta, ktree).q_values()
        with pytest.raises(UndefinedValueError):
            rule_gradient("spgpi", theta, score_gradient(theta, ktree))


class TestSteps:
    def test_step_size(self):
        assert step_size(1) == 1.0 and step_size(4) == 0.5 and step_size(10_000) == 0.01
        with pytest.raises(ValueError):
            step_size(0)

    def test_matching_pennies_golden(self):
        tree = tree_for(load_game("matrix:mp"))
        policy = SimplexParamPolicy({"p0||": np.array([0.5, 0.5]), "p1||": np.array([0.8, 0.2])})
        theta = TabularPolicy(policy.weights).to_flat(tree)
        nxt = pgpi_step(policy, score_gradient(theta, tree), 1)
        # row gradient (0.6, -0.6): P([1.1, -0.1]) = [1, 0], then clamped to the interior
        np.testing.assert_allclose(nxt.weights["p0||"], [1 / (1 + 1e-9), 1e-9 / (1 + 1e-9)], rtol=0, atol=1e-16)
        # the column player is indifferent against (0.5, 0.5)
        np.testing.assert_allclose(nxt.weights["p1||"], [0.8, 0.2], atol=1e-16)

    def test_zero_gradient_unchanged(self, ktree, joints):
        theta = joints[0]
        grads = score_gradient(theta, ktree)
        grads.v_eta[:] = 0.0
        np.testing.assert_allclose(projected_step("pgpi", theta, grads, 3), theta, atol=1e-15)
        np.testing.assert_allclose(projected_step("acpi", theta, grads, 3), theta, atol=1e-15)

    def test_manual_shift_same_result(self, ktree, joints):
        theta = joints[1]
        grads = score_gradient(theta, ktree)
        shifted = score_gradient(theta, ktree)
        shifted.v_eta = shifted.v_eta + np.random.default_rng(0).normal(size=ktree.num_infosets)[ktree.sa_infoset]
        np.testing.assert_allclose(
            projected_step("pgpi", theta, grads, 2), projected_step("pgpi", theta, shifted, 2), atol=1e-12
        )

    @pytest.mark.parametrize("plain, baseline", [(pgpi_step, acpi_step), (spgpi_step, sacpi_step)])
    def test_next_policy_equal(self, ktree, joints, plain, baseline):
        for theta in joints:
            grads = score_gradient(theta, ktree)
            for k in (1, 7, 100):
                a = plain(TabularPolicy.from_flat(ktree, theta), grads, k)
                b = baseline(TabularPolicy.from_flat(ktree, theta), grads, k)
                for key in ktree.keys:
                    np.testing.assert_allclose(a.weights[key], b.weights[key], rtol=0, atol=1e-12)

    def test_all_rules_coincide_on_matrix(self):
        tree = tree_for(load_game("matrix:rps"))
        theta = np.array([0.5, 0.3, 0.2, 0.1, 0.6, 0.3])
        grads = score_gradient(theta, tree)
        assert np.all(grads.eta == 1) and np.all(grads.B == 1)
        steps = [projected_step(r, theta, grads, 2) for r in RULES]
        for s in steps[1:]:
            np.testing.assert_allclose(s, steps[0], atol=1e-15)

    def test_step_output_on_simplex(self, ktree, joints):
        for theta in joints[:10]:
            for rule in RULES:
                assert on_simplex(ktree, projected_step(rule, theta, score_gradient(theta, ktree), 1))

    def test_project_flat_floor(self, ktree):
        y = np.tile([3.0, -2.0], ktree.num_infosets)
        out = project_flat(ktree, y)
        assert np.all(out >= INTERIOR_FLOOR * 0.999) and on_simplex(ktree, out)
        np.testing.assert_array_equal(project_flat(ktree, y, floor=0.0), np.tile([1.0, 0.0], ktree.num_infosets))

    def test_project_flat_mixed_widths(self):
        tree = tree_for(load_game("leduc:2"))
        y = np.random.default_rng(1).normal(size=tree.num_sa)
        out = project_flat(tree, y, floor=0.0)
        for s in range(0, tree.num_infosets, 17):
            np.testing.assert_allclose(out[tree.slots(s)], project_simplex(y[tree.slots(s)]), atol=1e-15)

    def test_unknown_rule(self, ktree):
        with pytest.raises(ValueError):
            rule_gradient("giga", ktree.uniform_policy(), score_gradient(ktree.uniform_policy(), ktree))


class TestLocalRegret:
    def test_tracker_recomputed_from_iterates(self, ktree):
        res = run_projected(ktree, "acpi", 200, eval_every=50, keep_history=True)
        assert len(res.history) == 201
        cum = np.zeros(ktree.num_sa)
        cum_exp = np.zeros(ktree.num_infosets)
        for theta in res.history[:-1]:
            g = score_gradient(theta, ktree).v_eta
            cum += g
            cum_exp += np.bincount(ktree.sa_infoset, weights=theta * g, minlength=ktree.num_infosets)
        best = np.array([cum[ktree.slots(s)].max() for s in range(ktree.num_infosets)])
        np.testing.assert_allclose(res.tracker.regrets(), best - cum_exp, atol=1e-10)

    def test_bound_formula(self, ktree):
        tracker = LocalRegretTracker(ktree, raw_range=4.0)
        tracker.iterations = 100
        np.testing.assert_allclose(tracker.bound(0.5), 10 + 9.5 * 2 * 0.25)
        np.testing.assert_allclose(tracker.raw_bounds(), 10 + 9.5 * 2 * 16)

    @pytest.mark.parametrize("rule", RULES)
    def test_bound_holds_short_run(self, ktree, rule):
        res = run_projected(ktree, rule, 500, eval_every=100)
        assert res.tracker.satisfied() and res.tracker.raw_satisfied()
        assert all(row[5] for row in res.record.rows)

    def test_counterfactual_regret_logged_only(self, ktree):
        res = run_projected(ktree, "pgpi", 50, eval_every=50)
        assert res.tracker.counterfactual_regrets().shape == (ktree.num_infosets,)


class TestRunProjected:
    def test_record_layout(self, ktree):
        res = run_projected(ktree, "sacpi", 30, eval_every=10)
        assert res.record.columns == ("k", "rule", "nashconv", "max_local_regret", "bound", "bound_satisfied")
        assert res.record.column("k") == [10, 20, 30]
        assert set(res.record.column("rule")) == {"sacpi"}

    def test_feasible_every_iteration(self, ktree):
        res = run_projected(ktree, "spgpi", 100, keep_history=True)
        assert all(on_simplex(ktree, th) for th in res.history)

    @pytest.mark.parametrize("rule", RULES)
    def test_matching_pennies_average(self, rule):
        res = run_projected(load_game("matrix:mp"), rule, 10_000, eval_every=10_000)
        np.testing.assert_allclose(res.average_policy, 0.5, atol=0.05)

    def test_plain_rules_track_each_other(self, ktree):
        a = run_projected(ktree, "pgpi", 300, keep_history=True)
        b = run_projected(ktree, "acpi", 300, keep_history=True)
        assert max(np.max(np.abs(x - y)) for x, y in zip(a.history, b.history)) < 1e-10

    def test_nashconv_falls(self, ktree):
        res = run_projected(ktree, "sacpi", 2000, eval_every=2000)
        assert res.record.rows[-1][2] < 0.5 * 11 / 12

    @pytest.mark.parametrize("k", [0, -1])
    def test_bad_iterations(self, ktree, k):
        with pytest.raises(ValueError):
            run_projected(ktree, "pgpi", k)

    def test_bad_rule(self, ktree):
        with pytest.raises(ValueError):
            run_projected(ktree, "cfr", 10)

    def test_step_size_schedule(self):
        assert [round(step_size(k), 12) for k in (1, 2, 9)] == [1.0, round(1 / math.sqrt(2), 12), round(1 / 3, 12)]
