"""Actor gradients, critic updates, episode sampling and the trainer."""

from __future__ import annotations

import numpy as np
import pytest

from regret_arena import actor_critic as ac
from regret_arena.actor_critic import (
    QTable,
    TrainerConfig,
    Transition,
    VTable,
    actor_gradient_a2c,
    actor_gradient_qpg,
    actor_gradient_rmpg,
    actor_gradient_rpg,
    center_logits,
    count_positive,
    critic_update,
    discounted_returns,
    entropy_bonus_gradient,
    flat_entropy_gradient,
    flat_gradients,
    flat_softmax,
    sample_batch,
    sample_episode,
    train,
)
from regret_arena.games import load_game, tree_for
from regret_arena.metrics import q_values_exact, state_values_exact
from regret_arena.policy import LogitPolicy, Schedule, softmax

H = 1e-5


@pytest.fixture(scope="module")
def kuhn():
    return load_game("kuhn:2")


@pytest.fixture(scope="module")
def ktree(kuhn):
    return tree_for(kuhn)


def central_difference(f, theta):
    out = np.empty_like(theta)
    for b in range(len(theta)):
        e = np.zeros_like(theta)
        e[b] = H
        out[b] = (f(theta + e) - f(theta - e)) / (2 * H)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def random_cases(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m = int(rng.integers(2, 6))
        yield rng.uniform(-3, 3, m), rng.normal(0, 1, m), float(rng.choice([1.0, 0.5, 2.0]))


class TestExamples:
    def test_qpg_two_actions(self):
        np.testing.assert_allclose(actor_gradient_qpg([1, -1], [0.5, 0.5]), [0.5, -0.5])

    @pytest.mark.parametrize("rule", [actor_gradient_qpg, actor_gradient_rpg, actor_gradient_rmpg])
    def test_constant_q_zero(self, rule):
        np.testing.assert_allclose(rule([2.0, 2.0, 2.0], [0.2, 0.3, 0.5]), 0.0, atol=1e-16)

    def test_rpg_three_actions(self):
        pi = np.full(3, 1 / 3)
        adv = ac.advantages([1, 0, -1], pi)
        np.testing.assert_allclose(adv, [1, 0, -1], atol=1e-15)
        assert count_positive(adv) == 1
        np.testing.assert_array_equal(actor_gradient_rpg([1, 0, -1], pi), actor_gradient_qpg([1, 0, -1], pi))

    def test_rpg_two_actions_equals_qpg(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            pi, q = rng.dirichlet([1, 1]), rng.normal(size=2)
            np.testing.assert_array_equal(actor_gradient_rpg(q, pi), actor_gradient_qpg(q, pi))

    def test_rpg_no_positive_advantage(self):
        # a deterministic policy on its best action leaves no positive advantage
        np.testing.assert_array_equal(actor_gradient_rpg([1.0, 0.0], [1.0, 0.0]), [0.0, 0.0])

    def test_rpg_weak_counting(self):
        pi = np.full(3, 1 / 3)
        assert count_positive([1, 0, -1], strict=False) == 2
        np.testing.assert_allclose(actor_gradient_rpg([1, 0, -1], pi, strict=False), 2 * actor_gradient_qpg([1, 0, -1], pi))

    def test_rmpg_two_actions(self):
        np.testing.assert_allclose(actor_gradient_rmpg([1, -1], [0.5, 0.5]), [0.25, -0.25])

    def test_a2c(self):
        np.testing.assert_allclose(actor_gradient_a2c(0, 1.0, 0.0, [0.5, 0.5]), [0.5, -0.5])
        np.testing.assert_array_equal(actor_gradient_a2c(1, 0.7, 0.7, [0.2, 0.8]), [0.0, 0.0])

    def test_entropy_uniform_stationary(self):
        np.testing.assert_allclose(entropy_bonus_gradient(np.full(4, 0.25)), 0.0, atol=1e-16)

    def test_entropy_points_to_uniform(self):
        pi = np.array([0.98, 0.01, 0.01])
        assert entropy_bonus_gradient(pi) @ (np.full(3, 1 / 3) - pi) > 0

    def test_temperature_divides(self):
        q, pi = [1.0, -0.5, 0.2], np.array([0.5, 0.3, 0.2])
        np.testing.assert_allclose(actor_gradient_qpg(q, pi, temperature=2.0), actor_gradient_qpg(q, pi) / 2)


class TestFiniteDifferences:
    def test_qpg(self):
        for theta, q, tau in random_cases(100, 1):
            pi = softmax(theta, tau)
            fd = central_difference(lambda t: softmax(t, tau) @ q, theta)
            assert rel_err(actor_gradient_qpg(q, pi, temperature=tau), fd) < 1e-6

    def test_rpg(self):
        for theta, q, tau in random_cases(100, 2):
            pi = softmax(theta, tau)
            positive = ac.advantages(q, pi) > 0  # indicator frozen at the base point

            def objective(t):
                return -np.sum((q - softmax(t, tau) @ q)[positive])

            fd = central_difference(objective, theta)
            assert rel_err(actor_gradient_rpg(q, pi, temperature=tau), fd) < 1e-6

    def test_rmpg(self):
        for theta, q, tau in random_cases(100, 3):
            pi = softmax(theta, tau)
            plus = np.maximum(ac.advantages(q, pi), 0.0)  # thresholded advantages frozen
            fd = central_difference(lambda t: softmax(t, tau) @ plus, theta)
            assert rel_err(actor_gradient_rmpg(q, pi, temperature=tau), fd) < 1e-6

    def test_a2c(self):
        rng = np.random.default_rng(4)
        for theta, q, tau in random_cases(100, 4):
            a, scale = int(rng.integers(len(theta))), float(rng.normal())
            pi = softmax(theta, tau)
            fd = central_difference(lambda t: np.log(softmax(t, tau)[a]) * scale, theta)
            assert rel_err(actor_gradient_a2c(a, scale, 0.0, pi, tau), fd) < 1e-6

    def test_entropy(self):
        for theta, _, tau in random_cases(100, 5):
            pi = softmax(theta, tau)

            def entropy(t):
                p = softmax(t, tau)
                return -p @ np.log(p)

            assert rel_err(entropy_bonus_gradient(pi, tau), central_difference(entropy, theta)) < 1e-6

    def test_rows_sum_to_zero(self):
        for theta, q, tau in random_cases(50, 6):
            pi = softmax(theta, tau)
            for g in (
                actor_gradient_qpg(q, pi),
                actor_gradient_rpg(q, pi),
                actor_gradient_rmpg(q, pi),
                actor_gradient_a2c(0, 1.3, 0.2, pi),
                entropy_bonus_gradient(pi),
            ):
                assert abs(g.sum()) < 1e-12


class TestFlatRules:
    def test_match_per_row(self, ktree):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=ktree.num_sa)
        q = rng.normal(size=ktree.num_sa)
        pi = flat_softmax(ktree, logits)
        for variant, rule in (("qpg", actor_gradient_qpg), ("rpg", actor_gradient_rpg), ("rmpg", actor_gradient_rmpg)):
            flat = flat_gradients(ktree, pi, q, variant)
            for s in range(ktree.num_infosets):
                sl = ktree.slots(s)
                np.testing.assert_allclose(flat[sl], rule(q[sl], pi[sl]), atol=1e-14)
        ent = flat_entropy_gradient(ktree, pi)
        for s in range(ktree.num_infosets):
            np.testing.assert_allclose(ent[ktree.slots(s)], entropy_bonus_gradient(pi[ktree.slots(s)]), atol=1e-14)

    def test_rpg_is_n_plus_times_qpg_bitwise(self):
        tree = tree_for(load_game("leduc:2"))
        rng = np.random.default_rng(8)
        for _ in range(20):
            pi = flat_softmax(tree, rng.normal(size=tree.num_sa))
            q = rng.normal(size=tree.num_sa)
            qpg, rpg = flat_gradients(tree, pi, q, "qpg"), flat_gradients(tree, pi, q, "rpg")
            idx = tree.sa_infoset
            adv = q - np.bincount(idx, weights=pi * q, minlength=tree.num_infosets)[idx]
            n_plus = np.bincount(idx, weights=(adv > 0).astype(float), minlength=tree.num_infosets)[idx]
            np.testing.assert_array_equal(rpg, n_plus * qpg)

    def test_unknown_variant(self, ktree):
        with pytest.raises(ValueError):
            flat_gradients(ktree, ktree.uniform_policy(), np.zeros(ktree.num_sa), "a2c")

    def test_softmax_and_centering(self, ktree):
        logits = np.random.default_rng(9).normal(size=ktree.num_sa)
        pi = flat_softmax(ktree, logits, 0.7)
        for s in range(ktree.num_infosets):
            np.testing.assert_allclose(pi[ktree.slots(s)], softmax(logits[ktree.slots(s)], 0.7))
        centered = center_logits(ktree, logits)
        np.testing.assert_allclose(flat_softmax(ktree, centered, 0.7), pi)
        assert np.allclose(np.bincount(ktree.sa_infoset, weights=centered), 0, atol=1e-14)


class TestCritic:
    def test_single_exact_step(self):
        table = np.zeros(3)
        loss = critic_update(table, np.array([1]), np.array([1.0]), lr=0.5)
        assert loss == 1.0 and table.tolist() == [0.0, 1.0, 0.0]

    def test_batch_average(self):
        table = np.zeros(2)
        critic_update(table, np.array([0, 0, 1]), np.array([1.0, 3.0, -1.0]), lr=0.1)
        np.testing.assert_allclose(table, [0.4, -0.2])

    def test_fixed_target_geometric(self):
        table = np.zeros(1)
        gaps = []
        for _ in range(20):
            critic_update(table, np.array([0]), np.array([2.0]), lr=0.1)
            gaps.append(2.0 - table[0])
        np.testing.assert_allclose(np.array(gaps[1:]) / gaps[:-1], 0.8)

    def test_mixed_targets(self):
        lr = 0.01
        table = np.zeros(1)
        for i in range(5000):
            critic_update(table, np.array([0]), np.array([float(i % 2)]), lr=lr)
            if i > 4000:
                assert abs(table[0] - 0.5) <= lr

    def test_running_mean_mode(self):
        table = np.zeros(2)
        seen = np.zeros(2, dtype=np.int64)
        targets = [3.0, 1.0, 5.0, -1.0]
        for t in targets:
            critic_update(table, np.array([0]), np.array([t]), lr=0.0, seen=seen)
        assert table[0] == pytest.approx(np.mean(targets)) and seen.tolist() == [4, 0]

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            critic_update(np.zeros(2), np.array([], dtype=int), np.array([]), lr=0.1)

    def test_tables(self, ktree):
        q, v = QTable.zeros(ktree), VTable.zeros(ktree)
        q.values[ktree.slots(ktree.key_index["p1|K|b"])] = [0.5, -0.5]
        np.testing.assert_array_equal(q["p1|K|b"], [0.5, -0.5])
        assert v["p0|J|"] == 0.0 and len(v.values) == 12


class TestDiscountedReturns:
    def test_closed_form(self):
        np.testing.assert_allclose(discounted_returns([0, 0, 1], 0.99), [0.9801, 0.99, 1.0])

    def test_empty(self):
        assert discounted_returns([], 0.9).shape == (0,)

    def test_undiscounted(self):
        np.testing.assert_array_equal(discounted_returns([0, -2], 1.0), [-2, -2])

    def test_bootstrap_and_transitions(self):
        steps = [Transition("p0|J|", 0, 0.0, 0, 0.5), Transition("p0|J|pb", 1, 1.0, 0, 0.5)]
        np.testing.assert_allclose(discounted_returns(steps, 0.5, bootstrap=4.0), [1.5, 3.0])


class TestSampling:
    def test_episode_shape(self, kuhn, ktree):
        joint = LogitPolicy.zeros(ktree)
        rng = np.random.default_rng(10)
        for _ in range(200):
            steps, returns = sample_episode(joint, kuhn, rng)
            assert 2 <= len(steps[0]) + len(steps[1]) <= 3
            for p, seq in enumerate(steps):
                assert all(t.player == p and t.key.startswith(f"p{p}|") for t in seq)
                assert all(t.reward == 0 for t in seq[:-1])
                assert seq[-1].reward == returns[p]
                assert all(0 < t.behavior_prob <= 1 for t in seq)

    def test_episode_deterministic(self, kuhn, ktree):
        joint = LogitPolicy.zeros(ktree)
        a = [sample_episode(joint, kuhn, np.random.default_rng(11)) for _ in range(2)]
        assert repr(a[0]) == repr(a[1])

    def test_uniform_frequencies(self, kuhn, ktree):
        joint = LogitPolicy.zeros(ktree)
        rng = np.random.default_rng(12)
        n = 10_000
        bets = sum(sample_episode(joint, kuhn, rng)[0][0][0].action for _ in range(n))
        assert abs(bets - n / 2) <= 3 * np.sqrt(n / 4)

    def test_batch_matches_policy(self, ktree):
        pi = flat_softmax(ktree, np.random.default_rng(13).normal(size=ktree.num_sa))
        n = 200_000
        batch = sample_batch(ktree, pi, np.random.default_rng(14), n)
        visits = np.bincount(batch.sa, minlength=ktree.num_sa)
        state_visits = np.bincount(batch.infoset, minlength=ktree.num_infosets)[ktree.sa_infoset]
        freq = visits / np.maximum(state_visits, 1)
        sigma = np.sqrt(pi * (1 - pi) / np.maximum(state_visits, 1))
        assert np.all(np.abs(freq - pi) <= 4 * sigma + 1e-12)

    def test_batch_structure(self, ktree):
        batch = sample_batch(ktree, ktree.uniform_policy(), np.random.default_rng(15), 500)
        assert np.all(np.diff(batch.episode) >= 0)
        assert batch.returns.shape == (500, 2) and np.all(batch.returns.sum(axis=1) == 0)
        for e in range(20):
            rows = np.flatnonzero(batch.episode == e)
            for p in (0, 1):
                mine = rows[batch.player[rows] == p]
                np.testing.assert_array_equal(batch.steps_after[mine], np.arange(len(mine))[::-1])

    def test_a2c_expected_direction_matches_qpg(self, kuhn, ktree):
        pi = flat_softmax(ktree, np.random.default_rng(16).normal(size=ktree.num_sa))
        v = np.empty(ktree.num_infosets)
        exact = np.empty(ktree.num_sa)
        for p in (0, 1):
            q = q_values_exact(pi, p, kuhn)
            sv = state_values_exact(pi, p, kuhn)
            for key, row in q.items():
                s = ktree.key_index[key]
                v[s] = sv[key]
                exact[ktree.slots(s)] = actor_gradient_qpg(row, pi[ktree.slots(s)])
        batch = sample_batch(ktree, pi, np.random.default_rng(17), 100_000)
        G = batch.returns[batch.episode, batch.player]
        adv = G - v[batch.infoset]
        onehot = np.bincount(batch.sa, weights=adv, minlength=ktree.num_sa)
        base = np.bincount(batch.infoset, weights=adv, minlength=ktree.num_infosets)[ktree.sa_infoset]
        counts = np.bincount(batch.infoset, minlength=ktree.num_infosets)[ktree.sa_infoset]
        mc = (onehot - pi * base) / np.maximum(counts, 1)
        cosine = mc @ exact / (np.linalg.norm(mc) * np.linalg.norm(exact))
        assert cosine > 0.95


class TestTrainerConfig:
    def test_defaults_valid(self):
        cfg = TrainerConfig()
        assert cfg.gamma == 0.99 and cfg.critic_lr == Schedule("constant", 0.001)

    def test_from_mapping_casts(self):
        cfg = TrainerConfig.from_mapping(
            {"variant": "qpg", "n_q": "4", "actor_lr": "linear-anneal:0.2:0:1000", "freeze_policy": "true"}
        )
        assert cfg.variant == "qpg" and cfg.n_q == 4 and cfg.freeze_policy
        assert cfg.actor_lr == Schedule("linear-anneal", 0.2, 0.0, 1000)

    def test_round_trip(self):
        cfg = TrainerConfig(variant="rmpg", seed=3, temperature=Schedule("inverse-sqrt", 2.0))
        assert TrainerConfig.from_mapping(cfg.as_mapping()) == cfg

    def test_unknown_key_named(self):
        with pytest.raises(KeyError, match="learning_rate"):
            TrainerConfig.from_mapping({"learning_rate": "0.1"})

    @pytest.mark.parametrize(
        "values", [{"variant": "ppo"}, {"gamma": "0"}, {"gamma": "1.5"}, {"n_q": "0"}, {"n_q": "x"}, {"freeze_policy": "maybe"}]
    )
    def test_bad_values(self, values):
        with pytest.raises(ValueError):
            TrainerConfig.from_mapping(values)

    def test_horizon_scaling(self):
        cfg = TrainerConfig(horizon_scale=0.001)
        assert cfg.scaled_actor_lr.horizon == 20_000
        assert cfg.scaled_critic_lr == cfg.critic_lr


SMALL = dict(episodes=4096, eval_every=1024, n_q=4, batch_size=8)


class TestTrain:
    def test_record_schema(self, ktree):
        res = train(TrainerConfig(variant="qpg", **SMALL), ktree)
        assert res.record.columns == ("episode", "variant", "seed", "nashconv", "entropy_mean", "critic_loss")
        assert res.record.column("episode") == [1024, 2048, 3072, 4096]
        assert set(res.record.column("variant")) == {"qpg"}

    def test_deterministic(self, ktree):
        cfg = TrainerConfig(variant="rpg", seed=5, **SMALL)
        assert train(cfg, ktree).record.to_csv() == train(cfg, ktree).record.to_csv()

    def test_seed_changes_run(self, ktree):
        a = train(TrainerConfig(seed=1, **SMALL), ktree).record.to_csv()
        b = train(TrainerConfig(seed=2, **SMALL), ktree).record.to_csv()
        assert a != b

    def test_a2c_uses_state_critic(self, ktree):
        res = train(TrainerConfig(variant="a2c", **SMALL), ktree)
        assert res.critic.shape == (ktree.num_infosets,)

    @pytest.mark.parametrize("variant", ["qpg", "rpg", "rmpg"])
    def test_q_critic_shape(self, ktree, variant):
        assert train(TrainerConfig(variant=variant, **SMALL), ktree).critic.shape == (ktree.num_sa,)

    def test_frozen_policy_keeps_logits(self, ktree):
        res = train(TrainerConfig(freeze_policy=True, **SMALL), ktree)
        np.testing.assert_array_equal(res.logits, 0.0)

    def test_logits_stay_centered(self, ktree):
        res = train(TrainerConfig(variant="rmpg", **SMALL), ktree)
        assert np.allclose(np.bincount(ktree.sa_infoset, weights=res.logits), 0, atol=1e-12)
        assert np.all(np.isfinite(res.logits))

    def test_rpg_identity_at_every_update(self, ktree, monkeypatch):
        original = ac.flat_gradients
        calls = []

        def checked(tree, pi, q, variant, strict=True):
            out = original(tree, pi, q, variant, strict)
            qpg = original(tree, pi, q, "qpg", strict)
            idx = tree.sa_infoset
            adv = q - np.bincount(idx, weights=pi * q, minlength=tree.num_infosets)[idx]
            n_plus = np.bincount(idx, weights=(adv > 0).astype(float), minlength=tree.num_infosets)[idx]
            np.testing.assert_array_equal(out, n_plus * qpg)
            calls.append(1)
            return out

        monkeypatch.setattr(ac, "flat_gradients", checked)
        train(TrainerConfig(variant="rpg", **SMALL), ktree)
        assert len(calls) == SMALL["episodes"] // (SMALL["n_q"] * SMALL["batch_size"])

    def test_leduc_smoke(self):
        res = train(TrainerConfig(episodes=512, eval_every=512, n_q=2, batch_size=4), load_game("leduc:2"))
        assert len(res.record.rows) == 1 and np.isfinite(res.record.rows[0][3])
