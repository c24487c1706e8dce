import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import frozen_batch, random_play_transitions
from qrlander import agents as ag
from qrlander.agents import (
    ActorCriticAgent, AgentConfig, Batch, EpsilonSchedule, ReplayBuffer, Transition,
    make_agent, nstep_targets, select_action, softmax, td_target, train_step_ac, train_step_q,
)
from qrlander.errors import ConfigError, FormatError, StructureError, UsageError


def transition(i=0, done=False):
    s = np.full(8, float(i))
    return Transition(s, i % 4, float(i), s + 1, done)


class TestSelectAction:
    def test_greedy(self):
        assert select_action([0.1, 0.9, 0.3, 0.2], 0.0, np.random.default_rng(0)) == 1

    def test_tie_goes_low(self):
        assert select_action([0.5, 0.5, 0.1, 0.1], 0.0, np.random.default_rng(0)) == 0

    def test_uniform_when_epsilon_one(self):
        rng = np.random.default_rng(0)
        n = 100_000
        counts = np.bincount([select_action([0, 0, 9, 0], 1.0, rng) for _ in range(n)], minlength=4)
        sigma = np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(counts - n / 4) < 3 * sigma)

    def test_softmax_sampling_ignores_epsilon(self):
        rng = np.random.default_rng(1)
        logits = np.log([0.1, 0.2, 0.3, 0.4])
        n = 50_000
        counts = np.bincount([select_action(logits, 1.0, rng, sample_softmax=True) for _ in range(n)], minlength=4)
        p = np.array([0.1, 0.2, 0.3, 0.4])
        assert np.all(np.abs(counts - n * p) < 4 * np.sqrt(n * p * (1 - p)))

    def test_bad_epsilon(self):
        with pytest.raises(ConfigError):
            select_action([0, 0, 0, 0], 1.5, np.random.default_rng(0))

    @given(st.lists(st.floats(-50, 50), min_size=4, max_size=4))
    def test_softmax_normalized(self, logits):
        assert softmax(logits).sum() == pytest.approx(1.0, abs=1e-12)


class TestTdTarget:
    def test_examples(self):
        assert td_target(-5.0, [1, 2, 3, 4], True) == -5.0
        assert td_target(1.0, [0, 2, 1, -1], False, 0.99) == pytest.approx(2.98)
        assert td_target(0.0, np.zeros(4), False) == 0.0

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=3),
           st.lists(st.booleans(), min_size=3, max_size=3))
    def test_gamma_zero_is_reward(self, rewards, dones):
        next_q = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_array_equal(td_target(np.array(rewards), next_q, np.array(dones), 0.0), rewards)

    def test_nstep_one_is_td(self):
        r = np.array([1.0, 2.0, 3.0])
        v = np.array([10.0, 20.0, 30.0])
        d = np.array([False, False, True])
        np.testing.assert_allclose(nstep_targets(r, v, d, 0.9, 1), r + 0.9 * v * (1 - d))

    def test_nstep_accumulates(self):
        r = np.array([1.0, 2.0, 3.0])
        v = np.array([10.0, 20.0, 30.0])
        d = np.zeros(3, bool)
        out = nstep_targets(r, v, d, 0.5, 2)
        np.testing.assert_allclose(out, [1 + 0.5 * 2 + 0.25 * 20, 2 + 0.5 * 3 + 0.25 * 30, 3 + 0.5 * 30])


class TestEpsilon:
    def test_formula_and_monotone(self):
        sch = EpsilonSchedule()
        values = [sch.value(e) for e in range(10_000)]
        assert values[0] == 1.0
        assert values[1] == pytest.approx(0.999)
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert min(values) == 0.01 and max(values) == 1.0


class TestReplay:
    def test_ring_and_capacity(self):
        buf = ReplayBuffer(5, np.random.default_rng(0))
        for i in range(12):
            buf.add(transition(i))
        assert len(buf) == 5
        assert sorted(buf.rewards) == [7, 8, 9, 10, 11]

    @given(st.integers(1, 50), st.integers(0, 1000))
    def test_sample_without_replacement(self, n, seed):
        buf = ReplayBuffer(64, np.random.default_rng(seed))
        for i in range(60):
            buf.add(transition(i))
        b = buf.sample(n)
        assert len(set(b.rewards.tolist())) == n

    def test_too_large_sample(self):
        buf = ReplayBuffer(10, np.random.default_rng(0))
        buf.add(transition())
        with pytest.raises(UsageError):
            buf.sample(2)

    def test_seeded(self):
        def draw():
            buf = ReplayBuffer(100, np.random.default_rng(3))
            for i in range(100):
                buf.add(transition(i))
            return buf.sample(10).rewards.tolist()

        assert draw() == draw()

    def test_transition_validation(self):
        with pytest.raises(StructureError):
            Transition(np.zeros(8), 4, 0.0, np.zeros(8), False)
        with pytest.raises(StructureError):
            Transition(np.zeros(7), 0, 0.0, np.zeros(8), False)
        with pytest.raises(StructureError):
            Transition(np.zeros(8), 0, float("inf"), np.zeros(8), False)


@pytest.fixture(params=["qrl", "dqn"])
def q_agent(request):
    return make_agent(request.param, AgentConfig(), seed=0)


class TestQUpdate:
    def test_empty_batch(self, q_agent):
        with pytest.raises(UsageError):
            train_step_q(q_agent, [])

    def test_single_transition_loss_is_squared_error(self, q_agent):
        t = random_play_transitions(1, 1)[0]
        q = q_agent.q_values(t.state)[t.action]
        target = td_target(t.reward, q_agent.q_values(t.next_state, target=True), t.done, 0.99)
        assert train_step_q(q_agent, [t]) == pytest.approx((q - target) ** 2, rel=1e-12)

    def test_exact_predictions_leave_params(self):
        agent = make_agent("dqn", AgentConfig(gamma=0.0), 0)
        for p in agent.net.params:
            p[...] = 0.0
        agent.sync_target()
        s = np.ones(8)
        b = Batch(np.stack([s, s]), np.array([0, 2]), np.zeros(2), np.stack([s, s]), np.zeros(2, bool))
        assert train_step_q(agent, b) == 0.0
        assert not any(p.any() for p in agent.net.params)

    def test_loss_drops_on_frozen_batch(self, q_agent):
        b = frozen_batch(0, 16)
        first = train_step_q(q_agent, b)
        for _ in range(49):
            last = train_step_q(q_agent, b)
        assert last < first

    def test_target_sync_period(self):
        agent = make_agent("dqn", AgentConfig(target_sync=3), 0)
        b = frozen_batch(1, 8)
        before = [p.copy() for p in agent.target.params]
        train_step_q(agent, b)
        train_step_q(agent, b)
        assert all(np.array_equal(a, c) for a, c in zip(before, agent.target.params))
        train_step_q(agent, b)
        assert all(np.array_equal(a, c) for a, c in zip(agent.net.params, agent.target.params))

    def test_qrl_target_sync_period(self):
        agent = make_agent("qrl", AgentConfig(target_sync=2), 0)
        b = frozen_batch(1, 4)
        before = agent.target.flat()
        train_step_q(agent, b)
        assert np.array_equal(before, agent.target.flat())
        train_step_q(agent, b)
        assert np.array_equal(agent.params.flat(), agent.target.flat())

    def test_double_q_scores_online_choice_with_target(self):
        agent = make_agent("dqn", AgentConfig(double_q=True, gamma=0.5), 0)
        agent.target.params[-1][...] += np.array([0.0, 0.0, 0.0, 5.0])
        t = random_play_transitions(2, 1)[0]
        pick = int(np.argmax(agent.q_values(t.next_state)))
        expected = t.reward + 0.5 * agent.q_values(t.next_state, target=True)[pick] * (not t.done)
        q = agent.q_values(t.state)[t.action]
        assert train_step_q(agent, [t]) == pytest.approx((q - expected) ** 2, rel=1e-12)

    def test_learning_waits_for_buffer(self):
        agent = make_agent("dqn", AgentConfig(learn_start=20, batch_size=8), 0)
        losses = [agent.observe(t) for t in random_play_transitions(0, 25)]
        assert all(not x for x in losses[:19])
        assert all(len(x) == 1 for x in losses[19:])

    def test_train_every(self):
        agent = make_agent("dqn", AgentConfig(learn_start=0, batch_size=4, train_every=3), 0)
        losses = [agent.observe(t) for t in random_play_transitions(0, 12)]
        assert [len(x) for x in losses] == [0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1]


class TestActorCritic:
    def test_default_count(self):
        assert make_agent("ac").count_params() == 8 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4 + 64 + 1

    def test_policy_sums_to_one(self):
        agent = make_agent("ac", seed=3)
        for t in random_play_transitions(2, 20):
            assert agent.policy(t.state).sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_advantage_zero_policy_gradient(self):
        agent = make_agent("ac", AgentConfig(entropy_coef=0.0), 0)
        for p in agent.critic.params:
            p[...] = 0.0
        agent.touch()
        s = np.random.default_rng(0).normal(size=(3, 8))
        b = Batch(s, np.array([0, 1, 3]), np.zeros(3), s, np.ones(3, bool))
        policy_loss, value_loss, grads = agent.gradients(b)
        assert policy_loss == 0.0 and value_loss == 0.0
        assert not any(g.any() for g in grads)

    def test_value_gradient_matches_finite_differences(self):
        agent = make_agent("ac", AgentConfig(entropy_coef=0.0, ac_nstep=1), 2)
        b = Batch.from_transitions(random_play_transitions(5, 2))
        _, _, grads = agent.gradients(b)
        n_trunk, n_actor = len(agent.trunk.params), len(agent.actor.params)
        next_v = agent.logits_and_values(b.next_states)[1]
        targets = b.rewards + 0.99 * next_v * (1 - b.dones)

        def value_loss():
            return float(np.mean((targets - agent.logits_and_values(b.states)[1]) ** 2))

        # the critic head only receives value-loss gradient
        for p, g in zip(agent.critic.params, grads[n_trunk + n_actor:]):
            for i in np.ndindex(p.shape):
                o = p[i]
                p[i] = o + 1e-5
                lp = value_loss()
                p[i] = o - 1e-5
                lm = value_loss()
                p[i] = o
                fd = (lp - lm) / 2e-5
                assert abs(fd - g[i]) <= 1e-6 * max(1.0, abs(fd))

    def test_full_gradient_matches_finite_differences(self):
        agent = make_agent("ac", AgentConfig(entropy_coef=0.05, ac_nstep=3), 4)
        b = Batch.from_transitions(random_play_transitions(6, 5))
        _, _, grads = agent.gradients(b)
        next_v = agent.logits_and_values(b.next_states)[1]
        targets = nstep_targets(b.rewards, next_v, b.dones, 0.99, 3)
        logits0, v0 = agent.logits_and_values(b.states)
        adv0 = targets - v0
        rows = np.arange(len(b))

        def loss():
            logits, v = agent.logits_and_values(b.states)
            p = softmax(logits)
            ent = -(p * np.log(p)).sum(axis=1)
            return (-np.mean(np.log(p[rows, b.actions]) * adv0) + np.mean((targets - v) ** 2)
                    - 0.05 * np.mean(ent))

        rng = np.random.default_rng(0)
        for p, g in zip(agent.params, grads):
            for _ in range(5):
                i = tuple(rng.integers(0, s) for s in p.shape)
                o = p[i]
                p[i] = o + 1e-5
                lp = loss()
                p[i] = o - 1e-5
                lm = loss()
                p[i] = o
                fd = (lp - lm) / 2e-5
                assert abs(fd - g[i]) <= 1e-6 * max(1.0, abs(fd))

    def test_segment_updates(self):
        agent = make_agent("ac", AgentConfig(ac_segment=4), 0)
        ts = random_play_transitions(0, 10)
        counts = [len(agent.observe(t)) for t in ts[:9]]
        assert counts == [0, 0, 0, 1, 0, 0, 0, 1, 0]
        assert len(agent.end_episode()) == 1 and agent.end_episode() == []

    def test_greedy_is_argmax(self):
        agent = make_agent("ac", seed=1)
        s = np.ones(8)
        assert agent.act(s, 0.0, greedy=True) == int(np.argmax(agent.logits_and_values(s)[0]))


class TestInterface:
    @pytest.mark.parametrize("kind", ag.AGENT_KINDS)
    def test_surface(self, kind):
        agent = make_agent(kind, AgentConfig(learn_start=0, batch_size=4, ac_segment=4), 0)
        for t in random_play_transitions(0, 10):
            assert 0 <= agent.act(t.state, 0.5) < 4
            assert isinstance(agent.observe(t), list)
        assert isinstance(agent.end_episode(), list)
        assert agent.count_params() > 0

    @pytest.mark.parametrize("kind", ag.AGENT_KINDS)
    def test_state_round_trip(self, kind):
        cfg = AgentConfig(learn_start=0, batch_size=4, ac_segment=4)
        a = make_agent(kind, cfg, 0)
        for t in random_play_transitions(0, 12):
            a.observe(t)
        doc = json.loads(json.dumps(a.state_dict()))
        b = make_agent(kind, cfg, 99)
        b.load_state_dict(doc)
        s = np.linspace(-1, 1, 8)
        assert b.act(s, 0.3) == a.act(s, 0.3)  # rng state restored too
        assert json.dumps(b.state_dict(), sort_keys=True) == json.dumps(a.state_dict(), sort_keys=True)

    @pytest.mark.parametrize("kind", ag.AGENT_KINDS)
    def test_bad_state(self, kind):
        a = make_agent(kind)
        with pytest.raises(FormatError):
            a.load_state_dict({"params": {}})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_agent("ppo")

    def test_counts(self):
        assert make_agent("dqn").count_params() == 9156
        assert make_agent("qrl").count_params() == 64

    @pytest.mark.parametrize("kw", [{"gamma": 1.5}, {"lr": 0}, {"batch_size": 0}, {"eps_end": 2.0},
                                    {"eps_decay": 0.0}, {"batch_size": 10, "buffer_capacity": 5}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            AgentConfig(**kw)
