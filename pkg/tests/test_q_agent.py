import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llapipe.q_agent import (
    ACTION_ORDER,
    AgentState,
    N_ACTIONS,
    N_STATES,
    QLearningAgent,
    QLearningConfig,
    START_STATE_INDEX,
    TERMINATE_INDEX,
    action_index,
    index_to_op,
)


class TestLayout:
    def test_dimensions(self):
        agent = QLearningAgent()
        assert agent.q.shape == (27, 27)
        assert N_STATES == N_ACTIONS == 27

    def test_canonical_action_order(self):
        assert ACTION_ORDER[:25] == tuple(range(25))
        assert ACTION_ORDER[25] == -1
        assert index_to_op(TERMINATE_INDEX) is None
        assert action_index(-1) == 25
        assert action_index(0) == 0

    def test_state_indices(self):
        assert AgentState(None).index() == START_STATE_INDEX == 26
        assert AgentState(7).index() == 7
        assert AgentState(-1).index() == 25


class TestSelectAction:
    def test_greedy_tie_breaks_to_lowest_index(self):
        agent = QLearningAgent()
        rng = np.random.default_rng(0)
        action = agent.select_action(AgentState(None), 0.0, rng)
        assert action == 0
        assert index_to_op(action) == 0

    def test_greedy_picks_max(self):
        agent = QLearningAgent()
        agent.q[AgentState(None).index(), action_index(15)] = 1.0
        rng = np.random.default_rng(0)
        assert agent.select_action(AgentState(None), 0.0, rng) == action_index(15)

    def test_uniform_exploration_frequencies(self):
        agent = QLearningAgent()
        rng = np.random.default_rng(42)
        counts = np.zeros(27)
        n = 27_000
        for _ in range(n):
            counts[agent.select_action(AgentState(3), 1.0, rng)] += 1
        freqs = counts / n
        assert np.all(np.abs(freqs - 1 / 27) <= 0.01)

    def test_deterministic_given_seed(self):
        agent = QLearningAgent()
        a = [
            agent.select_action(AgentState(None), 0.5, np.random.default_rng(9))
            for _ in range(1)
        ]
        b = [
            agent.select_action(AgentState(None), 0.5, np.random.default_rng(9))
            for _ in range(1)
        ]
        assert a == b


class TestUpdate:
    def test_hand_case_full_learning_rate(self):
        agent = QLearningAgent(QLearningConfig(learning_rate=1.0, discount=0.9))
        s, s2 = AgentState(None), AgentState(3)
        agent.q[s2.index()] = 0.0
        agent.q[s2.index(), 5] = 0.5
        agent.update(s, 2, 1.0, s2, terminal=False)
        assert agent.q[s.index(), 2] == pytest.approx(1.45)

    def test_terminal_ignores_bootstrap(self):
        agent = QLearningAgent(QLearningConfig(learning_rate=1.0, discount=0.9))
        s, s2 = AgentState(1), AgentState(2)
        agent.q[s2.index(), :] = 5.0
        agent.update(s, 4, 0.8, s2, terminal=True)
        assert agent.q[s.index(), 4] == pytest.approx(0.8)

    def test_partial_learning_rate_hand_arithmetic(self):
        # oracle: 0.5*0.4 + 0.5*(0.1 + 0.9*0.2) = 0.34
        agent = QLearningAgent(QLearningConfig(learning_rate=0.5, discount=0.9))
        s, s2 = AgentState(0), AgentState(1)
        agent.q[s.index(), 3] = 0.4
        agent.q[s2.index(), 7] = 0.2
        agent.update(s, 3, 0.1, s2, terminal=False)
        assert agent.q[s.index(), 3] == pytest.approx(0.34)

    def test_chain_mdp_converges_to_analytic_fixed_point(self):
        # START -a0(r=0.1)-> s0 -a1(r=0.2)-> s1 -TERM(r=0.5)-> end
        # analytic: Q(s1,T)=0.5; Q(s0,a1)=0.2+0.9*0.5; Q(START,a0)=0.1+0.9*Q(s0,a1)
        agent = QLearningAgent(QLearningConfig(learning_rate=1.0, discount=0.9))
        start, s0, s1 = AgentState(None), AgentState(0), AgentState(1)
        a0, a1 = action_index(0), action_index(1)
        for _ in range(500):
            agent.update(start, a0, 0.1, s0, terminal=False)
            agent.update(s0, a1, 0.2, s1, terminal=False)
            agent.update(s1, TERMINATE_INDEX, 0.5, s1, terminal=True)
        assert abs(agent.q[s1.index(), TERMINATE_INDEX] - 0.5) < 1e-9
        assert abs(agent.q[s0.index(), a1] - (0.2 + 0.9 * 0.5)) < 1e-9
        assert abs(agent.q[start.index(), a0] - (0.1 + 0.9 * 0.65)) < 1e-9


class TestPolicyDistribution:
    def test_uniform_on_zero_row(self):
        agent = QLearningAgent()
        p = agent.policy_distribution(AgentState(None))
        assert np.allclose(p, 1 / 27)
        assert abs(p.sum() - 1.0) <= 1e-9

    def test_dominant_value(self):
        agent = QLearningAgent()
        agent.q[AgentState(2).index(), 4] = 10.0
        p = agent.policy_distribution(AgentState(2), temperature=0.1)
        assert p[4] > 0.999

    def test_high_temperature_limit(self):
        agent = QLearningAgent()
        agent.q[AgentState(2).index()] = np.arange(27.0)
        p = agent.policy_distribution(AgentState(2), temperature=1e6)
        assert np.all(np.abs(p - 1 / 27) < 1e-6)

    @given(st.floats(-5, 5))
    @settings(max_examples=30, deadline=None)
    def test_shift_invariance(self, shift):
        agent = QLearningAgent()
        rng = np.random.default_rng(5)
        agent.q[3] = rng.normal(size=27)
        p1 = agent.policy_distribution(AgentState(3))
        agent.q[3] += shift
        p2 = agent.policy_distribution(AgentState(3))
        assert np.allclose(p1, p2, atol=1e-12)

    def test_argmax_matches_greedy_selection(self):
        agent = QLearningAgent()
        rng = np.random.default_rng(8)
        agent.q[5] = rng.normal(size=27)
        p = agent.policy_distribution(AgentState(5))
        greedy = agent.select_action(AgentState(5), 0.0, np.random.default_rng(0))
        assert int(np.argmax(p)) == greedy


class TestEpsilonDecay:
    def test_single_decay(self):
        agent = QLearningAgent()
        assert agent.decay_epsilon(1.0) == pytest.approx(0.99)

    def test_floor(self):
        agent = QLearningAgent()
        assert agent.decay_epsilon(0.1003) == 0.1

    def test_hundred_decays(self):
        agent = QLearningAgent()
        eps = 1.0
        for _ in range(100):
            eps = agent.decay_epsilon(eps)
        assert eps == pytest.approx(max(0.1, 0.99**100))
        assert eps == pytest.approx(0.3660323412732292)


class TestCsvRoundTrip:
    def test_export_import(self, tmp_path):
        agent = QLearningAgent()
        rng = np.random.default_rng(0)
        agent.q[:] = rng.normal(size=(27, 27))
        path = str(tmp_path / "q.csv")
        agent.to_csv(path)
        loaded = QLearningAgent.from_csv(path)
        assert np.array_equal(agent.q, loaded.q)
