"""Main search loop tying the agent, advisor, trigger, pool, and miner
together, plus the trigger cost-model simulation.

An episode builds one pipeline step by step. When the advisor fires, its
suggested pipelines are evaluated in confidence order and the first one that
beats the current best is adopted outright: its trajectory is replayed into
the Q-table and becomes the episode's outcome. When nothing improves, the
episode continues with one action drawn from the hybrid policy mixture and
native epsilon-greedy steps after that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import advisor as advisor_mod
from .advisor import (
    AdvisorContext,
    AdvisorSuggestion,
    MockAdvisor,
    PolicyIntegrationConfig,
    integrate_policies,
)
from .data_model import (
    Dataset,
    SplitSpec,
    compute_meta_features,
    split,
    summarize_dataset,
)
from .distillation import Rule, knowledge_lookup, mine_rules
from .errors import (
    AdvisorUnavailable,
    DegenerateOutput,
    InapplicableOperator,
    SingleClassTrain,
    UnparseableResponse,
)
from .evaluator import (
    INVALID_ACTION_PENALTY,
    ModelConfig,
    compute_reward,
    train_and_eval,
)
from .experience_pool import (
    ExperienceEntry,
    ExperiencePool,
    RetrievalConfig,
    TrajectoryStep,
)
from .operators import Pipeline, apply_operator
from .q_agent import (
    AgentState,
    QLearningAgent,
    QLearningConfig,
    TERMINATE_INDEX,
    action_index,
    index_to_op,
)
from .trigger import PerformanceBuffer, TriggerConfig, should_trigger, update_buffer

ADVISOR_OFF = "off"
ADVISOR_FIXED = "fixed"
ADVISOR_ADAPTIVE = "adaptive"


@dataclass
class SearchConfig:
    episodes: int = 100
    max_pipeline_len: int = 9
    seed: int = 0
    advisor_mode: str = ADVISOR_ADAPTIVE
    fixed_interval: int = 2
    # None means "admit when the episode beats the best accuracy so far".
    admission_threshold: float | None = None
    greedy_combined: bool = False
    distill_every: int = 25
    distill_min_support: int = 2
    source_tag: str = ""
    split: SplitSpec = field(default_factory=SplitSpec)
    qlearning: QLearningConfig = field(default_factory=QLearningConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    integration: PolicyIntegrationConfig = field(
        default_factory=PolicyIntegrationConfig
    )
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.episodes < 1 or self.max_pipeline_len < 1:
            raise ValueError("episodes and max_pipeline_len must be >= 1")
        if self.advisor_mode not in (ADVISOR_OFF, ADVISOR_FIXED, ADVISOR_ADAPTIVE):
            raise ValueError(f"unknown advisor mode {self.advisor_mode!r}")


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    accuracy: float
    epsilon: float
    triggered: bool
    advisor_calls_cumulative: int
    evaluations: int


@dataclass
class SearchResult:
    best_pipeline: Pipeline
    best_accuracy: float
    history: list[EpisodeRecord]
    q_values: np.ndarray
    pool_size: int

    @property
    def advisor_calls(self) -> int:
        return self.history[-1].advisor_calls_cumulative if self.history else 0


class SearchRun:
    """Mutable state for one seeded search over one dataset."""

    def __init__(
        self,
        cfg: SearchConfig,
        dataset: Dataset,
        backend=None,
        pool: ExperiencePool | None = None,
        rules: list[Rule] | None = None,
    ):
        self.cfg = cfg
        self.backend = backend if backend is not None else MockAdvisor()
        self.train, self.val, self.test = split(dataset, cfg.split)
        self.agent = QLearningAgent(cfg.qlearning)
        self.rng = np.random.default_rng(cfg.seed)
        self.epsilon = cfg.qlearning.epsilon_start
        self.buffer = PerformanceBuffer()
        self.last_call = 0
        self.advisor_calls = 0
        self.pool = pool if pool is not None else ExperiencePool()
        self.rules: list[Rule] = list(rules) if rules else []
        self.best_accuracy = -np.inf
        self.best_pipeline = Pipeline(())
        self.history: list[EpisodeRecord] = []
        self.initial_meta = compute_meta_features(self.train, 0)
        self._acc_cache: dict[tuple[int, ...], float] = {}
        self.baseline_accuracy = self._pipeline_accuracy(())

    # --- evaluation helpers ---------------------------------------------

    def _pipeline_accuracy(self, ops: tuple[int, ...]) -> float:
        """Validation accuracy of a pipeline (fit on each split separately);
        degenerate pipelines score 0. Memoized per run."""
        if ops in self._acc_cache:
            return self._acc_cache[ops]
        try:
            d_train = self._fold(ops, self.train)
            d_val = self._fold(ops, self.val)
            acc = train_and_eval(d_train, d_val, self.cfg.model)
        except (DegenerateOutput, SingleClassTrain):
            acc = 0.0
        self._acc_cache[ops] = acc
        return acc

    def _fold(self, ops: tuple[int, ...], d: Dataset) -> Dataset:
        current = d
        executed = 0
        for op in ops:
            try:
                current = apply_operator(op, current, self.cfg.seed + executed)
            except InapplicableOperator:
                continue
            executed += 1
        return current

    def _admission_floor(self) -> float:
        if self.cfg.admission_threshold is not None:
            return self.cfg.admission_threshold
        return max(self.baseline_accuracy, self.best_accuracy)

    # --- advisor plumbing -------------------------------------------------

    def _consult_advisor(
        self, state_vec: np.ndarray, d_current: Dataset, partial: tuple[int, ...]
    ) -> list[AdvisorSuggestion]:
        hits = self.pool.retrieve_global(state_vec, self.cfg.retrieval.k)
        rules = knowledge_lookup(self.rules, state_vec)
        ctx = AdvisorContext(
            state_vector=state_vec,
            dataset_summary=summarize_dataset(d_current),
            partial_pipeline=Pipeline(partial),
            retrieved=tuple(hits),
            knowledge_rules=tuple(rules),
        )
        try:
            return advisor_mod.suggest(self.backend, ctx)
        except (AdvisorUnavailable, UnparseableResponse):
            return []

    def evaluate_suggestions(
        self, suggestions: list[AdvisorSuggestion], acc_base: float
    ) -> tuple[Pipeline | None, int]:
        """First-improvement scan over confidence-ordered suggestions.

        The first pipeline whose accuracy beats `acc_base` has its trajectory
        replayed into the Q-table (per-step rewards from prefix accuracies)
        and is returned; later candidates are not evaluated. Returns
        (adopted pipeline or None, number of candidates evaluated).
        """
        evaluations = 0
        for suggestion in suggestions:
            ops = suggestion.pipeline.ops
            acc = self._pipeline_accuracy(ops)
            evaluations += 1
            if acc > acc_base:
                adopted = self._replay_trajectory(ops)
                return adopted, evaluations
        return None, evaluations

    def _replay_trajectory(self, ops: tuple[int, ...]) -> Pipeline:
        """Walk a suggested pipeline, applying Bellman updates step by step;
        inapplicable steps earn the penalty and are dropped. Returns the
        effectively applied pipeline."""
        plan: list[tuple[int, bool]] = []
        d_current = self.train
        n_kept = 0
        for op in ops:
            try:
                d_current = apply_operator(op, d_current, self.cfg.seed + n_kept)
            except InapplicableOperator:
                plan.append((op, False))
                continue
            except DegenerateOutput:
                break
            plan.append((op, True))
            n_kept += 1
        state = AgentState(None)
        acc_prev = self.baseline_accuracy
        applied: list[int] = []
        for op, applicable in plan:
            if not applicable:
                self.agent.update(
                    state, action_index(op), INVALID_ACTION_PENALTY, state, False
                )
                continue
            applied.append(op)
            acc_next = self._pipeline_accuracy(tuple(applied))
            terminal = len(applied) == n_kept
            reward = compute_reward(acc_prev, acc_next, terminal, acc_next)
            next_state = AgentState(op)
            self.agent.update(state, action_index(op), reward, next_state, terminal)
            state = next_state
            acc_prev = acc_next
        return Pipeline(tuple(applied))

    # --- episode loop -----------------------------------------------------

    def _should_call_advisor(self, episode: int, already_called: bool) -> bool:
        if already_called or self.cfg.advisor_mode == ADVISOR_OFF:
            return False
        if self.cfg.advisor_mode == ADVISOR_FIXED:
            return episode % self.cfg.fixed_interval == 0
        return should_trigger(episode, self.buffer, self.last_call, self.cfg.trigger)

    def run_episode(self, episode: int) -> EpisodeRecord:
        d_train = self.train
        applied: list[int] = []
        trajectory: list[TrajectoryStep] = []
        acc_prev = self.baseline_accuracy
        state = AgentState(None)
        triggered = False
        evaluations = 0
        aborted = False
        adopted: Pipeline | None = None

        for t in range(self.cfg.max_pipeline_len):
            state_vec = compute_meta_features(d_train, len(applied))
            if self._should_call_advisor(episode, triggered):
                triggered = True
                self.last_call = episode
                self.advisor_calls += 1
                suggestions = self._consult_advisor(
                    state_vec, d_train, tuple(applied)
                )
                acc_base = max(self.baseline_accuracy, self.best_accuracy)
                adopted, n_evals = self.evaluate_suggestions(suggestions, acc_base)
                evaluations += n_evals
                if adopted is not None:
                    break
                pi_rl = self.agent.policy_distribution(
                    state, self.cfg.integration.temperature
                )
                pi = integrate_policies(pi_rl, suggestions, self.cfg.integration)
                if self.cfg.greedy_combined:
                    action = int(np.argmax(pi))
                else:
                    action = int(self.rng.choice(len(pi), p=pi))
            else:
                action = self.agent.select_action(state, self.epsilon, self.rng)

            if action == TERMINATE_INDEX:
                reward = compute_reward(acc_prev, acc_prev, True, acc_prev)
                self.agent.update(state, action, reward, state, True)
                break
            op = index_to_op(action)
            try:
                d_next = apply_operator(op, d_train, self.cfg.seed + len(applied))
            except InapplicableOperator:
                self.agent.update(
                    state, action, INVALID_ACTION_PENALTY, state, False
                )
                continue
            except DegenerateOutput:
                aborted = True
                break
            applied.append(op)
            acc_next = self._pipeline_accuracy(tuple(applied))
            terminal = t == self.cfg.max_pipeline_len - 1
            reward = compute_reward(acc_prev, acc_next, terminal, acc_next)
            next_state = AgentState(op)
            self.agent.update(state, action, reward, next_state, terminal)
            trajectory.append(TrajectoryStep(state_vec, op, reward))
            d_train = d_next
            acc_prev = acc_next
            state = next_state

        if adopted is not None:
            pipeline = adopted
            acc_final = self._pipeline_accuracy(adopted.ops)
            trajectory = self._trajectory_for(adopted.ops)
        elif aborted:
            pipeline = Pipeline(tuple(applied))
            acc_final = 0.0
            trajectory = []
        else:
            pipeline = Pipeline(tuple(applied))
            acc_final = acc_prev

        admit = acc_final > self._admission_floor()
        if admit:
            self.pool.add_entry(
                ExperienceEntry(
                    d_meta_vec=self.initial_meta,
                    pipeline=pipeline,
                    r_final=acc_final,
                    trajectory=tuple(trajectory),
                    source_tag=self.cfg.source_tag,
                    created_episode=episode,
                )
            )
        if acc_final > self.best_accuracy:
            self.best_accuracy = acc_final
            self.best_pipeline = pipeline
        update_buffer(self.buffer, max(0.0, min(1.0, acc_final)))
        record = EpisodeRecord(
            episode=episode,
            accuracy=acc_final,
            epsilon=self.epsilon,
            triggered=triggered,
            advisor_calls_cumulative=self.advisor_calls,
            evaluations=evaluations,
        )
        self.history.append(record)
        self.epsilon = self.agent.decay_epsilon(self.epsilon)
        return record

    def _trajectory_for(self, ops: tuple[int, ...]) -> list[TrajectoryStep]:
        """Reconstruct (state vector, action, reward) steps for an adopted
        pipeline, mirroring what an episode walking it would record."""
        steps: list[TrajectoryStep] = []
        d_current = self.train
        acc_prev = self.baseline_accuracy
        for i, op in enumerate(ops):
            state_vec = compute_meta_features(d_current, i)
            d_current = apply_operator(op, d_current, self.cfg.seed + i)
            acc_next = self._pipeline_accuracy(ops[: i + 1])
            terminal = i == len(ops) - 1
            reward = compute_reward(acc_prev, acc_next, terminal, acc_next)
            steps.append(TrajectoryStep(state_vec, op, reward))
            acc_prev = acc_next
        return steps

    def run(self) -> SearchResult:
        for episode in range(1, self.cfg.episodes + 1):
            self.run_episode(episode)
            if self.cfg.distill_every > 0 and episode % self.cfg.distill_every == 0:
                self.rules = mine_rules(
                    self.pool, min_support=self.cfg.distill_min_support
                )
        best_acc = self.best_accuracy if np.isfinite(self.best_accuracy) else 0.0
        return SearchResult(
            best_pipeline=self.best_pipeline,
            best_accuracy=best_acc,
            history=self.history,
            q_values=self.agent.q.copy(),
            pool_size=len(self.pool),
        )


def run_search(
    cfg: SearchConfig,
    dataset: Dataset,
    backend=None,
    pool: ExperiencePool | None = None,
) -> SearchResult:
    """Split the data, run the configured number of episodes, and report."""
    return SearchRun(cfg, dataset, backend=backend, pool=pool).run()


# --- trigger cost model -------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    c_llm: float
    c_rl: float
    p_stag: float
    episodes: int

    def __post_init__(self):
        if not self.c_llm > self.c_rl > 0:
            raise ValueError("need c_llm > c_rl > 0")
        if not 0.0 <= self.p_stag <= 1.0:
            raise ValueError("p_stag must be in [0, 1]")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@dataclass(frozen=True)
class CostSimulation:
    cost_fixed: float
    cost_adaptive_expected: float
    delta: float
    monte_carlo_mean: float
    trials: int


def simulate_costs(
    m: CostModel, interval: int, trials: int = 100_000, seed: int = 0
) -> CostSimulation:
    """Closed-form cost of fixed-interval advising vs expected cost of
    stagnation-triggered advising, cross-checked by seeded Monte-Carlo.

    Fixed strategy: T/interval calls at c_llm, the rest at c_rl. Adaptive
    strategy: each episode triggers independently with probability p_stag.
    """
    if interval < 1:
        raise ValueError("interval must be >= 1")
    t = float(m.episodes)
    calls_fixed = t / interval
    cost_fixed = calls_fixed * m.c_llm + (t - calls_fixed) * m.c_rl
    cost_adaptive = t * m.p_stag * m.c_llm + t * (1.0 - m.p_stag) * m.c_rl
    rng = np.random.default_rng(seed)
    stagnated = rng.binomial(m.episodes, m.p_stag, size=trials)
    costs = stagnated * (m.c_llm - m.c_rl) + m.episodes * m.c_rl
    return CostSimulation(
        cost_fixed=cost_fixed,
        cost_adaptive_expected=cost_adaptive,
        delta=cost_fixed - cost_adaptive,
        monte_carlo_mean=float(costs.mean()),
        trials=trials,
    )
