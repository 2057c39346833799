"""LLM-advised reinforcement-learning search over data-preparation pipelines."""

__version__ = "0.1.0"

from .data_model import (
    Dataset,
    SplitSpec,
    compute_meta_features,
    load_csv,
    split,
    summarize_dataset,
)
from .operators import (
    Pipeline,
    REGISTRY,
    apply_operator,
    apply_pipeline,
    operator_id,
    operator_name,
)
from .evaluator import ModelConfig, compute_reward, train_and_eval
from .q_agent import AgentState, QLearningAgent, QLearningConfig
from .advisor import (
    AdvisorContext,
    AdvisorSuggestion,
    MockAdvisor,
    PolicyIntegrationConfig,
    RemoteAdvisor,
    build_prompt,
    integrate_policies,
    parse_suggestions,
)
from .experience_pool import ExperienceEntry, ExperiencePool, RetrievalConfig
from .distillation import (
    FrequentSequence,
    Predicate,
    Rule,
    knowledge_lookup,
    mine_rules,
    mine_sequences,
)
from .trigger import (
    PerformanceBuffer,
    TriggerConfig,
    compute_slope,
    should_trigger,
    update_buffer,
)
from .orchestrator import (
    CostModel,
    SearchConfig,
    SearchResult,
    run_search,
    simulate_costs,
)

__all__ = [
    "AdvisorContext",
    "AdvisorSuggestion",
    "AgentState",
    "CostModel",
    "Dataset",
    "ExperienceEntry",
    "ExperiencePool",
    "FrequentSequence",
    "MockAdvisor",
    "ModelConfig",
    "PerformanceBuffer",
    "Pipeline",
    "PolicyIntegrationConfig",
    "Predicate",
    "QLearningAgent",
    "QLearningConfig",
    "REGISTRY",
    "RemoteAdvisor",
    "RetrievalConfig",
    "Rule",
    "SearchConfig",
    "SearchResult",
    "SplitSpec",
    "TriggerConfig",
    "apply_operator",
    "apply_pipeline",
    "build_prompt",
    "compute_meta_features",
    "compute_reward",
    "compute_slope",
    "integrate_policies",
    "knowledge_lookup",
    "load_csv",
    "mine_rules",
    "mine_sequences",
    "operator_id",
    "operator_name",
    "parse_suggestions",
    "run_search",
    "should_trigger",
    "simulate_costs",
    "split",
    "summarize_dataset",
    "train_and_eval",
    "update_buffer",
]
