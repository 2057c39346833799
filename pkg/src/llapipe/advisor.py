"""Policy advisor: prompt construction, suggestion parsing, backends, and
the hybrid policy mixture.

Two interchangeable backends produce ranked (pipeline, confidence,
rationale) suggestions: a deterministic rule engine for offline runs and
tests, and a client for any chat-completion-style HTTP endpoint. The replies
are merged into the agent's policy as a convex mixture weighted by
alpha_weight (0 when the advisor was not triggered).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .data_model import (
    DatasetSummary,
    F_FRAC_CATEGORICAL,
    F_FRAC_MISSING,
    F_FRAC_OUTLIER_CELLS,
    F_LOG10_ROWS,
    F_MAJORITY_FRACTION,
    F_MEAN_ABS_CORRELATION,
    F_MEAN_ABS_SKEW,
    F_N_CLASSES,
    F_N_COLS,
)
from .distillation import Rule
from .errors import AdvisorUnavailable, UnparseableResponse
from .experience_pool import GlobalHit
from .operators import (
    MAX_PIPELINE_LEN,
    Pipeline,
    REGISTRY,
    operator_id,
    operator_name,
)
from .q_agent import N_ACTIONS, action_index

ADVISOR_URL_ENV = "LLAPIPE_ADVISOR_URL"
ADVISOR_KEY_ENV = "LLAPIPE_ADVISOR_KEY"


@dataclass(frozen=True)
class AdvisorSuggestion:
    pipeline: Pipeline
    confidence: float
    rationale: str = ""


@dataclass(frozen=True)
class AdvisorContext:
    state_vector: np.ndarray
    dataset_summary: DatasetSummary
    partial_pipeline: Pipeline
    retrieved: tuple[GlobalHit, ...] = ()
    knowledge_rules: tuple[Rule, ...] = ()
    available_operators: tuple[str, ...] = tuple(s.name for s in REGISTRY)


@dataclass(frozen=True)
class PolicyIntegrationConfig:
    alpha_weight: float = 0.7
    temperature: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha_weight <= 1.0:
            raise ValueError("alpha_weight must be in [0, 1]")


def _render_feature_types(summary: DatasetSummary) -> str:
    if summary.n_categorical == 0:
        return "All numerical"
    if summary.n_numeric == 0:
        return "All categorical"
    return f"Mixed ({summary.n_numeric} numerical, {summary.n_categorical} categorical)"


def _render_meta(vec: np.ndarray) -> str:
    rows = int(round(10.0 ** float(vec[F_LOG10_ROWS])))
    parts = [
        f"{rows} rows, {int(vec[F_N_COLS])} cols",
        f"missing cells {100.0 * vec[F_FRAC_MISSING]:.1f}%",
        f"categorical cols {100.0 * vec[F_FRAC_CATEGORICAL]:.1f}%",
        f"mean |skew| {vec[F_MEAN_ABS_SKEW]:.2f}",
        f"outlier cells {100.0 * vec[F_FRAC_OUTLIER_CELLS]:.1f}%",
        f"mean |corr| {vec[F_MEAN_ABS_CORRELATION]:.2f}",
        f"{int(vec[F_N_CLASSES])} classes "
        f"(majority {100.0 * vec[F_MAJORITY_FRACTION]:.0f}%)",
    ]
    return ", ".join(parts)


def build_prompt(ctx: AdvisorContext) -> str:
    """Deterministic advisor prompt for the current search state."""
    summary = ctx.dataset_summary
    lines = [
        "You are an expert data scientist specializing in automated machine "
        "learning. Your task is to analyze the provided dataset context and "
        "historical information to propose a list of 1 to 3 optimal data "
        "preparation pipelines. Each pipeline should be a sequence of data "
        "processing operators that aims to maximize the prediction accuracy "
        "of a downstream classification model.",
        "",
        "For each proposed pipeline, you must provide:",
        "(1) A list of operator names in sequence. "
        "(2) A confidence score (from 0.0 to 1.0) for your suggestion. "
        "(3) A brief, clear rationale explaining why this pipeline is "
        "suitable for the given data.",
        "",
        "Current situation and context:",
        "- Task Type: Logistic regression classification",
        "- Key Dataset Statistics:",
        f"  - Size of dataset: {summary.n_rows} rows, {summary.n_cols} cols",
        f"  - Missing Values: {'Yes' if summary.has_missing else 'No'}",
        f"  - Feature Types: {_render_feature_types(summary)}",
    ]
    if summary.skewed_columns:
        lines.append(
            "  - Cols with skewed distribution: "
            + ", ".join(summary.skewed_columns)
        )
    if summary.outlier_columns:
        rendered = ", ".join(
            f"{name} ({pct:.2f}%)" for name, pct in summary.outlier_columns
        )
        lines.append(f"  - Cols with outliers: {rendered}")
    pipeline_names = ", ".join(ctx.partial_pipeline.names())
    lines.append(f"- Current Partial Pipeline: [{pipeline_names}]")
    lines.append("")
    lines.append("Available operators: " + ", ".join(ctx.available_operators))
    for i, hit in enumerate(ctx.retrieved, start=1):
        lines.append("")
        lines.append(f"[Example {i}]")
        lines.append(f"- Context: {_render_meta(hit.entry.d_meta_vec)}")
        names = ", ".join(hit.entry.pipeline.names())
        lines.append(f"- Pipeline: [{names}], accuracy {hit.entry.r_final:.2f}")
    if ctx.knowledge_rules:
        lines.append("")
        lines.append("Mined guidance from past runs:")
        for rule in ctx.knowledge_rules:
            names = ", ".join(operator_name(o) for o in rule.sequence)
            lines.append(
                f"- IF {rule.predicate.describe()} THEN [{names}] "
                f"(confidence {rule.confidence:.2f}, support {rule.support})"
            )
    lines.append("")
    lines.append(
        "Respond with one line per suggested pipeline inside a fenced code "
        "block, each formatted exactly as:"
    )
    lines.append("```")
    lines.append(
        "PIPELINE: <name>, <name>, ... | CONFIDENCE: <0.0-1.0> | "
        "RATIONALE: <short text>"
    )
    lines.append("```")
    return "\n".join(lines)


_SUGGESTION_LINE = re.compile(
    r"^\s*PIPELINE\s*:\s*(?P<ops>[^|]+?)\s*"
    r"\|\s*CONFIDENCE\s*:\s*(?P<conf>[^|]+?)\s*"
    r"(?:\|\s*RATIONALE\s*:\s*(?P<rationale>.*?)\s*)?$",
    re.IGNORECASE,
)


def render_suggestion_block(suggestions: Sequence[AdvisorSuggestion]) -> str:
    """The machine-parseable block an advisor reply is expected to contain."""
    lines = ["```"]
    for s in suggestions:
        names = ", ".join(s.pipeline.names())
        lines.append(
            f"PIPELINE: {names} | CONFIDENCE: {s.confidence!r} | "
            f"RATIONALE: {s.rationale}"
        )
    lines.append("```")
    return "\n".join(lines)


def parse_suggestions(text: str) -> list[AdvisorSuggestion]:
    """Extract suggestion lines from an advisor reply.

    Operator names resolve case- and whitespace-insensitively; confidences
    clamp to [0, 1]; suggestions with unknown operators or over-long
    pipelines are dropped. Raises UnparseableResponse when no line parses.
    """
    suggestions = []
    saw_line = False
    for line in text.splitlines():
        m = _SUGGESTION_LINE.match(line)
        if not m:
            continue
        saw_line = True
        names = [n for n in (p.strip() for p in m.group("ops").split(",")) if n]
        if not names or len(names) > MAX_PIPELINE_LEN:
            continue
        try:
            ops = tuple(operator_id(n) for n in names)
        except KeyError:
            continue
        try:
            confidence = float(m.group("conf"))
        except ValueError:
            continue
        confidence = min(1.0, max(0.0, confidence))
        rationale = (m.group("rationale") or "").strip()
        suggestions.append(AdvisorSuggestion(Pipeline(ops), confidence, rationale))
    if not saw_line:
        raise UnparseableResponse("no suggestion block found in advisor reply")
    suggestions.sort(key=lambda s: -s.confidence)
    return suggestions[:3]


class MockAdvisor:
    """Deterministic rule-based backend; a pure function of the context."""

    def suggest(self, ctx: AdvisorContext) -> list[AdvisorSuggestion]:
        sv = ctx.state_vector
        base: list[AdvisorSuggestion] = []
        if sv[F_MEAN_ABS_SKEW] > 1.0:
            base.append(
                AdvisorSuggestion(
                    Pipeline((10, 15)),
                    0.8,
                    "skewed features: rank-uniformize, then expand interactions",
                )
            )
            base.append(
                AdvisorSuggestion(
                    Pipeline((11, 15)),
                    0.75,
                    "skewed features: compress the tail, then expand interactions",
                )
            )
        if sv[F_MEAN_ABS_CORRELATION] > 0.8:
            base.append(
                AdvisorSuggestion(
                    Pipeline((9, 17)),
                    0.7,
                    "highly correlated features compress well after scaling",
                )
            )
        if sv[F_FRAC_OUTLIER_CELLS] > 0.05:
            base.append(
                AdvisorSuggestion(
                    Pipeline((8,)),
                    0.6,
                    "outlier-heavy columns favor median/IQR scaling",
                )
            )
        prefix: list[int] = []
        if sv[F_FRAC_MISSING] > 0.0:
            prefix.append(1)
        if sv[F_FRAC_CATEGORICAL] > 0.0:
            prefix.append(5)
        if prefix and not base:
            base.append(
                AdvisorSuggestion(
                    Pipeline(tuple(prefix)), 0.7, "make the table dense and numeric"
                )
            )
        elif prefix:
            base = [
                AdvisorSuggestion(
                    Pipeline(tuple(prefix) + s.pipeline.ops)
                    if len(prefix) + len(s.pipeline) <= MAX_PIPELINE_LEN
                    else s.pipeline,
                    s.confidence,
                    s.rationale,
                )
                for s in base
            ]
        for rule in ctx.knowledge_rules:
            names = ", ".join(operator_name(o) for o in rule.sequence)
            base.append(
                AdvisorSuggestion(
                    Pipeline(rule.sequence),
                    rule.confidence,
                    f"mined rule: IF {rule.predicate.describe()} THEN [{names}]",
                )
            )
        best: dict[tuple[int, ...], AdvisorSuggestion] = {}
        for s in base:
            key = s.pipeline.ops
            if key not in best or s.confidence > best[key].confidence:
                best[key] = s
        ranked = sorted(best.values(), key=lambda s: -s.confidence)
        return ranked[:3]


class RemoteAdvisor:
    """Client for a chat-completion-style HTTP endpoint.

    Sends {model, messages, temperature} and reads
    choices[0].message.content from the JSON reply. Endpoint and key come
    from LLAPIPE_ADVISOR_URL / LLAPIPE_ADVISOR_KEY unless given explicitly.
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str = "local",
        temperature: float = 0.1,
        timeout: float = 60.0,
    ):
        self.url = url if url is not None else os.environ.get(ADVISOR_URL_ENV)
        self.api_key = (
            api_key if api_key is not None else os.environ.get(ADVISOR_KEY_ENV)
        )
        self.model = model
        self.temperature = temperature
        self.timeout = timeout

    def suggest(self, ctx: AdvisorContext) -> list[AdvisorSuggestion]:
        if not self.url:
            raise AdvisorUnavailable(f"no endpoint configured ({ADVISOR_URL_ENV})")
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": build_prompt(ctx)}],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
            raise AdvisorUnavailable(str(exc)) from exc
        return parse_suggestions(content)


def suggest(backend, ctx: AdvisorContext) -> list[AdvisorSuggestion]:
    """Ranked suggestions from whichever backend is configured."""
    return backend.suggest(ctx)


def integrate_policies(
    pi_rl: np.ndarray,
    suggestions: Sequence[AdvisorSuggestion],
    cfg: PolicyIntegrationConfig,
) -> np.ndarray:
    """Convex mixture alpha * advisor-distribution + (1 - alpha) * agent.

    The advisor distribution puts each suggestion's confidence on the first
    action of its pipeline, normalized over the suggested first actions.
    With alpha 0, or no usable suggestions, the agent policy is returned
    unchanged.
    """
    pi_rl = np.asarray(pi_rl, dtype=np.float64)
    if pi_rl.shape != (N_ACTIONS,):
        raise ValueError(f"policy must have {N_ACTIONS} entries")
    if abs(pi_rl.sum() - 1.0) > 1e-9:
        raise ValueError("agent policy must sum to 1")
    alpha = cfg.alpha_weight
    if alpha == 0.0:
        return pi_rl
    weights = np.zeros(N_ACTIONS, dtype=np.float64)
    for s in suggestions:
        if len(s.pipeline) == 0:
            continue
        weights[action_index(s.pipeline.ops[0])] += s.confidence
    total = weights.sum()
    if total <= 0.0:
        return pi_rl
    pi_llm = weights / total
    return alpha * pi_llm + (1.0 - alpha) * pi_rl
