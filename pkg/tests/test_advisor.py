import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llapipe.advisor import (
    AdvisorContext,
    AdvisorSuggestion,
    MockAdvisor,
    PolicyIntegrationConfig,
    RemoteAdvisor,
    build_prompt,
    integrate_policies,
    parse_suggestions,
    render_suggestion_block,
    suggest,
)
from llapipe.data_model import (
    DatasetSummary,
    F_FRAC_CATEGORICAL,
    F_FRAC_MISSING,
    F_FRAC_OUTLIER_CELLS,
    F_MEAN_ABS_CORRELATION,
    F_MEAN_ABS_SKEW,
    STATE_DIM,
)
from llapipe.distillation import Predicate, Rule
from llapipe.errors import AdvisorUnavailable, UnparseableResponse
from llapipe.experience_pool import ExperienceEntry, GlobalHit
from llapipe.operators import Pipeline, REGISTRY
from llapipe.q_agent import N_ACTIONS, action_index


def make_summary(**kw):
    defaults = dict(
        n_rows=16693,
        n_cols=10,
        has_missing=False,
        n_numeric=10,
        n_categorical=0,
        skewed_columns=("f1", "f3", "f4"),
        outlier_columns=(("f0", 9.5), ("f2", 10.5), ("f7", 2.62)),
    )
    defaults.update(kw)
    return DatasetSummary(**defaults)


def make_ctx(state=None, retrieved=(), rules=(), partial=(), summary=None):
    vec = np.zeros(STATE_DIM) if state is None else state
    return AdvisorContext(
        state_vector=vec,
        dataset_summary=summary or make_summary(),
        partial_pipeline=Pipeline(tuple(partial)),
        retrieved=tuple(retrieved),
        knowledge_rules=tuple(rules),
    )


def make_hit(index, pipeline, acc, vec=None):
    from llapipe.experience_pool import TrajectoryStep

    entry = ExperienceEntry(
        d_meta_vec=vec if vec is not None else np.zeros(STATE_DIM),
        pipeline=Pipeline(tuple(pipeline)),
        r_final=acc,
        trajectory=tuple(
            TrajectoryStep(np.zeros(STATE_DIM), op, 0.0) for op in pipeline
        ),
    )
    return GlobalHit(index, float(index), entry)


class TestBuildPrompt:
    def test_contains_dataset_statistics(self):
        text = build_prompt(make_ctx())
        assert "16693 rows, 10 cols" in text
        assert "Missing Values: No" in text
        assert "All numerical" in text
        assert "f0 (9.50%)" in text
        assert "Cols with skewed distribution: f1, f3, f4" in text

    def test_no_examples_without_retrieval(self):
        text = build_prompt(make_ctx())
        assert "[Example" not in text

    def test_two_examples_in_similarity_order(self):
        # empty trajectories keep the hit construction light
        hits = [make_hit(0, [10, 15], 0.91), make_hit(1, [9, 17], 0.88)]
        text = build_prompt(make_ctx(retrieved=hits))
        assert text.count("[Example") == 2
        first = text.index("[Example 1]")
        second = text.index("[Example 2]")
        assert first < second
        assert "QuantileTransformer" in text[first:second]

    def test_partial_pipeline_rendered_as_names(self):
        text = build_prompt(make_ctx(partial=(12, 8)))
        assert "Current Partial Pipeline: [PowerTransformer, RobustScaler]" in text

    def test_knowledge_rules_appended(self):
        rule = Rule(Predicate(F_MEAN_ABS_SKEW, ">", 1.0), (10,), 0.85, 4)
        text = build_prompt(make_ctx(rules=[rule]))
        assert "IF mean_abs_skewness > 1" in text
        assert "confidence 0.85" in text

    def test_deterministic(self):
        assert build_prompt(make_ctx()) == build_prompt(make_ctx())


class TestParseSuggestions:
    def test_named_pipeline_resolves_to_ids(self):
        text = (
            "```\nPIPELINE: QuantileTransformer, StandardScaler, "
            "PolynomialFeatures | CONFIDENCE: 0.9 | RATIONALE: spread then mix\n```"
        )
        out = parse_suggestions(text)
        assert out[0].pipeline.ops == (10, 9, 15)
        assert out[0].confidence == 0.9

    def test_unknown_operator_dropped(self):
        text = (
            "PIPELINE: MagicScaler | CONFIDENCE: 0.9 | RATIONALE: no\n"
            "PIPELINE: RobustScaler | CONFIDENCE: 0.4 | RATIONALE: yes\n"
        )
        out = parse_suggestions(text)
        assert len(out) == 1
        assert out[0].pipeline.ops == (8,)

    def test_confidence_clamped(self):
        out = parse_suggestions("PIPELINE: RobustScaler | CONFIDENCE: 1.7")
        assert out[0].confidence == 1.0

    def test_unparseable_raises(self):
        with pytest.raises(UnparseableResponse):
            parse_suggestions("I would just clean the data by hand.")

    def test_sorted_and_capped_at_three(self):
        lines = "\n".join(
            f"PIPELINE: MinMaxScaler | CONFIDENCE: 0.{i}" for i in range(1, 6)
        )
        out = parse_suggestions(lines)
        assert len(out) == 3
        assert [s.confidence for s in out] == [0.5, 0.4, 0.3]

    def test_overlong_pipeline_dropped(self):
        names = ", ".join(["MinMaxScaler"] * 10)
        out_text = (
            f"PIPELINE: {names} | CONFIDENCE: 0.9\n"
            "PIPELINE: MinMaxScaler | CONFIDENCE: 0.2\n"
        )
        out = parse_suggestions(out_text)
        assert len(out) == 1

    def test_round_trip_over_all_registry_names(self):
        for spec in REGISTRY:
            suggestions = [
                AdvisorSuggestion(Pipeline((spec.id,)), 0.5, "why not")
            ]
            parsed = parse_suggestions(render_suggestion_block(suggestions))
            assert parsed[0].pipeline.ops == (spec.id,)
            assert parsed[0].confidence == 0.5
            assert parsed[0].rationale == "why not"


class TestMockAdvisor:
    def test_skewed_context_leads_with_quantile(self):
        vec = np.zeros(STATE_DIM)
        vec[F_MEAN_ABS_SKEW] = 2.0
        out = MockAdvisor().suggest(make_ctx(state=vec))
        assert out[0].pipeline.ops[0] == 10
        assert out[0].confidence == 0.8

    def test_missing_data_prepends_imputer(self):
        vec = np.zeros(STATE_DIM)
        vec[F_MEAN_ABS_SKEW] = 2.0
        vec[F_FRAC_MISSING] = 0.2
        out = MockAdvisor().suggest(make_ctx(state=vec))
        assert out[0].pipeline.ops[0] == 1

    def test_categorical_prepends_one_hot(self):
        vec = np.zeros(STATE_DIM)
        vec[F_FRAC_CATEGORICAL] = 0.5
        out = MockAdvisor().suggest(make_ctx(state=vec))
        assert out[0].pipeline.ops[0] == 5

    def test_deterministic(self):
        vec = np.zeros(STATE_DIM)
        vec[F_MEAN_ABS_SKEW] = 1.5
        vec[F_FRAC_OUTLIER_CELLS] = 0.2
        a = MockAdvisor().suggest(make_ctx(state=vec))
        b = MockAdvisor().suggest(make_ctx(state=vec))
        assert a == b

    def test_matching_knowledge_rule_included(self):
        # oracle: the rule predicate holds on this vector, so its sequence
        # must appear with the rule's own confidence
        vec = np.zeros(STATE_DIM)
        vec[F_FRAC_OUTLIER_CELLS] = 0.08
        rule = Rule(Predicate(F_FRAC_OUTLIER_CELLS, ">", 0.05), (8,), 0.85, 3)
        assert rule.predicate.holds(vec)
        out = suggest(MockAdvisor(), make_ctx(state=vec, rules=[rule]))
        match = [s for s in out if s.pipeline.ops == (8,)]
        assert match and match[0].confidence == 0.85

    def test_correlation_rule(self):
        vec = np.zeros(STATE_DIM)
        vec[F_MEAN_ABS_CORRELATION] = 0.9
        out = MockAdvisor().suggest(make_ctx(state=vec))
        assert any(s.pipeline.ops == (9, 17) for s in out)


class TestIntegratePolicies:
    def test_alpha_zero_returns_pi_rl_bit_exact(self):
        rng = np.random.default_rng(0)
        pi = rng.random(N_ACTIONS)
        pi /= pi.sum()
        out = integrate_policies(
            pi,
            [AdvisorSuggestion(Pipeline((10,)), 0.9, "")],
            PolicyIntegrationConfig(alpha_weight=0.0),
        )
        assert np.array_equal(out, pi)

    def test_alpha_one_normalized_confidences(self):
        pi = np.full(N_ACTIONS, 1 / N_ACTIONS)
        suggestions = [
            AdvisorSuggestion(Pipeline((3, 6)), 0.8, ""),
            AdvisorSuggestion(Pipeline((7,)), 0.2, ""),
        ]
        out = integrate_policies(
            pi, suggestions, PolicyIntegrationConfig(alpha_weight=1.0)
        )
        assert out[action_index(3)] == pytest.approx(0.8)
        assert out[action_index(7)] == pytest.approx(0.2)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_half_mixture_hand_value(self):
        pi = np.full(N_ACTIONS, 1 / 27)
        suggestions = [AdvisorSuggestion(Pipeline((4,)), 1.0, "")]
        out = integrate_policies(
            pi, suggestions, PolicyIntegrationConfig(alpha_weight=0.5)
        )
        assert out[action_index(4)] == pytest.approx(0.5 + 0.5 / 27)

    def test_empty_suggestions_fall_back(self):
        pi = np.full(N_ACTIONS, 1 / 27)
        out = integrate_policies(pi, [], PolicyIntegrationConfig(alpha_weight=0.7))
        assert np.array_equal(out, pi)

    @given(
        st.floats(0, 1),
        st.integers(0, 26),
        st.integers(0, 26),
        st.integers(0, 10_000),
    )
    @settings(max_examples=100, deadline=None)
    def test_output_is_distribution_and_linear(self, conf, a1, a2, seed):
        rng = np.random.default_rng(seed)
        pi = rng.random(N_ACTIONS) + 1e-9
        pi /= pi.sum()
        pi /= pi.sum()  # tighten the normalization for the contract check
        ops1 = (a1 if a1 < 25 else -1,)
        ops2 = (a2 if a2 < 25 else -1,)
        suggestions = [
            AdvisorSuggestion(Pipeline(ops1), conf, ""),
            AdvisorSuggestion(Pipeline(ops2), 0.5, ""),
        ]
        for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
            out = integrate_policies(
                pi, suggestions, PolicyIntegrationConfig(alpha_weight=alpha)
            )
            assert np.all(out >= 0)
            assert abs(out.sum() - 1.0) <= 1e-9
            pure_llm = integrate_policies(
                pi, suggestions, PolicyIntegrationConfig(alpha_weight=1.0)
            )
            blended = alpha * pure_llm + (1 - alpha) * pi
            assert np.allclose(out, blended, atol=1e-12)


class _Handler(BaseHTTPRequestHandler):
    reply = {}
    last_request = {}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _Handler.last_request = json.loads(self.rfile.read(length))
        body = json.dumps(_Handler.reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestRemoteAdvisor:
    def test_wire_format_and_parse(self, chat_server):
        content = "PIPELINE: RobustScaler | CONFIDENCE: 0.7 | RATIONALE: outliers"
        _Handler.reply = {"choices": [{"message": {"content": content}}]}
        backend = RemoteAdvisor(
            url=chat_server, api_key="k", model="m", temperature=0.3, timeout=5
        )
        out = backend.suggest(make_ctx())
        assert out[0].pipeline.ops == (8,)
        req = _Handler.last_request
        assert req["model"] == "m"
        assert req["temperature"] == 0.3
        assert req["messages"][0]["role"] == "user"
        assert "16693 rows" in req["messages"][0]["content"]

    def test_unparseable_content_raises(self, chat_server):
        _Handler.reply = {"choices": [{"message": {"content": "no idea"}}]}
        backend = RemoteAdvisor(url=chat_server, timeout=5)
        with pytest.raises(UnparseableResponse):
            backend.suggest(make_ctx())

    def test_malformed_reply_is_unavailable(self, chat_server):
        _Handler.reply = {"unexpected": True}
        backend = RemoteAdvisor(url=chat_server, timeout=5)
        with pytest.raises(AdvisorUnavailable):
            backend.suggest(make_ctx())

    def test_connection_refused_is_unavailable(self):
        backend = RemoteAdvisor(url="http://127.0.0.1:9", timeout=0.5)
        with pytest.raises(AdvisorUnavailable):
            backend.suggest(make_ctx())

    def test_missing_endpoint_is_unavailable(self, monkeypatch):
        monkeypatch.delenv("LLAPIPE_ADVISOR_URL", raising=False)
        backend = RemoteAdvisor()
        with pytest.raises(AdvisorUnavailable):
            backend.suggest(make_ctx())
