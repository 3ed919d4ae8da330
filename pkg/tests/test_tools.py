"""Tool registry, built-in tools, and completion-client checks."""

from __future__ import annotations

import socket
import threading

import numpy as np
import pytest

from orgengine.errors import ToolError
from orgengine.tools import (
    HttpLlmBackend,
    MockLlmBackend,
    ToolDescriptor,
    ToolRegistry,
    build_standard_registry,
    calculator,
    corpus_search,
    kmeans_segment,
    llm_complete,
)

from oracles import kmeans_restart_oracle

DOCS = {
    "alpha": "pricing for enterprise pricing plans and pricing tiers",
    "beta": "consumer chat translation on mobile",
    "gamma": "enterprise onboarding guide",
}


class TestCalculator:
    def test_operator_precedence(self):
        assert calculator({"expression": "2+3*4"})["value"] == 14

    def test_parentheses_and_unary(self):
        assert calculator({"expression": "-(2+3)*4"})["value"] == -20
        assert calculator({"expression": "2**3 % 5"})["value"] == 3

    def test_division_by_zero(self):
        with pytest.raises(ToolError, match="zero"):
            calculator({"expression": "1/0"})

    def test_rejects_names_and_calls(self):
        with pytest.raises(ToolError):
            calculator({"expression": "__import__('os')"})
        with pytest.raises(ToolError):
            calculator({"expression": "x+1"})


class TestCorpusSearch:
    def test_unique_term_ranks_single_doc_first(self):
        result = corpus_search(DOCS, "mobile")
        assert result["results"][0]["doc_id"] == "beta"
        assert len(result["results"]) == 1

    def test_scores_match_manual_counts(self):
        result = corpus_search(DOCS, "pricing")
        assert result["results"] == [{"doc_id": "alpha", "score": 3}]

    def test_multi_term_sums_and_orders(self):
        result = corpus_search(DOCS, "enterprise pricing")
        by_id = {r["doc_id"]: r["score"] for r in result["results"]}
        assert by_id == {"alpha": 4, "gamma": 1}
        assert result["results"][0]["doc_id"] == "alpha"

    def test_empty_query_rejected(self):
        with pytest.raises(ToolError, match="query"):
            corpus_search(DOCS, "!!!")


class TestKmeans:
    def test_two_coincident_pairs_exact(self):
        points = [[0.0, 0.0], [0.0, 0.0], [10.0, 10.0], [10.0, 10.0]]
        assignments, centroids, inertia = kmeans_segment(points, k=2, seed=0)
        assert inertia == 0.0
        assert sorted(map(tuple, centroids.tolist())) == [(0.0, 0.0), (10.0, 10.0)]
        assert assignments[0] == assignments[1]
        assert assignments[2] == assignments[3]

    def test_k_one_is_the_mean(self, rng):
        points = rng.uniform(-5, 5, size=(12, 3))
        _, centroids, _ = kmeans_segment(points, k=1, seed=3)
        assert np.allclose(centroids[0], points.mean(axis=0), atol=1e-12)

    def test_three_blob_fixture_matches_restart_oracle(self, rng):
        blobs = np.concatenate(
            [
                rng.normal([0, 0], 0.3, size=(10, 2)),
                rng.normal([8, 8], 0.3, size=(10, 2)),
                rng.normal([0, 8], 0.3, size=(10, 2)),
            ]
        )
        best = min(kmeans_segment(blobs, 3, seed=s)[2] for s in range(50))
        oracle_best = kmeans_restart_oracle(blobs.tolist(), 3, n_restarts=50)
        assert best == pytest.approx(oracle_best, abs=1e-9)

    def test_k_larger_than_n_rejected(self):
        with pytest.raises(ValueError, match="k"):
            kmeans_segment([[1.0, 2.0]], k=2, seed=0)

    def test_inertia_non_increasing_across_iterations(self, rng):
        points = rng.uniform(0, 10, size=(30, 2))
        inertias = [kmeans_segment(points, 4, seed=7, max_iter=i)[2] for i in range(1, 12)]
        assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))

    def test_seeded_determinism(self, rng):
        points = rng.uniform(0, 10, size=(20, 2))
        first = kmeans_segment(points, 3, seed=5)
        second = kmeans_segment(points, 3, seed=5)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])
        assert first[2] == second[2]

    def test_pca_projection_runs_on_wide_tables(self, rng):
        points = rng.uniform(0, 1, size=(15, 6))
        assignments, centroids, _ = kmeans_segment(points, 3, seed=1, pca_2d=True)
        assert centroids.shape == (3, 2)
        assert len(assignments) == 15


class TestRegistry:
    def build(self):
        return build_standard_registry(documents=DOCS)

    def test_unknown_tool(self):
        result = self.build().invoke("astrology", {}, np.random.default_rng(0))
        assert result.status == "error"
        assert result.error == "unknown-tool"

    def test_schema_violation_missing_field(self):
        result = self.build().invoke("calculator", {}, np.random.default_rng(0))
        assert result.status == "error"
        assert "missing field" in result.error

    def test_schema_violation_wrong_type(self):
        result = self.build().invoke(
            "kmeans_segment", {"points": "nope", "k": 2}, np.random.default_rng(0)
        )
        assert result.status == "error"
        assert "not a table" in result.error

    def test_tool_error_becomes_error_status(self):
        result = self.build().invoke(
            "calculator", {"expression": "1/0"}, np.random.default_rng(0)
        )
        assert result.status == "error"
        assert "zero" in result.error

    def test_deterministic_tools_bitwise_identical(self):
        registry = self.build()
        a = registry.invoke("calculator", {"expression": "2+3*4"}, np.random.default_rng(1))
        b = registry.invoke("calculator", {"expression": "2+3*4"}, np.random.default_rng(2))
        assert a == b
        assert a.output == {"value": 14}

    def test_invocations_mirrored_to_sink(self):
        registry = self.build()
        seen = []
        rng = np.random.default_rng(0)
        registry.invoke("calculator", {"expression": "1+1"}, rng, sink=lambda n, r: seen.append(n))
        registry.invoke("missing", {}, rng, sink=lambda n, r: seen.append(n))
        assert seen == ["calculator", "missing"]
        assert registry.invocation_count == 2

    def test_latency_jitter_is_seeded(self):
        registry = ToolRegistry()
        registry.register(
            ToolDescriptor(
                name="slow",
                description="sleepy",
                input_schema={},
                base_latency=2.0,
                latency_jitter=0.1,
            ),
            lambda inputs, rng: {"done": True},
        )
        lat1 = registry.invoke("slow", {}, np.random.default_rng(9)).latency
        lat2 = registry.invoke("slow", {}, np.random.default_rng(9)).latency
        assert lat1 == lat2
        assert 1.8 <= lat1 <= 2.2

    def test_duplicate_names_rejected(self):
        registry = ToolRegistry()
        descriptor = ToolDescriptor(name="x", description="", input_schema={})
        registry.register(descriptor, lambda i, r: {})
        with pytest.raises(ValueError, match="duplicate"):
            registry.register(descriptor, lambda i, r: {})


class TestMockBackend:
    def test_scripted_echo(self):
        backend = MockLlmBackend([("ping", "pong")])
        assert llm_complete(backend, "ping") == "pong"

    def test_unscripted_prompt_fails(self):
        backend = MockLlmBackend([("ping", "pong")])
        with pytest.raises(ToolError, match="unscripted"):
            llm_complete(backend, "hello")

    def test_seeded_failures_repeat_on_same_calls(self):
        def failure_pattern(seed):
            backend = MockLlmBackend([("p", "r")], failure_rate=0.15, seed=seed)
            pattern = []
            for _ in range(60):
                try:
                    backend.complete("p")
                    pattern.append(False)
                except ToolError:
                    pattern.append(True)
            return pattern

        assert failure_pattern(4) == failure_pattern(4)
        assert any(failure_pattern(4))
        assert not all(failure_pattern(4))


class _HangingServer:
    """Accepts connections and never answers, to exercise read timeouts."""

    def __init__(self):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.port = self.sock.getsockname()[1]
        self._stop = threading.Event()
        self._conns = []
        self.thread = threading.Thread(target=self._serve, daemon=True)
        self.thread.start()

    def _serve(self):
        self.sock.settimeout(0.1)
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
                self._conns.append(conn)
            except socket.timeout:
                continue

    def close(self):
        self._stop.set()
        self.thread.join(timeout=1)
        for conn in self._conns:
            conn.close()
        self.sock.close()


class TestHttpBackend:
    def test_unresponsive_endpoint_times_out(self):
        server = _HangingServer()
        try:
            backend = HttpLlmBackend(endpoint=f"http://127.0.0.1:{server.port}", timeout=0.2)
            with pytest.raises(ToolError, match="timeout"):
                backend.complete("hello")
        finally:
            server.close()

    def test_unreachable_endpoint_reports_error(self):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()  # nothing listens here now
        backend = HttpLlmBackend(endpoint=f"http://127.0.0.1:{port}", timeout=0.2)
        with pytest.raises(ToolError, match="unreachable|timeout"):
            backend.complete("hello")
