"""Tool registry with deterministic built-ins and a generic completion client.

Built-ins are hermetic: the calculator evaluates arithmetic over a whitelisted
AST, corpus_search ranks bundled documents by exact term frequency, and
kmeans_segment runs seeded Lloyd iterations. Live services sit behind the
completion client, which also accepts a scripted mock backend so runs stay
reproducible.

Each invocation can be mirrored into an event sink; per-tool latency is a
configured constant plus seeded jitter, which supplies the duration of
tool-calling actions in role models.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import requests

from .errors import ToolError

__all__ = [
    "ToolDescriptor",
    "ToolResult",
    "ToolRegistry",
    "kmeans_segment",
    "calculator",
    "corpus_search",
    "llm_complete",
    "MockLlmBackend",
    "HttpLlmBackend",
    "build_standard_registry",
]

DETERMINISM_KINDS = ("deterministic", "seeded-stochastic", "external")


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: Mapping[str, str]  # field name -> semantic type
    determinism: str = "deterministic"
    base_latency: float = 0.0
    latency_jitter: float = 0.0  # fraction of base_latency

    def __post_init__(self):
        if self.determinism not in DETERMINISM_KINDS:
            raise ValueError(f"determinism must be one of {DETERMINISM_KINDS}")
        object.__setattr__(self, "input_schema", dict(self.input_schema))


@dataclass(frozen=True)
class ToolResult:
    tool: str
    status: str  # "ok" or "error"
    output: dict | None = None
    error: str | None = None
    latency: float = 0.0

    def __post_init__(self):
        if (self.status == "ok") != (self.output is not None):
            raise ValueError("status ok iff output present")


_TYPE_CHECKS: dict[str, Callable[[object], bool]] = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "table": lambda v: isinstance(v, (list, tuple, np.ndarray)),
    "any": lambda v: True,
}


class ToolRegistry:
    """Immutable-after-build mapping of tool names to implementations.

    Implementations take (inputs, rng) and return an output dict or raise
    :class:`ToolError`; :meth:`invoke` never raises for tool-level failures,
    it reports them in the result status.
    """

    def __init__(self):
        self._tools: dict[str, tuple[ToolDescriptor, Callable]] = {}
        self.invocation_count = 0

    def register(self, descriptor: ToolDescriptor, fn: Callable[[Mapping, np.random.Generator], dict]):
        if descriptor.name in self._tools:
            raise ValueError(f"duplicate tool name {descriptor.name!r}")
        self._tools[descriptor.name] = (descriptor, fn)

    def names(self) -> tuple[str, ...]:
        return tuple(self._tools)

    def descriptor(self, name: str) -> ToolDescriptor:
        return self._tools[name][0]

    def invoke(
        self,
        name: str,
        inputs: Mapping[str, object],
        rng: np.random.Generator,
        sink: Callable[[str, ToolResult], None] | None = None,
    ) -> ToolResult:
        result = self._invoke(name, inputs, rng)
        self.invocation_count += 1
        if sink is not None:
            sink(name, result)
        return result

    def _invoke(self, name, inputs, rng) -> ToolResult:
        if name not in self._tools:
            return ToolResult(tool=name, status="error", error="unknown-tool")
        descriptor, fn = self._tools[name]
        for fname, ftype in descriptor.input_schema.items():
            if fname not in inputs:
                return ToolResult(
                    tool=name, status="error", error=f"schema-violation: missing field {fname!r}"
                )
            checker = _TYPE_CHECKS.get(ftype, _TYPE_CHECKS["any"])
            if not checker(inputs[fname]):
                return ToolResult(
                    tool=name,
                    status="error",
                    error=f"schema-violation: field {fname!r} is not a {ftype}",
                )
        latency = descriptor.base_latency
        if descriptor.latency_jitter > 0.0:
            latency *= 1.0 + descriptor.latency_jitter * float(rng.uniform(-1.0, 1.0))
        try:
            output = fn(inputs, rng)
        except ToolError as exc:
            return ToolResult(tool=name, status="error", error=str(exc), latency=latency)
        return ToolResult(tool=name, status="ok", output=output, latency=latency)


# ---------------------------------------------------------------------------
# calculator

_ALLOWED_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.FloorDiv: lambda a, b: a // b,
    ast.Mod: lambda a, b: a % b,
    ast.Pow: lambda a, b: a**b,
}


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _eval_node(node.operand)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        return _ALLOWED_BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    raise ToolError(f"unsupported expression element: {ast.dump(node)[:40]}")


def calculator(inputs: Mapping, rng=None) -> dict:
    """Evaluate an arithmetic expression with standard precedence."""
    expression = str(inputs["expression"])
    try:
        tree = ast.parse(expression, mode="eval")
    except SyntaxError as exc:
        raise ToolError(f"parse error: {exc.msg}") from exc
    try:
        value = _eval_node(tree)
    except ZeroDivisionError as exc:
        raise ToolError("division by zero") from exc
    return {"value": value}


# ---------------------------------------------------------------------------
# corpus search

_WORD = re.compile(r"[a-z0-9]+")


def make_corpus_search(documents: Mapping[str, str]) -> Callable:
    """Search over a fixed document corpus by exact term frequency.

    The score of a document is the summed count of each query term as a whole
    word (case-insensitive); zero-score documents are omitted and ties rank by
    document id.
    """
    tokenized = {
        doc_id: _WORD.findall(text.lower()) for doc_id, text in sorted(documents.items())
    }

    def corpus_search(inputs: Mapping, rng=None) -> dict:
        terms = _WORD.findall(str(inputs["query"]).lower())
        if not terms:
            raise ToolError("empty query")
        scored = []
        for doc_id, words in tokenized.items():
            score = sum(words.count(term) for term in terms)
            if score > 0:
                scored.append((doc_id, score))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return {"results": [{"doc_id": d, "score": s} for d, s in scored]}

    return corpus_search


def corpus_search(documents: Mapping[str, str], query: str) -> dict:
    """One-off corpus search without registry plumbing."""
    return make_corpus_search(documents)({"query": query})


# ---------------------------------------------------------------------------
# k-means segmentation

def _pca_project_2d(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    cov = np.cov(centered, rowvar=False)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top2 = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
    return centered @ top2


def kmeans_segment(
    points,
    k: int,
    seed: int,
    max_iter: int = 100,
    pca_2d: bool = False,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded Lloyd clustering; returns (assignments, centroids, inertia).

    Initial centroids are k distinct point values sampled without replacement
    (falling back to row sampling when fewer than k distinct values exist).
    Iteration stops when assignments stabilize or ``max_iter`` is reached;
    pca_2d first projects the table onto the top-2 covariance eigenvectors.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty n x m table")
    n = pts.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if pca_2d and pts.shape[1] > 2:
        pts = _pca_project_2d(pts)

    rng = np.random.default_rng(seed)
    unique = np.unique(pts, axis=0)
    if unique.shape[0] >= k:
        centroids = unique[rng.choice(unique.shape[0], size=k, replace=False)].copy()
    else:
        centroids = pts[rng.choice(n, size=k, replace=False)].copy()

    assignments = np.full(n, -1, dtype=int)
    for _ in range(max_iter):
        distances = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = distances.argmin(axis=1)
        # Re-seat any emptied centroid on the point farthest from its centroid.
        for j in range(k):
            if not np.any(new_assignments == j):
                farthest = distances[np.arange(n), new_assignments].argmax()
                centroids[j] = pts[farthest]
                new_assignments[farthest] = j
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            centroids[j] = pts[assignments == j].mean(axis=0)
    distances = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(distances[np.arange(n), assignments].sum())
    return assignments, centroids, inertia


def _kmeans_tool(inputs: Mapping, rng: np.random.Generator) -> dict:
    assignments, centroids, inertia = kmeans_segment(
        inputs["points"],
        int(inputs["k"]),
        seed=int(inputs.get("seed", 0)),
        max_iter=int(inputs.get("max_iter", 100)),
        pca_2d=bool(inputs.get("pca_2d", False)),
    )
    return {
        "assignments": assignments.tolist(),
        "centroids": [[float(c) for c in row] for row in centroids],
        "inertia": inertia,
    }


# ---------------------------------------------------------------------------
# completion client

class MockLlmBackend:
    """Scripted backend: first matching prompt pattern wins.

    ``failure_rate`` failures are drawn from the backend's own seeded stream,
    so a fixed seed fails on the same calls across runs.
    """

    def __init__(
        self,
        script: Sequence[tuple[str, str]],
        failure_rate: float = 0.0,
        seed: int = 0,
    ):
        self.script = [(str(p), str(r)) for p, r in script]
        self.failure_rate = failure_rate
        self._rng = np.random.default_rng(seed)

    def complete(self, prompt: str, params: Mapping | None = None) -> str:
        if self.failure_rate > 0.0 and self._rng.uniform() < self.failure_rate:
            raise ToolError("mock-failure")
        for pattern, response in self.script:
            if pattern in prompt:
                return response
        raise ToolError(f"unscripted prompt: {prompt[:60]!r}")


@dataclass
class HttpLlmBackend:
    """Single request/response exchange against a chat-completion endpoint.

    Request body: {"model", "messages": [{"role", "content"}], "temperature"};
    response body must carry a "content" string. No retries unless configured.
    """

    endpoint: str
    api_key: str | None = None
    model: str = "default"
    temperature: float = 0.0
    timeout: float = 30.0
    retries: int = 0

    def complete(self, prompt: str, params: Mapping | None = None) -> str:
        params = dict(params or {})
        body = {
            "model": params.get("model", self.model),
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.get("temperature", self.temperature),
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: ToolError | None = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.Timeout:
                last_error = ToolError("timeout")
                continue
            except requests.ConnectionError as exc:
                last_error = ToolError(f"unreachable: {exc.__class__.__name__}")
                continue
            if not 200 <= response.status_code < 300:
                last_error = ToolError(f"http-status: {response.status_code}")
                continue
            try:
                content = response.json()["content"]
            except (ValueError, KeyError) as exc:
                raise ToolError(f"malformed-response: {exc}") from exc
            return str(content)
        raise last_error if last_error is not None else ToolError("no attempt made")


def llm_complete(backend, prompt: str, params: Mapping | None = None) -> str:
    """Run one completion through whichever backend is configured."""
    return backend.complete(prompt, params)


# ---------------------------------------------------------------------------
# standard registry

def build_standard_registry(
    documents: Mapping[str, str] | None = None,
    llm_backend=None,
    latencies: Mapping[str, Mapping[str, float]] | None = None,
) -> ToolRegistry:
    """Registry with the built-in tool set; latency overrides come from config
    as {tool: {base, jitter}}."""
    latencies = latencies or {}

    def latency_of(name: str) -> tuple[float, float]:
        spec = latencies.get(name, {})
        return float(spec.get("base", 0.0)), float(spec.get("jitter", 0.0))

    registry = ToolRegistry()
    base, jitter = latency_of("calculator")
    registry.register(
        ToolDescriptor(
            name="calculator",
            description="Arithmetic expression evaluator with standard precedence.",
            input_schema={"expression": "string"},
            determinism="deterministic",
            base_latency=base,
            latency_jitter=jitter,
        ),
        calculator,
    )
    base, jitter = latency_of("kmeans_segment")
    registry.register(
        ToolDescriptor(
            name="kmeans_segment",
            description="Seeded Lloyd clustering over a numeric table.",
            input_schema={"points": "table", "k": "int"},
            determinism="seeded-stochastic",
            base_latency=base,
            latency_jitter=jitter,
        ),
        _kmeans_tool,
    )
    if documents is not None:
        base, jitter = latency_of("corpus_search")
        registry.register(
            ToolDescriptor(
                name="corpus_search",
                description="Exact term-frequency search over the bundled corpus.",
                input_schema={"query": "string"},
                determinism="deterministic",
                base_latency=base,
                latency_jitter=jitter,
            ),
            make_corpus_search(documents),
        )
    if llm_backend is not None:
        base, jitter = latency_of("llm_complete")
        registry.register(
            ToolDescriptor(
                name="llm_complete",
                description="One completion exchange against the configured backend.",
                input_schema={"prompt": "string"},
                determinism="external",
                base_latency=base,
                latency_jitter=jitter,
            ),
            lambda inputs, rng: {
                "text": llm_complete(llm_backend, str(inputs["prompt"]), inputs.get("params"))
            },
        )
    return registry
