"""Multi-agent organizational decision engine.

Role decision models (continuous-time MDPs), multi-level hierarchy games,
divergence-gated brainstorming, GP Thompson sampling over prompt variants, a
memory-backed QA loop, deterministic tooling, an orchestration round loop,
and a trust-aware delegation simulator with statistical checks.
"""

__version__ = "0.1.0"

from .bandit import ArmPosterior, BanditConfig, RegretLedger
from .ctmdp import Policy, RoleModel, ValueFunction
from .errors import ConfigError, NonConvergenceError, OrgEngineError, ToolError
from .game import GameSpec, SolutionPath
from .infotheory import BrainstormConfig, Distribution
from .memory import KnowledgeBase, KnowledgeRule, LongTermMemory, Proposal, ShortTermMemory
from .orchestrator import Plan, Scenario, run_episode
from .robustness import RobustnessConfig

__all__ = [
    "__version__",
    "ArmPosterior",
    "BanditConfig",
    "BrainstormConfig",
    "ConfigError",
    "Distribution",
    "GameSpec",
    "KnowledgeBase",
    "KnowledgeRule",
    "LongTermMemory",
    "NonConvergenceError",
    "OrgEngineError",
    "Plan",
    "Policy",
    "Proposal",
    "RegretLedger",
    "RobustnessConfig",
    "RoleModel",
    "Scenario",
    "ShortTermMemory",
    "SolutionPath",
    "ToolError",
    "ValueFunction",
]
