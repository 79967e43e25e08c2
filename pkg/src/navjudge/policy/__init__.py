"""Decision policies: language-model backed, rule-based baselines and the oracle."""

from navjudge.policy.base import (
    DecisionContext,
    InvalidNodeError,
    MalformedOutputError,
    Policy,
    PolicyDecision,
    PolicyError,
    TokenUsage,
    TransportError,
)
from navjudge.policy.baselines import (
    ActionDistribution,
    ActionSampler,
    HeuristicAgent,
    OraclePolicy,
    RandomWalker,
    extract_directives,
    fit_action_distribution,
)
from navjudge.policy.chat import (
    ChatRequest,
    ChatResponse,
    FunctionClient,
    HttpChatClient,
    RecordingClient,
    ReplayClient,
    ReplayMissError,
)
from navjudge.policy.llm import LLMPolicy, extract_plan, parse_decision

__all__ = [
    "ActionDistribution", "ActionSampler", "ChatRequest", "ChatResponse", "DecisionContext",
    "FunctionClient", "HeuristicAgent", "HttpChatClient", "InvalidNodeError", "LLMPolicy",
    "MalformedOutputError", "OraclePolicy", "Policy", "PolicyDecision", "PolicyError",
    "RandomWalker", "RecordingClient", "ReplayClient", "ReplayMissError", "TokenUsage",
    "TransportError", "extract_directives", "extract_plan", "fit_action_distribution",
    "parse_decision",
]
