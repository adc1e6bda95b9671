"""Metric framework: per-conversation scores plus batch aggregates.

Three metrics ship with the movie task:

* ``success_rate`` — proportion of conversations a classifier labels
  SUCCESS. The default classifier is a deterministic oracle over the task
  catalog; an LLM-backed classifier can be plugged in as an external HTTP
  service. Conversations that ended in SYSTEM_ERROR or TIMEOUT always score
  0 (kept, not discarded, so failures cannot inflate the rate).
* ``fed_understanding`` — fraction of simulator questions whose following
  agent utterance shares at least one content token with the question.
* ``fed_consistency`` — same-stimulus/same-response agreement: among
  simulator utterances that repeat verbatim within a conversation, the
  fraction answered identically each time. 1.0 when nothing repeats.

Both aspect heuristics score single-utterance (or empty) conversations 0.
All scores lie in [0, 1] and aggregates are permutation-invariant.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol

import requests

from .dialogue import Conversation, Termination
from .errors import SimlabError
from .protocol import InformationNeed, Role
from .tasks import LIST_ATTRIBUTES, Catalog, match_items

logger = logging.getLogger(__name__)


class MetricsError(SimlabError):
    pass


class EmptyBatch(MetricsError):
    pass


class ScorerFailure(MetricsError):
    pass


class Label(str, Enum):
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std_dev: float
    count: int


@dataclass(frozen=True)
class MetricResult:
    metric_name: str
    per_conversation: dict[str, float]
    aggregate: Aggregate

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "per_conversation": dict(self.per_conversation),
            "aggregate": {
                "mean": self.aggregate.mean,
                "std_dev": self.aggregate.std_dev,
                "count": self.aggregate.count,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricResult":
        agg = data["aggregate"]
        return cls(
            metric_name=data["metric_name"],
            per_conversation={k: float(v) for k, v in data["per_conversation"].items()},
            aggregate=Aggregate(
                mean=float(agg["mean"]), std_dev=float(agg["std_dev"]), count=int(agg["count"])
            ),
        )


def _aggregate(per_conversation: dict[str, float]) -> Aggregate:
    count = len(per_conversation)
    if count == 0:
        return Aggregate(mean=0.0, std_dev=0.0, count=0)
    values = list(per_conversation.values())
    mean = sum(values) / count
    variance = sum((v - mean) ** 2 for v in values) / count
    return Aggregate(mean=mean, std_dev=math.sqrt(variance), count=count)


class ConversationClassifier(Protocol):
    def classify(
        self, conversation: Conversation, need: InformationNeed, context: Any = None
    ) -> Label: ...


class AspectScorer(Protocol):
    metric_name: str

    def score(self, conversation: Conversation) -> float: ...


# ---------------------------------------------------------------------------
# Success rate


def success_rate(
    conversations: list[Conversation], classifier: ConversationClassifier
) -> MetricResult:
    """Proportion of successful conversations.

    Per-conversation score is 1 for SUCCESS else 0; SYSTEM_ERROR and TIMEOUT
    conversations score 0 without consulting the classifier.
    """
    if not conversations:
        raise EmptyBatch("success_rate requires at least one conversation")
    per_conversation: dict[str, float] = {}
    for conv in conversations:
        if conv.termination in (Termination.SYSTEM_ERROR, Termination.TIMEOUT):
            per_conversation[conv.id] = 0.0
            continue
        label = classifier.classify(conv, conv.need)
        per_conversation[conv.id] = 1.0 if label is Label.SUCCESS else 0.0
    return MetricResult("success_rate", per_conversation, _aggregate(per_conversation))


def _norm(value: Any) -> str:
    return str(value).strip().lower()


class OracleClassifier:
    """Deterministic success judgment against the task catalog.

    A conversation is SUCCESS iff some catalog item that satisfies every
    constraint of the need is named (case-insensitive title substring) in an
    AGENT utterance, and for every requested attribute the item's value
    appears in an AGENT utterance at or after the one naming the item. For
    list-valued attributes every element must appear.
    """

    def __init__(self, catalog: Catalog):
        self.catalog = catalog

    def classify(
        self, conversation: Conversation, need: InformationNeed, context: Any = None
    ) -> Label:
        catalog = context if isinstance(context, Catalog) else self.catalog
        agent_texts = [
            (i, u.text.lower())
            for i, u in enumerate(conversation.utterances)
            if u.participant is Role.AGENT
        ]
        for item_id in match_items(need, catalog):
            item = catalog.by_id[item_id]
            title = item.title.lower()
            named_at = next((i for i, text in agent_texts if title in text), None)
            if named_at is None:
                continue
            if all(
                self._answered(item, attr, agent_texts, named_at)
                for attr in need.requested
            ):
                return Label.SUCCESS
        return Label.FAILURE

    @staticmethod
    def _answered(item, attr: str, agent_texts: list[tuple[int, str]], named_at: int) -> bool:
        value = item.attributes.get(attr)
        if value in (None, [], ""):
            return False
        elements = value if attr in LIST_ATTRIBUTES else [value]
        later = [text for i, text in agent_texts if i >= named_at]
        return all(any(_norm(el) in text for text in later) for el in elements)


def oracle_classifier(
    conversation: Conversation, need: InformationNeed, catalog: Catalog
) -> Label:
    """Functional form of OracleClassifier for one conversation."""
    return OracleClassifier(catalog).classify(conversation, need)


# ---------------------------------------------------------------------------
# Dialogue-aspect heuristics

_STOPWORDS = frozenset(
    """a an the is are was were be been do does did i you it its of to and or
    in on for with what which who whom how your my me we us should would can
    could may might must have has had that this these those there here not
    no yes please tell about movie film something""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def content_tokens(text: str) -> set[str]:
    return {
        tok
        for tok in _TOKEN_RE.findall(text.lower())
        if len(tok) >= 2 and tok not in _STOPWORDS
    }


class UnderstandingScorer:
    """Did the agent's replies engage with what the simulator asked?

    Score = fraction of simulator questions (utterances containing "?")
    whose immediately following agent utterance shares >= 1 content token.
    When the simulator never asks a question, every simulator utterance
    counts as a prompt instead. Conversations with fewer than two
    utterances score 0.
    """

    metric_name = "fed_understanding"

    def score(self, conversation: Conversation) -> float:
        utterances = conversation.utterances
        if len(utterances) < 2:
            return 0.0
        prompts = [
            i
            for i, u in enumerate(utterances)
            if u.participant is Role.SIMULATOR and "?" in u.text
        ]
        if not prompts:
            prompts = [
                i for i, u in enumerate(utterances) if u.participant is Role.SIMULATOR
            ]
        if not prompts:
            return 0.0
        understood = 0
        for i in prompts:
            if i + 1 >= len(utterances):
                continue
            reply = utterances[i + 1]
            if reply.participant is not Role.AGENT:
                continue
            if content_tokens(utterances[i].text) & content_tokens(reply.text):
                understood += 1
        return understood / len(prompts)


class ConsistencyScorer:
    """Does the agent answer repeated stimuli the same way?

    Simulator utterances are grouped by normalized text; for groups that
    occur more than once, the agent is consistent when every immediate reply
    in the group is identical. Score = consistent groups / repeated groups,
    or 1.0 when no stimulus repeats. Conversations with fewer than two
    utterances score 0.
    """

    metric_name = "fed_consistency"

    def score(self, conversation: Conversation) -> float:
        utterances = conversation.utterances
        if len(utterances) < 2:
            return 0.0
        replies_by_stimulus: dict[str, list[str]] = {}
        for i, u in enumerate(utterances):
            if u.participant is not Role.SIMULATOR or i + 1 >= len(utterances):
                continue
            reply = utterances[i + 1]
            if reply.participant is not Role.AGENT:
                continue
            replies_by_stimulus.setdefault(u.text.strip().lower(), []).append(
                reply.text.strip().lower()
            )
        repeated = {k: v for k, v in replies_by_stimulus.items() if len(v) > 1}
        if not repeated:
            return 1.0
        consistent = sum(1 for replies in repeated.values() if len(set(replies)) == 1)
        return consistent / len(repeated)


def aspect_score(conversations: list[Conversation], scorer: AspectScorer) -> MetricResult:
    """Apply one aspect scorer over a batch.

    A ScorerFailure for a conversation drops it from per_conversation (the
    count shrinks accordingly) and logs a warning.
    """
    if not conversations:
        raise EmptyBatch("aspect_score requires at least one conversation")
    per_conversation: dict[str, float] = {}
    for conv in conversations:
        try:
            value = float(scorer.score(conv))
        except ScorerFailure as exc:
            logger.warning("scorer %s failed on %s: %s", scorer.metric_name, conv.id, exc)
            continue
        per_conversation[conv.id] = min(1.0, max(0.0, value))
    return MetricResult(scorer.metric_name, per_conversation, _aggregate(per_conversation))


# ---------------------------------------------------------------------------
# External classifier / scorer adapters

CLASSIFY_PATH = "/classify"
SCORE_PATH = "/score"


class ExternalClassifier:
    """Adapts a remote POST /classify service to the classifier interface.

    Remote failures (unreachable, timeout, bad body) map to FAILURE with a
    logged warning — conservative, never inflating success.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def _url(self) -> str:
        base = self.endpoint
        if not base.startswith(("http://", "https://")):
            base = f"http://{base}"
        return base.rstrip("/") + CLASSIFY_PATH

    def classify(
        self, conversation: Conversation, need: InformationNeed, context: Any = None
    ) -> Label:
        payload = {
            "conversation": conversation.to_dict(),
            "information_need": {
                "constraints": {k: list(v) for k, v in need.constraints.items()},
                "requested": list(need.requested),
            },
        }
        try:
            resp = requests.post(self._url(), json=payload, timeout=self.timeout)
            resp.raise_for_status()
            label = resp.json().get("label")
            return Label(label)
        except Exception as exc:
            logger.warning(
                "external classifier failed for %s, scoring FAILURE: %s",
                conversation.id,
                exc,
            )
            return Label.FAILURE


def external_classifier_client(endpoint: str, timeout: float = 30.0) -> ExternalClassifier:
    return ExternalClassifier(endpoint, timeout)


class ExternalAspectScorer:
    """Adapts a remote POST /score service to the aspect-scorer interface."""

    def __init__(self, metric_name: str, endpoint: str, timeout: float = 30.0):
        self.metric_name = metric_name
        self.endpoint = endpoint
        self.timeout = timeout

    def score(self, conversation: Conversation) -> float:
        base = self.endpoint
        if not base.startswith(("http://", "https://")):
            base = f"http://{base}"
        try:
            resp = requests.post(
                base.rstrip("/") + SCORE_PATH,
                json={"conversation": conversation.to_dict(), "metric": self.metric_name},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return float(resp.json()["score"])
        except Exception as exc:
            raise ScorerFailure(str(exc)) from exc


# ---------------------------------------------------------------------------
# Registry used by the experiment lifecycle

BUILTIN_ASPECT_SCORERS = {
    "fed_understanding": UnderstandingScorer,
    "fed_consistency": ConsistencyScorer,
}


def compute_metrics(
    conversations: list[Conversation],
    metric_names: list[str] | tuple[str, ...],
    catalog: Catalog,
    classifier: ConversationClassifier | None = None,
) -> list[MetricResult]:
    """Compute every named metric over one experiment's conversations."""
    results = []
    for name in metric_names:
        if name == "success_rate":
            results.append(
                success_rate(conversations, classifier or OracleClassifier(catalog))
            )
        elif name in BUILTIN_ASPECT_SCORERS:
            results.append(aspect_score(conversations, BUILTIN_ASPECT_SCORERS[name]()))
        else:
            raise MetricsError(f"no implementation registered for metric {name!r}")
    return results
