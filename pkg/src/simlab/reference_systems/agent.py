"""Rule-based movie recommendation agent speaking the system protocol.

Per conversation it accumulates constraints parsed from user utterances
(known catalog vocabulary words, 4-digit years present in the catalog, and
"<n> minutes" runtime phrases), recommends the first catalog item matching
everything heard so far by stating its title in quotes, and answers
attribute questions about the last recommended item. Replies are a pure
function of (catalog, per-conversation utterance history).

Run as: python -m simlab.reference_systems.agent --catalog movies.tsv
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field

from ..protocol import InformationNeed, Role, Utterance
from ..tasks import LIST_ATTRIBUTES, Catalog, CatalogItem, load_catalog, match_items
from ._base import ProtocolSystem, base_parser, resolve_port, serve_system

DEFAULT_PORT = 8001

NOT_FOUND_REPLY = "I could not find a matching movie."

_YEAR_RE = re.compile(r"\b(1[89]\d{2}|20\d{2})\b")
_RUNTIME_RE = re.compile(r"\b(\d{2,3})\s*minutes?\b", re.IGNORECASE)


@dataclass
class _ConversationState:
    constraints: dict[str, list] = field(default_factory=dict)
    last_item: CatalogItem | None = None


class RecommendationAgent(ProtocolSystem):
    role = Role.AGENT

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self._conversations: dict[str, _ConversationState] = {}
        self._lock = threading.Lock()
        # normalized vocabulary -> canonical value, per text-valued attribute
        self._vocabulary = {
            attr: {str(v).strip().lower(): v for v in catalog.value_vocabulary(attr)}
            for attr in ("genre", "actors", "keywords")
        }
        self._years = {item.attributes["year"] for item in catalog.items}

    def receive_utterance(self, conversation_id: str, utterance: Utterance) -> Utterance:
        with self._lock:
            state = self._conversations.setdefault(conversation_id, _ConversationState())
            text = self._respond(state, utterance.text)
        return Utterance(participant=Role.AGENT, text=text, metadata={})

    def _respond(self, state: _ConversationState, text: str) -> str:
        asked = self._asked_attributes(text)
        if asked:
            if state.last_item is None:
                return (
                    "I have not made a recommendation yet. "
                    "Could you tell me more about the movie you are looking for?"
                )
            return " ".join(self._answer(state.last_item, attr) for attr in asked)
        for attr, values in self._extract_constraints(text).items():
            merged = state.constraints.setdefault(attr, [])
            for value in values:
                if value not in merged:
                    merged.append(value)
        matches = match_items(InformationNeed(constraints=state.constraints), self.catalog)
        if not matches:
            return NOT_FOUND_REPLY
        state.last_item = self.catalog.by_id[matches[0]]
        return f'I recommend "{state.last_item.title}".'

    @staticmethod
    def _asked_attributes(text: str) -> list[str]:
        if "?" not in text:
            return []
        low = text.lower()
        return [
            attr
            for attr in ("genre", "year", "actors", "keywords", "runtime")
            if re.search(rf"\b{attr}s?\b", low)
        ]

    @staticmethod
    def _answer(item: CatalogItem, attr: str) -> str:
        value = item.attributes.get(attr)
        if value in (None, [], ""):
            return f'I do not know the {attr} of "{item.title}".'
        if attr in LIST_ATTRIBUTES:
            rendered = ", ".join(str(v) for v in value)
            return f'The {attr} of "{item.title}" are {rendered}.'
        rendered = f"{value} minutes" if attr == "runtime" else str(value)
        return f'The {attr} of "{item.title}" is {rendered}.'

    def _extract_constraints(self, text: str) -> dict[str, list]:
        low = text.lower()
        found: dict[str, list] = {}
        for attr, vocabulary in self._vocabulary.items():
            for norm, canonical in vocabulary.items():
                if re.search(rf"(?<![a-z0-9]){re.escape(norm)}(?![a-z0-9])", low):
                    found.setdefault(attr, []).append(canonical)
        for match in _YEAR_RE.finditer(text):
            year = int(match.group(0))
            if year in self._years:
                found.setdefault("year", []).append(year)
        for match in _RUNTIME_RE.finditer(text):
            found.setdefault("runtime", []).append(int(match.group(1)))
        return found


def main(argv: list[str] | None = None) -> int:
    parser = base_parser("Reference rule-based recommendation agent")
    parser.add_argument("--catalog", required=True, help="path to the catalog .tsv")
    args = parser.parse_args(argv)
    agent = RecommendationAgent(load_catalog(args.catalog))
    serve_system(agent, resolve_port(args.port, DEFAULT_PORT), host=args.host)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
