"""simlab: self-hostable simulation-based evaluation of conversational agents.

Agents and user simulators are registered as runnable systems (process or
container), launched in pairs per experiment, and driven through
conversations over a fixed HTTP protocol; metrics are computed from the
collected transcripts and every artifact is persisted for reproducibility.
A bundled movie-recommendation task plus two reference systems make the
platform testable end to end without any external services.
"""

from .dialogue import Conversation, ConversationLimits, Termination, run_conversation
from .experiments import ExperimentConfig, ExperimentManager, ExperimentState, Status
from .metrics import MetricResult, OracleClassifier, aspect_score, success_rate
from .protocol import InformationNeed, Role, SystemClient, Utterance
from .runner import Launcher, SystemRecord, SystemRegistry, await_ready
from .service import Service, ServiceConfig, serve
from .storage import Store
from .tasks import Catalog, Task, generate_needs, load_catalog, match_items

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "Conversation",
    "ConversationLimits",
    "ExperimentConfig",
    "ExperimentManager",
    "ExperimentState",
    "InformationNeed",
    "Launcher",
    "MetricResult",
    "OracleClassifier",
    "Role",
    "Service",
    "ServiceConfig",
    "Status",
    "Store",
    "SystemClient",
    "SystemRecord",
    "SystemRegistry",
    "Task",
    "Termination",
    "Utterance",
    "aspect_score",
    "await_ready",
    "generate_needs",
    "load_catalog",
    "match_items",
    "run_conversation",
    "serve",
    "success_rate",
    "__version__",
]
