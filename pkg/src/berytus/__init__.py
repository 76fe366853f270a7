"""Reference implementation of a programmable credential-exchange protocol.

A simulated web application and pluggable secret managers negotiate account
registration and authentication over an authenticated channel, optionally
sealed end to end above the transport. See the README for the CLI surface.
"""

from .channel import Channel, Orchestrator
from .errors import BerytusError
from .harness import (
    AttackReport,
    build_matrix,
    run_attack_matrix,
    run_phishing_scenario,
    run_phishing_suite,
    run_vectors,
)
from .manager import CredentialStore, ManagerConfig, ReferenceManager
from .operations import LoginOperation, approve_operation
from .scenario import ScenarioConfig, ScenarioResult, ScenarioRunner
from .webapp import World, build_world, open_channel

__all__ = [
    "AttackReport",
    "BerytusError",
    "Channel",
    "CredentialStore",
    "LoginOperation",
    "ManagerConfig",
    "Orchestrator",
    "ReferenceManager",
    "ScenarioConfig",
    "ScenarioResult",
    "ScenarioRunner",
    "World",
    "approve_operation",
    "build_matrix",
    "build_world",
    "open_channel",
    "run_attack_matrix",
    "run_phishing_scenario",
    "run_phishing_suite",
    "run_vectors",
]

__version__ = "0.1.0"
