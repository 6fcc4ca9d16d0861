"""Protocol catalogue: synchronous token protocols, asynchronous backups and their composition."""

from .backup import BLACK, INACTIVE, WHITE, FourStateMajority, TokenLeaderElection
from .compose import (BACKUP, FAST, BudgetTrigger, ComposedProtocol, DisagreementTrigger, NeverTrigger, Trigger,
                      force_backup)
from .registry import PROTOCOL_IDS, UnknownProtocol, default_inputs, make_sync, run_cell, run_composed
from .sync import Broadcast, ExactMajoritySync, LeaderElectionSync, SyntheticCoin, weighted_discrepancy

__all__ = [
    "BLACK", "INACTIVE", "WHITE", "FourStateMajority", "TokenLeaderElection",
    "BACKUP", "FAST", "BudgetTrigger", "ComposedProtocol", "DisagreementTrigger", "NeverTrigger", "Trigger",
    "force_backup", "PROTOCOL_IDS", "UnknownProtocol", "default_inputs", "make_sync", "run_cell", "run_composed",
    "Broadcast", "ExactMajoritySync", "LeaderElectionSync", "SyntheticCoin", "weighted_discrepancy",
]
