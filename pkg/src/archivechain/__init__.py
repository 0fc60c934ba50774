"""Permissioned archival blockchain.

Organizations submit documents, appointed experts approve them, and an
administrator commits the approved ones to a tamper-evident hash-chained
ledger protected by a rolling GF(2) integrity signature. A certification
authority issues and revokes participant certificates on two auxiliary
chains of its own.
"""

__version__ = "0.1.0"
