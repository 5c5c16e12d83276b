from . import (
    adversary,
    analysis,
    backend,
    bitvec,
    channel,
    circuits,
    protocol,
    stabilizer,
    statevector,
)

__all__ = [
    "adversary",
    "analysis",
    "backend",
    "bitvec",
    "channel",
    "circuits",
    "protocol",
    "stabilizer",
    "statevector",
]
