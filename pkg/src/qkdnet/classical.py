"""In-process classical channel between protocol parties.

Authenticated, reliable and ordered. Every disclosure goes through
:meth:`ClassicalChannel.send` so leak accounting has a single source.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    kind: str
    bits: int
    payload: Any = None


@dataclass
class ClassicalChannel:
    messages: list = field(default_factory=list)

    def send(self, sender, receiver, kind, bits, payload=None) -> Message:
        if bits < 0:
            raise ValueError("message size must be non-negative")
        msg = Message(sender, receiver, kind, int(bits), payload)
        self.messages.append(msg)
        return msg

    def disclosed_bits(self, *kinds) -> int:
        """Total bits sent, optionally restricted to some message kinds."""
        return sum(m.bits for m in self.messages if not kinds or m.kind in kinds)

    def __len__(self):
        return len(self.messages)
