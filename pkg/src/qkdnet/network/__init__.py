"""Quantum cellular network: topology, routing and relay protocols."""
from .keybank import KeyBank, mask, unmask
from .protocols import (BasisAgreement, chain_session, classify_bases, establish_pairwise_keys,
                        protocol_a, protocol_a_chain, protocol_b)
from .routing import route
from .topology import Node, NodeKind, QuantumLink, Topology

__all__ = [
    "BasisAgreement", "KeyBank", "Node", "NodeKind", "QuantumLink", "Topology",
    "chain_session", "classify_bases", "establish_pairwise_keys", "mask", "protocol_a",
    "protocol_a_chain", "protocol_b", "route", "unmask",
]
