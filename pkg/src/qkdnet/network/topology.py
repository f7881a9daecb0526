"""Quantum cellular network topology.

A cell holds one quantum base station (QBS) and any number of clients
(QNC). Clients are quantum-linked only to their own QBS; QBSs of
different cells are joined by backbone fibers of at most 100 km.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .. import yamlio
from ..adversary import InterceptResendConfig
from ..channel import ChannelParams
from ..errors import ChannelParamError, ConfigError, TopologyError

TOPOLOGY_SCHEMA = "qkdnet-topology/1"
MAX_BACKBONE_KM = 100.0


class NodeKind(Enum):
    QNC = "QNC"
    QBS = "QBS"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    cell: str


@dataclass(frozen=True)
class QuantumLink:
    a: str
    b: str
    channel: ChannelParams
    adversary: InterceptResendConfig | None = None

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


def link_name(a: str, b: str) -> str:
    return "-".join(sorted((a, b)))


class Topology:
    """Immutable network description. Validated on construction."""

    def __init__(self, nodes, quantum_links, classical_links=None):
        self._nodes = {}
        for node in nodes:
            if node.id in self._nodes:
                raise TopologyError(f"duplicate node id {node.id!r}")
            self._nodes[node.id] = node
        self._qlinks = {}
        for link in quantum_links:
            if link.key in self._qlinks:
                raise TopologyError(f"duplicate quantum link {link_name(link.a, link.b)}")
            self._qlinks[link.key] = link
        if classical_links is None:
            classical_links = [tuple(k) for k in self._qlinks]
        self._clinks = frozenset(frozenset(p) for p in classical_links)
        self._validate()

    def _validate(self):
        qbs_by_cell = {}
        for node in self._nodes.values():
            if node.kind is NodeKind.QBS:
                if node.cell in qbs_by_cell:
                    raise TopologyError(f"cell {node.cell!r} has more than one QBS")
                qbs_by_cell[node.cell] = node.id
        for node in self._nodes.values():
            if node.cell not in qbs_by_cell:
                raise TopologyError(f"cell {node.cell!r} has no QBS")
        self._qbs_by_cell = qbs_by_cell

        for link in self._qlinks.values():
            if link.a == link.b:
                raise TopologyError(f"self-loop on {link.a!r}")
            for end in (link.a, link.b):
                if end not in self._nodes:
                    raise TopologyError(f"link endpoint {end!r} is not a node")
            na, nb = self._nodes[link.a], self._nodes[link.b]
            kinds = {na.kind, nb.kind}
            if kinds == {NodeKind.QNC}:
                raise TopologyError(f"QNCs {na.id!r} and {nb.id!r} cannot share a quantum link")
            if NodeKind.QNC in kinds:
                qnc, qbs = (na, nb) if na.kind is NodeKind.QNC else (nb, na)
                if qbs.cell != qnc.cell:
                    raise TopologyError(
                        f"QNC {qnc.id!r} may only link to the QBS of its own cell {qnc.cell!r}")
            else:
                if na.cell == nb.cell:
                    raise TopologyError("backbone link joins a cell to itself")
                if link.channel.length_km > MAX_BACKBONE_KM:
                    raise TopologyError(
                        f"backbone link {link_name(link.a, link.b)} is "
                        f"{link.channel.length_km} km, above {MAX_BACKBONE_KM} km")
        for pair in self._clinks:
            for end in pair:
                if end not in self._nodes:
                    raise TopologyError(f"classical link endpoint {end!r} is not a node")

    # -- queries ---------------------------------------------------------

    @property
    def nodes(self):
        return dict(self._nodes)

    @property
    def quantum_links(self):
        return list(self._qlinks.values())

    @property
    def cells(self):
        return sorted(self._qbs_by_cell)

    def node(self, node_id) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise TopologyError(f"unknown node {node_id!r}") from None

    def qbs_of(self, cell) -> str:
        try:
            return self._qbs_by_cell[cell]
        except KeyError:
            raise TopologyError(f"unknown cell {cell!r}") from None

    def cell_of(self, node_id) -> str:
        return self.node(node_id).cell

    def link(self, a, b) -> QuantumLink:
        try:
            return self._qlinks[frozenset((a, b))]
        except KeyError:
            raise TopologyError(f"no quantum link between {a!r} and {b!r}") from None

    def has_classical(self, a, b) -> bool:
        return frozenset((a, b)) in self._clinks

    def access_link(self, qnc) -> QuantumLink:
        node = self.node(qnc)
        if node.kind is not NodeKind.QNC:
            raise TopologyError(f"{qnc!r} is not a QNC")
        return self.link(qnc, self.qbs_of(node.cell))

    def backbone_neighbors(self, qbs):
        out = []
        for link in self._qlinks.values():
            if qbs in (link.a, link.b):
                other = link.b if link.a == qbs else link.a
                if self._nodes[other].kind is NodeKind.QBS:
                    out.append(other)
        return sorted(out)

    # -- builders --------------------------------------------------------

    @classmethod
    def linear(cls, n_cells, access=None, backbone=None, qncs_per_cell=2,
               ring=False) -> "Topology":
        """Cells C1..Cn in a line (or a ring), QBS ``Bi`` and clients ``Ci.j``."""
        if n_cells < 1:
            raise TopologyError("need at least one cell")
        access = access or ChannelParams.ideal()
        backbone = backbone or ChannelParams.ideal()
        nodes, links = [], []
        for i in range(1, n_cells + 1):
            cell = f"C{i}"
            nodes.append(Node(f"B{i}", NodeKind.QBS, cell))
            for j in range(1, qncs_per_cell + 1):
                qnc = f"{cell}.{j}"
                nodes.append(Node(qnc, NodeKind.QNC, cell))
                links.append(QuantumLink(f"B{i}", qnc, access))
            if i > 1:
                links.append(QuantumLink(f"B{i - 1}", f"B{i}", backbone))
        if ring and n_cells > 2:
            links.append(QuantumLink(f"B{n_cells}", "B1", backbone))
        return cls(nodes, links)

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        cells = []
        for cell in self.cells:
            cells.append({
                "id": cell,
                "qbs": self._qbs_by_cell[cell],
                "qncs": sorted(n.id for n in self._nodes.values()
                               if n.cell == cell and n.kind is NodeKind.QNC),
            })
        links = []
        for link in sorted(self._qlinks.values(), key=lambda l: sorted((l.a, l.b))):
            entry = {"a": link.a, "b": link.b, "channel": link.channel.to_dict()}
            if link.adversary is not None:
                entry["adversary"] = link.adversary.to_dict()
            links.append(entry)
        return {
            "schema": TOPOLOGY_SCHEMA,
            "cells": cells,
            "links": links,
            "classical": sorted(sorted(p) for p in self._clinks),
        }

    @classmethod
    def from_dict(cls, data, lines=None, source=None) -> "Topology":
        lines = lines or yamlio.LineMap()

        def fail(msg, *path):
            raise ConfigError(msg, lines.line(*path), source)

        if not isinstance(data, dict):
            fail("topology must be a mapping")
        if data.get("schema") != TOPOLOGY_SCHEMA:
            fail(f"expected schema {TOPOLOGY_SCHEMA!r}, got {data.get('schema')!r}", "schema")
        defaults = data.get("defaults") or {}

        def channel(spec, *path):
            try:
                return ChannelParams.from_dict(spec)
            except (ChannelParamError, TypeError) as exc:
                fail(f"bad channel parameters: {exc}", *path)

        access_default = channel(defaults["access"], "defaults", "access") if "access" in defaults else None
        backbone_default = channel(defaults["backbone"], "defaults", "backbone") if "backbone" in defaults else None

        nodes, links = [], []
        cells = data.get("cells")
        if not isinstance(cells, list) or not cells:
            fail("'cells' must be a non-empty list", "cells")
        for i, cell in enumerate(cells):
            if not isinstance(cell, dict) or "id" not in cell or "qbs" not in cell:
                fail("each cell needs 'id' and 'qbs'", "cells", i)
            cid = str(cell["id"])
            nodes.append(Node(str(cell["qbs"]), NodeKind.QBS, cid))
            for qnc in cell.get("qncs", []) or []:
                nodes.append(Node(str(qnc), NodeKind.QNC, cid))

        explicit = set()
        for i, entry in enumerate(data.get("links", []) or []):
            if isinstance(entry, list) and len(entry) == 2:
                entry = {"a": entry[0], "b": entry[1]}
            if not isinstance(entry, dict) or "a" not in entry or "b" not in entry:
                fail("each link needs endpoints 'a' and 'b'", "links", i)
            a, b = str(entry["a"]), str(entry["b"])
            if "channel" in entry:
                ch = channel(entry["channel"], "links", i, "channel")
            else:
                is_backbone = all(n.kind is NodeKind.QBS for n in nodes if n.id in (a, b))
                ch = backbone_default if is_backbone else access_default
                if ch is None:
                    fail(f"link {a}-{b} has no channel and no default applies", "links", i)
            adv = None
            if "adversary" in entry:
                try:
                    adv = InterceptResendConfig(**entry["adversary"])
                except (TypeError, ValueError) as exc:
                    fail(f"bad adversary: {exc}", "links", i, "adversary")
            links.append(QuantumLink(a, b, ch, adv))
            explicit.add(frozenset((a, b)))

        # clients without an explicit access link get the default one
        qbs_of = {n.cell: n.id for n in nodes if n.kind is NodeKind.QBS}
        for node in nodes:
            if node.kind is NodeKind.QNC and node.cell in qbs_of:
                if frozenset((node.id, qbs_of[node.cell])) not in explicit:
                    if access_default is None:
                        fail(f"QNC {node.id!r} has no access link and no defaults.access", "cells")
                    links.append(QuantumLink(qbs_of[node.cell], node.id, access_default))

        classical = data.get("classical")
        if classical is not None:
            classical = [tuple(str(x) for x in pair) for pair in classical]
        try:
            return cls(nodes, links, classical)
        except TopologyError as exc:
            fail(str(exc), "cells")

    @classmethod
    def loads(cls, text, source=None) -> "Topology":
        data, lines = yamlio.load(text, source)
        return cls.from_dict(data, lines, source)

    @classmethod
    def load(cls, path) -> "Topology":
        path = Path(path)
        return cls.loads(path.read_text(), str(path))

    def dumps(self) -> str:
        return yamlio.dump(self.to_dict())
