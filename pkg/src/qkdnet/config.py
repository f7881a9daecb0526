"""Experiment configuration files.

A config is a YAML mapping with a ``schema: qkdnet-config/1`` header.
Validation errors carry the line of the offending entry.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import yamlio
from .adversary import InterceptResendConfig
from .bb84 import PostProcessing
from .channel import ChannelParams
from .errors import ChannelParamError, ConfigError, QKDError
from .network.topology import TOPOLOGY_SCHEMA, NodeKind, Topology

CONFIG_SCHEMA = "qkdnet-config/1"


class Mode(Enum):
    LINK_BUDGET = "link_budget"
    BB84 = "bb84"
    PROTOCOL_A = "protocol_a"
    PROTOCOL_A_CHAIN = "protocol_a_chain"
    PROTOCOL_B = "protocol_b"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


SWEEPABLE = {
    Mode.LINK_BUDGET: {"length_km", "mu"},
    Mode.BB84: {"length_km", "mu", "intercept_fraction"},
    Mode.PROTOCOL_A: set(),
    Mode.PROTOCOL_A_CHAIN: {"n_qbs"},
    Mode.PROTOCOL_B: {"n_cells"},
}
_TOP_KEYS = {"schema", "mode", "seed", "n_pulses", "channel", "topology", "endpoints",
             "adversary", "sweep", "post", "output", "jobs"}
_POST_KEYS = {"sample_fraction", "margin", "passes", "max_qber"}


@dataclass
class ExperimentConfig:
    mode: Mode
    seed: int
    n_pulses: int | None = None
    channel: dict | None = None
    topology: object = None
    endpoints: list | None = None
    adversary: dict | None = None
    sweep: dict | None = None
    post: dict = field(default_factory=dict)
    output_format: OutputFormat = OutputFormat.CSV
    output_path: str | None = None
    jobs: int = 1
    base_dir: str | None = field(default=None, compare=False)

    @property
    def sweep_param(self):
        return next(iter(self.sweep)) if self.sweep else None

    @property
    def sweep_values(self):
        return list(self.sweep[self.sweep_param]) if self.sweep else [None]

    def post_processing(self) -> PostProcessing:
        return PostProcessing(**self.post)

    def channel_params(self, **overrides) -> ChannelParams:
        spec = dict(self.channel or {})
        spec.update(overrides)
        return ChannelParams.from_dict(spec)

    def adversary_config(self, **overrides):
        if self.adversary is None and not overrides:
            return None
        spec = dict(self.adversary or {})
        spec.update(overrides)
        return InterceptResendConfig(**spec)

    def build_topology(self, **overrides) -> Topology:
        topo = self.topology
        if isinstance(topo, str):
            path = Path(topo)
            if not path.is_absolute() and self.base_dir:
                path = Path(self.base_dir) / path
            return Topology.load(path)
        if "linear" in topo:
            spec = dict(topo["linear"])
            spec.update(overrides)
            access = ChannelParams.from_dict(spec.pop("access", {}) or {})
            backbone = ChannelParams.from_dict(spec.pop("backbone", {}) or {})
            return Topology.linear(spec.pop("n_cells", 1), access, backbone, **spec)
        return Topology.from_dict(topo)

    def to_dict(self) -> dict:
        out = {"schema": CONFIG_SCHEMA, "mode": self.mode.value, "seed": self.seed}
        for key in ("n_pulses", "channel", "topology", "endpoints", "adversary", "sweep"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.post:
            out["post"] = dict(self.post)
        output = {"format": self.output_format.value}
        if self.output_path is not None:
            output["path"] = self.output_path
        out["output"] = output
        if self.jobs != 1:
            out["jobs"] = self.jobs
        return out

    def dumps(self) -> str:
        return yamlio.dump(self.to_dict())

    @classmethod
    def loads(cls, text, source=None, base_dir=None) -> "ExperimentConfig":
        data, lines = yamlio.load(text, source)
        return cls.from_dict(data, lines, source, base_dir)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
        return cls.loads(text, str(path), str(path.parent))

    @classmethod
    def from_dict(cls, data, lines=None, source=None, base_dir=None) -> "ExperimentConfig":
        lines = lines or yamlio.LineMap()

        def fail(msg, *path):
            raise ConfigError(msg, lines.line(*path), source)

        if not isinstance(data, dict):
            fail("config must be a mapping")
        unknown = sorted(set(data) - _TOP_KEYS)
        if unknown:
            fail(f"unknown key {unknown[0]!r}", unknown[0])
        if data.get("schema") != CONFIG_SCHEMA:
            fail(f"expected schema {CONFIG_SCHEMA!r}, got {data.get('schema')!r}", "schema")
        try:
            mode = Mode(data.get("mode"))
        except ValueError:
            fail(f"mode must be one of {[m.value for m in Mode]}", "mode")
        seed = data.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            fail("seed is required and must be a non-negative integer", "seed")

        n_pulses = data.get("n_pulses")
        if n_pulses is not None and (not isinstance(n_pulses, int) or isinstance(n_pulses, bool)
                                     or n_pulses <= 0):
            fail("n_pulses must be a positive integer", "n_pulses")
        if n_pulses is None and mode is not Mode.LINK_BUDGET:
            fail(f"n_pulses is required in {mode.value} mode", "mode")

        channel = data.get("channel")
        if mode in (Mode.LINK_BUDGET, Mode.BB84):
            if not isinstance(channel, dict):
                fail(f"a 'channel' mapping is required in {mode.value} mode", "channel")
            try:
                ChannelParams.from_dict(channel)
            except (ChannelParamError, TypeError) as exc:
                fail(f"bad channel: {exc}", "channel")
        elif channel is not None:
            fail(f"'channel' is not used in {mode.value} mode; put links in the topology", "channel")

        topology = data.get("topology")
        endpoints = data.get("endpoints")
        if mode in (Mode.PROTOCOL_A, Mode.PROTOCOL_A_CHAIN, Mode.PROTOCOL_B):
            if topology is None:
                fail(f"a 'topology' is required in {mode.value} mode", "mode")
            if isinstance(topology, dict) and "linear" not in topology \
                    and topology.get("schema") != TOPOLOGY_SCHEMA:
                fail("topology must be a file path, {linear: ...} or an inline topology", "topology")
            if not (isinstance(topology, dict) and "linear" in topology) and endpoints is None:
                fail("endpoints are required for a non-generated topology", "topology")
        elif topology is not None:
            fail(f"'topology' is not used in {mode.value} mode", "topology")
        if endpoints is not None:
            if not (isinstance(endpoints, list) and len(endpoints) == 2
                    and all(isinstance(e, str) for e in endpoints)):
                fail("endpoints must be a list of two node ids", "endpoints")

        adversary = data.get("adversary")
        if adversary is not None:
            if mode is not Mode.BB84:
                fail("a top-level adversary applies to bb84 mode only; attach it to a topology link",
                     "adversary")
            try:
                InterceptResendConfig(**adversary)
            except (TypeError, ValueError) as exc:
                fail(f"bad adversary: {exc}", "adversary")

        sweep = data.get("sweep")
        if sweep is not None:
            if not isinstance(sweep, dict) or len(sweep) != 1:
                fail("sweep must map exactly one parameter to a list of values", "sweep")
            (param, values), = sweep.items()
            if param not in SWEEPABLE[mode]:
                fail(f"cannot sweep {param!r} in {mode.value} mode "
                     f"(allowed: {sorted(SWEEPABLE[mode])})", "sweep", param)
            if not isinstance(values, list) or not values:
                fail("sweep values must be a non-empty list", "sweep", param)
            if param in ("n_qbs", "n_cells"):
                if not (isinstance(topology, dict) and "linear" in topology):
                    fail(f"sweeping {param} needs a generated 'linear' topology", "sweep", param)
                if any(not isinstance(v, int) or v < (0 if param == "n_qbs" else 1) for v in values):
                    fail(f"{param} values must be integers", "sweep", param)

        post = data.get("post") or {}
        if not isinstance(post, dict) or set(post) - _POST_KEYS:
            fail(f"post accepts only {sorted(_POST_KEYS)}", "post")
        try:
            pp = PostProcessing(**post)
        except TypeError as exc:
            fail(str(exc), "post")
        if not 0 < pp.sample_fraction < 1:
            fail("sample_fraction must be in (0, 1)", "post", "sample_fraction")

        output = data.get("output") or {}
        try:
            fmt = OutputFormat(output.get("format", "csv"))
        except (ValueError, AttributeError):
            fail("output.format must be csv or json", "output", "format")

        jobs = data.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            fail("jobs must be a positive integer", "jobs")

        cfg = cls(mode=mode, seed=seed, n_pulses=n_pulses, channel=channel, topology=topology,
                  endpoints=endpoints, adversary=adversary, sweep=sweep, post=dict(post),
                  output_format=fmt, output_path=output.get("path"), jobs=jobs, base_dir=base_dir)
        # build once so file topologies and endpoints are checked up front
        if topology is not None:
            try:
                topo = cfg.build_topology()
            except ConfigError:
                raise
            except QKDError as exc:
                fail(f"bad topology: {exc}", "topology")
            except OSError as exc:
                fail(f"cannot read topology file: {exc.strerror}", "topology")
            for end in endpoints or []:
                if end not in topo.nodes or topo.nodes[end].kind is not NodeKind.QNC:
                    fail(f"endpoint {end!r} is not a client node of the topology", "endpoints")
        return cfg
