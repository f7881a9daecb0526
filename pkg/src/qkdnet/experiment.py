"""Run configured experiments and render result artifacts.

Column orders below are part of the output format; CSV and JSON use the
same names in the same order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .bb84 import link_statistics, run_session
from .channel import click_probability, expected_qber, raw_key_rate
from .config import ExperimentConfig, Mode, OutputFormat
from .errors import NoDataError, ProtocolAbort
from .network import protocol_a, protocol_a_chain, protocol_b
from .seeding import derive_seed

log = logging.getLogger(__name__)

RESULT_SCHEMA = "qkdnet-result/1"

LINK_COLUMNS = [
    "point", "length_km", "loss_db", "eta_t", "mu", "nu", "q_factor", "eta_d", "p_dark",
    "e_optical", "r_raw_hz", "p_click", "expected_qber",
    "mc_pulses", "mc_clicks", "mc_rate_hz", "mc_sifted", "mc_qber",
]
SESSION_COLUMNS = [
    "point", "sweep_param", "sweep_value", "protocol", "seed", "pulses_sent",
    "raw", "sifted", "corrected", "final", "sifted_fraction", "expected_sifted_fraction",
    "measured_qber", "true_qber", "leaked_bits", "verification_bits", "keys_match",
    "aborted", "abort_reason", "hop_key_usage", "knowledge",
]


@dataclass
class ResultArtifact:
    mode: str
    config: dict
    columns: list
    rows: list
    transcripts: list = field(default_factory=list)

    @property
    def aborted(self) -> int:
        return sum(1 for r in self.rows if r.get("aborted"))

    def to_json(self) -> str:
        doc = {"schema": RESULT_SCHEMA, "mode": self.mode, "config": self.config,
               "columns": self.columns, "rows": self.rows}
        if self.transcripts:
            doc["transcripts"] = self.transcripts
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {RESULT_SCHEMA} {json.dumps(self.config, sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def render(self, fmt: OutputFormat) -> str:
        return self.to_json() if fmt is OutputFormat.JSON else self.to_csv()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def echo_config(cfg: ExperimentConfig) -> dict:
    """Config as echoed into artifacts: execution-only settings are left out
    so parallelism and output location never change the bytes."""
    out = cfg.to_dict()
    out.pop("jobs", None)
    out["output"].pop("path", None)
    return out


def _link_row(cfg: ExperimentConfig, index: int, value, seed: int) -> dict:
    overrides = {cfg.sweep_param: value} if cfg.sweep else {}
    params = cfg.channel_params(**overrides)
    row = {
        "point": index, "length_km": params.length_km, "loss_db": params.loss_db,
        "eta_t": params.eta_t, "mu": params.mu, "nu": params.nu, "q_factor": params.q_factor,
        "eta_d": params.eta_d, "p_dark": params.p_dark, "e_optical": params.e_optical,
        "r_raw_hz": raw_key_rate(params), "p_click": click_probability(params),
    }
    try:
        row["expected_qber"] = expected_qber(params)
    except NoDataError:
        row["expected_qber"] = None
    if cfg.n_pulses:
        stats = link_statistics(params, cfg.n_pulses, seed)
        row.update(mc_pulses=stats.pulses, mc_clicks=stats.clicks, mc_rate_hz=stats.rate_hz,
                   mc_sifted=stats.sifted, mc_qber=stats.qber)
    return row


def _endpoints(cfg, topo, mode, n_cells):
    if cfg.endpoints:
        return cfg.endpoints
    if mode is Mode.PROTOCOL_A or n_cells == 1:
        return ["C1.1", "C1.2"]
    return ["C1.1", f"C{n_cells}.2"]


def _session(cfg: ExperimentConfig, value, seed: int):
    post = cfg.post_processing()
    mode = cfg.mode
    if mode is Mode.BB84:
        chan_over, adv_over = {}, {}
        if cfg.sweep_param == "intercept_fraction":
            adv_over = {"intercept_fraction": value}
        elif cfg.sweep:
            chan_over = {cfg.sweep_param: value}
        return run_session(cfg.channel_params(**chan_over), cfg.n_pulses, seed, post=post,
                           adversary=cfg.adversary_config(**adv_over)), 0.5
    if mode is Mode.PROTOCOL_A_CHAIN:
        n_qbs = value if cfg.sweep_param == "n_qbs" else None
        topo = cfg.build_topology(n_cells=max(n_qbs, 1)) if n_qbs is not None else cfg.build_topology()
        n_cells = max(n_qbs, 1) if n_qbs is not None else len(topo.cells)
        a, b = _endpoints(cfg, topo, mode, n_cells)
        res = protocol_a_chain(topo, a, b, cfg.n_pulses, seed, n_qbs=n_qbs, post=post)
        hops = n_qbs if n_qbs is not None else len(res.transcript.knowledge)
        return res, 2.0 ** -(hops + 1)
    n_cells = value if cfg.sweep_param == "n_cells" else None
    topo = cfg.build_topology(n_cells=n_cells) if n_cells is not None else cfg.build_topology()
    a, b = _endpoints(cfg, topo, mode, n_cells or len(topo.cells))
    if mode is Mode.PROTOCOL_A:
        return protocol_a(topo, a, b, cfg.n_pulses, seed, post=post), 0.25
    return protocol_b(topo, a, b, cfg.n_pulses, seed, post=post), 0.25


def _session_row(cfg: ExperimentConfig, index: int, value, seed: int):
    try:
        res, expected = _session(cfg, value, seed)
        tr, match = res.transcript, res.key_a == res.key_b
    except ProtocolAbort as exc:
        if exc.transcript is None:
            raise
        tr, match, expected = exc.transcript, None, None
        log.warning("point %d aborted: %s", index, exc)
    row = {
        "point": index, "sweep_param": cfg.sweep_param, "sweep_value": value,
        "protocol": tr.protocol, "seed": seed, "pulses_sent": tr.pulses_sent,
        "raw": tr.raw_length, "sifted": tr.sifted_length, "corrected": tr.corrected_length,
        "final": tr.final_length, "sifted_fraction": tr.sifted_fraction,
        "expected_sifted_fraction": expected, "measured_qber": tr.measured_qber,
        "true_qber": tr.true_qber, "leaked_bits": tr.leaked_bits,
        "verification_bits": tr.verification_bits, "keys_match": match,
        "aborted": tr.aborted, "abort_reason": tr.abort_reason,
        "hop_key_usage": dict(sorted(tr.hop_key_usage.items())),
        "knowledge": dict(sorted(tr.knowledge.items())),
    }
    return row, tr.to_record()


def _point(args):
    cfg_dict, base_dir, index = args
    cfg = ExperimentConfig.from_dict(cfg_dict, base_dir=base_dir)
    value = cfg.sweep_values[index]
    seed = derive_seed(cfg.seed, index) if cfg.sweep else cfg.seed
    log.info("point %d (%s=%s) seed %d", index, cfg.sweep_param, value, seed)
    if cfg.mode is Mode.LINK_BUDGET:
        return _link_row(cfg, index, value, seed), None
    return _session_row(cfg, index, value, seed)


def run_experiment(cfg: ExperimentConfig) -> ResultArtifact:
    """Evaluate every sweep point.

    Point ``i`` of a sweep runs with ``derive_seed(seed, i)``, so the
    artifact does not depend on ``jobs``.
    """
    args = [(cfg.to_dict(), cfg.base_dir, i) for i in range(len(cfg.sweep_values))]
    if cfg.jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_point, args))
    else:
        results = [_point(a) for a in args]
    columns = LINK_COLUMNS if cfg.mode is Mode.LINK_BUDGET else SESSION_COLUMNS
    return ResultArtifact(cfg.mode.value, echo_config(cfg), columns,
                          [r for r, _ in results], [t for _, t in results if t is not None])
