"""Fiber channel and single-photon detector model.

A link is described by a :class:`ChannelParams`. The analytic raw key
rate is ``q * mu * nu * eta_t * eta_d``; the Monte Carlo side uses
Poisson photon statistics, ``1 - exp(-mu * eta_t * eta_d)``, which
agrees with the linear form when the mean detected photon number is
small.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from enum import IntEnum

import numpy as np

from .errors import ChannelParamError, NoDataError

#: 11 dB over the 25 km spool.
DEFAULT_ALPHA_DB_PER_KM = 11.0 / 25.0

# Mean photon number that makes a detection certain to double precision
# (1 - exp(-40) rounds to 1.0); used for "ideal" links.
IDEAL_MU = 40.0


class Outcome(IntEnum):
    NONE = 0
    CORRECT = 1
    ERROR = 2


@dataclass(frozen=True)
class ChannelParams:
    """Physical description of one quantum link.

    ``loss_db`` is the total loss. Use :meth:`fiber` to derive it from a
    length and an attenuation coefficient.
    """

    mu: float = 0.1
    nu: float = 5e6
    q_factor: float = 0.5
    loss_db: float = 0.0
    length_km: float = 0.0
    eta_d: float = 1.0
    p_dark: float = 0.0
    e_optical: float = 0.0

    def __post_init__(self):
        checks = [
            (self.mu > 0, "mu must be > 0"),
            (self.nu > 0, "nu must be > 0"),
            (0 < self.q_factor <= 1, "q_factor must be in (0, 1]"),
            (0 <= self.eta_d <= 1, "eta_d must be in [0, 1]"),
            (0 <= self.p_dark <= 1, "p_dark must be in [0, 1]"),
            (0 <= self.e_optical <= 0.5, "e_optical must be in [0, 0.5]"),
            (self.loss_db >= 0, "loss_db must be >= 0"),
            (self.length_km >= 0, "length_km must be >= 0"),
        ]
        for ok, msg in checks:
            # NaN fails every comparison, so it is rejected here too
            if not ok:
                raise ChannelParamError(msg)

    @classmethod
    def fiber(cls, length_km, alpha_db_per_km=DEFAULT_ALPHA_DB_PER_KM,
              excess_db=0.0, **kwargs) -> "ChannelParams":
        if length_km < 0 or alpha_db_per_km < 0 or excess_db < 0:
            raise ChannelParamError("fiber length, attenuation and excess loss must be >= 0")
        loss = alpha_db_per_km * length_km + excess_db
        return cls(loss_db=loss, length_km=length_km, **kwargs)

    @classmethod
    def ideal(cls, **kwargs) -> "ChannelParams":
        """Lossless, noiseless link on which every pulse is detected."""
        base = dict(mu=IDEAL_MU, loss_db=0.0, eta_d=1.0, p_dark=0.0, e_optical=0.0)
        base.update(kwargs)
        return cls(**base)

    @property
    def eta_t(self) -> float:
        return transmittance(self.loss_db)

    @property
    def mean_detected_photons(self) -> float:
        return self.mu * self.eta_t * self.eta_d

    def replace(self, **changes) -> "ChannelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        if "alpha_db_per_km" in data or "excess_db" in data:
            if "loss_db" in data:
                raise ChannelParamError("give either loss_db or alpha_db_per_km/excess_db, not both")
            alpha = data.pop("alpha_db_per_km", DEFAULT_ALPHA_DB_PER_KM)
            excess = data.pop("excess_db", 0.0)
            length = data.pop("length_km", 0.0)
            extra = set(data) - known
            if extra:
                raise ChannelParamError(f"unknown channel field(s): {sorted(extra)}")
            return cls.fiber(length, alpha, excess, **data)
        extra = set(data) - known
        if extra:
            raise ChannelParamError(f"unknown channel field(s): {sorted(extra)}")
        return cls(**data)


@dataclass(frozen=True)
class DetectionTally:
    pulses_sent: int
    detections: int
    false_counts: int
    correct_counts: int

    def __post_init__(self):
        if min(self.pulses_sent, self.detections, self.false_counts, self.correct_counts) < 0:
            raise ValueError("counts must be non-negative")
        if self.detections != self.false_counts + self.correct_counts:
            raise ValueError("detections must equal false_counts + correct_counts")
        if self.detections > self.pulses_sent:
            raise ValueError("more detections than pulses")

    @classmethod
    def from_outcomes(cls, outcomes) -> "DetectionTally":
        outcomes = np.asarray(outcomes)
        correct = int(np.count_nonzero(outcomes == Outcome.CORRECT))
        false = int(np.count_nonzero(outcomes == Outcome.ERROR))
        return cls(int(outcomes.size), correct + false, false, correct)


def transmittance(loss_db: float) -> float:
    """Linear power transmittance for a loss given in dB."""
    if not loss_db >= 0:
        raise ChannelParamError(f"loss_db must be >= 0, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def raw_key_rate(params: ChannelParams) -> float:
    """Analytic raw key rate in Hz: q * mu * nu * eta_t * eta_d."""
    return params.q_factor * params.mu * params.nu * params.eta_t * params.eta_d


def signal_probability(params: ChannelParams) -> float:
    """Probability that a pulse yields a true (photon-induced) detection."""
    return -math.expm1(-params.mean_detected_photons)


def click_probability(params: ChannelParams) -> float:
    p_sig = signal_probability(params)
    return p_sig + (1.0 - p_sig) * params.p_dark


def expected_qber(params: ChannelParams) -> float:
    """QBER expected on matched-basis detections."""
    p_sig = signal_probability(params)
    p_dk = (1.0 - p_sig) * params.p_dark
    total = p_sig + p_dk
    if total == 0:
        raise NoDataError("channel never clicks")
    return (p_sig * params.e_optical + 0.5 * p_dk) / total


def qber(tally: DetectionTally) -> float:
    """false_counts / (false_counts + correct_counts)."""
    total = tally.false_counts + tally.correct_counts
    if total == 0:
        raise NoDataError("QBER undefined with zero detections")
    return tally.false_counts / total


def fit_eta_d(params: ChannelParams, target_rate_hz: float) -> float:
    """Detector efficiency that makes the analytic raw key rate hit the target."""
    denom = params.q_factor * params.mu * params.nu * params.eta_t
    if denom <= 0:
        raise ChannelParamError("cannot invert the raw key rate with zero transmittance")
    return target_rate_hz / denom


def fit_e_optical(params: ChannelParams, target_qber: float) -> float:
    """Intrinsic error probability giving ``target_qber`` on this link.

    May return a negative number when dark counts alone already exceed
    the target; callers decide how to handle an infeasible fit.
    """
    p_sig = signal_probability(params)
    if p_sig == 0:
        raise ChannelParamError("no signal detections; e_optical is unidentifiable")
    p_dk = (1.0 - p_sig) * params.p_dark
    return (target_qber * (p_sig + p_dk) - 0.5 * p_dk) / p_sig


def simulate_pulse(params: ChannelParams, rng: np.random.Generator) -> Outcome:
    """Draw the detection outcome of a single pulse."""
    p_sig = signal_probability(params)
    if rng.random() < p_sig:
        return Outcome.ERROR if rng.random() < params.e_optical else Outcome.CORRECT
    if rng.random() < params.p_dark:
        return Outcome.ERROR if rng.random() < 0.5 else Outcome.CORRECT
    return Outcome.NONE


def simulate_pulses(params: ChannelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`simulate_pulse`; returns ``n`` outcome codes (uint8)."""
    p_sig = signal_probability(params)
    sig = rng.random(n) < p_sig
    dark = ~sig & (rng.random(n) < params.p_dark)
    err_p = np.where(sig, params.e_optical, 0.5)
    err = rng.random(n) < err_p
    out = np.zeros(n, dtype=np.uint8)
    clicked = sig | dark
    out[clicked] = np.where(err[clicked], Outcome.ERROR, Outcome.CORRECT)
    return out


@dataclass(frozen=True)
class Clicks:
    """Sparse detection record of one link over ``pulses`` pulse slots.

    ``dark`` marks clicks with no photon behind them; ``flip`` marks
    true detections that suffered an optical error. A dark click's bit
    is uniformly random, so ``flip`` is False for those.
    """

    pulses: int
    positions: np.ndarray
    dark: np.ndarray
    flip: np.ndarray

    def __len__(self):
        return int(self.positions.shape[0])


def _positions(p: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # Dense Bernoulli draws for likely events, geometric gaps otherwise.
    if p <= 0 or n == 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    if p > 0.02 or n <= 1 << 16:
        return np.flatnonzero(rng.random(n) < p).astype(np.int64)
    chunks = []
    last = -1
    batch = int(n * p * 1.1) + 64
    while True:
        gaps = rng.geometric(p, size=batch)
        pos = last + np.cumsum(gaps)
        keep = pos[pos < n]
        chunks.append(keep)
        if keep.shape[0] < pos.shape[0]:
            break
        last = int(pos[-1])
        batch = max(64, int((n - last) * p * 1.1) + 64)
    return np.concatenate(chunks)


def sample_clicks(params: ChannelParams, pulses: int, rng: np.random.Generator) -> Clicks:
    """Detection positions over ``pulses`` slots, without materialising misses.

    Statistically identical to :func:`simulate_pulses`; cost scales with
    the number of clicks, so 1e9-pulse runs on lossy links are cheap.
    """
    p_sig = signal_probability(params)
    p_click = click_probability(params)
    pos = _positions(p_click, pulses, rng)
    k = pos.shape[0]
    if p_click > 0:
        dark = rng.random(k) >= p_sig / p_click
    else:
        dark = np.zeros(k, dtype=bool)
    flip = ~dark & (rng.random(k) < params.e_optical)
    return Clicks(pulses, pos, dark, flip)
