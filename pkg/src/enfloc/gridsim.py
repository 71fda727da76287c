"""Synthetic multi-site ENF generator, waveform synthesis and noise injection.

Per site ``s`` and frame ``n``::

    ENF_s(n) = nominal + trend(n) + detail_s(n) + wander_s(n) + events_s(n)

* ``trend`` is one mean-reverting (Ornstein-Uhlenbeck) path shared by all
  sites, clipped to ``+/- trend_bound``.
* ``detail`` carries the distance structure. Its lag-0 cross-site
  covariance is ``local_detail_stddev**2 * exp(-d / spatial_corr_length)``.
  In the default ``"synchronous"`` mode it is the per-frame increment of a
  spatially correlated phase-like process (so it is anti-correlated at
  lag 1 and lives at the top of the band); ``"white"`` draws it i.i.d.
  per frame.
* ``wander`` is a slow site-independent OU term (measurement-chain and
  local-load drift). It is what makes short moving-average filters the
  best high-pass choice.
* ``events`` (off unless ``event_rate > 0``) are discrete load steps that
  reach each site after ``d / propagation_speed`` seconds, attenuated by
  ``exp(-d / spatial_corr_length)`` and decaying with ``event_decay``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps

from ._accel import detail_residual
from .core import EnfSignal, RawRecording, project_latlon
from .errors import ConfigurationError

DETAIL_MODES = ("synchronous", "white")


@dataclass(frozen=True)
class SimConfig:
    sites: tuple = ()
    duration: float = 3600.0
    nominal: float = 60.0
    common_trend_stddev: float = 0.01
    local_detail_stddev: float = 0.0005
    spatial_corr_length: float = 4000.0
    propagation_speed: float = 500.0
    seed: int = 0
    frame_period: float = 1.0
    trend_reversion: float = 600.0
    trend_bound: float = 0.03
    detail_mode: str = "synchronous"
    local_wander_stddev: float = 0.0005
    local_wander_time: float = 5.0
    event_rate: float = 0.0
    event_stddev: float = 0.002
    event_decay: float = 2.0

    def __post_init__(self):
        sites = tuple((str(n), float(x), float(y)) for n, x, y in self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise ConfigurationError("simulation needs at least one site")
        names = [s[0] for s in sites]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"site names must be unique: {names}")
        if not all(math.isfinite(v) for s in sites for v in s[1:]):
            raise ConfigurationError("site coordinates must be finite")
        if not self.spatial_corr_length > 0:
            raise ConfigurationError("spatial_corr_length must be positive")
        for key in ("common_trend_stddev", "local_detail_stddev", "local_wander_stddev",
                    "event_rate", "event_stddev", "trend_bound"):
            if not getattr(self, key) >= 0:
                raise ConfigurationError(f"{key} must be non-negative")
        if not self.duration >= 60:
            raise ConfigurationError(f"duration must be at least 60 s, got {self.duration}")
        if not self.propagation_speed > 0:
            raise ConfigurationError("propagation_speed must be positive")
        if not (self.frame_period > 0 and self.trend_reversion > 0 and self.local_wander_time > 0
                and self.event_decay > 0):
            raise ConfigurationError("time constants must be positive")
        if self.detail_mode not in DETAIL_MODES:
            raise ConfigurationError(f"detail_mode must be one of {DETAIL_MODES}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")

    @property
    def names(self) -> list[str]:
        return [s[0] for s in self.sites]

    @property
    def positions(self) -> np.ndarray:
        return np.array([(s[1], s[2]) for s in self.sites], dtype=np.float64).reshape(-1, 2)

    @property
    def frame_count(self) -> int:
        return int(math.floor(self.duration / self.frame_period + 1e-9))

    def distances(self) -> np.ndarray:
        p = self.positions
        return np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))

    def replace(self, **changes) -> "SimConfig":
        d = asdict(self)
        d.update(changes)
        return SimConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sites"] = [{"name": n, "x_miles": x, "y_miles": y} for n, x, y in self.sites]
        return d

    @classmethod
    def from_dict(cls, d) -> "SimConfig":
        d = dict(d)
        entries = list(d.pop("sites", []))
        geographic = [isinstance(s, dict) and "lat" in s and "lon" in s for s in entries]
        if any(geographic):
            # lat/lon sites are projected together, so all must be geographic
            if not all(geographic):
                raise ConfigurationError("sites mix lat/lon and planar entries")
            xy = project_latlon([(s["lat"], s["lon"]) for s in entries])
            sites = [(s["name"], float(x), float(y)) for s, (x, y) in zip(entries, xy)]
        else:
            sites = []
            for s in entries:
                if isinstance(s, dict):
                    try:
                        sites.append((s["name"], s["x_miles"], s["y_miles"]))
                    except KeyError as exc:
                        raise ConfigurationError(f"site entry missing {exc}") from None
                else:
                    sites.append(tuple(s))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown simulation options: {sorted(unknown)}")
        return cls(sites=tuple(sites), **d)


def trial_seed(seed: int, trial: int) -> int:
    """Seed of Monte-Carlo trial ``trial`` under base ``seed``.

    Derived through ``SeedSequence([seed, trial])`` so trials are
    independent streams and the mapping does not depend on scheduling.
    """
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True, eq=False)
class SimComponents:
    trend: np.ndarray
    detail: np.ndarray
    wander: np.ndarray
    events: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.trend[:, None] + self.detail + self.wander + self.events


def _ou_path(rng, n, tau, std, width=1):
    """Stationary discrete OU path(s) with unit-step reversion ``exp(-1/tau)``."""
    if std == 0:
        return np.zeros((n, width))
    a = math.exp(-1.0 / tau)
    e = rng.standard_normal((n, width)) * std * math.sqrt(1 - a * a)
    x0 = rng.standard_normal(width) * std
    out, _ = sps.lfilter([1.0], [1.0, -a], e, axis=0, zi=(a * x0)[None, :])
    return out


def _kernel_factor(dist, length):
    cov = np.exp(-dist / length)
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-8 * max(1.0, w.max()):
        raise ConfigurationError(
            f"spatial covariance is not positive semi-definite (min eigenvalue {w.min():.3g})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


def _events(rng, cfg, n):
    k = len(cfg.sites)
    out = np.zeros((n, k))
    if cfg.event_rate == 0 or cfg.event_stddev == 0:
        return out
    T = cfg.frame_period
    horizon = n * T
    count = rng.poisson(cfg.event_rate * horizon)
    pos = cfg.positions
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    span = np.maximum(hi - lo, 1.0)
    origins = lo - 0.25 * span + rng.random((count, 2)) * 1.5 * span
    times = rng.random(count) * horizon
    amps = rng.standard_normal(count) * cfg.event_stddev
    tau = cfg.event_decay
    edges = np.arange(n + 1) * T
    for o, t0, amp in zip(origins, times, amps):
        d = np.sqrt(((pos - o) ** 2).sum(-1))
        arrival = t0 + d / cfg.propagation_speed
        gain = amp * np.exp(-d / cfg.spatial_corr_length)
        for s in range(k):
            # frame average of gain * exp(-(t - arrival) / tau) for t >= arrival
            a = np.maximum(edges[:-1], arrival[s])
            b = edges[1:]
            live = b > a
            if not np.any(live):
                continue
            integ = tau * (np.exp(-(a[live] - arrival[s]) / tau) - np.exp(-(b[live] - arrival[s]) / tau))
            out[live, s] += gain[s] * integ / T
    return out


def simulate_components(config: SimConfig) -> SimComponents:
    """Draw every additive component (Hz offsets from nominal) for ``config``."""
    n = config.frame_count
    k = len(config.sites)
    trend_rng, detail_rng, wander_rng, event_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(int(config.seed)).spawn(4)
    )
    T = config.frame_period
    trend = _ou_path(trend_rng, n, config.trend_reversion / T, config.common_trend_stddev)[:, 0]
    trend = np.clip(trend, -config.trend_bound, config.trend_bound)

    factor = _kernel_factor(config.distances(), config.spatial_corr_length)
    sd = config.local_detail_stddev
    if config.detail_mode == "synchronous":
        phase = detail_rng.standard_normal((n + 1, k)) @ factor.T
        detail = np.diff(phase, axis=0) * (sd / math.sqrt(2.0))
    else:
        detail = detail_rng.standard_normal((n, k)) @ factor.T * sd

    wander = _ou_path(wander_rng, n, config.local_wander_time / T, config.local_wander_stddev, k)
    events = _events(event_rng, config, n)
    return SimComponents(trend, detail, wander, events)


def simulate_enf_grid(config: SimConfig) -> list[tuple[str, EnfSignal]]:
    """Per-site ENF series, deterministic in ``config.seed``."""
    comp = simulate_components(config)
    values = config.nominal + comp.total
    return [
        (name, EnfSignal(values[:, i], config.frame_period, 0.0, config.nominal))
        for i, name in enumerate(config.names)
    ]


def synthesize_waveform(
    enf: EnfSignal,
    sample_rate: float,
    amplitude: float = 1.0,
    snr_db: float = math.inf,
    seed: int = 0,
    phase: float = 0.0,
) -> RawRecording:
    """Phase-continuous sinusoid following a piecewise-constant frequency track.

    Noise variance is ``(amplitude**2 / 2) / 10**(snr_db / 10)``.
    """
    if not sample_rate >= 4 * enf.nominal:
        raise ConfigurationError(
            f"sample_rate {sample_rate} Hz is below 4x nominal ({4 * enf.nominal} Hz)"
        )
    n = int(round(len(enf) * enf.frame_period * sample_rate))
    frame_idx = np.minimum((np.arange(n) / (sample_rate * enf.frame_period)).astype(np.int64), len(enf) - 1)
    inst = enf.values[frame_idx]
    # cumulative phase in cycles; offsets from nominal keep precision over long runs
    cycles = (np.arange(n) * enf.nominal + np.concatenate([[0.0], np.cumsum(inst[:-1] - enf.nominal)])) / sample_rate
    x = amplitude * np.sin(2 * np.pi * np.mod(cycles, 1.0) + phase)
    if math.isfinite(snr_db):
        rng = np.random.default_rng(seed)
        x = x + rng.standard_normal(n) * math.sqrt(amplitude**2 / 2 / 10 ** (snr_db / 10))
    return RawRecording(x, sample_rate, enf.start_time)


def detail_power(values, M: int = 3) -> float:
    """Mean square of the M-point moving-average residual."""
    r = detail_residual(np.asarray(values, dtype=np.float64), M)
    return float(np.mean(r * r))


def add_awgn_to_enf(enf: EnfSignal, snr_db: float, seed: int = 0, M: int = 3) -> EnfSignal:
    """Add white noise whose power is set against the signal's M-point detail.

    White noise of variance ``s2`` contributes ``s2 * (M - 1) / M`` to the
    detail band, so ``s2`` is scaled by ``M / (M - 1)`` to make the measured
    detail-band SNR equal ``snr_db``.
    """
    if len(enf) < 2:
        raise ConfigurationError("noise injection needs at least 2 frames")
    if math.isinf(snr_db) and snr_db > 0:
        return enf
    if len(enf) < M:
        raise ConfigurationError(f"need at least {M} frames to measure detail power")
    p_detail = detail_power(enf.values, M)
    var = p_detail / 10 ** (snr_db / 10) * M / (M - 1)
    rng = np.random.default_rng(seed)
    noisy = enf.values + rng.standard_normal(len(enf)) * math.sqrt(var)
    return enf.replace_values(noisy, enf.flags)
