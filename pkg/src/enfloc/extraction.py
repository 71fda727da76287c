"""Per-frame ENF estimation from raw power recordings.

Pipeline: zero-phase bandpass around the nominal frequency, decimation to
roughly ``target_rate`` samples/s, framing, then one dominant-frequency
estimate per frame. Two estimators are provided: a MUSIC subspace
estimator (the default) and a zoomed periodogram used as an independent
cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from . import _accel
from .core import EnfSignal, RawRecording
from .errors import ConfigurationError, DegenerateFrameError, InsufficientDataError

METHODS = ("subspace", "spectral")


@dataclass(frozen=True)
class ExtractionConfig:
    nominal: float = 60.0
    band_halfwidth: float = 1.0
    frame_seconds: float = 1.0
    method: str = "subspace"
    subspace_order: int = 2
    covariance_dim: int = 64
    scan_resolution: float = 1e-4
    frame_overlap: float = 0.0
    target_rate: float = 500.0
    filter_order: int = 4
    # fraction of frame energy a single fitted sinusoid must explain
    min_tonality: float = 0.25
    # periodogram grid spacing for the spectral estimator
    spectral_resolution: float = 0.005

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.frame_seconds > 0:
            raise ConfigurationError("frame_seconds must be positive")
        if not self.nominal > 0 or not self.band_halfwidth > 0:
            raise ConfigurationError("nominal and band_halfwidth must be positive")
        if self.band_halfwidth >= self.nominal:
            raise ConfigurationError("band_halfwidth must be below the nominal frequency")
        if not (1 <= self.subspace_order < self.covariance_dim):
            raise ConfigurationError("need 1 <= subspace_order < covariance_dim")
        if not self.scan_resolution > 0 or not self.spectral_resolution > 0:
            raise ConfigurationError("scan resolutions must be positive")
        if not 0.0 <= self.frame_overlap < 1.0:
            raise ConfigurationError("frame_overlap must lie in [0, 1)")
        if not self.target_rate > 0 or self.filter_order < 1:
            raise ConfigurationError("target_rate and filter_order must be positive")

    @property
    def band(self) -> tuple[float, float]:
        return self.nominal - self.band_halfwidth, self.nominal + self.band_halfwidth

    @classmethod
    def from_dict(cls, d) -> "ExtractionConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown extraction options: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class FrameEstimate(NamedTuple):
    hz: float
    flagged: bool = False
    reason: str = ""


def _tone_continuation(x, sample_rate, center, halfwidth, n_pad, reverse=False):
    """Extend ``x`` past its end for zero-phase filtering.

    An odd extension flips an in-band tone's phase at the boundary and the
    narrow filter rings for seconds, biasing the edge frames. Here the
    sinusoid that best fits the last second is continued instead, and the
    remainder (out-of-band content and noise) is odd-reflected under a
    one-second taper so the padded signal has no step at the boundary.
    """
    seg = x[::-1] if reverse else x
    n_fit = min(seg.size, int(sample_rate))
    tail = seg[-n_fit:]
    t = np.arange(n_fit) / sample_rate
    m = int(round(2 * halfwidth / 0.002)) + 1
    spec = np.abs(sps.zoom_fft(tail * np.hanning(n_fit), [center - halfwidth, center + halfwidth], m=m, fs=sample_rate, endpoint=True))
    hz = center - halfwidth + 0.002 * int(np.argmax(spec))
    # sign flip of time for the reversed end is absorbed by the phase fit
    basis = np.column_stack([np.cos(2 * np.pi * hz * t), np.sin(2 * np.pi * hz * t)])
    coef, *_ = np.linalg.lstsq(basis, tail, rcond=None)
    te = (n_fit + np.arange(n_pad)) / sample_rate
    ext = coef[0] * np.cos(2 * np.pi * hz * te) + coef[1] * np.sin(2 * np.pi * hz * te)
    resid = tail - basis @ coef
    n_ref = min(n_pad, n_fit - 1)
    if n_ref > 0:
        mirrored = 2.0 * resid[-1] - resid[-2 : -2 - n_ref : -1]
        taper = 0.5 * (1.0 + np.cos(np.pi * np.arange(1, n_ref + 1) / n_ref))
        ext[:n_ref] += mirrored * taper
    return ext[::-1] if reverse else ext


def bandpass(recording: RawRecording, center: float, halfwidth: float, order: int = 4) -> RawRecording:
    """Zero-phase Butterworth bandpass (forward-backward second-order sections)."""
    lo, hi = center - halfwidth, center + halfwidth
    nyquist = recording.sample_rate / 2
    if not (0 < lo and hi < nyquist):
        raise ConfigurationError(
            f"band [{lo}, {hi}] Hz is infeasible at sample rate {recording.sample_rate} Hz"
        )
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=recording.sample_rate, output="sos")
    x = recording.samples
    if not np.any(x):
        return recording.with_samples(np.zeros_like(x))
    fs = recording.sample_rate
    n_pad = int(4 * fs)
    head = _tone_continuation(x, fs, center, halfwidth, n_pad, reverse=True)
    tail = _tone_continuation(x, fs, center, halfwidth, n_pad)
    y = sps.sosfiltfilt(sos, np.concatenate([head, x, tail]), padtype=None)
    return recording.with_samples(y[n_pad : n_pad + x.size])


def _frame_geometry(n_samples, sample_rate, frame_seconds, overlap):
    length = int(round(frame_seconds * sample_rate))
    if length < 1:
        raise ConfigurationError(f"frame of {frame_seconds} s holds no samples at {sample_rate} Hz")
    hop = max(1, int(round(length * (1.0 - overlap))))
    if n_samples < length:
        raise InsufficientDataError(
            f"recording has {n_samples} samples, one {frame_seconds} s frame needs {length}"
        )
    return length, hop, (n_samples - length) // hop + 1


def split_frames(recording: RawRecording, frame_seconds: float, overlap: float = 0.0) -> np.ndarray:
    """Consecutive frames as rows of a 2-D (read-only) view; the partial tail is dropped."""
    if not frame_seconds > 0:
        raise ConfigurationError("frame_seconds must be positive")
    length, hop, count = _frame_geometry(
        recording.samples.size, recording.sample_rate, frame_seconds, overlap
    )
    return sliding_window_view(recording.samples, length)[::hop][:count]


def _check_frame(frame):
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        raise DegenerateFrameError("frame must be 1-D with at least 4 samples")
    scale = np.max(np.abs(x))
    if scale == 0.0 or np.ptp(x) <= 1e-12 * scale:
        raise DegenerateFrameError("frame is constant")
    return x


def _tonality(x, hz, sample_rate):
    """Share of frame energy captured by the best sinusoid at ``hz``."""
    t = np.arange(x.size) / sample_rate
    basis = np.column_stack([np.cos(2 * np.pi * hz * t), np.sin(2 * np.pi * hz * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    fitted = basis @ coef
    return float(np.dot(fitted, fitted) / np.dot(x, x))


def _parabolic_offset(y0, y1, y2):
    den = y0 - 2.0 * y1 + y2
    if den == 0.0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))


def _finalize(x, hz, on_edge, config, sample_rate):
    if on_edge:
        return FrameEstimate(hz, True, "peak on scan-band edge")
    if _tonality(x, hz, sample_rate) < config.min_tonality:
        return FrameEstimate(hz, True, "no dominant tone")
    return FrameEstimate(hz, False, "")


def estimate_frame_frequency_subspace(frame, config: ExtractionConfig, sample_rate: float) -> FrameEstimate:
    """MUSIC estimate of the dominant in-band frequency of one frame.

    The pseudospectrum is minimized (its denominator, the noise-subspace
    projection) on a coarse grid first and then on a ``scan_resolution``
    grid around the coarse winner, which finds the same optimum as a full
    fine scan when the pseudospectrum has a single in-band peak.
    """
    x = _check_frame(frame)
    dim, order = config.covariance_dim, config.subspace_order
    if dim >= x.size:
        raise ConfigurationError(
            f"covariance_dim={dim} must be below the frame sample count {x.size}"
        )
    snapshots = np.ascontiguousarray(sliding_window_view(x, dim))
    cov = snapshots.T @ snapshots / snapshots.shape[0]
    cov = 0.5 * (cov + cov[::-1, ::-1])  # forward-backward averaging
    # only the signal subspace is needed: the ``order`` largest eigenpairs
    evals, evecs = scipy.linalg.eigh(cov, subset_by_index=[dim - order, dim - 1], check_finite=False)
    if not evals[-1] > 0 or evals[0] <= 1e-12 * evals[-1]:
        raise DegenerateFrameError("covariance is rank-deficient in the signal subspace")
    sig = evecs

    lo, hi = config.band
    res = config.scan_resolution
    coarse_step = max(res, min(0.01, (hi - lo) / 50))
    grid = np.linspace(lo, hi, int(round((hi - lo) / coarse_step)) + 1)
    den = _accel.music_noise_power(sig, grid / sample_rate)
    k = int(np.argmin(den))
    if coarse_step > res:
        span = int(math.ceil(2 * coarse_step / res))
        grid = grid[k] + res * np.arange(-span, span + 1)
        grid = grid[(grid >= lo - 0.5 * res) & (grid <= hi + 0.5 * res)]
        den = _accel.music_noise_power(sig, grid / sample_rate)
        k = int(np.argmin(den))
    step = grid[1] - grid[0] if grid.size > 1 else res
    on_edge = grid[k] <= lo + 0.5 * res or grid[k] >= hi - 0.5 * res
    if 0 < k < grid.size - 1:
        hz = grid[k] + step * _parabolic_offset(den[k - 1], den[k], den[k + 1])
    else:
        hz = grid[k]
    return _finalize(x, float(hz), on_edge, config, sample_rate)


def estimate_frame_frequency_spectral(frame, config: ExtractionConfig, sample_rate: float) -> FrameEstimate:
    """Hann-windowed, zero-padded periodogram peak with three-bin interpolation.

    The periodogram is evaluated only inside the band (chirp-z zoom), which
    is the same as an FFT zero-padded to ``sample_rate / spectral_resolution``
    points restricted to those bins.
    """
    x = _check_frame(frame)
    lo, hi = config.band
    m = int(round((hi - lo) / config.spectral_resolution)) + 1
    spectrum = sps.zoom_fft(x * np.hanning(x.size), [lo, hi], m=m, fs=sample_rate, endpoint=True)
    power = np.abs(spectrum) ** 2
    if not np.any(power > 0):
        raise DegenerateFrameError("no in-band energy")
    freqs = np.linspace(lo, hi, m)
    k = int(np.argmax(power))
    on_edge = k == 0 or k == m - 1
    if on_edge:
        hz = freqs[k]
    else:
        logp = np.log(power[k - 1 : k + 2] + 1e-300)
        hz = freqs[k] + config.spectral_resolution * _parabolic_offset(-logp[0], -logp[1], -logp[2])
    return _finalize(x, float(hz), on_edge, config, sample_rate)


_ESTIMATORS = {
    "subspace": estimate_frame_frequency_subspace,
    "spectral": estimate_frame_frequency_spectral,
}


def prepare_frames(recording: RawRecording, config: ExtractionConfig):
    """Bandpass, decimate and frame.

    Returns ``(frames, raw_frames, rate, frame_period)``; ``raw_frames`` are
    the unfiltered frames at the same decimated rate, used for the
    tonality check (a bandpassed noise frame always looks tonal).
    """
    filtered = bandpass(recording, config.nominal, config.band_halfwidth, config.filter_order)
    step = max(1, int(recording.sample_rate // config.target_rate))
    rate = recording.sample_rate / step
    length, hop, count = _frame_geometry(
        recording.samples.size, recording.sample_rate, config.frame_seconds, config.frame_overlap
    )
    frames = sliding_window_view(filtered.samples, length)[::hop][:count, ::step]
    raw = sliding_window_view(recording.samples, length)[::hop][:count, ::step]
    return frames, raw, rate, hop / recording.sample_rate


def extract_enf(recording: RawRecording, config: ExtractionConfig | None = None, workers: int | None = None) -> EnfSignal:
    """One frequency estimate per frame.

    ``workers > 1`` evaluates frames on a thread pool; results are gathered
    in frame order so the output does not depend on the worker count.
    """
    config = config or ExtractionConfig()
    frames, raw, rate, period = prepare_frames(recording, config)
    estimate = _ESTIMATORS[config.method]

    def run(i):
        try:
            est = estimate(frames[i], config, rate)
        except DegenerateFrameError as exc:
            raise DegenerateFrameError(str(exc), frame_index=i) from exc
        if not est.flagged and np.any(raw[i]):
            if _tonality(np.asarray(raw[i], dtype=np.float64), est.hz, rate) < config.min_tonality:
                return FrameEstimate(est.hz, True, "no dominant tone")
        return est

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(frames.shape[0])))
    else:
        results = [run(i) for i in range(frames.shape[0])]

    values = np.array([r.hz for r in results])
    flags = np.array([r.flagged for r in results], dtype=bool)
    lo, hi = config.band
    flags |= (values < lo) | (values > hi)
    return EnfSignal(values, period, recording.start_time, config.nominal, flags)
