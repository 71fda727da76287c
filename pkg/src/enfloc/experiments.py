"""Simulation-driven evaluation: leave-one-out localization and parameter sweeps.

Every routine takes a base seed and derives one independent stream per
trial with :func:`gridsim.trial_seed`, so results are identical whatever
the worker count.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import AnchorSite, EnfSignal, GridDomain, QuantizationScheme
from .errors import ConfigurationError, DegenerateSlopeError, FittingError
from .extraction import ExtractionConfig, extract_enf
from .geolocate import (
    LocalizationMetrics,
    LocalizationQuery,
    LocalizationReport,
    estimate_distance_linear,
    fit_quantization,
    locate,
    metrics,
    quantile_edges,
)
from .gridsim import SimConfig, add_awgn_to_enf, simulate_enf_grid, synthesize_waveform, trial_seed
from .presets import COLLINEAR_SITES
from .signature import corrcoef, highpass_detail, segment_starts


def _map(fn, items, workers):
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


@dataclass(frozen=True, eq=False)
class QueryOutcome:
    trial: int
    segment: int
    query: str
    truth: tuple
    epsilon: float
    method: str
    report: LocalizationReport
    rho_query: Mapping[str, float]


def domain_for(positions: Mapping[str, tuple], margin: float = 0.25, cell_size: float | None = None) -> GridDomain:
    return GridDomain.around(list(positions.values()), margin, cell_size)


def fit_anchor_scheme(anchor_details, positions, starts, N, n_bins=3, centered=False) -> QuantizationScheme:
    """Scheme fitted on anchor-to-anchor correlations over every segment.

    Equal-count bins can collapse when several distances share a rho
    range; the bin count is then reduced until the fit succeeds.
    """
    samples = []
    for (a, da), (b, db) in itertools.combinations(anchor_details, 2):
        d = math.dist(positions[a], positions[b])
        samples.extend((d, corrcoef(da, db, s, N, centered)) for s in starts)
    rhos = [r for _, r in samples]
    for k in range(n_bins, 0, -1):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return fit_quantization(samples, quantile_edges(rhos, k), open_ended=True, from_zero=True)
        except FittingError:
            if k == 1:
                raise


def leave_one_out(
    series: Sequence[tuple[str, EnfSignal]],
    positions: Mapping[str, tuple],
    *,
    methods: Sequence[str] = ("halfplane",),
    epsilons: Sequence[float] = (0.02,),
    M: int = 3,
    N: int = 600,
    scheme: QuantizationScheme | str | None = None,
    n_bins: int = 3,
    domain: GridDomain | None = None,
    snr_db: float = math.inf,
    seed: int = 0,
    trial: int = 0,
    centered: bool = False,
) -> list[QueryOutcome]:
    """Each site in turn is the query; the others are anchors.

    ``scheme="fit"`` fits a quantization scheme per query from the anchors'
    mutual correlations. ``snr_db`` adds white noise to the query series
    only (anchors stay clean).
    """
    series = list(series)
    names = [n for n, _ in series]
    domain = domain or domain_for({n: positions[n] for n in names})
    details = {n: highpass_detail(e, M) for n, e in series}
    length = min(len(d) for d in details.values())
    starts = segment_starts(length, N)
    if not starts:
        raise ConfigurationError(f"series of {length} detail frames hold no {N}-frame segment")
    out = []
    for qi, (q, enf) in enumerate(series):
        anchors_named = [(n, details[n]) for n in names if n != q]
        if math.isfinite(snr_db):
            enf = add_awgn_to_enf(enf, snr_db, seed=trial_seed(seed, 1000 * trial + qi), M=3)
            qdet = highpass_detail(enf, M)
        else:
            qdet = details[q]
        anchors = tuple(AnchorSite(n, positions[n]) for n, _ in anchors_named)
        if scheme == "fit":
            q_scheme = fit_anchor_scheme(anchors_named, positions, starts, N, n_bins, centered)
        else:
            q_scheme = scheme
        for si, s in enumerate(starts):
            rho = {n: corrcoef(qdet, d, s, N, centered) for n, d in anchors_named}
            for eps in epsilons:
                query = LocalizationQuery(anchors, rho, eps, domain)
                for method in methods:
                    report = locate(query, method, q_scheme)
                    out.append(QueryOutcome(trial, si, q, tuple(positions[q]), float(eps), method, report, rho))
    return out


def summarize(outcomes: Sequence[QueryOutcome]) -> dict[tuple[str, float], LocalizationMetrics]:
    groups: dict = {}
    for o in outcomes:
        groups.setdefault((o.method, o.epsilon), []).append((o.report, o.truth))
    return {k: metrics(v) for k, v in sorted(groups.items())}


# ---------------------------------------------------------------------------
# collinear distance estimation
# ---------------------------------------------------------------------------


def collinear_errors(series, distances=(150.0, 540.0, 690.0), M=3, N=600, centered=False) -> np.ndarray:
    """Absolute error of the linear estimate of d13 on every segment.

    ``series`` holds three sites in line order; ``distances`` are
    ``(d12, d23, d13)``.
    """
    (_, a), (_, b), (_, c) = series
    d12, d23, d13 = distances
    da, db, dc = (highpass_detail(e, M) for e in (a, b, c))
    errs = []
    for s in segment_starts(min(len(da), len(db), len(dc)), N):
        r12 = corrcoef(da, db, s, N, centered)
        r23 = corrcoef(db, dc, s, N, centered)
        r13 = corrcoef(da, dc, s, N, centered)
        try:
            est = estimate_distance_linear(r12, d12, r23, d23, r13)
        except DegenerateSlopeError:
            continue
        errs.append(abs(est.miles - d13))
    return np.array(errs)


def collinear_config(**overrides) -> SimConfig:
    return SimConfig(sites=COLLINEAR_SITES, **overrides)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _trial_stats(per_trial: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(per_trial, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def sweep_filter_order(
    orders: Sequence[int],
    base: SimConfig | None = None,
    trials: int = 10,
    seed: int = 0,
    N: int = 600,
    workers: int | None = None,
) -> list[dict]:
    """Mean |d13 error| on collinear sites for each moving-average order."""
    base = base or collinear_config(duration=7200.0)
    sims = _map(lambda t: simulate_enf_grid(base.replace(seed=trial_seed(seed, t))), range(trials), workers)
    rows = []
    for M in orders:
        per_trial = [collinear_errors(s, _line_distances(base), M, N).mean() for s in sims]
        mean, std = _trial_stats(per_trial)
        rows.append({"filter_order": int(M), "mean_error": mean, "std_error": std, "trials": trials})
    return rows


def _line_distances(cfg: SimConfig):
    d = cfg.distances()
    return (float(d[0, 1]), float(d[1, 2]), float(d[0, 2]))


def extracted_series(
    series,
    frame_seconds: float,
    sample_rate: float = 500.0,
    snr_db: float = 40.0,
    seed: int = 0,
    extraction: ExtractionConfig | None = None,
):
    """Synthesize each site's waveform and re-extract it with ``frame_seconds`` frames."""
    cfg = extraction or ExtractionConfig()
    cfg = ExtractionConfig(**{**cfg.to_dict(), "frame_seconds": frame_seconds})
    out = []
    for i, (name, enf) in enumerate(series):
        wave = synthesize_waveform(enf, sample_rate, snr_db=snr_db, seed=trial_seed(seed, i))
        out.append((name, extract_enf(wave, cfg)))
    return out


def sweep_frame_duration(
    frame_seconds: Sequence[float],
    base: SimConfig | None = None,
    trials: int = 4,
    seed: int = 0,
    segment_seconds: float = 600.0,
    M: int = 3,
    sample_rate: float = 500.0,
    snr_db: float = 40.0,
    workers: int | None = None,
) -> list[dict]:
    """Mean |d13 error| when ENF is re-extracted from waveforms at each frame length.

    Segments always span ``segment_seconds`` of signal, so shorter frames
    give more (noisier) samples per segment.
    """
    base = base or collinear_config(duration=3600.0)
    dist = _line_distances(base)

    def run(job):
        t, T = job
        sims = simulate_enf_grid(base.replace(seed=trial_seed(seed, t)))
        ext = extracted_series(sims, T, sample_rate, snr_db, seed=trial_seed(seed, 10_000 + t))
        N = int(round(segment_seconds / T))
        return collinear_errors(ext, dist, M, N).mean()

    jobs = [(t, T) for T in frame_seconds for t in range(trials)]
    results = dict(zip(jobs, _map(run, jobs, workers)))
    rows = []
    for T in frame_seconds:
        mean, std = _trial_stats([results[(t, T)] for t in range(trials)])
        rows.append({"frame_seconds": float(T), "mean_error": mean, "std_error": std, "trials": trials})
    return rows


def _localization_trials(base, trials, seed, workers, **loo_kwargs):
    def run(t):
        sims = simulate_enf_grid(base.replace(seed=trial_seed(seed, t)))
        return leave_one_out(sims, _positions(base), seed=seed, trial=t, **loo_kwargs)

    return _map(run, range(trials), workers)


def _positions(cfg: SimConfig):
    return {n: (x, y) for n, x, y in cfg.sites}


def _metric_rows(per_trial_outcomes, key_name, key_of):
    # key -> list of per-trial metrics
    table: dict = {}
    for outcomes in per_trial_outcomes:
        for (method, eps), m in summarize(outcomes).items():
            table.setdefault((method, key_of(method, eps)), []).append(m)
    rows = []
    for (method, key), ms in table.items():
        p_mean, p_std = _trial_stats([m.p_loc for m in ms])
        a_mean, a_std = _trial_stats([m.a_loc for m in ms])
        hits = [m.a_loc_hits for m in ms if not math.isnan(m.a_loc_hits)]
        rows.append(
            {
                key_name: key,
                "method": method,
                "p_loc": p_mean,
                "p_loc_std": p_std,
                "a_loc": a_mean,
                "a_loc_std": a_std,
                "a_loc_hits": float(np.mean(hits)) if hits else math.nan,
                "trials": len(ms),
                "queries": sum(m.queries for m in ms),
            }
        )
    return rows


def sweep_epsilon(
    epsilons: Sequence[float],
    base: SimConfig,
    trials: int = 4,
    seed: int = 0,
    methods: Sequence[str] = ("halfplane",),
    scheme: QuantizationScheme | str | None = None,
    M: int = 3,
    N: int = 600,
    workers: int | None = None,
) -> list[dict]:
    per_trial = _localization_trials(
        base, trials, seed, workers, methods=methods, epsilons=epsilons, M=M, N=N, scheme=scheme
    )
    rows = _metric_rows(per_trial, "epsilon", lambda method, eps: eps)
    return sorted(rows, key=lambda r: (r["method"], r["epsilon"]))


def sweep_snr(
    snrs_db: Sequence[float],
    base: SimConfig,
    trials: int = 30,
    seed: int = 0,
    method: str = "halfplane",
    epsilon: float = 0.02,
    scheme: QuantizationScheme | str | None = None,
    M: int = 3,
    N: int = 600,
    workers: int | None = None,
) -> list[dict]:
    """Localization metrics with white noise on the query ENF at each detail-band SNR."""
    rows = []
    for snr in snrs_db:
        per_trial = _localization_trials(
            base, trials, seed, workers, methods=(method,), epsilons=(epsilon,), M=M, N=N,
            scheme=scheme, snr_db=snr,
        )
        (row,) = _metric_rows(per_trial, "snr_db", lambda m, e: snr)
        rows.append(row)
    return rows
