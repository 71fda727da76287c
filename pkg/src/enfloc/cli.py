"""Command-line driver.

Exit codes: 0 success, 1 usage, 2 unreadable or malformed input,
3 invalid configuration or insufficient data.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import AnchorSite, EnfSignal, GridDomain, QuantizationScheme
from .errors import ConfigurationError, EnfLocError, InputFormatError
from .experiments import (
    collinear_config,
    fit_anchor_scheme,
    leave_one_out,
    sweep_epsilon,
    sweep_filter_order,
    sweep_frame_duration,
    sweep_snr,
)
from .extraction import METHODS as EXTRACTION_METHODS
from .extraction import ExtractionConfig, extract_enf
from .geolocate import (
    DEFAULT_EPSILONS,
    METHODS,
    LocalizationQuery,
    default_domain,
    fit_quantization,
    locate,
    metrics,
    quantile_edges,
    region_to_geojson,
)
from .gridsim import SimConfig, simulate_enf_grid, synthesize_waveform, trial_seed
from .io import (
    CORRELATION_COLUMNS,
    METRIC_COLUMNS,
    anchor_entries,
    atomic_write_bytes,
    atomic_write_text,
    correlation_rows,
    dumps_json,
    enf_csv_text,
    load_config,
    read_anchor_file,
    read_enf_csv,
    read_json,
    read_recording,
    rows_csv_text,
    wav_bytes,
)
from .presets import PAPER_FILTER_ORDER, PAPER_FRAME_SECONDS, PAPER_SEGMENT_FRAMES, five_city_sites, paper_scheme
from .signature import DEFAULT_MAX_LAG, align, corrcoef, highpass_detail, segment_starts, segment_tables

OUTPUT_DIR_ENV = "ENFLOC_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3
SWEEP_KINDS = ("filter-order", "frame-duration", "epsilon", "snr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# pipeline configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    filter_order: int = PAPER_FILTER_ORDER
    segment_frames: int = PAPER_SEGMENT_FRAMES
    epsilons: tuple = (0.02,)
    domain: dict | None = None
    anchors: str | None = None
    scheme: str | None = None
    scheme_bins: int = 3
    method: str = "halfplane"
    centered: bool = False
    seed: int = 0
    trials: int | None = None
    simulation: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        base = paper_preset() if preset == "paper" else cls()
        if preset not in (None, "paper"):
            raise ConfigurationError(f"unknown preset {preset!r}")
        ext = d.pop("extraction", None)
        sim = d.pop("simulation", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown pipeline options: {sorted(unknown)}")
        if "epsilons" in d:
            d["epsilons"] = tuple(float(e) for e in d["epsilons"])
        cfg = replace(base, **d)
        if ext is not None:
            cfg = replace(cfg, extraction=ExtractionConfig.from_dict({**base.extraction.to_dict(), **ext}))
        if sim is not None:
            cfg = replace(cfg, simulation={**base.simulation, **sim})
        return cfg


def paper_preset() -> PipelineConfig:
    """M=3, 1 s frames, 10-minute segments, published scheme, five-city sites."""
    return PipelineConfig(
        extraction=ExtractionConfig(frame_seconds=PAPER_FRAME_SECONDS),
        filter_order=PAPER_FILTER_ORDER,
        segment_frames=PAPER_SEGMENT_FRAMES,
        scheme="paper",
        simulation={"sites": [list(s) for s in five_city_sites()]},
    )


def _pipeline(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "preset", None) == "paper":
        cfg = paper_preset()
    if getattr(args, "config", None):
        data = load_config(args.config)
        if getattr(args, "preset", None):
            data.setdefault("preset", args.preset)
        cfg = PipelineConfig.from_dict(data)
    over = {}
    for flag, key in (("filter_order", "filter_order"), ("segment_frames", "segment_frames"),
                      ("method", "method"), ("scheme", "scheme"), ("seed", "seed"),
                      ("trials", "trials"), ("bins", "scheme_bins")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    if getattr(args, "epsilon", None):
        over["epsilons"] = tuple(args.epsilon)
    if getattr(args, "centered", False):
        over["centered"] = True
    cfg = replace(cfg, **over)
    ext = {}
    for flag in ("nominal", "frame_seconds", "band_halfwidth", "frame_overlap"):
        v = getattr(args, flag, None)
        if v is not None:
            ext[flag] = v
    if getattr(args, "estimator", None):
        ext["method"] = args.estimator
    if ext:
        cfg = replace(cfg, extraction=ExtractionConfig.from_dict({**cfg.extraction.to_dict(), **ext}))
    return cfg


def _output_dir(args) -> Path:
    out = getattr(args, "output_dir", None) or os.environ.get(OUTPUT_DIR_ENV) or "."
    return Path(out)


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def _load_scheme(spec: str | None):
    if spec is None:
        return None
    if spec == "paper":
        return paper_scheme()
    if spec == "fit":
        return "fit"
    return QuantizationScheme.from_dict(read_json(spec))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_extract(args) -> int:
    cfg = _pipeline(args)
    outdir = _output_dir(args)
    if args.output and len(args.recordings) != 1:
        raise UsageError("--output takes a single recording; use --output-dir for several")
    for rec_path in args.recordings:
        rec = read_recording(rec_path)
        enf = extract_enf(rec, cfg.extraction, workers=args.workers)
        target = args.output or outdir / (Path(rec_path).stem + ".enf.csv")
        atomic_write_text(target, enf_csv_text(enf))
        flagged = int(enf.flags.sum())
        print(f"{rec_path}: {len(enf)} frames -> {target}" + (f" ({flagged} flagged)" if flagged else ""),
              file=sys.stderr)
    return EXIT_OK


def cmd_align(args) -> int:
    a = read_enf_csv(args.reference)
    b = read_enf_csv(args.other)
    res = align(a, b, args.max_lag)
    _emit(dumps_json(res.to_dict()), args.output)
    return EXIT_OK


def _common_window(series):
    """Trim named series to the time span they all cover (whole frames only)."""
    period = series[0][1].frame_period
    start = max(e.start_time for _, e in series)
    stop = min(e.start_time + len(e) * period for _, e in series)
    out = []
    for name, e in series:
        if not np.isclose(e.frame_period, period, rtol=1e-9, atol=0):
            raise ConfigurationError(f"{name!r} has a different frame period")
        i0 = int(round((start - e.start_time) / period))
        i1 = int(round((stop - e.start_time) / period))
        if i1 - i0 < 1:
            raise ConfigurationError("series share no common time span")
        out.append((name, e.slice(i0, i1)))
    return out


def _load_series(args, cfg):
    anchors = read_anchor_file(args.anchors or cfg.anchors)
    series = [(a.name, a.enf) for a in anchors]
    query = None
    if getattr(args, "query", None):
        query = read_enf_csv(args.query)
        series.append((args.query_name, query))
    names = [n for n, _ in series]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"query name {args.query_name!r} clashes with an anchor")
    if getattr(args, "align", False) and query is not None:
        # re-time anchors to the query clock: a(n) ~ query(n + lag)
        fixed = []
        for a in anchors:
            e = a.enf
            lag = align(query, e, args.max_lag).lag_frames
            start = query.start_time + lag * query.frame_period
            fixed.append((a.name, EnfSignal(e.values, e.frame_period, start, e.nominal, e.flags)))
        series = fixed + [(args.query_name, query)]
    return anchors, _common_window(series)


def cmd_correlate(args) -> int:
    cfg = _pipeline(args)
    _, series = _load_series(args, cfg)
    details = [(n, highpass_detail(e, cfg.filter_order)) for n, e in series]
    tables = segment_tables(details, cfg.segment_frames, cfg.centered, args.workers)
    if args.format == "json":
        text = dumps_json({"filter_order": cfg.filter_order, "segment_frames": cfg.segment_frames,
                           "tables": [t.to_dict() for t in tables]})
    else:
        text = rows_csv_text(correlation_rows(tables), CORRELATION_COLUMNS)
    _emit(text, args.output)
    return EXIT_OK


def _domain(args, cfg, points):
    if getattr(args, "domain", None):
        x0, x1, y0, y1 = args.domain
        return GridDomain((x0, x1), (y0, y1), args.cell_size)
    if cfg.domain:
        d = dict(cfg.domain)
        if args.cell_size is not None:
            d["cell_size"] = args.cell_size
        return GridDomain.from_dict(d)
    return default_domain(points, cell_size=args.cell_size)


def _needs_scheme(method):
    return method in ("quantization", "combined")


def _metric_rows(groups):
    rows = []
    for eps, pairs in sorted(groups.items()):
        m = metrics(pairs)
        rows.append({"epsilon": eps, "p_loc": m.p_loc, "a_loc": m.a_loc, "a_loc_hits": m.a_loc_hits,
                     "queries": m.queries, "hits": m.hits})
    return rows


def cmd_locate(args) -> int:
    cfg = _pipeline(args)
    method = cfg.method
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    scheme = _load_scheme(cfg.scheme)
    if _needs_scheme(method) and scheme is None:
        raise ConfigurationError(f"method {method!r} needs --scheme (a JSON file, 'paper' or 'fit')")
    M, N = cfg.filter_order, cfg.segment_frames

    if args.leave_one_out:
        anchors = read_anchor_file(args.anchors or cfg.anchors)
        positions = {a.name: a.position for a in anchors}
        series = _common_window([(a.name, a.enf) for a in anchors])
        domain = _domain(args, cfg, list(positions.values()))
        outcomes = leave_one_out(series, positions, methods=(method,), epsilons=cfg.epsilons, M=M, N=N,
                                 scheme=scheme, n_bins=cfg.scheme_bins, domain=domain, centered=cfg.centered)
        groups = {}
        for o in outcomes:
            groups.setdefault(o.epsilon, []).append((o.report, o.truth))
        rows = _metric_rows(groups)
        _emit(rows_csv_text(rows, METRIC_COLUMNS), args.metrics_csv or args.output)
        if args.report:
            atomic_write_text(args.report, dumps_json({
                "method": method, "filter_order": M, "segment_frames": N, "domain": domain.to_dict(),
                "metrics": rows,
                "queries": [{"query": o.query, "segment_index": o.segment, "epsilon": o.epsilon,
                             "rho_query": o.rho_query, "hit": o.report.region.contains(o.truth)
                             if domain.contains_point(o.truth) else False,
                             "area_fraction": o.report.region.area_fraction(),
                             "constraints_applied": o.report.constraints_applied,
                             "constraints_skipped": o.report.constraints_skipped} for o in outcomes],
            }))
        return EXIT_OK

    if not args.query:
        raise UsageError("locate needs --query (or --leave-one-out)")
    anchors, series = _load_series(args, cfg)
    if method != "quantization" and len(anchors) < 2:
        raise ConfigurationError(f"method {method!r} needs at least 2 anchors")
    details = {n: highpass_detail(e, M) for n, e in series}
    qdet = details[args.query_name]
    starts = segment_starts(len(qdet), N)
    if not starts:
        raise ConfigurationError(f"query holds {len(qdet)} detail frames, fewer than one {N}-frame segment")
    positions = {a.name: a.position for a in anchors}
    truth = tuple(args.truth) if args.truth else None
    domain = _domain(args, cfg, list(positions.values()) + ([truth] if truth and args.domain_includes_truth else []))
    if scheme == "fit":
        scheme = fit_anchor_scheme([(a.name, details[a.name]) for a in anchors], positions, starts, N,
                                   cfg.scheme_bins, cfg.centered)
    sites = tuple(AnchorSite(a.name, a.position) for a in anchors)
    results, features, groups = [], [], {}
    for k, s in enumerate(starts):
        rho = {a.name: corrcoef(qdet, details[a.name], s, N, cfg.centered) for a in anchors}
        for eps in cfg.epsilons:
            report = locate(LocalizationQuery(sites, rho, eps, domain), method, scheme)
            entry = {"segment_index": k, "epsilon": eps, "rho_query": rho, "report": report.to_dict()}
            if truth is not None:
                entry["hit"] = domain.contains_point(truth) and report.region.contains(truth)
                groups.setdefault(eps, []).append((report, truth))
            results.append(entry)
            if args.geojson:
                features.append(region_to_geojson(report.region, {"segment_index": k, "epsilon": eps, "method": method}))
    doc = {"method": method, "filter_order": M, "segment_frames": N, "query": args.query_name,
           "domain": domain.to_dict(), "results": results}
    if isinstance(scheme, QuantizationScheme):
        doc["scheme"] = scheme.to_dict()
    if truth is not None:
        rows = _metric_rows(groups)
        doc["metrics"] = rows
        if args.metrics_csv:
            atomic_write_text(args.metrics_csv, rows_csv_text(rows, METRIC_COLUMNS))
    if args.geojson:
        atomic_write_text(args.geojson, dumps_json({"type": "FeatureCollection", "features": features}))
    _emit(dumps_json(doc), args.output)
    return EXIT_OK


def _sim_config(cfg: PipelineConfig, args, default_sites) -> SimConfig:
    d = dict(cfg.simulation)
    d.setdefault("sites", [list(s) for s in default_sites])
    if getattr(args, "duration", None) is not None:
        d["duration"] = args.duration
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    elif "seed" not in d:
        d["seed"] = cfg.seed
    return SimConfig.from_dict(d)


def cmd_simulate(args) -> int:
    if args.config:
        data = load_config(args.config)
        sim = data.get("simulation", data)
        if sim.get("preset", data.get("preset")) == "paper":
            sim = {k: v for k, v in sim.items() if k != "preset"}
            sim.setdefault("sites", [list(s) for s in five_city_sites()])
        cfg = PipelineConfig(simulation={k: v for k, v in sim.items() if k != "preset"})
    elif args.preset == "paper":
        cfg = paper_preset()
    else:
        raise UsageError("simulate needs a config file or --preset paper")
    sim = _sim_config(cfg, args, five_city_sites())
    outdir = _output_dir(args)
    series = simulate_enf_grid(sim)
    files = {}
    for i, (name, enf) in enumerate(series):
        csv_name = f"{name}.csv"
        atomic_write_text(outdir / csv_name, enf_csv_text(enf))
        files[name] = {"enf_csv": csv_name}
        if args.wav:
            wave = synthesize_waveform(enf, args.sample_rate, snr_db=args.snr_db, seed=trial_seed(sim.seed, 100 + i))
            atomic_write_bytes(outdir / f"{name}.wav", wav_bytes(wave))
            files[name]["wav"] = f"{name}.wav"
    atomic_write_text(outdir / "anchors.json",
                      dumps_json(anchor_entries(sim.sites, {n: f["enf_csv"] for n, f in files.items()})))
    manifest = {"generator": f"enfloc {__version__}", "seed": sim.seed, "parameters": sim.to_dict(),
                "files": files, "anchors": "anchors.json"}
    if args.wav:
        manifest["waveform"] = {"sample_rate": args.sample_rate, "snr_db": args.snr_db}
    atomic_write_text(outdir / "manifest.json", dumps_json(manifest))
    print(f"wrote {len(series)} sites to {outdir}", file=sys.stderr)
    return EXIT_OK


_SWEEP_DEFAULTS = {
    "filter-order": [3, 5, 7, 9, 11, 13, 15, 17, 19],
    "frame-duration": [0.5, 1.0, 2.0, 4.0],
    "epsilon": list(DEFAULT_EPSILONS),
    "snr": [10.0, 20.0, 30.0, math.inf],
}


def _parse_values(kind, text):
    if text is None:
        return _SWEEP_DEFAULTS[kind]
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(tok)
        except ValueError:
            raise UsageError(f"sweep value {tok!r} is not a number") from None
        vals.append(int(v) if kind == "filter-order" else v)
    if not vals:
        raise UsageError("sweep range is empty")
    return vals


def cmd_sweep(args) -> int:
    values = _parse_values(args.kind, args.values)
    cfg = _pipeline(args)
    workers = args.workers
    if args.kind in ("filter-order", "frame-duration"):
        # distance sweeps run on three collinear sites unless the config names three
        sim = {k: v for k, v in cfg.simulation.items() if k != "sites" or len(v) == 3}
        base = _sim_config(replace(cfg, simulation=sim), args, collinear_config().sites)
        if args.kind == "filter-order":
            base = base.replace(duration=args.duration or cfg.simulation.get("duration", 7200.0))
            rows = sweep_filter_order(values, base, cfg.trials or 10, base.seed, cfg.segment_frames, workers)
            columns = ["filter_order", "mean_error", "std_error", "trials"]
        else:
            base = base.replace(duration=args.duration or cfg.simulation.get("duration", 3600.0))
            rows = sweep_frame_duration(values, base, cfg.trials or 4, base.seed,
                                        segment_seconds=cfg.segment_frames * PAPER_FRAME_SECONDS,
                                        M=cfg.filter_order, workers=workers)
            columns = ["frame_seconds", "mean_error", "std_error", "trials"]
    else:
        base = _sim_config(cfg, args, five_city_sites())
        scheme = _load_scheme(cfg.scheme) if _needs_scheme(cfg.method) else None
        if _needs_scheme(cfg.method) and scheme is None:
            raise ConfigurationError(f"method {cfg.method!r} needs --scheme")
        extra = ["p_loc_std", "a_loc_std", "a_loc_hits", "trials", "queries", "method"]
        if args.kind == "epsilon":
            rows = sweep_epsilon(values, base, cfg.trials or 4, base.seed, (cfg.method,), scheme,
                                 cfg.filter_order, cfg.segment_frames, workers)
            columns = ["epsilon", "p_loc", "a_loc"] + extra
        else:
            rows = sweep_snr(values, base, cfg.trials or 30, base.seed, cfg.method, cfg.epsilons[0], scheme,
                             cfg.filter_order, cfg.segment_frames, workers)
            columns = ["snr_db", "p_loc", "a_loc"] + extra
    _emit(rows_csv_text(rows, columns), args.output)
    return EXIT_OK


def cmd_fit_scheme(args) -> int:
    cfg = _pipeline(args)
    anchors = read_anchor_file(args.anchors or cfg.anchors)
    positions = {a.name: a.position for a in anchors}
    series = _common_window([(a.name, a.enf) for a in anchors])
    details = [(n, highpass_detail(e, cfg.filter_order)) for n, e in series]
    starts = segment_starts(min(len(d) for _, d in details), cfg.segment_frames)
    if not starts:
        raise ConfigurationError("anchor series hold no full segment")
    samples = []
    for i in range(len(details)):
        for j in range(i + 1, len(details)):
            (a, da), (b, db) = details[i], details[j]
            d = math.dist(positions[a], positions[b])
            samples += [(d, corrcoef(da, db, s, cfg.segment_frames, cfg.centered)) for s in starts]
    if args.edges:
        try:
            edges = [float(e) for e in args.edges.split(",") if e.strip()]
        except ValueError:
            raise UsageError("--edges must be comma-separated numbers") from None
    else:
        edges = quantile_edges([r for _, r in samples], cfg.scheme_bins)
    scheme = fit_quantization(samples, edges, open_ended=args.open_ended, from_zero=args.from_zero)
    _emit(dumps_json(scheme.to_dict()), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p, pipeline=True):
    p.add_argument("-c", "--config", help="TOML or JSON pipeline config")
    p.add_argument("--preset", choices=["paper"], help="pin M=3, 1 s frames, 600-frame segments, published scheme")
    if pipeline:
        p.add_argument("-M", "--filter-order", type=int, help="moving-average order of the detail filter (odd)")
        p.add_argument("-N", "--segment-frames", type=int, help="frames per correlation segment")
        p.add_argument("--centered", action="store_true", help="subtract segment means before correlating")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="enfloc", description="ENF extraction, signatures and grid localization.")
    parser.add_argument("--version", action="version", version=f"enfloc {__version__}")
    parser.add_argument("--workers", type=int, default=None, help="thread count (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="recordings (WAV/CSV) -> ENF CSV")
    p.add_argument("recordings", nargs="+")
    _common(p, pipeline=False)
    p.add_argument("--nominal", type=float)
    p.add_argument("--frame-seconds", type=float)
    p.add_argument("--band-halfwidth", type=float)
    p.add_argument("--frame-overlap", type=float)
    p.add_argument("--estimator", choices=EXTRACTION_METHODS)
    p.add_argument("-o", "--output", help="output CSV (single recording)")
    p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("align", help="lag between two ENF CSVs")
    p.add_argument("reference")
    p.add_argument("other")
    p.add_argument("--max-lag", type=int, default=DEFAULT_MAX_LAG)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_align)

    def anchors_args(p):
        p.add_argument("--anchors", help="anchor JSON file")
        p.add_argument("--query", help="query ENF CSV")
        p.add_argument("--query-name", default="query")
        p.add_argument("--align", action="store_true", help="re-time anchors to the query by cross-correlation")
        p.add_argument("--max-lag", type=int, default=DEFAULT_MAX_LAG)

    p = sub.add_parser("correlate", help="per-segment detail correlation tables")
    anchors_args(p)
    _common(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("locate", help="feasible region of a query recording")
    anchors_args(p)
    _common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--scheme", help="quantization scheme JSON, 'paper' or 'fit'")
    p.add_argument("--bins", type=int, help="bins for --scheme fit")
    p.add_argument("--epsilon", type=float, action="append", help="tolerance (repeatable)")
    p.add_argument("--truth", type=float, nargs=2, metavar=("X", "Y"), help="true query position for metrics")
    p.add_argument("--domain", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--domain-includes-truth", action="store_true", help="grow the default domain to cover --truth")
    p.add_argument("--cell-size", type=float)
    p.add_argument("--leave-one-out", action="store_true", help="use every anchor in turn as the query")
    p.add_argument("--geojson", help="write feasible regions as GeoJSON")
    p.add_argument("--metrics-csv", help="write epsilon,p_loc,a_loc")
    p.add_argument("--report", help="per-query JSON for --leave-one-out")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("simulate", help="synthetic multi-site ENF bundle")
    p.add_argument("config", nargs="?", help="simulation TOML/JSON")
    p.add_argument("--preset", choices=["paper"])
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--wav", action="store_true", help="also write synthesized waveforms")
    p.add_argument("--sample-rate", type=float, default=1000.0)
    p.add_argument("--snr-db", type=float, default=40.0)
    p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="metric-vs-parameter CSV on simulated data")
    p.add_argument("kind", choices=SWEEP_KINDS)
    p.add_argument("--values", help="comma-separated parameter values")
    _common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--scheme")
    p.add_argument("--bins", type=int)
    p.add_argument("--epsilon", type=float, action="append")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-scheme", help="fit a quantization scheme from anchor recordings")
    p.add_argument("--anchors", required=False)
    _common(p)
    p.add_argument("--edges", help="comma-separated rho thresholds (default: equal-count bins)")
    p.add_argument("--bins", type=int)
    p.add_argument("--open-ended", action="store_true", help="let the lowest-correlation bin extend to infinity")
    p.add_argument("--from-zero", action="store_true", help="start the highest-correlation bin at distance 0")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit_scheme)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"enfloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"enfloc: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EnfLocError, ValueError) as exc:
        print(f"enfloc: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
