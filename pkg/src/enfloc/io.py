"""File formats: WAV/CSV recordings, ENF and result CSVs, anchor files, configs.

All writers are deterministic (fixed float formatting, sorted JSON keys)
and atomic (write to a temporary sibling, then rename).
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import sys
import tempfile
import wave
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import AnchorSite, CorrelationTable, EnfSignal, RawRecording, check_unique_names, project_latlon
from .errors import ConfigurationError, InputFormatError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


# ---------------------------------------------------------------------------
# atomic output
# ---------------------------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, non-finite floats as null."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# recordings
# ---------------------------------------------------------------------------


def read_wav(path) -> RawRecording:
    """16-bit PCM mono WAV, scaled to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise InputFormatError(f"{path}: expected mono, found {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise InputFormatError(f"{path}: expected 16-bit PCM, found {8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise InputFormatError(f"{path}: not a readable PCM WAV file ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if samples.size == 0:
        raise InputFormatError(f"{path}: WAV file holds no samples")
    return RawRecording(samples, rate)


def wav_bytes(recording: RawRecording, peak: float = 0.9) -> bytes:
    """Encode as 16-bit mono WAV; the largest |sample| maps to ``peak`` full scale."""
    rate = recording.sample_rate
    if rate != int(rate):
        raise ConfigurationError("WAV needs an integer sample rate")
    x = recording.samples
    m = float(np.max(np.abs(x)))
    scale = peak * 32767.0 / m if m > 0 else 0.0
    pcm = np.round(x * scale).astype("<i2")
    buf = _io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(rate))
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def write_wav(path, recording: RawRecording, peak: float = 0.9) -> None:
    atomic_write_bytes(path, wav_bytes(recording, peak))


def _load_numeric_csv(path, columns: int):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
    except UnicodeDecodeError:
        raise InputFormatError(f"{path}: not a text CSV file") from None
    if not first.strip():
        raise InputFormatError(f"{path}: empty CSV file")
    try:
        [float(v) for v in first.split(",")]
        skip = 0
    except ValueError:
        skip = 1
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise InputFormatError(f"{path}: malformed CSV ({exc})") from None
    if data.shape[0] == 0 or data.shape[1] != columns:
        raise InputFormatError(f"{path}: expected {columns} columns of numbers")
    if not np.all(np.isfinite(data)):
        raise InputFormatError(f"{path}: non-finite values")
    return data


def _uniform_period(t, path):
    if t.size < 2:
        return None
    steps = np.diff(t)
    period = float(np.median(steps))
    if not period > 0 or np.max(np.abs(steps - period)) > 1e-6 * max(1.0, period) + 1e-9:
        raise InputFormatError(f"{path}: time column is not uniformly spaced")
    return period


def read_recording_csv(path, sample_rate: float | None = None) -> RawRecording:
    """Two columns ``time, amplitude``; an optional header line is skipped.

    The sample rate comes from the time column and is snapped to an
    integer when within 1 ppm of one, so a CSV export of a WAV file yields
    the same recording.
    """
    data = _load_numeric_csv(path, 2)
    t, x = data[:, 0], data[:, 1]
    if sample_rate is None:
        period = _uniform_period(t, path)
        if period is None:
            raise InputFormatError(f"{path}: one sample is not enough to infer a sample rate")
        sample_rate = (t.size - 1) / (t[-1] - t[0])
        if abs(sample_rate - round(sample_rate)) <= 1e-6 * sample_rate:
            sample_rate = float(round(sample_rate))
    return RawRecording(x, sample_rate, float(t[0]))


def recording_csv_text(recording: RawRecording) -> str:
    t = recording.start_time + np.arange(recording.samples.size) / recording.sample_rate
    buf = _io.StringIO()
    buf.write("time,amplitude\n")
    np.savetxt(buf, np.column_stack([t, recording.samples]), fmt="%.17g", delimiter=",")
    return buf.getvalue()


def read_recording(path) -> RawRecording:
    """Dispatch on content: RIFF header means WAV, anything else is CSV."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise InputFormatError(f"{path}: cannot read ({exc.strerror})") from None
    if magic == b"RIFF" or path.suffix.lower() == ".wav":
        return read_wav(path)
    return read_recording_csv(path)


# ---------------------------------------------------------------------------
# ENF series
# ---------------------------------------------------------------------------


ENF_HEADER = "t_seconds,freq_hz"


def enf_csv_text(enf: EnfSignal) -> str:
    lines = [ENF_HEADER]
    lines += [f"{t:.6f},{v:.6f}" for t, v in zip(enf.times, enf.values)]
    return "\n".join(lines) + "\n"


def write_enf_csv(path, enf: EnfSignal) -> None:
    atomic_write_text(path, enf_csv_text(enf))


def read_enf_csv(path, nominal: float | None = None, frame_period: float | None = None) -> EnfSignal:
    data = _load_numeric_csv(path, 2)
    t, v = data[:, 0], data[:, 1]
    period = frame_period or _uniform_period(t, path) or 1.0
    period = round(period, 6)
    if nominal is None:
        nominal = 50.0 if abs(np.median(v) - 50.0) < abs(np.median(v) - 60.0) else 60.0
    try:
        return EnfSignal(v, period, float(t[0]), nominal)
    except ConfigurationError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# tabular outputs
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def rows_csv_text(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


CORRELATION_COLUMNS = ("segment_index", "site_a", "site_b", "rho")
METRIC_COLUMNS = ("epsilon", "p_loc", "a_loc")


def correlation_rows(tables: Iterable[CorrelationTable]) -> list[dict]:
    rows = []
    for k, table in enumerate(tables):
        names = table.site_names
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                rows.append({"segment_index": k, "site_a": names[i], "site_b": names[j], "rho": float(table.rho[i, j])})
    return rows


# ---------------------------------------------------------------------------
# anchors and configs
# ---------------------------------------------------------------------------


def read_anchor_file(path, load_enf: bool = True, nominal: float | None = None) -> list[AnchorSite]:
    """JSON list of ``{name, x_miles, y_miles, enf_csv}``.

    Entries may give ``lat``/``lon`` instead of planar miles, in which case
    every entry must, and they are projected together. ``enf_csv`` paths
    are resolved relative to the anchor file.
    """
    path = Path(path)
    entries = read_json(path)
    if not isinstance(entries, list) or not entries:
        raise InputFormatError(f"{path}: expected a nonempty JSON list of anchors")
    for e in entries:
        if not isinstance(e, dict) or "name" not in e:
            raise InputFormatError(f"{path}: every anchor needs a name")
    geographic = ["lat" in e and "lon" in e for e in entries]
    if any(geographic):
        if not all(geographic):
            raise InputFormatError(f"{path}: mix of lat/lon and planar anchors")
        xy = project_latlon([(e["lat"], e["lon"]) for e in entries])
    else:
        try:
            xy = [(float(e["x_miles"]), float(e["y_miles"])) for e in entries]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: anchor position missing or invalid ({exc})") from None
    sites = []
    for e, pos in zip(entries, xy):
        enf = None
        if load_enf:
            if "enf_csv" not in e:
                raise InputFormatError(f"{path}: anchor {e['name']!r} has no enf_csv")
            enf = read_enf_csv(path.parent / e["enf_csv"], nominal)
        sites.append(AnchorSite(str(e["name"]), tuple(pos), enf))
    check_unique_names(sites)
    return sites


def anchor_entries(names_positions: Iterable[tuple[str, float, float]], csv_names: Mapping[str, str]) -> list[dict]:
    return [
        {"name": n, "x_miles": float(x), "y_miles": float(y), "enf_csv": csv_names[n]}
        for n, x, y in names_positions
    ]


def load_config(path) -> dict:
    """TOML (``.toml``) or JSON config file as a dict."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputFormatError(f"{path}: cannot read ({exc.strerror})") from None
    if path.suffix.lower() == ".toml":
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise InputFormatError(f"{path}: invalid TOML ({exc})") from None
    try:
        data = json.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise InputFormatError(f"{path}: config must be a JSON object")
    return data
