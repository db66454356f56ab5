"""Trace file format, timed replay, and synthetic signal generation.

A trace carries two interleaved record streams at independent rates: EOG
electrode potentials (`E` lines, nominally 128 Hz) and EEG-derived
performance metrics (`M` lines, default 2 Hz). The on-disk format is
line-delimited UTF-8 text:

    #neuroswarm-trace v1 sample_rate=128 metric_rate=2
    E <t_ms> <AF3> <AF4> <F7> <F8>
    M <t_ms> <engagement> <excitement> <meditation>

Reals are written with at most 6 decimal places; writing is canonical, so
``write(read(f))`` is byte-identical to the canonical serialization of f.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import TraceParseError, ValidationError

ELECTRODES = ("AF3", "AF4", "F7", "F8")
DIRECTIONS = ("Left", "Right", "Up", "Down")

#: Declared wall-clock tolerance for timed replay delivery, milliseconds.
REPLAY_JITTER_MS = 20.0


def format_real(x: float) -> str:
    """Canonical text form of a real: <=6 decimals, no trailing zeros."""
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


@dataclass(frozen=True)
class EogFrame:
    """One 4-electrode EOG sample; potentials in microvolts."""

    t_ms: int
    potentials: dict[str, float]

    def __post_init__(self):
        missing = [e for e in ELECTRODES if e not in self.potentials]
        if missing:
            raise ValidationError(f"EogFrame missing electrodes {missing}")


@dataclass(frozen=True)
class MetricSample:
    """One 3-vector of performance metrics, each constrained to [0, 1]."""

    t_ms: int
    engagement: float
    excitement: float
    meditation: float

    def __post_init__(self):
        for name in ("engagement", "excitement", "meditation"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name}={v} outside [0, 1]")

    def vector(self) -> np.ndarray:
        return np.array([self.engagement, self.excitement, self.meditation])


@dataclass(frozen=True)
class TraceHeader:
    version: int = 1
    sample_rate_hz: float = 128.0
    metric_rate_hz: float = 2.0


@dataclass
class TraceFile:
    """All records of a trace, held in canonical timestamp order."""

    header: TraceHeader = field(default_factory=TraceHeader)
    records: list[EogFrame | MetricSample] = field(default_factory=list)

    @property
    def eog_frames(self) -> list[EogFrame]:
        return [r for r in self.records if isinstance(r, EogFrame)]

    @property
    def metric_samples(self) -> list[MetricSample]:
        return [r for r in self.records if isinstance(r, MetricSample)]

    def duration_ms(self) -> int:
        return self.records[-1].t_ms if self.records else 0


def _sort_canonical(records: list[EogFrame | MetricSample]) -> list:
    # E sorts before M on a shared timestamp
    return sorted(records, key=lambda r: (r.t_ms, isinstance(r, MetricSample)))


def _check_monotone(records: Iterable[EogFrame | MetricSample]) -> None:
    last_e = last_m = None
    for r in records:
        if isinstance(r, EogFrame):
            if last_e is not None and r.t_ms <= last_e:
                raise ValidationError(
                    f"EOG timestamps not strictly increasing at t_ms={r.t_ms}"
                )
            last_e = r.t_ms
        else:
            if last_m is not None and r.t_ms <= last_m:
                raise ValidationError(
                    f"metric timestamps not strictly increasing at t_ms={r.t_ms}"
                )
            last_m = r.t_ms


def _parse_header(line: str) -> TraceHeader:
    parts = line.strip().split()
    if not parts or parts[0] != "#neuroswarm-trace":
        raise TraceParseError("missing '#neuroswarm-trace' header", line_no=1)
    if len(parts) < 2 or not parts[1].startswith("v"):
        raise TraceParseError("missing version tag in header", line_no=1)
    try:
        version = int(parts[1][1:])
    except ValueError:
        raise TraceParseError(f"bad version tag {parts[1]!r}", line_no=1) from None
    sample_rate, metric_rate = 128.0, 2.0
    for tok in parts[2:]:
        if "=" not in tok:
            raise TraceParseError(f"bad header field {tok!r}", line_no=1)
        key, _, val = tok.partition("=")
        try:
            if key == "sample_rate":
                sample_rate = float(val)
            elif key == "metric_rate":
                metric_rate = float(val)
            # unknown header keys are ignored
        except ValueError:
            raise TraceParseError(f"bad header value {tok!r}", line_no=1) from None
    return TraceHeader(version, sample_rate, metric_rate)


def read_trace(path) -> TraceFile:
    """Parse a trace file; records come back in canonical timestamp order."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise TraceParseError("empty file: no header", line_no=1)
    header = _parse_header(lines[0])
    records: list[EogFrame | MetricSample] = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if parts[0] == "E":
                if len(parts) != 6:
                    raise ValueError(f"expected 6 fields, got {len(parts)}")
                t = int(parts[1])
                vals = [float(p) for p in parts[2:]]
                records.append(EogFrame(t, dict(zip(ELECTRODES, vals))))
            elif parts[0] == "M":
                if len(parts) != 5:
                    raise ValueError(f"expected 5 fields, got {len(parts)}")
                records.append(
                    MetricSample(
                        int(parts[1]),
                        float(parts[2]),
                        float(parts[3]),
                        float(parts[4]),
                    )
                )
            else:
                raise ValueError(f"unknown record kind {parts[0]!r}")
        except (ValueError, ValidationError) as exc:
            raise TraceParseError(str(exc), line_no=no) from None
    _check_monotone(r for r in records if isinstance(r, EogFrame))
    _check_monotone(r for r in records if isinstance(r, MetricSample))
    return TraceFile(header, _sort_canonical(records))


def write_trace(trace: TraceFile, path) -> None:
    """Serialize canonically (sorted records, trimmed reals)."""
    h = trace.header
    lines = [
        f"#neuroswarm-trace v{h.version} "
        f"sample_rate={format_real(h.sample_rate_hz)} "
        f"metric_rate={format_real(h.metric_rate_hz)}"
    ]
    for r in _sort_canonical(trace.records):
        if isinstance(r, EogFrame):
            vals = " ".join(format_real(r.potentials[e]) for e in ELECTRODES)
            lines.append(f"E {r.t_ms} {vals}")
        else:
            lines.append(
                "M {} {} {} {}".format(
                    r.t_ms,
                    format_real(r.engagement),
                    format_real(r.excitement),
                    format_real(r.meditation),
                )
            )
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def replay(trace: TraceFile, speed: float) -> Iterator[EogFrame | MetricSample]:
    """Yield records in order; ``speed=0`` yields immediately (batch mode).

    At speed s > 0, record k is delivered (t_ms[k] - t_ms[0]) / s after the
    first, scheduled against the stream start so timing error does not
    accumulate; per-record jitter is bounded by REPLAY_JITTER_MS.
    """
    if speed < 0:
        raise ValidationError(f"speed must be >= 0, got {speed}")
    records = _sort_canonical(trace.records)
    if speed == 0:
        yield from records
        return
    start_wall = time.monotonic()
    start_t = records[0].t_ms if records else 0
    for r in records:
        target = start_wall + (r.t_ms - start_t) / 1000.0 / speed
        delay = target - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        yield r


# --- synthetic generation ---------------------------------------------------


@dataclass(frozen=True)
class SaccadeEvent:
    """Injected eye-movement pulse; amplitude is per electrode."""

    t_s: float
    direction: str
    amplitude_uv: float
    width_ms: float = 250.0


@dataclass(frozen=True)
class BlinkEvent:
    """Common-mode positive pulse on all four electrodes."""

    t_s: float
    amplitude_uv: float
    width_ms: float = 250.0


@dataclass(frozen=True)
class MetricSegment:
    start_s: float
    end_s: float
    mean: tuple[float, float, float]
    sigma: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float
    saccades: tuple[SaccadeEvent, ...] = ()
    blinks: tuple[BlinkEvent, ...] = ()
    segments: tuple[MetricSegment, ...] = ()
    noise_uv: float = 0.0
    sample_rate_hz: float = 128.0
    metric_rate_hz: float = 2.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValidationError("duration_s must be positive")
        if self.noise_uv < 0:
            raise ValidationError("noise_uv must be >= 0")
        for ev in list(self.saccades) + list(self.blinks):
            if ev.amplitude_uv <= 0:
                raise ValidationError(f"amplitude must be positive: {ev}")
            if ev.width_ms <= 0:
                raise ValidationError(f"width must be positive: {ev}")
            if ev.t_s < 0 or ev.t_s + ev.width_ms / 1000.0 > self.duration_s:
                raise ValidationError(f"event outside duration: {ev}")
        for ev in self.saccades:
            if ev.direction not in DIRECTIONS:
                raise ValidationError(f"unknown direction {ev.direction!r}")
        for seg in self.segments:
            if not (0 <= seg.start_s < seg.end_s <= self.duration_s):
                raise ValidationError(f"segment outside duration: {seg}")
            if seg.sigma < 0:
                raise ValidationError("segment sigma must be >= 0")


# Sign pattern of each event type across (AF3, AF4, F7, F8). Horizontal
# saccades deflect F7/F8 with opposite signs (left raises F7), vertical
# saccades deflect AF3/AF4 together (up is positive), blinks raise all four.
_POLARITY = {
    "Left": (0.0, 0.0, +1.0, -1.0),
    "Right": (0.0, 0.0, -1.0, +1.0),
    "Up": (+1.0, +1.0, 0.0, 0.0),
    "Down": (-1.0, -1.0, 0.0, 0.0),
    "blink": (+1.0, +1.0, +1.0, +1.0),
}

#: Metric mean used outside any declared segment.
DEFAULT_METRIC_MEAN = 0.5


def _add_pulse(channels: np.ndarray, fs: float, t_s: float, width_ms: float,
               amplitude: float, signs) -> None:
    n = max(2, int(round(width_ms / 1000.0 * fs)))
    start = int(round(t_s * fs))
    end = min(start + n, channels.shape[1])
    shape = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(end - start) / (n - 1)))
    for ch, sign in enumerate(signs):
        if sign:
            channels[ch, start:end] += sign * amplitude * shape


def synthesize(spec: SynthSpec, seed: int) -> TraceFile:
    """Generate a trace from a spec, deterministically for a fixed seed.

    Noise is drawn from numpy's seeded PCG64 generator in a fixed order
    (EOG noise first, then metric noise) so identical spec+seed produce
    identical files on any platform.
    """
    rng = np.random.default_rng(seed)
    fs = spec.sample_rate_hz
    n = int(round(spec.duration_s * fs))
    channels = np.zeros((4, n))
    for sac in spec.saccades:
        _add_pulse(channels, fs, sac.t_s, sac.width_ms, sac.amplitude_uv,
                   _POLARITY[sac.direction])
    for blink in spec.blinks:
        _add_pulse(channels, fs, blink.t_s, blink.width_ms, blink.amplitude_uv,
                   _POLARITY["blink"])
    if spec.noise_uv > 0:
        channels += rng.normal(0.0, spec.noise_uv, channels.shape)

    records: list[EogFrame | MetricSample] = []
    for i in range(n):
        t_ms = int(round(i * 1000.0 / fs))
        records.append(
            EogFrame(t_ms, {e: float(channels[k, i])
                            for k, e in enumerate(ELECTRODES)})
        )

    n_m = int(round(spec.duration_s * spec.metric_rate_hz))
    means = np.full((n_m, 3), DEFAULT_METRIC_MEAN)
    sigmas = np.zeros(n_m)
    t_metric = np.arange(n_m) / spec.metric_rate_hz
    for seg in spec.segments:
        mask = (t_metric >= seg.start_s) & (t_metric < seg.end_s)
        means[mask] = seg.mean
        sigmas[mask] = seg.sigma
    values = means + rng.normal(0.0, 1.0, (n_m, 3)) * sigmas[:, None]
    values = np.clip(values, 0.0, 1.0)
    for i in range(n_m):
        t_ms = int(round(i * 1000.0 / spec.metric_rate_hz))
        records.append(MetricSample(t_ms, *(float(x) for x in values[i])))

    header = TraceHeader(1, spec.sample_rate_hz, spec.metric_rate_hz)
    return TraceFile(header, _sort_canonical(records))


def eog_channel(frames: list[EogFrame], electrode: str) -> np.ndarray:
    """Column of one electrode across frames, as a float array."""
    if electrode not in ELECTRODES:
        raise ValidationError(f"unknown electrode {electrode!r}")
    return np.array([f.potentials[electrode] for f in frames])


def metric_matrix(samples: list[MetricSample]) -> np.ndarray:
    """(T, 3) observation matrix from metric samples."""
    return np.array([[s.engagement, s.excitement, s.meditation]
                     for s in samples]).reshape(len(samples), 3)
