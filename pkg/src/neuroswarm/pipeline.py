"""Session orchestration: signal streams -> (thought, eye commands) ->
control parameters -> swarm steps -> frame records.

The control loop owns a tick clock (default 30 Hz). Signal records are
consumed by timestamp, so the 128 Hz EOG stream, the slower metric stream,
and the tick rate stay decoupled. Each tick: decode any due metric samples
(forward filtering) and EOG frames (windowed detectors), refresh the
control triple (a, b, v), advance the swarm one step, and emit a frame.

Operator messages (the wire protocol used by the console) are injected
between ticks; they override decoded values and persist exactly like them,
flagged by source. In ``manual`` mode decoded events stop driving the
control parameters entirely.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from . import eog, hmm, signal_io, swarm
from .errors import ValidationError

THOUGHT_METRIC_MEANS = {
    "Aggregate": (0.8, 0.8, 0.8),
    "Disperse": (0.2, 0.2, 0.2),
}

#: Default per-electrode pulse amplitudes for scripted missions, microvolts.
MISSION_HORIZ_AMPLITUDE_UV = 150.0
MISSION_VERT_AMPLITUDE_UV = 115.0
MISSION_BLINK_AMPLITUDE_UV = 300.0


def drive_vector(direction: str, speed: float) -> np.ndarray:
    """Preset drive vector for an eye-command direction."""
    table = {
        "Right": (speed, 0.0),
        "Left": (-speed, 0.0),
        "Up": (0.0, speed),
        "Down": (0.0, -speed),
    }
    if direction not in table:
        raise ValidationError(f"unknown direction {direction!r}")
    return np.array(table[direction])


# --- configuration models ----------------------------------------------------


class SaccadeEventModel(BaseModel):
    t_s: float
    direction: str
    amplitude_uv: float
    width_ms: float = 250.0


class BlinkEventModel(BaseModel):
    t_s: float
    amplitude_uv: float
    width_ms: float = 250.0


class MetricSegmentModel(BaseModel):
    start_s: float
    end_s: float
    mean: tuple[float, float, float]
    sigma: float = 0.0


class SynthSpecModel(BaseModel):
    duration_s: float
    saccades: list[SaccadeEventModel] = Field(default_factory=list)
    blinks: list[BlinkEventModel] = Field(default_factory=list)
    segments: list[MetricSegmentModel] = Field(default_factory=list)
    noise_uv: float = 0.0
    sample_rate_hz: float = 128.0
    metric_rate_hz: float = 2.0

    def to_spec(self) -> signal_io.SynthSpec:
        return signal_io.SynthSpec(
            duration_s=self.duration_s,
            saccades=tuple(signal_io.SaccadeEvent(**s.model_dump())
                           for s in self.saccades),
            blinks=tuple(signal_io.BlinkEvent(**b.model_dump())
                         for b in self.blinks),
            segments=tuple(signal_io.MetricSegment(**g.model_dump())
                           for g in self.segments),
            noise_uv=self.noise_uv,
            sample_rate_hz=self.sample_rate_hz,
            metric_rate_hz=self.metric_rate_hz,
        )


class EogConfigModel(BaseModel):
    tau: int = 640
    window_w: int = 128
    filter_order: int = 8
    cutoff_hz: float = 4.0
    sample_rate_hz: float = 128.0
    horiz_threshold_uv: float = 200.0
    vert_band_uv: tuple[float, float] = (150.0, 250.0)
    min_separation: int | None = None

    def to_config(self) -> eog.EogConfig:
        return eog.EogConfig(**self.model_dump())


class GainPresetModel(BaseModel):
    mode: Literal["fixed-table", "formula"] = "fixed-table"
    table: dict[str, tuple[float, float]] = Field(
        default_factory=lambda: {"Aggregate": (4.0, 80.0), "Disperse": (2.0, 80.0)}
    )
    formula_attraction: float = 1.0
    formula_divisor: float = 2.625
    state_of_thought: dict[str, int] = Field(
        default_factory=lambda: {"Aggregate": 0, "Disperse": 1}
    )

    def to_preset(self) -> swarm.GainPreset:
        return swarm.GainPreset(**self.model_dump())


class MissionLeg(BaseModel):
    start_s: float
    end_s: float
    thought: str
    direction: str


class SessionConfig(BaseModel):
    """Everything a session needs; serializes field-for-field as JSON."""

    mode: Literal["train", "replay", "live-sim"]
    trace_path: str | None = None
    synth_spec: SynthSpecModel | None = None
    model_path: str | None = None
    eog: EogConfigModel = Field(default_factory=EogConfigModel)
    preset: GainPresetModel = Field(default_factory=GainPresetModel)
    drive_speed: float = 0.1
    loop_rate_hz: float = 30.0
    robots: int = 128
    robot_radius: float = 0.05
    initial_spacing: float | None = None
    initial_thought: str = "Disperse"
    seed: int = 0
    mission: list[MissionLeg] | None = None
    record_path: str | None = None

    @field_validator("loop_rate_hz")
    @classmethod
    def _positive_rate(cls, v):
        if v <= 0:
            raise ValueError("loop_rate_hz must be positive")
        return v

    @field_validator("robots")
    @classmethod
    def _positive_robots(cls, v):
        if v < 1:
            raise ValueError("robots must be >= 1")
        return v


def config_hash(config: SessionConfig) -> str:
    """Hash of the behavioral config; output location is excluded so the
    same session recorded to two paths carries the same hash."""
    canonical = json.dumps(config.model_dump(exclude={"record_path"}),
                           sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def save_config(config: SessionConfig, path) -> None:
    Path(path).write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")


def load_config(path) -> SessionConfig:
    return SessionConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def load_session_trace(config: SessionConfig) -> signal_io.TraceFile:
    """Trace from the configured path, or synthesized from the configured
    spec with the session seed."""
    if config.trace_path is not None:
        return signal_io.read_trace(config.trace_path)
    if config.synth_spec is not None:
        return signal_io.synthesize(config.synth_spec.to_spec(), config.seed)
    raise ValidationError("config needs trace_path or synth_spec")


# --- frame records -----------------------------------------------------------


@dataclass
class FrameRecord:
    t_ms: int
    positions: np.ndarray
    centroid: np.ndarray
    thought_state: int | None
    posterior: np.ndarray | None
    eye: str
    a: float
    b: float
    v: np.ndarray
    source: str
    robot_radius: float

    def to_wire(self) -> dict:
        """Wire/recording form; key order is fixed for determinism."""
        thought = None
        if self.thought_state is not None:
            thought = {"state": self.thought_state,
                       "posterior": [float(p) for p in self.posterior]}
        return {
            "type": "frame",
            "t_ms": self.t_ms,
            "robots": [{"id": i, "x": float(x), "y": float(y)}
                       for i, (x, y) in enumerate(self.positions)],
            "centroid": [float(self.centroid[0]), float(self.centroid[1])],
            "thought": thought,
            "eye": self.eye,
            "theta": {"a": self.a, "b": self.b,
                      "v": [float(self.v[0]), float(self.v[1])],
                      "source": self.source},
            "robot_radius": self.robot_radius,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "FrameRecord":
        thought = obj.get("thought")
        return cls(
            t_ms=obj["t_ms"],
            positions=np.array([[rb["x"], rb["y"]] for rb in obj["robots"]]),
            centroid=np.array(obj["centroid"]),
            thought_state=None if thought is None else thought["state"],
            posterior=None if thought is None else np.array(thought["posterior"]),
            eye=obj["eye"],
            a=obj["theta"]["a"],
            b=obj["theta"]["b"],
            v=np.array(obj["theta"]["v"]),
            source=obj["theta"].get("source", "decoded"),
            robot_radius=obj.get("robot_radius", 0.05),
        )


def frame_json(frame: FrameRecord) -> str:
    return json.dumps(frame.to_wire(), separators=(",", ":"))


FRAMES_HEADER = "#neuroswarm-frames v1 config="


def record_frames(frames: Iterable[FrameRecord], path, cfg_hash: str = "") -> None:
    """Append-ordered line-delimited JSON recording; read_frames inverts it."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(FRAMES_HEADER + cfg_hash + "\n")
            for frame in frames:
                f.write(frame_json(frame) + "\n")
    except OSError:
        try:
            with open(path, "a", encoding="utf-8") as f:
                f.write("#partial\n")
        except OSError:
            pass
        raise


def read_frames(path) -> tuple[str, list[FrameRecord]]:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith(FRAMES_HEADER):
        raise ValidationError("missing frames header")
    cfg_hash = lines[0][len(FRAMES_HEADER):]
    frames = []
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        frames.append(FrameRecord.from_wire(json.loads(line)))
    return cfg_hash, frames


# --- control loop ------------------------------------------------------------


class ControlLoop:
    """Deterministic tick engine shared by batch runs and the live service."""

    def __init__(self, config: SessionConfig, trace: signal_io.TraceFile,
                 model: hmm.GaussianHmm):
        model.validate()
        if model.thought_assignment is None:
            raise ValidationError("model has no thought assignment; retrain")
        self.config = config
        self.model = model
        self.preset = config.preset.to_preset()
        self.decoder = eog.EogDecoder(config.eog.to_config())
        self._records = list(trace.records)
        self._cursor = 0
        self.tick_ms = 1000.0 / config.loop_rate_hz
        self.ticks = 0
        self.total_ticks = max(
            1, int(np.ceil(trace.duration_ms() / self.tick_ms))
        )
        self.mode = "decoded"
        self.estimate: hmm.ThoughtEstimate | None = None
        self.last_eye = "None"
        self.underrun = False

        a0, b0 = self.preset.gains(config.initial_thought, config.robots)
        spacing = config.initial_spacing
        if spacing is None:
            spacing = swarm.equilibrium_distance(a0, b0, config.robot_radius)
        positions = swarm.grid_formation(config.robots, spacing)
        self.state = swarm.SwarmState(
            positions=positions, robot_radius=config.robot_radius,
            a=a0, b=b0, v=np.zeros(2),
        )
        self.state.validate()
        self._source = "decoded"

    @property
    def done(self) -> bool:
        return self.ticks >= self.total_ticks

    def inject(self, message: dict) -> dict | None:
        """Apply one operator message; returns an error reply dict or None."""
        if not isinstance(message, dict) or "type" not in message:
            return {"type": "error", "error": "message must carry a type"}
        kind = message["type"]
        try:
            if kind == "eye":
                direction = message.get("dir")
                v = drive_vector(direction, self.config.drive_speed)
                self.state = swarm.replace_drive(self.state, v)
                self.last_eye = direction
                self._source = "operator-injected"
            elif kind == "thought":
                label = message.get("label")
                a, b = self.preset.gains(label, self.config.robots)
                self.state.a, self.state.b = a, b
                self._source = "operator-injected"
            elif kind == "gains":
                a, b = float(message.get("a")), float(message.get("b"))
                if a <= 0 or b <= 0:
                    return {"type": "error", "error": "gains must be positive"}
                self.state.a, self.state.b = a, b
                self._source = "operator-injected"
            elif kind == "halt":
                self.state = swarm.replace_drive(self.state, np.zeros(2))
                self._source = "operator-injected"
            elif kind == "mode":
                value = message.get("value")
                if value not in ("decoded", "manual"):
                    return {"type": "error", "error": f"unknown mode {value!r}"}
                self.mode = value
            else:
                return {"type": "error", "error": f"unknown type {kind!r}"}
        except (ValidationError, TypeError, ValueError) as exc:
            return {"type": "error", "error": str(exc)}
        return None

    def tick(self) -> FrameRecord:
        """Advance one tick: decode due records, set theta, step, emit."""
        self.ticks += 1
        t_tick = self.ticks * self.tick_ms
        while (self._cursor < len(self._records)
               and self._records[self._cursor].t_ms <= t_tick):
            record = self._records[self._cursor]
            self._cursor += 1
            if isinstance(record, signal_io.MetricSample):
                prev = None if self.estimate is None else self.estimate.posterior
                self.estimate = hmm.forward_step(self.model, prev, record)
                if self.mode == "decoded":
                    a, b = self.preset.gains(self.estimate.thought,
                                             self.config.robots)
                    self.state.a, self.state.b = a, b
                    self._source = "decoded"
            else:
                for cmd in self.decoder.feed(record):
                    if self.mode == "decoded":
                        self.state = swarm.replace_drive(
                            self.state,
                            drive_vector(cmd.direction, self.config.drive_speed),
                        )
                        self.last_eye = cmd.direction
                        self._source = "decoded"

        self.state = swarm.step(self.state, self.tick_ms / 1000.0)
        diag = swarm.diagnostics(self.state)
        return FrameRecord(
            t_ms=int(round(t_tick)),
            positions=self.state.positions.copy(),
            centroid=diag.centroid,
            thought_state=None if self.estimate is None else self.estimate.state,
            posterior=None if self.estimate is None else self.estimate.posterior.copy(),
            eye=self.last_eye,
            a=self.state.a,
            b=self.state.b,
            v=self.state.v.copy(),
            source=self._source,
            robot_radius=self.config.robot_radius,
        )


# --- sessions ----------------------------------------------------------------


def parse_schedule(text: str) -> list[tuple[float, float, str]]:
    """Parse '0-15:Disperse,15-30:Aggregate,...' (seconds) into intervals."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            span, label = part.split(":")
            start, end = span.split("-")
            out.append((float(start), float(end), label.strip()))
        except ValueError:
            raise ValidationError(f"bad schedule entry {part!r}") from None
    if not out:
        raise ValidationError("empty schedule")
    return out


def _validate_schedule(schedule: list[tuple[float, float, str]]) -> None:
    visits: dict[str, int] = {}
    prev_label = None
    for start, end, label in schedule:
        if label not in hmm.THOUGHT_LABELS:
            raise ValidationError(f"unknown thought label {label!r}")
        if end <= start:
            raise ValidationError(f"bad interval {start}-{end}")
        if label != prev_label:
            visits[label] = visits.get(label, 0) + 1
        prev_label = label
    if set(visits) != set(hmm.THOUGHT_LABELS):
        raise ValidationError("schedule must visit both thoughts")
    if any(n < 2 for n in visits.values()):
        raise ValidationError("schedule needs at least 2 visits per thought")


def run_training_session(
    config: SessionConfig, schedule: list[tuple[float, float, str]],
    max_iter: int = 200, tol: float = 1e-4,
) -> tuple[hmm.GaussianHmm, hmm.TrainingReport]:
    """Train (k-means init -> Baum-Welch -> thought assignment), canonicalize
    state order so Aggregate is state 0, and persist the model."""
    if config.mode != "train":
        raise ValidationError(f"config mode must be 'train', got {config.mode!r}")
    _validate_schedule(schedule)
    trace = load_session_trace(config)
    samples = trace.metric_samples
    rate = trace.header.metric_rate_hz
    if len(samples) < 60.0 * rate:
        raise ValidationError(
            f"training trace too short: {len(samples)} metric samples "
            f"< 60 s at {rate} Hz"
        )
    init = hmm.kmeans_init(samples, m=2, seed=config.seed)
    model, report = hmm.baum_welch(init, samples, max_iter=max_iter, tol=tol)
    schedule_ms = [((s * 1000.0, e * 1000.0), label) for s, e, label in schedule]
    assignment = hmm.assign_thoughts(report, schedule_ms)

    # canonical state order: state i holds THOUGHT_LABELS[i]
    label_state = {label: s for s, label in assignment.items()}
    perm = [label_state[label] for label in hmm.THOUGHT_LABELS]
    model = model.permuted(perm)
    model.thought_assignment = {i: label for i, label in enumerate(hmm.THOUGHT_LABELS)}
    report.gamma = report.gamma[:, perm]
    model.validate()

    if config.model_path:
        hmm.save_model(model, config.model_path)
    return model, report


def run_control_session(config: SessionConfig) -> list[FrameRecord]:
    """Batch control run over the configured trace; writes the recording
    when a record path is configured."""
    if config.mode not in ("replay", "live-sim"):
        raise ValidationError(
            f"config mode must be 'replay' or 'live-sim', got {config.mode!r}"
        )
    if not config.model_path:
        raise ValidationError("config needs model_path")
    model = hmm.load_model(config.model_path)
    trace = load_session_trace(config)
    loop = ControlLoop(config, trace, model)
    frames = []
    while not loop.done:
        frames.append(loop.tick())
    if config.record_path:
        record_frames(frames, config.record_path, config_hash(config))
    return frames


# --- scripted missions --------------------------------------------------------


def rectangle_mission(leg_s: float = 40.0, lead_in_s: float = 6.0) -> list[MissionLeg]:
    """Clockwise 4-leg loop: Right/Down/Left/Up, aggregating on leg 3."""
    legs = []
    directions = ["Right", "Down", "Left", "Up"]
    thoughts = ["Disperse", "Disperse", "Aggregate", "Disperse"]
    for k in range(4):
        start = lead_in_s + k * leg_s
        legs.append(MissionLeg(start_s=start, end_s=start + leg_s,
                               thought=thoughts[k], direction=directions[k]))
    return legs


def mission_to_synth_spec(
    mission: list[MissionLeg],
    metric_sigma: float = 0.05,
    noise_uv: float = 10.0,
    tail_s: float = 2.0,
    blink_times: tuple[float, ...] = (),
    metric_rate_hz: float = 2.0,
) -> SynthSpecModel:
    """Build the synthetic trace spec that scripts a mission: one saccade
    per leg (1 s after the leg starts) and metric segments matching each
    leg's thought. The lead-in and tail reuse the neighboring thought."""
    if not mission:
        raise ValidationError("mission is empty")
    duration = mission[-1].end_s + tail_s
    segments = [MetricSegmentModel(
        start_s=0.0, end_s=mission[0].start_s,
        mean=THOUGHT_METRIC_MEANS[mission[0].thought], sigma=metric_sigma,
    )]
    saccades = []
    for leg in mission:
        segments.append(MetricSegmentModel(
            start_s=leg.start_s, end_s=leg.end_s,
            mean=THOUGHT_METRIC_MEANS[leg.thought], sigma=metric_sigma,
        ))
        amplitude = (MISSION_HORIZ_AMPLITUDE_UV
                     if leg.direction in ("Left", "Right")
                     else MISSION_VERT_AMPLITUDE_UV)
        saccades.append(SaccadeEventModel(
            t_s=leg.start_s + 1.0, direction=leg.direction,
            amplitude_uv=amplitude,
        ))
    segments.append(MetricSegmentModel(
        start_s=mission[-1].end_s, end_s=duration,
        mean=THOUGHT_METRIC_MEANS[mission[-1].thought], sigma=metric_sigma,
    ))
    blinks = [BlinkEventModel(t_s=t, amplitude_uv=MISSION_BLINK_AMPLITUDE_UV)
              for t in blink_times]
    return SynthSpecModel(
        duration_s=duration, saccades=saccades, blinks=blinks,
        segments=segments, noise_uv=noise_uv, metric_rate_hz=metric_rate_hz,
    )


def leg_nn_means(frames: list[FrameRecord],
                 mission: list[MissionLeg]) -> list[float]:
    """Mean nearest-neighbor distance per mission leg."""
    out = []
    for leg in mission:
        values = []
        for frame in frames:
            if leg.start_s * 1000.0 <= frame.t_ms < leg.end_s * 1000.0:
                state = swarm.SwarmState(positions=frame.positions,
                                         robot_radius=frame.robot_radius,
                                         a=frame.a, b=frame.b)
                values.append(swarm.diagnostics(state).mean_nn_dist)
        out.append(float(np.mean(values)) if values else float("nan"))
    return out
