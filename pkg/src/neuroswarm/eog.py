"""Eye-movement decoding from the four frontal electrodes.

Horizontal commands come from the F7-F8 difference (peaks -> Left, troughs
-> Right, threshold 200 uV); blinks hit both electrodes equally and cancel
in the difference. Vertical commands come from the AF3+AF4 sum (peaks ->
Up, troughs -> Down) banded to [150, 250] uV; blinks exceed the upper
bound and are rejected.

Filtering is causal (streaming use), so detected extrema lag the injected
event by the filter's group delay, about 230 ms at the default settings.
Channels are processed in non-overlapping windows of ``window_w`` samples;
a trailing partial window is not scanned. Within a window, the maximum
(resp. minimum) sample is the only peak (resp. trough) candidate; accepted
events must be at least ``min_separation`` samples apart, earlier wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sig

from .errors import ConfigurationError, ValidationError
from .signal_io import ELECTRODES, EogFrame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EogConfig:
    tau: int = 640
    window_w: int = 128
    filter_order: int = 8
    cutoff_hz: float = 4.0
    sample_rate_hz: float = 128.0
    horiz_threshold_uv: float = 200.0
    vert_band_uv: tuple[float, float] = (150.0, 250.0)
    min_separation: int | None = None  # defaults to window_w - 1

    def __post_init__(self):
        if self.tau < self.window_w:
            raise ConfigurationError(f"tau={self.tau} < window_w={self.window_w}")
        if self.window_w <= 0:
            raise ConfigurationError("window_w must be positive")
        if not (0 < self.cutoff_hz < self.sample_rate_hz / 2):
            raise ConfigurationError(
                f"cutoff {self.cutoff_hz} Hz outside (0, {self.sample_rate_hz / 2})"
            )
        if self.filter_order < 1:
            raise ConfigurationError("filter_order must be >= 1")
        if self.horiz_threshold_uv <= 0:
            raise ConfigurationError("horiz_threshold_uv must be positive")
        lo, hi = self.vert_band_uv
        if not (0 < lo < hi):
            raise ConfigurationError(f"bad vertical band [{lo}, {hi}]")

    @property
    def separation(self) -> int:
        return self.window_w - 1 if self.min_separation is None else self.min_separation


@dataclass(frozen=True)
class EyeCommand:
    window_index: int
    direction: str
    peak_uv: float
    t_ms: int


def remove_baseline(channel, tau: int) -> np.ndarray:
    """Subtract the mean of the first ``tau`` samples from the whole channel.

    The baseline freezes after tau samples, so this is streaming-safe. A
    channel shorter than tau is centered on what is available and the
    truncation is logged.
    """
    x = np.asarray(channel, dtype=float)
    if tau <= 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    if len(x) == 0:
        return x
    if len(x) < tau:
        log.warning("baseline truncated: %d samples < tau=%d", len(x), tau)
    return x - x[: tau].mean()


def design_lowpass(config: EogConfig) -> np.ndarray:
    """Second-order sections of the configured Butterworth low-pass."""
    sos = sig.butter(config.filter_order, config.cutoff_hz,
                     fs=config.sample_rate_hz, output="sos")
    if not np.all(np.isfinite(sos)):
        raise ConfigurationError(
            f"unstable filter design for cutoff {config.cutoff_hz} Hz "
            f"at {config.sample_rate_hz} Hz"
        )
    return sos


def lowpass(channel, config: EogConfig) -> np.ndarray:
    """Causal application of the configured filter (DC gain 1)."""
    return sig.sosfilt(design_lowpass(config), np.asarray(channel, dtype=float))


def _default_t_ms(n: int, fs: float) -> np.ndarray:
    return np.round(np.arange(n) * 1000.0 / fs).astype(int)


def _detect_windows(filtered: np.ndarray, t_ms: np.ndarray, config: EogConfig,
                    classify) -> list[EyeCommand]:
    """Scan complete windows; ``classify(v_max, v_min)`` names the candidate
    directions (or None) for the window extremes."""
    w = config.window_w
    commands: list[EyeCommand] = []
    last_accepted = -config.separation - 1
    for eta in range(len(filtered) // w):
        win = filtered[eta * w:(eta + 1) * w]
        i_max = int(np.argmax(win))
        i_min = int(np.argmin(win))
        candidates = []
        up_dir = classify(float(win[i_max]), is_peak=True)
        if up_dir:
            candidates.append((eta * w + i_max, up_dir, float(win[i_max])))
        down_dir = classify(float(win[i_min]), is_peak=False)
        if down_dir:
            candidates.append((eta * w + i_min, down_dir, float(win[i_min])))
        for idx, direction, value in sorted(candidates):
            if idx - last_accepted >= config.separation:
                commands.append(
                    EyeCommand(eta, direction, abs(value), int(t_ms[idx]))
                )
                last_accepted = idx
    return commands


def detect_horizontal(f7, f8, config: EogConfig | None = None,
                      t_ms=None) -> list[EyeCommand]:
    """Decode Left/Right from baseline-removed F7 and F8 channels."""
    config = config or EogConfig()
    f7 = np.asarray(f7, dtype=float)
    f8 = np.asarray(f8, dtype=float)
    if f7.shape != f8.shape:
        raise ValidationError(f"channel length mismatch: {f7.shape} vs {f8.shape}")
    t_ms = _default_t_ms(len(f7), config.sample_rate_hz) if t_ms is None \
        else np.asarray(t_ms)
    diff = lowpass(f7, config) - lowpass(f8, config)
    thr = config.horiz_threshold_uv

    def classify(value: float, is_peak: bool):
        if is_peak:
            return "Left" if value > thr else None
        return "Right" if value < -thr else None

    return _detect_windows(diff, t_ms, config, classify)


def detect_vertical(af3, af4, config: EogConfig | None = None,
                    t_ms=None) -> list[EyeCommand]:
    """Decode Up/Down from baseline-removed AF3 and AF4 channels."""
    config = config or EogConfig()
    af3 = np.asarray(af3, dtype=float)
    af4 = np.asarray(af4, dtype=float)
    if af3.shape != af4.shape:
        raise ValidationError(f"channel length mismatch: {af3.shape} vs {af4.shape}")
    t_ms = _default_t_ms(len(af3), config.sample_rate_hz) if t_ms is None \
        else np.asarray(t_ms)
    total = lowpass(af3, config) + lowpass(af4, config)
    lo, hi = config.vert_band_uv

    def classify(value: float, is_peak: bool):
        if is_peak:
            return "Up" if lo <= value <= hi else None
        return "Down" if lo <= -value <= hi else None

    return _detect_windows(total, t_ms, config, classify)


class EogDecoder:
    """Streaming decoder over EogFrames.

    Buffers ``tau`` samples to freeze the per-electrode baseline, then
    processes each completed window, carrying filter state across windows.
    Windows that completed during the calibration period are decoded
    retroactively once the baseline is known, so the output over any frame
    sequence equals the batch composition remove_baseline + detect_*.
    """

    def __init__(self, config: EogConfig | None = None):
        self.config = config or EogConfig()
        self._sos = design_lowpass(self.config)
        self._raw: dict[str, list[float]] = {e: [] for e in ELECTRODES}
        self._t_ms: list[int] = []
        self._baseline: dict[str, float] | None = None
        self._zi = {e: sig.sosfilt_zi(self._sos) * 0.0 for e in ELECTRODES}
        self._filtered_windows = 0
        self._diff: list[float] = []
        self._total: list[float] = []
        self._last_h = -self.config.separation - 1
        self._last_v = -self.config.separation - 1

    def feed(self, frame: EogFrame) -> list[EyeCommand]:
        """Consume one frame; return commands completed by it."""
        for e in ELECTRODES:
            self._raw[e].append(frame.potentials[e])
        self._t_ms.append(frame.t_ms)
        n = len(self._t_ms)
        if self._baseline is None:
            if n < self.config.tau:
                return []
            self._baseline = {e: float(np.mean(self._raw[e])) for e in ELECTRODES}
        return self._drain()

    def _drain(self) -> list[EyeCommand]:
        w = self.config.window_w
        commands: list[EyeCommand] = []
        while (self._filtered_windows + 1) * w <= len(self._t_ms):
            start = self._filtered_windows * w
            fw = {}
            for e in ELECTRODES:
                chunk = np.asarray(self._raw[e][start:start + w]) - self._baseline[e]
                fw[e], self._zi[e] = sig.sosfilt(self._sos, chunk, zi=self._zi[e])
            self._diff.extend(fw["F7"] - fw["F8"])
            self._total.extend(fw["AF3"] + fw["AF4"])
            eta = self._filtered_windows
            self._filtered_windows += 1
            commands += self._scan_window(eta, np.array(self._diff[start:start + w]),
                                          horizontal=True)
            commands += self._scan_window(eta, np.array(self._total[start:start + w]),
                                          horizontal=False)
        return sorted(commands, key=lambda c: c.t_ms)

    def _scan_window(self, eta: int, win: np.ndarray, horizontal: bool):
        cfg = self.config
        base = eta * cfg.window_w
        i_max = int(np.argmax(win))
        i_min = int(np.argmin(win))
        candidates = []
        if horizontal:
            if win[i_max] > cfg.horiz_threshold_uv:
                candidates.append((base + i_max, "Left", float(win[i_max])))
            if win[i_min] < -cfg.horiz_threshold_uv:
                candidates.append((base + i_min, "Right", float(win[i_min])))
        else:
            lo, hi = cfg.vert_band_uv
            if lo <= win[i_max] <= hi:
                candidates.append((base + i_max, "Up", float(win[i_max])))
            if lo <= -win[i_min] <= hi:
                candidates.append((base + i_min, "Down", float(win[i_min])))
        out = []
        for idx, direction, value in sorted(candidates):
            last = self._last_h if horizontal else self._last_v
            if idx - last >= cfg.separation:
                out.append(EyeCommand(eta, direction, abs(value),
                                      int(self._t_ms[idx])))
                if horizontal:
                    self._last_h = idx
                else:
                    self._last_v = idx
        return out
