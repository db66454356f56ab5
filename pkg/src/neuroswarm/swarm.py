"""Potential-field swarm dynamics.

Each robot integrates the sum of pairwise attraction/repulsion forces plus
a common drive vector v. The pairwise law

    f(xi, xj) = a (xj - xi) / (d - 2r)^2  -  b (xj - xi) / (d - 2r)^3

with d = ||xj - xi|| balances at the equilibrium distance 2r + b/a.
Integration is explicit Euler; a step whose force-driven displacement is
too large for the current spacing, or that would violate the collision
invariant, is retried as two half steps down to ``dt_min``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, SimulationError, ValidationError
from .hmm import THOUGHT_LABELS

log = logging.getLogger(__name__)

#: Effective-distance clamp below which the pairwise force is evaluated at
#: the safety surface instead (pure bounded repulsion).
CLAMP_MARGIN = 1e-3

#: Smallest substep the integrator will fall back to, seconds.
DT_MIN = 1e-9

#: Max force-driven displacement per substep, as a fraction of the current
#: smallest surface-to-surface separation.
MOVE_CAP = 0.25


@dataclass
class SwarmState:
    positions: np.ndarray
    robot_radius: float = 0.05
    a: float = 1.0
    b: float = 0.2
    v: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.v = np.asarray(self.v, dtype=float).reshape(2)

    @property
    def m(self) -> int:
        return len(self.positions)

    def validate(self) -> None:
        if self.m < 1:
            raise ValidationError("need at least one robot")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.v)):
            raise ValidationError("non-finite state")
        if self.a <= 0 or self.b <= 0:
            raise ValidationError(f"gains must be positive: a={self.a} b={self.b}")
        if self.m > 1:
            d = _pairwise_distances(self.positions)
            closest = d[np.triu_indices(self.m, k=1)].min()
            if closest <= 2 * self.robot_radius:
                raise ValidationError(
                    f"collision: min distance {closest:.6f} <= 2r"
                )


@dataclass(frozen=True)
class GainPreset:
    """Thought label -> (a, b), either from a fixed table or the per-robot
    formula b = h * M / divisor with h the 1-based state of the thought."""

    mode: str = "fixed-table"
    table: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"Aggregate": (4.0, 80.0), "Disperse": (2.0, 80.0)}
    )
    formula_attraction: float = 1.0
    formula_divisor: float = 2.625
    state_of_thought: dict[str, int] = field(
        default_factory=lambda: {"Aggregate": 0, "Disperse": 1}
    )

    def __post_init__(self):
        if self.mode not in ("fixed-table", "formula"):
            raise ConfigurationError(f"unknown preset mode {self.mode!r}")
        if self.mode == "fixed-table":
            for label in THOUGHT_LABELS:
                if label not in self.table:
                    raise ConfigurationError(f"table missing thought {label!r}")
            for label, (a, b) in self.table.items():
                if a <= 0 or b <= 0:
                    raise ConfigurationError(
                        f"gains for {label!r} must be positive, got ({a}, {b})"
                    )
        if self.formula_divisor <= 0 or self.formula_attraction <= 0:
            raise ConfigurationError("formula parameters must be positive")

    def gains(self, thought: str, robot_count: int) -> tuple[float, float]:
        if self.mode == "fixed-table":
            if thought not in self.table:
                raise ConfigurationError(f"unmapped thought label {thought!r}")
            return self.table[thought]
        if thought not in self.state_of_thought:
            raise ConfigurationError(f"unmapped thought label {thought!r}")
        h = self.state_of_thought[thought] + 1
        return self.formula_attraction, h * robot_count / self.formula_divisor


def equilibrium_distance(a: float, b: float, r: float) -> float:
    """Unique d > 2r where attraction and repulsion cancel: 2r + b/a."""
    if a <= 0 or b <= 0:
        raise ValidationError(f"gains must be positive: a={a} b={b}")
    return 2 * r + b / a


def interaction(xi, xj, a: float, b: float, r: float,
                clamp_margin: float = CLAMP_MARGIN) -> np.ndarray:
    """Force exerted on robot i by robot j; antisymmetric in (i, j).

    Inside the safety surface (d <= 2r + clamp_margin) the force is
    evaluated at the clamped distance: bounded pure repulsion.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    delta = xj - xi
    d = float(np.linalg.norm(delta))
    if d > 2 * r + clamp_margin:
        s = d - 2 * r
        return delta * (a / s**2 - b / s**3)
    log.warning("pair inside safety surface: d=%.6g <= 2r+margin", d)
    if d == 0.0:
        return np.zeros(2)
    d_eff = 2 * r + clamp_margin
    coeff = a / clamp_margin**2 - b / clamp_margin**3
    return (delta / d) * d_eff * coeff


def _pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """(M, M) distance matrix with +inf on the diagonal."""
    gram = positions @ positions.T
    sq = np.diag(gram)
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    np.fill_diagonal(d, np.inf)
    return d


def pairwise_forces(positions: np.ndarray, a: float, b: float, r: float,
                    clamp_margin: float = CLAMP_MARGIN,
                    distances: np.ndarray | None = None) -> np.ndarray:
    """(M, 2) net pairwise force on every robot, all pairs, O(M^2).

    The pairwise law f_ij = (xj - xi) * (a/s^2 - b/s^3) with s = d - 2r is
    evaluated as a weight matrix: F = W X - rowsum(W) X, which keeps every
    intermediate at (M, M) and fixes the summation order.
    """
    m = len(positions)
    if m == 1:
        return np.zeros((1, 2))
    d = _pairwise_distances(positions) if distances is None else distances
    clamped = d <= 2 * r + clamp_margin
    if clamped.any():
        log.warning("%d pair(s) inside safety surface", int(clamped.sum()) // 2)
        d_eff = np.where(clamped, 2 * r + clamp_margin, d)
        s = d_eff - 2 * r
        w = a / s**2 - b / s**3  # zero on the diagonal (s = inf)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(clamped, d_eff / d, 1.0)
        w *= np.nan_to_num(ratio)  # coincident pair contributes nothing
    else:
        s = d - 2 * r
        w = a / s**2 - b / s**3
    np.fill_diagonal(w, 0.0)
    return w @ positions - w.sum(axis=1)[:, None] * positions


def step(state: SwarmState, dt: float, dt_min: float = DT_MIN) -> SwarmState:
    """Advance the swarm by dt with explicit Euler, forces evaluated on the
    pre-step snapshot; adaptive halving keeps the state collision-free."""
    if dt <= 0 or not math.isfinite(dt):
        raise ValidationError(f"dt must be positive, got {dt}")
    positions = _substep(state, state.positions, dt, dt_min)
    return replace(state, positions=positions, t=state.t + dt)


def _substep(state: SwarmState, positions: np.ndarray, dt: float,
             dt_min: float) -> np.ndarray:
    if len(positions) == 1:
        return positions + dt * state.v
    r = state.robot_radius
    d = _pairwise_distances(positions)
    forces = pairwise_forces(positions, state.a, state.b, r, distances=d)
    proposed = positions + dt * (forces + state.v)

    ok = bool(np.all(np.isfinite(proposed)))
    if ok:
        surface = float(d.min()) - 2 * r
        if float(np.abs(dt * forces).max()) > MOVE_CAP * surface:
            ok = False
        elif float(_pairwise_distances(proposed).min()) <= 2 * r:
            ok = False
    if ok:
        return proposed
    if dt / 2 < dt_min:
        raise SimulationError(
            f"cannot integrate at t={state.t:.4f}: dt underflow below {dt_min}"
        )
    half = _substep(state, positions, dt / 2, dt_min)
    return _substep(state, half, dt / 2, dt_min)


def apply_thought(state: SwarmState, thought: str, preset: GainPreset,
                  robot_count: int | None = None) -> SwarmState:
    """State with gains switched to the preset for ``thought``."""
    a, b = preset.gains(thought, robot_count if robot_count is not None else state.m)
    return replace(state, a=a, b=b)


def replace_drive(state: SwarmState, v) -> SwarmState:
    """State with a new common drive vector."""
    return replace(state, v=np.asarray(v, dtype=float).reshape(2))


@dataclass(frozen=True)
class Diagnostics:
    centroid: np.ndarray
    radii: np.ndarray
    mean_nn_dist: float


def diagnostics(state: SwarmState) -> Diagnostics:
    """Centroid, per-robot distance to it, and mean nearest-neighbor distance
    (0 for a single robot)."""
    centroid = state.positions.mean(axis=0)
    radii = np.linalg.norm(state.positions - centroid, axis=1)
    if state.m < 2:
        return Diagnostics(centroid, radii, 0.0)
    d = _pairwise_distances(state.positions)
    np.fill_diagonal(d, np.inf)
    return Diagnostics(centroid, radii, float(d.min(axis=1).mean()))


def grid_formation(m: int, spacing: float, center=(0.0, 0.0)) -> np.ndarray:
    """Deterministic near-square grid of M positions, centered."""
    if m < 1:
        raise ValidationError("need at least one robot")
    cols = math.ceil(math.sqrt(m))
    pts = []
    for k in range(m):
        row, col = divmod(k, cols)
        pts.append((col * spacing, row * spacing))
    pts = np.asarray(pts, dtype=float)
    pts -= pts.mean(axis=0)
    return pts + np.asarray(center, dtype=float)
