"""From a correlation-coefficient vector to a screen velocity.

The chain is: rectify (ReLU), weight by a N_r x 2 velocity matrix, cap the
magnitude, then spread the step displacement over display frames with a
linearly decaying profile. The initial weight points each region score at
its region angle with magnitude w_s/6; the corrected weight is the ordinary
least squares solve of decoded-score rows against intended velocities.

Rectification is applied with the initial weight only. The corrected
weight is regressed against raw score vectors, so inference feeds it raw
vectors too; ``decode_velocity`` takes a ``rectify`` override for
experiments with the other pairing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import SessionConfig, StimulusLayout

logger = logging.getLogger(__name__)

KIND_INITIAL = "initial"
KIND_CORRECTED = "corrected"


@dataclass(frozen=True)
class VelocityWeight:
    """N_r x 2 matrix mapping a score vector to a velocity in px/step."""

    matrix: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[1] != 2:
            raise ValueError(f"velocity weight must be (n_regions, 2), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("velocity weight contains non-finite entries")
        if self.kind not in (KIND_INITIAL, KIND_CORRECTED):
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @property
    def n_regions(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "VelocityWeight":
        return cls(matrix=np.asarray(data["matrix"], dtype=np.float64),
                   kind=data["kind"])


@dataclass
class RegressionSet:
    """Paired rows of score vectors (D) and intended velocities (I).

    Intended velocity is target minus cursor start, per one step.
    """

    d_rows: list = field(default_factory=list)
    i_rows: list = field(default_factory=list)

    def add(self, rho: np.ndarray, intended: np.ndarray) -> None:
        rho = np.asarray(rho, dtype=np.float64)
        intended = np.asarray(intended, dtype=np.float64)
        if self.d_rows and rho.shape != self.d_rows[0].shape:
            raise ValueError("inconsistent score vector length")
        if intended.shape != (2,):
            raise ValueError("intended velocity must be a 2-vector")
        self.d_rows.append(rho)
        self.i_rows.append(intended)

    @property
    def n_rows(self) -> int:
        return len(self.d_rows)

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.d_rows:
            raise ValueError("empty regression set")
        return np.stack(self.d_rows), np.stack(self.i_rows)


def project(rho: np.ndarray, layout: StimulusLayout) -> np.ndarray:
    """Rectified sum of region unit vectors weighted by their scores."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (layout.n_regions,):
        raise ValueError(f"expected {layout.n_regions} scores, got {rho.shape}")
    return np.maximum(rho, 0.0) @ layout.unit_vectors


def initial_velocity_weight(config: SessionConfig) -> VelocityWeight:
    """Region-angle unit rows scaled by w_s/6.

    For 8 regions the rows use exact 0, 1 and sqrt(2)/2 entries; other
    region counts fall back to cos/sin of the region angles.
    """
    scale = config.screen_width_px / 6.0
    if config.n_regions == 8:
        s = math.sqrt(2.0) / 2.0
        rows = np.array([
            (1.0, 0.0), (s, s), (0.0, 1.0), (-s, s),
            (-1.0, 0.0), (-s, -s), (0.0, -1.0), (s, -s),
        ])
    else:
        rows = StimulusLayout(config.n_regions).unit_vectors
    return VelocityWeight(matrix=rows * scale, kind=KIND_INITIAL)


def decode_velocity(rho: np.ndarray, vw: VelocityWeight,
                    max_speed_px: float | None = None,
                    rectify: bool | None = None) -> np.ndarray:
    """Velocity in px/step: (rectified) scores times the weight matrix.

    ``rectify`` defaults by weight kind (initial: yes, corrected: no).
    ``max_speed_px`` clamps the magnitude when given.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (vw.n_regions,):
        raise ValueError(f"expected {vw.n_regions} scores, got {rho.shape}")
    if rectify is None:
        rectify = vw.kind == KIND_INITIAL
    p = np.maximum(rho, 0.0) if rectify else rho
    v = p @ vw.matrix
    if max_speed_px is not None:
        speed = float(np.hypot(v[0], v[1]))
        if speed > max_speed_px:
            logger.debug("velocity cap active: %.1f px/step -> %.1f", speed, max_speed_px)
            v = v * (max_speed_px / speed)
    return v


def train_velocity_weight(data: RegressionSet) -> VelocityWeight:
    """Ordinary least squares (D'D)^-1 D'I, kind=corrected."""
    d_mat, i_mat = data.matrices()
    n_rows, n_regions = d_mat.shape
    if n_rows < n_regions:
        raise ValueError(
            f"{n_rows} rows cannot determine a {n_regions}-region weight"
        )
    rank = np.linalg.matrix_rank(d_mat)
    if rank < n_regions:
        _, _, vt = np.linalg.svd(d_mat)
        deficient = int(np.argmax(np.abs(vt[-1])))
        raise ValueError(
            f"singular regression: rank {rank} < {n_regions}; score dimension "
            f"{deficient} (region {deficient}) is not resolved by the data"
        )
    solution, *_ = np.linalg.lstsq(d_mat, i_mat, rcond=None)
    return VelocityWeight(matrix=solution, kind=KIND_CORRECTED)


def decay_profile(v: np.ndarray, frames: int) -> np.ndarray:
    """Per-frame displacements for one step, (frames, 2).

    The instantaneous velocity ramps linearly from 2v down to 0, so the
    displacements average to v per step. Frame endpoints are computed as
    rounded cumulative positions v * f(2F-f)/F^2; consecutive endpoints
    stay within a factor of two, so each difference below is exact and the
    compensated sum of the column reproduces each velocity component to
    the last bit.
    """
    if frames != int(frames) or frames < 1:
        raise ValueError(f"frames must be a positive integer, got {frames}")
    n = int(frames)
    vx, vy = float(v[0]), float(v[1])
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise ValueError("non-finite velocity")
    out = np.empty((n, 2))
    px = py = 0.0
    denom = n * n
    for f in range(1, n + 1):
        w = f * (2 * n - f) / denom
        nx = vx * w
        ny = vy * w
        out[f - 1, 0] = nx - px
        out[f - 1, 1] = ny - py
        px = nx
        py = ny
    return out


@dataclass(frozen=True)
class GateDecision:
    """Outcome of the dynamic-stopping confidence test."""

    move: bool
    region: int | None
    p_value: float
    t_stat: float | None

    def to_dict(self) -> dict:
        return {"move": self.move, "region": self.region,
                "p_value": self.p_value, "t_stat": self.t_stat}


def confidence_gate(rho: np.ndarray, alpha: float = 0.05) -> GateDecision:
    """Move toward argmax(rho) only when the top score separates from the
    rest.

    The statistic is (max - mean(rest)) / sd(rest) with N_r - 2 degrees of
    freedom, tested two-sided. Degenerate rest spread: identical scores
    hold, a strictly separated max moves regardless of alpha.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim != 1 or rho.size < 3:
        raise ValueError("need at least 3 region scores")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    k = int(np.argmax(rho))
    rest = np.delete(rho, k)
    spread = float(rest.std(ddof=1))
    if spread == 0.0:
        if rho[k] > rest[0]:
            return GateDecision(move=True, region=k, p_value=0.0, t_stat=None)
        return GateDecision(move=False, region=None, p_value=1.0, t_stat=None)
    t = (float(rho[k]) - float(rest.mean())) / spread
    p = 2.0 * float(stats.t.sf(abs(t), df=rho.size - 2))
    if p < alpha:
        return GateDecision(move=True, region=k, p_value=p, t_stat=t)
    return GateDecision(move=False, region=None, p_value=p, t_stat=t)
