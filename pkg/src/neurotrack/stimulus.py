"""White-noise modulation sequences and receptive-field region weighting.

Each stimulus region flickers with a 1 s sequence of uniformly distributed
white noise, one value per display frame, repeated cyclically. The gray
level of region i at frame f is ``round(127 * value)``, i.e. contrast is
capped at RGB (127, 127, 127).

``visual_field_weights`` models how much each region contributes to the
evoked response for a given gaze point: an isotropic Gaussian attention
window centered on the gaze is integrated over each region's angular
sector around the cursor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import StimulusLayout, Vec2

MAX_PAIRWISE_CORR = 0.5
# polar quadrature grid for the attention window
GRID_RADIAL = 64
GRID_ANGULAR = 256
GRID_EXTENT_SIGMAS = 4.0


@dataclass(frozen=True)
class WnSequence:
    """One region's per-frame luminance modulation values in [0, 1]."""

    values: np.ndarray
    region_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("sequence must be a non-empty 1-D array")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("sequence values must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class VisualFieldWeights:
    """Per-region share of the attention window, non-negative, sum 1."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be non-negative")


def generate_wn_bank(n_regions: int, frames: int, seed: int,
                     max_corr: float = MAX_PAIRWISE_CORR) -> list[WnSequence]:
    """Draw one i.i.d. uniform [0, 1] sequence per region.

    Sequences too similar to an earlier one (|Pearson r| >= ``max_corr``)
    are redrawn from the same seeded stream, so the bank is deterministic
    under ``seed`` and the codes stay discriminable.
    """
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    rng = np.random.default_rng(seed)
    screen = frames >= 3  # correlation is meaningless below 3 points
    sequences: list[np.ndarray] = []
    for i in range(n_regions):
        for attempt in range(1000):
            cand = rng.uniform(0.0, 1.0, size=frames)
            if not screen or _corr_ok(cand, sequences, max_corr):
                sequences.append(cand)
                break
        else:
            raise RuntimeError("could not draw a decorrelated WN sequence")
    return [WnSequence(values=s, region_index=i) for i, s in enumerate(sequences)]


def _corr_ok(cand: np.ndarray, accepted: list[np.ndarray], max_corr: float) -> bool:
    c = cand - cand.mean()
    nc = np.linalg.norm(c)
    if nc == 0.0:
        return False
    for other in accepted:
        o = other - other.mean()
        r = float(c @ o / (nc * np.linalg.norm(o)))
        if not math.isfinite(r) or abs(r) >= max_corr:
            return False
    return True


def luminance_frame(bank: Sequence[WnSequence], frame_index: int) -> list[int]:
    """Gray levels (0..127) for every region at the given frame.

    The bank repeats cyclically; rounding is half-up.
    """
    if frame_index < 0:
        raise ValueError("frame_index must be >= 0")
    levels = []
    for seq in bank:
        v = seq.values[frame_index % seq.n_frames]
        levels.append(int(math.floor(127.0 * v + 0.5)))
    return levels


def bank_to_json(bank: Sequence[WnSequence]) -> str:
    doc = {
        "frames": bank[0].n_frames if bank else 0,
        "sequences": [seq.values.tolist() for seq in bank],
    }
    return json.dumps(doc)


def bank_from_json(text: str) -> list[WnSequence]:
    doc = json.loads(text)
    return [WnSequence(values=np.asarray(vals), region_index=i)
            for i, vals in enumerate(doc["sequences"])]


def save_bank(path: str | Path, bank: Sequence[WnSequence]) -> None:
    Path(path).write_text(bank_to_json(bank))


def visual_field_weights(gaze_px: Vec2, cursor_px: Vec2, layout: StimulusLayout,
                         attention_sigma_px: float,
                         n_radial: int = GRID_RADIAL,
                         n_angular: int = GRID_ANGULAR) -> VisualFieldWeights:
    """Share of the Gaussian attention window falling in each region.

    The window is an isotropic Gaussian of scale ``attention_sigma_px``
    centered at the gaze point; its mass is integrated on a fixed polar
    midpoint grid out to 4 sigma and assigned to regions by the angle of
    each grid point relative to the cursor. Weights are normalized to sum
    to 1.
    """
    if attention_sigma_px <= 0:
        raise ValueError("attention_sigma_px must be positive")
    layout = layout.at_cursor(cursor_px)
    sigma = attention_sigma_px
    r_edges = np.linspace(0.0, GRID_EXTENT_SIGMAS * sigma, n_radial + 1)
    r = 0.5 * (r_edges[:-1] + r_edges[1:])
    dr = r_edges[1] - r_edges[0]
    phi = (np.arange(n_angular) + 0.5) * (2.0 * np.pi / n_angular)
    dphi = 2.0 * np.pi / n_angular

    # grid points around the gaze; mass = pdf * r dr dphi
    px = gaze_px[0] + r[:, None] * np.cos(phi)[None, :]
    py = gaze_px[1] + r[:, None] * np.sin(phi)[None, :]
    pdf = np.exp(-0.5 * (r / sigma) ** 2) / (2.0 * np.pi * sigma**2)
    mass = (pdf * r * dr * dphi)[:, None] * np.ones_like(phi)[None, :]

    angles = np.arctan2(py - cursor_px[1], px - cursor_px[0])
    regions = layout.region_of_angles(angles)
    weights = np.bincount(regions.ravel(), weights=mass.ravel(),
                          minlength=layout.n_regions)
    total = weights.sum()
    if total <= 0:
        raise ValueError("attention window carries no mass")
    return VisualFieldWeights(weights=weights / total)
