"""Preprocessing chain and filter-bank decomposition.

The chain reproduces the standard acquisition path: anti-aliased
decimation to the 250 Hz processing rate, zero-phase band-pass 4-100 Hz,
and a zero-phase 50 Hz notch. Sub-band decomposition uses the classical
nested band scheme, capped at 30 Hz because a 60 Hz display cannot encode
faster luminance modulation.

All filters are 4th-order Butterworth sections applied forward-backward
(zero phase), with reflect padding at both ends to suppress edge
transients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .core import EegEpoch

DEFAULT_BAND_EDGES: tuple[tuple[float, float], ...] = (
    (4.0, 30.0), (8.0, 30.0), (12.0, 30.0), (16.0, 30.0), (20.0, 30.0),
)
NOTCH_Q = 35.0
FILTER_ORDER = 4


class EpochTooShortError(ValueError):
    """Epoch shorter than the filter warm-up (reflect-padding) length."""


@dataclass(frozen=True)
class FilterBankSpec:
    n_subbands: int = 5
    band_edges_hz: tuple[tuple[float, float], ...] = DEFAULT_BAND_EDGES
    notch_hz: float = 50.0
    bandpass_hz: tuple[float, float] = (4.0, 100.0)
    decimation_factor: int = 4

    def __post_init__(self) -> None:
        edges = tuple((float(lo), float(hi)) for lo, hi in self.band_edges_hz)
        object.__setattr__(self, "band_edges_hz", edges)
        object.__setattr__(self, "bandpass_hz",
                           (float(self.bandpass_hz[0]), float(self.bandpass_hz[1])))
        if self.n_subbands != len(self.band_edges_hz):
            raise ValueError("n_subbands must equal the number of band edges")
        for lo, hi in self.band_edges_hz + (self.bandpass_hz,):
            if not 0.0 < lo < hi:
                raise ValueError(f"invalid band edges ({lo}, {hi})")
        if self.decimation_factor < 1:
            raise ValueError("decimation_factor must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_subbands": self.n_subbands,
            "band_edges_hz": [list(b) for b in self.band_edges_hz],
            "notch_hz": self.notch_hz,
            "bandpass_hz": list(self.bandpass_hz),
            "decimation_factor": self.decimation_factor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilterBankSpec":
        if not data:
            return cls()
        return cls(
            n_subbands=int(data.get("n_subbands", 5)),
            band_edges_hz=tuple(tuple(b) for b in data.get("band_edges_hz", DEFAULT_BAND_EDGES)),
            notch_hz=float(data.get("notch_hz", 50.0)),
            bandpass_hz=tuple(data.get("bandpass_hz", (4.0, 100.0))),
            decimation_factor=int(data.get("decimation_factor", 4)),
        )


def subband_weight(m: int) -> float:
    """Weight of sub-band m (1-based): m**-1.25 + 0.25."""
    if m != int(m) or m < 1:
        raise ValueError(f"sub-band index must be an integer >= 1, got {m}")
    return float(m) ** -1.25 + 0.25


def subband_weights(n_subbands: int) -> np.ndarray:
    return np.array([subband_weight(m) for m in range(1, n_subbands + 1)])


@lru_cache(maxsize=64)
def _bandpass_sos(low: float, high: float, fs: float) -> np.ndarray:
    nyq = fs / 2.0
    if not high < nyq:
        raise ValueError(f"band edge {high} Hz not below Nyquist {nyq} Hz")
    return signal.butter(FILTER_ORDER, [low, high], btype="bandpass", fs=fs, output="sos")


@lru_cache(maxsize=8)
def _notch_sos(freq: float, fs: float) -> np.ndarray:
    b, a = signal.iirnotch(freq, NOTCH_Q, fs=fs)
    return signal.tf2sos(b, a)


def _pad_len(sos: np.ndarray) -> int:
    # one "filter length" of reflect padding per side
    return 3 * (2 * sos.shape[0] + 1)


def _zero_phase(sos: np.ndarray, samples: np.ndarray) -> np.ndarray:
    padlen = _pad_len(sos)
    if samples.shape[-1] <= padlen:
        raise EpochTooShortError(
            f"epoch of {samples.shape[-1]} samples is shorter than the "
            f"filter warm-up of {padlen} samples"
        )
    return signal.sosfiltfilt(sos, samples, axis=-1, padtype="even", padlen=padlen)


def preprocess(raw: EegEpoch, spec: FilterBankSpec,
               processing_rate_hz: float = 250.0) -> EegEpoch:
    """Decimate to the processing rate, band-pass, and notch (all zero phase)."""
    x = raw.samples
    rate = raw.sample_rate_hz
    if rate != processing_rate_hz:
        q = rate / processing_rate_hz
        if abs(q - round(q)) > 1e-9:
            raise ValueError(
                f"sample rate {rate} Hz is not an integer multiple of the "
                f"processing rate {processing_rate_hz} Hz"
            )
        x = signal.decimate(x, int(round(q)), axis=-1, zero_phase=True)
        rate = processing_rate_hz
    x = _zero_phase(_bandpass_sos(*spec.bandpass_hz, rate), x)
    x = _zero_phase(_notch_sos(spec.notch_hz, rate), x)
    return EegEpoch(samples=x, sample_rate_hz=rate,
                    stimulus_phase_offset=raw.stimulus_phase_offset)


def subband_decompose(epoch: EegEpoch, spec: FilterBankSpec) -> list[EegEpoch]:
    """Band-pass the epoch into each sub-band, zero phase, same length."""
    out = []
    for lo, hi in spec.band_edges_hz:
        y = _zero_phase(_bandpass_sos(lo, hi, epoch.sample_rate_hz), epoch.samples)
        out.append(EegEpoch(samples=y, sample_rate_hz=epoch.sample_rate_hz,
                            stimulus_phase_offset=epoch.stimulus_phase_offset))
    return out
