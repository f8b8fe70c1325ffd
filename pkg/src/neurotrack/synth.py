"""Synthetic-EEG forward model.

Stands in for a human participant: the luminance codes of all regions,
weighted by the receptive-field share of each region in the visual field,
drive a single evoked source (zero-mean code convolved with a VEP-like
impulse response). The source projects to 21 posterior channels through a
fixed spatial mixing vector; 1/f noise is added per channel plus a small
component shared across channels.

Simulation runs directly at the 250 Hz processing rate. The separate
1000 -> 250 Hz decimation path in :mod:`neurotrack.dsp` is exercised by a
dedicated test fixture rather than by the closed loop.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EegEpoch
from .stimulus import VisualFieldWeights, WnSequence

N_CHANNELS = 21
CHANNEL_NAMES = (
    "Pz", "P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8",
    "POz", "PO3", "PO4", "PO5", "PO6", "PO7", "PO8",
    "Oz", "O1", "O2", "CB1", "CB2",
)
KERNEL_TAPS = 125
PROCESSING_RATE_HZ = 250.0
FRAME_RATE_HZ = 60.0
SOURCE_GAIN_UV = 10.0
NOISE_SHARED_FRACTION = 0.3

SESSION_MAGIC = b"NTRKSESS"
SESSION_VERSION = 1

# channel gain profile: parietal < parieto-occipital < occipital
_BASE_MIXING = np.array(
    [0.45] * 9 + [0.75] * 7 + [1.0, 0.95, 0.95, 0.6, 0.6]
)


@dataclass(frozen=True)
class SyntheticSubject:
    """Generative parameters of one simulated participant."""

    vep_kernel: np.ndarray
    channel_mixing: np.ndarray
    attention_sigma_px: float
    noise_amplitude: float
    latency_samples: int
    seed: int

    def __post_init__(self) -> None:
        kernel = np.asarray(self.vep_kernel, dtype=np.float64)
        mixing = np.asarray(self.channel_mixing, dtype=np.float64)
        object.__setattr__(self, "vep_kernel", kernel)
        object.__setattr__(self, "channel_mixing", mixing)
        if abs(np.linalg.norm(kernel) - 1.0) > 1e-9:
            raise ValueError("vep_kernel must have unit energy")
        if abs(np.linalg.norm(mixing) - 1.0) > 1e-9:
            raise ValueError("channel_mixing must have unit norm")
        if self.attention_sigma_px <= 0:
            raise ValueError("attention_sigma_px must be positive")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if self.latency_samples < 0:
            raise ValueError("latency_samples must be >= 0")

    def with_noise(self, noise_amplitude: float) -> "SyntheticSubject":
        return replace(self, noise_amplitude=noise_amplitude)


def vep_kernel(peak1_s: float = 0.10, peak2_s: float = 0.20,
               undershoot: float = 0.7, taps: int = KERNEL_TAPS,
               rate_hz: float = PROCESSING_RATE_HZ) -> np.ndarray:
    """Difference-of-gammas VEP surrogate, unit energy.

    Positive lobe peaking near ``peak1_s``, negative undershoot near
    ``peak2_s``.
    """
    t = np.arange(taps) / rate_hz
    k1, k2 = 5.0, 9.0
    th1 = peak1_s / (k1 - 1.0)
    th2 = peak2_s / (k2 - 1.0)
    g1 = (t / th1) ** (k1 - 1.0) * np.exp(-t / th1)
    g2 = (t / th2) ** (k2 - 1.0) * np.exp(-t / th2)
    kernel = g1 / g1.max() - undershoot * g2 / g2.max()
    return kernel / np.linalg.norm(kernel)


# Committed calibration of the reference subject. The kernel peaks, the
# undershoot depth, the attention span and the noise gain jointly set the
# closed-loop operating point (classification accuracy, trial time and
# therefore throughput); these values put the default subject inside all
# of the calibrated performance bands at the default session config.
DEFAULT_KERNEL_PEAK1_S = 0.12
DEFAULT_KERNEL_PEAK2_S = 0.18
DEFAULT_KERNEL_UNDERSHOOT = 0.47
DEFAULT_NOISE_AMPLITUDE_UV = 0.50
DEFAULT_ATTENTION_SIGMA_PX = 28.0
DEFAULT_LATENCY_SAMPLES = 12


def default_subject(seed: int = 0,
                    noise_amplitude: float = DEFAULT_NOISE_AMPLITUDE_UV,
                    attention_sigma_px: float = DEFAULT_ATTENTION_SIGMA_PX,
                    ) -> SyntheticSubject:
    """The calibrated reference subject used by the closed-loop tests."""
    mixing = _BASE_MIXING / np.linalg.norm(_BASE_MIXING)
    return SyntheticSubject(
        vep_kernel=vep_kernel(DEFAULT_KERNEL_PEAK1_S, DEFAULT_KERNEL_PEAK2_S,
                              DEFAULT_KERNEL_UNDERSHOOT),
        channel_mixing=mixing,
        attention_sigma_px=attention_sigma_px,
        noise_amplitude=noise_amplitude,
        latency_samples=DEFAULT_LATENCY_SAMPLES,
        seed=seed,
    )


def make_cohort(n_subjects: int, seed: int) -> list[SyntheticSubject]:
    """Deterministic cohort with per-subject kernel, attention span,
    latency, mixing jitter, and SNR variation.

    Noise gains are drawn log-uniformly over a 14 dB range so the cohort
    spans weak and strong responders.
    """
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    rng = np.random.default_rng(seed)
    subjects = []
    for i in range(n_subjects):
        peak1 = rng.uniform(0.08, 0.12)
        peak2 = rng.uniform(0.18, 0.24)
        undershoot = rng.uniform(0.4, 0.9)
        sigma = rng.uniform(70.0, 140.0)
        latency = int(rng.integers(8, 25))
        # ~[0.08, 0.4] uV: 14 dB of spread in noise gain
        noise = float(10 ** rng.uniform(np.log10(0.08), np.log10(0.4)))
        mixing = _BASE_MIXING * (1.0 + 0.15 * rng.standard_normal(N_CHANNELS))
        mixing = np.abs(mixing)
        mixing /= np.linalg.norm(mixing)
        subjects.append(SyntheticSubject(
            vep_kernel=vep_kernel(peak1, peak2, undershoot),
            channel_mixing=mixing,
            attention_sigma_px=sigma,
            noise_amplitude=noise,
            latency_samples=latency,
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return subjects


def _upsample_frames(values: np.ndarray, n_samples: int,
                     rate_hz: float, frame_rate_hz: float) -> np.ndarray:
    """Zero-order hold of a cyclic frame sequence at the sample rate."""
    s = np.arange(n_samples)
    frame_idx = np.floor(s * frame_rate_hz / rate_hz).astype(int) % values.size
    return values[frame_idx]


def _one_over_f_noise(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Unit-RMS 1/f (power) noise per row."""
    n = shape[1]
    white = rng.standard_normal(shape)
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(n, d=1.0 / PROCESSING_RATE_HZ)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = np.fft.irfft(spec * scale, n=n, axis=1)
    rms = np.sqrt(np.mean(shaped**2, axis=1, keepdims=True))
    rms[rms == 0.0] = 1.0
    return shaped / rms


def simulate_epoch(subject: SyntheticSubject, weights: VisualFieldWeights,
                   bank: Sequence[WnSequence], duration_s: float,
                   step: int | Sequence[int] = 0,
                   frame_rate_hz: float = FRAME_RATE_HZ,
                   rate_hz: float = PROCESSING_RATE_HZ) -> EegEpoch:
    """Simulate one multi-channel epoch for the given region weighting.

    The code mixture is convolved in steady state: one full flicker cycle
    of pre-roll is prepended (the cycle repeats consecutively), so epochs
    cut at cycle boundaries are exactly periodic in the noiseless limit.
    ``step`` seeds the noise draw; (subject.seed, step) pairs are
    reproducible and independent across steps.
    """
    if len(bank) == 0:
        raise ValueError("empty WN bank")
    w = np.asarray(weights.weights, dtype=np.float64)
    if w.size != len(bank):
        raise ValueError(f"{w.size} weights for {len(bank)} sequences")
    n_frames = bank[0].n_frames
    if any(seq.n_frames != n_frames for seq in bank):
        raise ValueError("all sequences must have equal length")
    period = n_frames * rate_hz / frame_rate_hz
    if abs(period - round(period)) > 1e-9:
        raise ValueError("flicker period is not a whole number of samples")
    period = int(round(period))
    n_samples = duration_s * rate_hz
    if abs(n_samples - round(n_samples)) > 1e-9:
        raise ValueError("duration is not a whole number of samples")
    n_samples = int(round(n_samples))
    if n_samples % period != 0:
        raise ValueError("duration must be a multiple of the flicker cycle")

    if subject.latency_samples >= period:
        raise ValueError("latency must be shorter than one flicker cycle")

    # mix the zero-mean codes first (linear), then convolve once
    codes = np.stack([seq.values - seq.values.mean() for seq in bank])
    mixture = w @ codes
    stim = _upsample_frames(mixture, period + n_samples, rate_hz, frame_rate_hz)
    response = np.convolve(stim, subject.vep_kernel)
    start = period - subject.latency_samples
    source = SOURCE_GAIN_UV * response[start:start + n_samples]

    samples = np.outer(subject.channel_mixing, source)
    if subject.noise_amplitude > 0.0:
        steps = [step] if np.isscalar(step) else list(step)
        rng = np.random.default_rng([subject.seed, *[int(s) for s in steps]])
        independent = _one_over_f_noise(rng, (N_CHANNELS, n_samples))
        common = _one_over_f_noise(rng, (1, n_samples))
        mix = independent + NOISE_SHARED_FRACTION * common
        mix /= np.sqrt(1.0 + NOISE_SHARED_FRACTION**2)
        samples = samples + subject.noise_amplitude * mix
    return EegEpoch(samples=samples, sample_rate_hz=rate_hz, stimulus_phase_offset=0)


# ---------------------------------------------------------------------------
# binary session files: float32 little-endian epochs + JSON sidecar
# ---------------------------------------------------------------------------

def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(Path(path).suffix + ".json")


def write_session(path: str | Path, epochs: Sequence[EegEpoch],
                  labels: Sequence[int], meta: dict | None = None) -> None:
    """Write epochs to a binary session file with a JSON label sidecar.

    Header: magic, version, epoch count, channels, samples per epoch
    (uint32 LE) and sample rate (float64 LE); body: float32 LE samples,
    channel-major within each epoch.
    """
    if len(epochs) != len(labels):
        raise ValueError("one label per epoch required")
    if not epochs:
        raise ValueError("no epochs to write")
    n_ch = epochs[0].n_channels
    n_s = epochs[0].n_samples
    rate = epochs[0].sample_rate_hz
    for ep in epochs:
        if ep.n_channels != n_ch or ep.n_samples != n_s or ep.sample_rate_hz != rate:
            raise ValueError("epochs must share shape and rate")
    path = Path(path)
    header = SESSION_MAGIC + struct.pack("<IIIId", SESSION_VERSION, len(epochs), n_ch, n_s, rate)
    body = b"".join(ep.samples.astype("<f4").tobytes() for ep in epochs)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + body)
    tmp.replace(path)
    sidecar = {
        "labels": [int(x) for x in labels],
        "n_epochs": len(epochs),
        "meta": meta or {},
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_session(path: str | Path) -> tuple[list[EegEpoch], list[int], dict]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != SESSION_MAGIC:
        raise ValueError(f"{path} is not a session file")
    version, n_epochs, n_ch, n_s, rate = struct.unpack("<IIIId", blob[8:8 + 24])
    if version != SESSION_VERSION:
        raise ValueError(f"unsupported session file version {version}")
    data = np.frombuffer(blob[8 + 24:], dtype="<f4")
    expected = n_epochs * n_ch * n_s
    if data.size != expected:
        raise ValueError(f"corrupt session file: {data.size} values, expected {expected}")
    data = data.reshape(n_epochs, n_ch, n_s).astype(np.float64)
    epochs = [EegEpoch(samples=data[i], sample_rate_hz=rate) for i in range(n_epochs)]
    side = json.loads(sidecar_path(path).read_text())
    return epochs, [int(x) for x in side.get("labels", [])], side.get("meta", {})


def subject_from_params(params: dict) -> SyntheticSubject:
    """Build a subject from a parameter mapping.

    ``{"cohort_seed": s, "cohort_index": i}`` selects a cohort member;
    subject i of a cohort does not depend on the cohort size, so the same
    pair names the same subject everywhere. Otherwise the keys seed,
    noise_amplitude and attention_sigma_px configure the default subject.
    """
    params = dict(params)
    if "cohort_seed" in params:
        seed = int(params.pop("cohort_seed"))
        index = int(params.pop("cohort_index", 0))
        if params:
            raise ValueError(f"unknown subject keys: {sorted(params)}")
        if index < 0:
            raise ValueError("cohort_index must be >= 0")
        return make_cohort(index + 1, seed)[index]
    allowed = {"seed", "noise_amplitude", "attention_sigma_px"}
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown subject keys: {sorted(unknown)}")
    return default_subject(**params)
