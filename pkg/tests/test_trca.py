"""Spatial filter training and the per-region correlation vector."""

import math

import numpy as np
import pytest
from scipy import signal

from neurotrack import (
    EegEpoch,
    FilterBankSpec,
    TrcaModel,
    correlate,
    load_model,
    save_model,
    train_trca,
    subband_decompose,
    subband_weight,
)
from neurotrack.trca import MODEL_MAGIC, model_blob, model_meta

SPEC = FilterBankSpec()


def bandlimited_wave(rng, n_samples=250, rate=250.0):
    """Unit-RMS broadband signal with energy in all five sub-bands."""
    b, a = signal.butter(4, [6.0, 28.0], btype="band", fs=rate)
    x = signal.filtfilt(b, a, rng.standard_normal(n_samples + 200))[100:100 + n_samples]
    return x / np.sqrt(np.mean(x**2))


def planted_trials(seed, n_regions=2, n_trials=6, n_channels=21, noise=1.0):
    """Per-region rank-1 sources in noise, plus the clean per-region epochs."""
    rng = np.random.default_rng(seed)
    trials, clean = [], []
    for _ in range(n_regions):
        wave = bandlimited_wave(rng)
        pattern = rng.standard_normal(n_channels)
        pattern /= np.linalg.norm(pattern)
        source = np.outer(pattern, wave)
        clean.append(EegEpoch(samples=source, sample_rate_hz=250.0))
        trials.append([
            EegEpoch(samples=source + noise * rng.standard_normal(source.shape),
                     sample_rate_hz=250.0)
            for _ in range(n_trials)
        ])
    return trials, clean


class TestTraining:
    def test_model_shapes(self):
        trials, _ = planted_trials(0)
        model = train_trca(trials, SPEC)
        assert model.filters.shape == (5, 21)
        assert model.templates.shape == (5, 2, 250)
        assert model.n_trials_trained == 12
        assert model.n_subbands == 5
        assert model.n_regions == 2
        assert model.template_length == 250

    def test_filters_unit_norm(self):
        trials, _ = planted_trials(1)
        model = train_trca(trials, SPEC)
        np.testing.assert_allclose(
            np.linalg.norm(model.filters, axis=1), 1.0, atol=1e-12
        )

    def test_deterministic(self):
        trials, _ = planted_trials(2)
        a = train_trca(trials, SPEC)
        b = train_trca(trials, SPEC)
        np.testing.assert_array_equal(a.filters, b.filters)
        np.testing.assert_array_equal(a.templates, b.templates)

    def test_identical_trials_give_perfect_consistency(self):
        # all trials equal: the filtered trial matches the template exactly
        rng = np.random.default_rng(3)
        wave = np.outer(rng.standard_normal(21), bandlimited_wave(rng))
        ep = EegEpoch(samples=wave, sample_rate_hz=250.0)
        model = train_trca([[ep] * 6, planted_trials(4)[0][0]], SPEC)
        bands = subband_decompose(ep, SPEC)
        for m in range(5):
            y = model.filters[m] @ bands[m].samples
            t = model.templates[m, 0]
            r = np.corrcoef(y, t)[0, 1]
            assert r == pytest.approx(1.0, abs=1e-9)

    def test_planted_component_recovered(self):
        # one planted region: the shared filter has a single source to find
        for seed in range(3):
            trials, clean = planted_trials(seed, n_regions=1, noise=1.0)
            model = train_trca(trials, SPEC)
            band0 = subband_decompose(clean[0], SPEC)[0]
            y = model.filters[0] @ band0.samples
            r = abs(np.corrcoef(y, model.templates[0, 0])[0, 1])
            assert r >= 0.9

    def test_channel_permutation_equivariance(self):
        trials, clean = planted_trials(5)
        perm = np.random.default_rng(6).permutation(21)
        permuted = [
            [EegEpoch(samples=ep.samples[perm], sample_rate_hz=250.0) for ep in region]
            for region in trials
        ]
        rho = correlate(train_trca(trials, SPEC), clean[0], SPEC)
        rho_perm = correlate(
            train_trca(permuted, SPEC),
            EegEpoch(samples=clean[0].samples[perm], sample_rate_hz=250.0),
            SPEC,
        )
        np.testing.assert_allclose(rho_perm, rho, atol=1e-6)

    def test_sign_convention(self):
        trials, _ = planted_trials(7)
        model = train_trca(trials, SPEC)
        for m in range(5):
            grand = np.mean(model.templates[m], axis=0)
            assert abs(grand.max()) >= abs(grand.min())

    def test_duplicate_channel_triggers_ridge(self):
        # an exactly repeated channel makes the pooled covariance singular
        trials, _ = planted_trials(8)
        for region in trials:
            for ep in region:
                ep.samples[1] = ep.samples[0]
        model = train_trca(trials, SPEC)
        assert np.all(np.isfinite(model.filters))
        np.testing.assert_allclose(
            np.linalg.norm(model.filters, axis=1), 1.0, atol=1e-9
        )

    def test_too_few_trials_rejected(self):
        trials, _ = planted_trials(9)
        trials[1] = trials[1][:1]
        with pytest.raises(ValueError, match="region 1"):
            train_trca(trials, SPEC)

    def test_no_regions_rejected(self):
        with pytest.raises(ValueError):
            train_trca([], SPEC)

    def test_shape_mismatch_rejected(self):
        trials, _ = planted_trials(10)
        bad = trials[0][0].samples[:, :200]
        trials[1][2] = EegEpoch(samples=bad, sample_rate_hz=250.0)
        with pytest.raises(ValueError):
            train_trca(trials, SPEC)


class TestCorrelate:
    def test_template_source_scores_full_weight_sum(self):
        # identical training trials make region 0's templates the filtered
        # projections of the trial itself, so every sub-band correlates at
        # exactly 1 and the score is the plain sum of sub-band weights
        rng = np.random.default_rng(11)
        wave = np.outer(rng.standard_normal(21), bandlimited_wave(rng))
        ep = EegEpoch(samples=wave, sample_rate_hz=250.0)
        model = train_trca([[ep] * 6, planted_trials(12)[0][1]], SPEC)
        rho = correlate(model, ep, SPEC)
        expected = sum(subband_weight(m) for m in range(1, 6))
        assert expected == pytest.approx(3.2342515258026427, abs=1e-12)
        assert rho[0] == pytest.approx(expected, abs=1e-9)

    def test_negated_epoch_flips_score(self):
        trials, clean = planted_trials(13)
        model = train_trca(trials, SPEC)
        rho = correlate(model, clean[0], SPEC)
        neg = EegEpoch(samples=-clean[0].samples, sample_rate_hz=250.0)
        np.testing.assert_allclose(correlate(model, neg, SPEC), -rho, atol=1e-12)

    def test_scale_invariance(self):
        trials, clean = planted_trials(14)
        model = train_trca(trials, SPEC)
        rho = correlate(model, clean[0], SPEC)
        scaled = EegEpoch(samples=37.5 * clean[0].samples, sample_rate_hz=250.0)
        np.testing.assert_allclose(correlate(model, scaled, SPEC), rho, atol=1e-9)

    def test_scores_bounded_by_weight_sum(self):
        trials, clean = planted_trials(15)
        model = train_trca(trials, SPEC)
        bound = sum(subband_weight(m) for m in range(1, 6)) + 1e-9
        for ep in clean:
            assert np.all(np.abs(correlate(model, ep, SPEC)) <= bound)

    def test_unrelated_noise_scores_near_zero(self):
        trials, _ = planted_trials(16)
        model = train_trca(trials, SPEC)
        rng = np.random.default_rng(17)
        scores = np.array([
            correlate(model, EegEpoch(samples=rng.standard_normal((21, 250)),
                                      sample_rate_hz=250.0), SPEC)
            for _ in range(100)
        ])
        sd = scores.std(axis=0)
        assert np.all(np.abs(scores.mean(axis=0)) <= 3.0 * sd / math.sqrt(100))

    def test_zero_epoch_scores_zero(self):
        trials, _ = planted_trials(18)
        model = train_trca(trials, SPEC)
        zero = EegEpoch(samples=np.zeros((21, 250)), sample_rate_hz=250.0)
        np.testing.assert_array_equal(correlate(model, zero, SPEC), np.zeros(2))

    def test_length_mismatch_rejected(self):
        trials, _ = planted_trials(19)
        model = train_trca(trials, SPEC)
        with pytest.raises(ValueError, match="length"):
            correlate(model, EegEpoch(samples=np.zeros((21, 200)),
                                      sample_rate_hz=250.0), SPEC)

    def test_channel_mismatch_rejected(self):
        trials, _ = planted_trials(20)
        model = train_trca(trials, SPEC)
        with pytest.raises(ValueError, match="channel"):
            correlate(model, EegEpoch(samples=np.zeros((8, 250)),
                                      sample_rate_hz=250.0), SPEC)


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        trials, _ = planted_trials(21)
        model = train_trca(trials, SPEC)
        vw = np.random.default_rng(22).standard_normal((2, 2))
        path = tmp_path / "model.ntrk"
        save_model(path, model, SPEC, velocity_weight=vw, velocity_kind="corrected")
        back, spec, vw_back, kind = load_model(path)
        np.testing.assert_array_equal(back.filters, model.filters)
        np.testing.assert_array_equal(back.templates, model.templates)
        assert back.n_trials_trained == model.n_trials_trained
        assert spec == SPEC
        np.testing.assert_array_equal(vw_back, vw)
        assert kind == "corrected"

    def test_round_trip_without_weight(self, tmp_path):
        trials, _ = planted_trials(23)
        model = train_trca(trials, SPEC)
        path = tmp_path / "model.ntrk"
        save_model(path, model, SPEC)
        back, _, vw_back, kind = load_model(path)
        assert vw_back is None
        assert kind is None
        np.testing.assert_array_equal(back.filters, model.filters)

    def test_blob_header(self):
        trials, _ = planted_trials(24)
        model = train_trca(trials, SPEC)
        blob = model_blob(model)
        assert blob[:8] == MODEL_MAGIC
        meta = model_meta(model, SPEC)
        assert meta["n_subbands"] == 5
        assert meta["n_channels"] == 21
        assert meta["filter_bank"]["n_subbands"] == 5

    def test_bad_weight_shape_rejected(self):
        trials, _ = planted_trials(25)
        model = train_trca(trials, SPEC)
        with pytest.raises(ValueError):
            model_blob(model, velocity_weight=np.zeros((3, 2)))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ntrk"
        path.write_bytes(b"WRONGMAG" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_model(path)

    def test_model_shape_validation(self):
        with pytest.raises(ValueError):
            TrcaModel(filters=np.zeros((5, 21)), templates=np.zeros((4, 8, 250)),
                      n_trials_trained=48)
