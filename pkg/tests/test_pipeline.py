import numpy as np
import pytest

from kmiwalk.pipeline import (
    ModelIOError,
    load_model,
    online_posteriors,
    save_model,
    train_from_recording,
)
from kmiwalk.recording import Recording
from kmiwalk.spectral import sliding_window_ends


@pytest.fixture(scope="module")
def trained(informative_recording):
    return train_from_recording(informative_recording, runs=2, seed=0, optimize=False)


class TestTraining:
    def test_informative_subject_decodes(self, trained):
        assert trained.cv.mean_accuracy >= 0.9
        assert trained.cv.p_value < 1e-6
        assert trained.excluded_channels == []
        assert len(trained.channels) == 16

    def test_band_search_covers_rhythm(self, informative_recording):
        model = train_from_recording(informative_recording, runs=2, seed=0)
        assert model.band.f_low <= 11 <= model.band.f_high

    def test_summary_row_format(self, trained):
        row = trained.summary_row()
        assert "%" in row and "RC = 16" in row and "band" in row


class TestModelIO:
    def test_round_trip_bit_exact(self, trained, tmp_path):
        path = tmp_path / "model.kmm"
        save_model(path, trained)
        loaded = load_model(path)
        assert loaded.channels == trained.channels
        assert loaded.band == trained.band
        assert loaded.cv.mean_accuracy == trained.cv.mean_accuracy
        assert np.array_equal(loaded.cv.fold_accuracies, trained.cv.fold_accuracies)
        for h in range(2):
            assert np.array_equal(loaded.decoder.cpca_.means_[h], trained.decoder.cpca_.means_[h])
            assert np.array_equal(loaded.decoder.cpca_.bases_[h], trained.decoder.cpca_.bases_[h])
            assert np.array_equal(loaded.decoder.weights_[h], trained.decoder.weights_[h])
        # a second save of the loaded model is byte-identical
        path2 = tmp_path / "model2.kmm"
        save_model(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_posterior_identical_after_reload(self, trained, tmp_path):
        path = tmp_path / "model.kmm"
        save_model(path, trained)
        loaded = load_model(path)
        rng = np.random.default_rng(0)
        X = np.abs(rng.standard_normal((20, trained.decoder.n_features_in_)))
        assert np.array_equal(
            trained.decoder.posterior_walk(X), loaded.decoder.posterior_walk(X)
        )

    def test_truncated_file_fails_cleanly(self, trained, tmp_path):
        path = tmp_path / "model.kmm"
        save_model(path, trained)
        data = path.read_bytes()
        for cut in (3, 10, len(data) // 2, len(data) - 4):
            path.write_bytes(data[:cut])
            with pytest.raises(ModelIOError):
                load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.kmm"
        path.write_bytes(b"XXXX" + b"\0" * 100)
        with pytest.raises(ModelIOError, match="magic"):
            load_model(path)


class TestOnlinePosteriors:
    def test_tick_count_matches_schedule(self, trained, informative_recording):
        rec = informative_recording
        posteriors = online_posteriors(trained, rec)
        expected = len(sliding_window_ends(rec.n_samples, rec.sample_rate))
        assert posteriors.shape == (expected,)
        assert ((posteriors >= 0) & (posteriors <= 1)).all()

    def test_constant_stream_constant_posteriors(self, trained):
        samples = np.tile(np.linspace(1.0, 2.0, 16)[:, None], (1, int(5 * 256)))
        rec = Recording(256.0, trained.channels, samples)
        posteriors = online_posteriors(trained, rec)
        assert len(posteriors) > 0
        assert np.allclose(posteriors, posteriors[0])

    def test_decodes_cue_structure(self, trained, informative_recording):
        rec = informative_recording
        posteriors = online_posteriors(trained, rec)
        ends = sliding_window_ends(rec.n_samples, rec.sample_rate)
        labels = rec.labels[ends - 1]
        walk_mean = posteriors[labels == 2].mean()
        idle_mean = posteriors[labels == 1].mean()
        assert walk_mean > idle_mean + 0.2
