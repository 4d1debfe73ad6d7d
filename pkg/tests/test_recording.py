import numpy as np
import pytest

from kmiwalk.recording import (
    IDLE,
    UNLABELED,
    WALK,
    Recording,
    RecordingError,
    common_average_reference,
    export_csv,
    import_csv,
    load_recording,
    reject_artifact_channels,
    save_recording,
)

from conftest import labelled_noise_recording


def simple_recording(values, sample_rate=256.0, labels=None):
    values = np.asarray(values, dtype=np.float64)
    names = [f"ch{i}" for i in range(values.shape[0])]
    return Recording(sample_rate, names, values, labels)


class TestRecordingInvariants:
    def test_labels_default_unlabelled(self):
        rec = simple_recording(np.zeros((2, 10)))
        assert (rec.labels == UNLABELED).all()

    def test_label_length_mismatch(self):
        with pytest.raises(RecordingError):
            Recording(256.0, ["a", "b"], np.zeros((2, 10)), np.zeros(9, dtype=np.uint8))

    def test_bad_sample_rate(self):
        with pytest.raises(RecordingError):
            Recording(0.0, ["a"], np.zeros((1, 4)))

    def test_bad_label_values(self):
        with pytest.raises(RecordingError):
            Recording(256.0, ["a"], np.zeros((1, 3)), np.array([0, 1, 7], dtype=np.uint8))

    def test_channel_name_count(self):
        with pytest.raises(RecordingError):
            Recording(256.0, ["a"], np.zeros((2, 4)))

    def test_select_channels_order_and_missing(self):
        rec = simple_recording(np.arange(12).reshape(3, 4))
        sub = rec.select_channels(["ch2", "ch0"])
        assert sub.channels == ["ch2", "ch0"]
        assert np.array_equal(sub.samples[0], rec.samples[2])
        with pytest.raises(RecordingError):
            rec.select_channels(["nope"])


class TestCommonAverageReference:
    def test_two_constant_channels(self):
        rec = simple_recording(np.array([[3.0] * 8, [5.0] * 8]))
        out = common_average_reference(rec)
        assert np.allclose(out.samples[0], -1.0)
        assert np.allclose(out.samples[1], 1.0)

    def test_idempotent(self):
        rec = labelled_noise_recording(duration_s=4.0, n_channels=5, seed=1)
        once = common_average_reference(rec)
        twice = common_average_reference(once)
        assert np.allclose(once.samples, twice.samples, atol=1e-12)

    def test_zero_mean_63_channels(self):
        rec = labelled_noise_recording(duration_s=5.0, n_channels=63, seed=2)
        out = common_average_reference(rec)
        residual = np.abs(out.samples.mean(axis=0)).max()
        assert residual < 1e-9 * np.abs(out.samples).max()

    def test_labels_unchanged(self):
        rec = labelled_noise_recording(duration_s=4.0, n_channels=3, seed=3)
        assert np.array_equal(common_average_reference(rec).labels, rec.labels)

    def test_needs_two_channels(self):
        with pytest.raises(RecordingError):
            common_average_reference(simple_recording(np.zeros((1, 8))))


class TestArtifactRejection:
    def test_clean_recording_keeps_all(self):
        rec = labelled_noise_recording(duration_s=10.0, n_channels=16, seed=4)
        kept, excluded = reject_artifact_channels(rec)
        assert excluded == []
        assert kept.channels == rec.channels

    def test_contaminated_channel_excluded(self):
        rec = labelled_noise_recording(duration_s=10.0, n_channels=16, seed=4)
        t = np.arange(rec.n_samples) / rec.sample_rate
        samples = rec.samples.copy()
        samples[5] += 50.0 * np.sin(2 * np.pi * 35.0 * t)
        noisy = Recording(rec.sample_rate, rec.channels, samples, rec.labels)
        kept, excluded = reject_artifact_channels(noisy)
        assert excluded == [rec.channels[5]]
        assert rec.channels[5] not in kept.channels

    def test_infinite_threshold_is_identity(self):
        rec = labelled_noise_recording(duration_s=5.0, n_channels=8, seed=5)
        kept, excluded = reject_artifact_channels(rec, z_threshold=np.inf)
        assert excluded == []
        assert kept == rec

    def test_deterministic(self):
        rec = labelled_noise_recording(duration_s=5.0, n_channels=8, seed=6)
        a = reject_artifact_channels(rec)
        b = reject_artifact_channels(rec)
        assert a[1] == b[1] and a[0] == b[0]

    def test_max_iters_bounds_removals(self):
        rec = labelled_noise_recording(duration_s=5.0, n_channels=8, seed=7)
        t = np.arange(rec.n_samples) / rec.sample_rate
        samples = rec.samples.copy()
        samples[0] += 80.0 * np.sin(2 * np.pi * 33.0 * t)
        samples[1] += 50.0 * np.sin(2 * np.pi * 37.0 * t)
        noisy = Recording(rec.sample_rate, rec.channels, samples, rec.labels)
        _, excluded = reject_artifact_channels(noisy, z_threshold=2.0, max_iters=1)
        assert len(excluded) == 1


class TestContainerIO:
    def test_round_trip(self, tmp_path):
        rec = labelled_noise_recording(duration_s=2.0, n_channels=3, seed=8)
        path = tmp_path / "rec.kmw"
        save_recording(path, rec)
        loaded = load_recording(path)
        # first save quantises float64 -> f32; thereafter stable
        save_recording(path, loaded)
        assert load_recording(path) == loaded
        assert loaded.channels == rec.channels
        assert np.array_equal(loaded.labels, rec.labels)
        assert np.allclose(loaded.samples, rec.samples, atol=1e-4)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.kmw"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(RecordingError, match="magic"):
            load_recording(path)

    def test_truncated(self, tmp_path):
        rec = labelled_noise_recording(duration_s=1.0, n_channels=2, seed=9)
        path = tmp_path / "rec.kmw"
        save_recording(path, rec)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(RecordingError, match="truncated|corrupt"):
            load_recording(path)

    def test_csv_import_matches_container(self, tmp_path):
        rec = labelled_noise_recording(duration_s=1.0, n_channels=3, seed=10)
        binary = tmp_path / "rec.kmw"
        save_recording(binary, rec)
        quantised = load_recording(binary)
        csv_path = tmp_path / "rec.csv"
        export_csv(csv_path, quantised)
        imported = import_csv(csv_path, sample_rate=rec.sample_rate)
        assert imported == quantised

    def test_csv_requires_label_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(RecordingError, match="label"):
            import_csv(path)

    def test_csv_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(RecordingError):
            import_csv(path)
