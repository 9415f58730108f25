"""Sample-stream tests: determinism, distributional checks, IDX parsing."""

import struct

import numpy as np
import pytest

from airfedsim import data


@pytest.fixture
def task():
    return data.make_task(5, 16, seed=7, noise_std=0.6)


def write_idx_pair(tmp_path, images, labels, *, image_magic=data.IDX_IMAGES_MAGIC,
                   label_magic=data.IDX_LABELS_MAGIC, header_count=None, prefix=""):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img_path = tmp_path / f"{prefix}images.idx"
    lbl_path = tmp_path / f"{prefix}labels.idx"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">IIII", image_magic, header_count or n, rows, cols))
        fh.write(images.tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">II", label_magic, labels.shape[0]))
        fh.write(labels.tobytes())
    return img_path, lbl_path


class TestMakeTask:
    def test_unit_norm_and_separation(self, task):
        norms = np.linalg.norm(task.class_means, axis=1)
        np.testing.assert_allclose(norms, 1.0, rtol=1e-12)
        d = np.linalg.norm(
            task.class_means[:, None, :] - task.class_means[None, :, :], axis=-1
        )
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 1.0

    def test_deterministic(self):
        a = data.make_task(5, 16, seed=7)
        b = data.make_task(5, 16, seed=7)
        assert np.array_equal(a.class_means, b.class_means)

    def test_validation(self):
        with pytest.raises(ValueError):
            data.SyntheticTaskSpec(np.zeros((2, 3)), noise_std=1.0)  # coincident means
        with pytest.raises(ValueError):
            data.SyntheticTaskSpec(np.eye(2), noise_std=0.0)
        with pytest.raises(ValueError):
            data.SyntheticTaskSpec(np.eye(2), noise_std=1.0, label_noise_prob=1.0)


class TestDraw:
    def test_degenerate_noise_hits_class_means(self):
        spec = data.SyntheticTaskSpec(np.eye(3), noise_std=1e-300)
        stream = data.SampleStream(spec, seed=1, device=0, round_index=1)
        for s in stream.draw(64):
            np.testing.assert_allclose(s.features, spec.class_means[s.label], atol=1e-290)

    def test_same_key_same_samples(self, task):
        a = data.SampleStream(task, seed=3, device=2, round_index=9).draw_arrays(16)
        b = data.SampleStream(task, seed=3, device=2, round_index=9).draw_arrays(16)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_distinct_keys_differ(self, task):
        a = data.SampleStream(task, seed=3, device=2, round_index=9).draw_arrays(16)
        b = data.SampleStream(task, seed=3, device=2, round_index=10).draw_arrays(16)
        assert not np.array_equal(a[0], b[0])

    def test_class_frequencies_multinomial(self, task):
        # Counts within 3 sigma of the uniform multinomial expectation.
        n = 100_000
        _, y = data.SampleStream(task, seed=5, device=0, round_index=1).draw_arrays(n)
        counts = np.bincount(y, minlength=task.class_count)
        p = 1.0 / task.class_count
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma)

    def test_draw_advances_stream(self, task):
        stream = data.SampleStream(task, seed=3, device=0, round_index=1)
        first = stream.draw_arrays(8)
        second = stream.draw_arrays(8)
        assert not np.array_equal(first[0], second[0])

    def test_label_noise_rate(self):
        spec = data.SyntheticTaskSpec(np.eye(4), noise_std=1e-300, label_noise_prob=0.3)
        X, y = data.SampleStream(spec, seed=11, device=0, round_index=1).draw_arrays(50_000)
        clean = np.array([np.allclose(X[i], spec.class_means[y[i]], atol=1e-290)
                          for i in range(0, 50_000, 10)])
        # A flipped label resamples uniformly, so ~ p*(C-1)/C of samples mismatch.
        rate = 1.0 - clean.mean()
        assert abs(rate - 0.3 * 3 / 4) < 0.02

    def test_invalid_n(self, task):
        with pytest.raises(ValueError):
            data.SampleStream(task, seed=1, device=0).draw(0)


class TestHoldout:
    def test_deterministic(self, task):
        a = data.holdout(task, 32, seed=9)
        b = data.holdout(task, 32, seed=9)
        assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))

    def test_empty(self, task):
        assert data.holdout(task, 0, seed=9) == []

    def test_disjoint_from_training(self, task):
        held = {s.features.tobytes() for s in data.holdout(task, 256, seed=9)}
        stream = data.SampleStream(task, seed=9, device=0, round_index=1)
        drawn = {s.features.tobytes() for s in stream.draw(256)}
        assert not held & drawn

    def test_stream_ids_disjoint(self, task):
        train = data.SampleStream(task, seed=9, device=0, round_index=1)
        assert train.stream_id[0] == "train"  # holdout uses the reserved label


class TestIdx:
    def test_zero_image_round_trip(self, tmp_path):
        images = np.zeros((1, 4, 3), dtype=np.uint8)
        img, lbl = write_idx_pair(tmp_path, images, [7])
        samples = data.load_idx(img, lbl)
        assert len(samples) == 1
        assert samples[0].label == 7
        np.testing.assert_array_equal(samples[0].features, np.zeros(12))

    def test_pixel_scaling(self, tmp_path):
        images = np.full((2, 2, 2), 255, dtype=np.uint8)
        img, lbl = write_idx_pair(tmp_path, images, [0, 1])
        X, _ = data.load_idx_arrays(img, lbl)
        np.testing.assert_array_equal(X, np.ones((2, 4)))

    def test_bad_magic(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((1, 2, 2), dtype=np.uint8), [0],
                                  image_magic=0xDEADBEEF)
        with pytest.raises(ValueError, match="bad magic"):
            data.load_idx(img, lbl)

    def test_count_mismatch(self, tmp_path):
        img, lbl = write_idx_pair(tmp_path, np.zeros((2, 2, 2), dtype=np.uint8), [0, 1],
                                  header_count=3)
        with pytest.raises(ValueError, match="payload"):
            data.load_idx(img, lbl)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(b"\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            data.load_idx(path, path)

    def test_label_count_mismatch(self, tmp_path):
        img, _ = write_idx_pair(tmp_path, np.zeros((2, 2, 2), dtype=np.uint8), [0, 1])
        _, lbl = write_idx_pair(tmp_path, np.zeros((3, 2, 2), dtype=np.uint8), [0, 1, 2],
                                prefix="other_")
        with pytest.raises(ValueError, match="count"):
            data.load_idx(img, lbl)

    def test_exhaustion(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lbl = write_idx_pair(tmp_path, images, np.arange(5))
        X, y = data.load_idx_arrays(img, lbl)
        stream = data.IdxStream(X, y, seed=1, device=0)
        stream.draw(4)
        with pytest.raises(RuntimeError, match="exhausted"):
            stream.draw(2)


@pytest.mark.skipif(
    not __import__("pathlib").Path("/root/mnist/train-images-idx3-ubyte").exists(),
    reason="real MNIST files not present",
)
def test_real_mnist_train_count():
    samples = data.load_idx(
        "/root/mnist/train-images-idx3-ubyte", "/root/mnist/train-labels-idx1-ubyte"
    )
    assert len(samples) == 60000
