import gzip
import struct
import warnings
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axondelay.errors import IngestionError
from axondelay.tasks import (
    CueTaskConfig,
    CueTaskSampler,
    FixedDatasetSampler,
    LEFT,
    RIGHT,
    generate_cue_sample,
    generate_dataset,
    generate_ncue_variant,
    generate_wait_variant,
    load_psmnist,
    probabilistic_baseline_accuracy,
    read_episode_file,
    read_idx,
    write_episode_file,
)
from axondelay.training import Sample


class TestCueGeneration:
    def test_shape_and_binaryness(self):
        cfg = CueTaskConfig()
        sample = generate_cue_sample(cfg, 0)
        data = sample.spikes.data
        assert data.shape[1] == 40
        assert set(np.unique(data)) <= {0.0, 1.0}

    def test_episode_length_bounds_default_task(self):
        cfg = CueTaskConfig()
        for seed in range(20):
            T = generate_cue_sample(cfg, seed).spikes.data.shape[0]
            assert 2050 <= T <= 3050

    def test_episode_length_formula_exact(self):
        cfg = CueTaskConfig(n_cues=3, wait_range_ms=(120.0, 120.0))
        sample = generate_cue_sample(cfg, 5)
        assert sample.spikes.data.shape[0] == 3 * 200 + 120 + 150

    def test_label_is_majority_side(self):
        cfg = CueTaskConfig()
        for seed in range(30):
            sample = generate_cue_sample(cfg, seed)
            rights = int(sample.cue_sequence.sum())
            expected = RIGHT if 2 * rights > len(sample.cue_sequence) else LEFT
            assert sample.label == expected

    def test_all_rates_zero_gives_silence(self):
        cfg = CueTaskConfig(cue_hz=0.0, noise_hz=0.0, recall_hz=0.0)
        sample = generate_cue_sample(cfg, 1)
        assert sample.spikes.data.sum() == 0.0
        assert sample.spikes.data.shape[1] == 40

    def test_channel_groups_fire_in_their_windows_only(self):
        cfg = CueTaskConfig(n_cues=3, noise_hz=0.0, cue_hz=1000.0, recall_hz=1000.0)
        sample = generate_cue_sample(cfg, 7)
        data = sample.spikes.data
        start, stop = sample.recall_window
        # recall group fires only inside the recall window
        assert data[:start, 30:].sum() == 0.0
        assert data[start:stop, 30:].sum() > 0
        # noise group silent at noise_hz=0
        assert data[:, 20:30].sum() == 0.0
        # cue groups silent during the wait
        wait_zone = data[3 * 200 : start]
        assert wait_zone[:, :20].sum() == 0.0

    def test_cue_side_groups_match_sequence(self):
        cfg = CueTaskConfig(n_cues=5, noise_hz=0.0, cue_hz=1000.0, recall_hz=0.0)
        sample = generate_cue_sample(cfg, 3)
        data = sample.spikes.data
        for k, side in enumerate(sample.cue_sequence):
            window = data[k * 200 : k * 200 + 150]
            active = slice(10, 20) if side == RIGHT else slice(0, 10)
            silent = slice(0, 10) if side == RIGHT else slice(10, 20)
            assert window[:, active].sum() > 0
            assert window[:, silent].sum() == 0.0

    def test_deterministic_per_seed_and_distinct_across_seeds(self):
        cfg = CueTaskConfig()
        a = generate_cue_sample(cfg, 11)
        b = generate_cue_sample(cfg, 11)
        c = generate_cue_sample(cfg, 12)
        np.testing.assert_array_equal(a.spikes.data, b.spikes.data)
        assert (
            a.spikes.data.shape != c.spikes.data.shape
            or not np.array_equal(a.spikes.data, c.spikes.data)
        )

    def test_recall_window_is_final_segment(self):
        cfg = CueTaskConfig()
        sample = generate_cue_sample(cfg, 2)
        start, stop = sample.recall_window
        assert stop == sample.spikes.data.shape[0]
        assert stop - start == 150


class TestVariants:
    def test_wait_variant_fixed_length(self):
        cfg = CueTaskConfig(n_cues=7)
        sample = generate_wait_variant(cfg, 30000.0, 4)
        assert sample.spikes.data.shape[0] == 7 * 200 + 30000 + 150

    def test_wait_variant_zero_wait(self):
        cfg = CueTaskConfig(n_cues=3)
        sample = generate_wait_variant(cfg, 0.0, 4)
        assert sample.spikes.data.shape[0] == 3 * 200 + 150
        assert sample.recall_window == (600, 750)

    def test_negative_wait_rejected(self):
        with pytest.raises(ValueError):
            generate_wait_variant(CueTaskConfig(), -5.0, 0)

    @pytest.mark.parametrize("n_cues", [1, 3, 21])
    def test_ncue_variants(self, n_cues):
        sample = generate_ncue_variant(CueTaskConfig(), n_cues, 9)
        assert len(sample.cue_sequence) == n_cues
        rights = int(sample.cue_sequence.sum())
        assert sample.label == (RIGHT if 2 * rights > n_cues else LEFT)

    def test_single_cue_label_equals_side(self):
        sample = generate_ncue_variant(CueTaskConfig(), 1, 13)
        assert sample.label == sample.cue_sequence[0]

    def test_even_cue_count_resamples_ties_out(self):
        for seed in range(25):
            sample = generate_ncue_variant(CueTaskConfig(), 4, seed)
            assert 2 * int(sample.cue_sequence.sum()) != 4

    def test_even_count_without_resampling_rejected(self):
        cfg = CueTaskConfig(resample_ties=False)
        with pytest.raises(ValueError):
            generate_ncue_variant(cfg, 4, 0)


def enumeration_oracle(n, memory=7):
    """Independent pure-python enumeration of the last-k observer."""
    num = 0.0
    den = 0
    for seq in product((0, 1), repeat=n):
        total = sum(seq)
        if 2 * total == n:
            continue
        den += 1
        true = 1 if 2 * total > n else 0
        window = seq[-min(memory, n):]
        ws = sum(window)
        if 2 * ws == len(window):
            num += 0.5
        elif (1 if 2 * ws > len(window) else 0) == true:
            num += 1.0
    return num / den


class TestProbabilisticBaseline:
    @pytest.mark.parametrize("n", [1, 3, 5, 7])
    def test_perfect_within_memory(self, n):
        assert probabilistic_baseline_accuracy(n) == 1.0

    @pytest.mark.parametrize(
        "n,expected",
        [(9, 0.86328125), (11, 0.80859375), (13, 0.7744140625)],
    )
    def test_frozen_enumeration_values(self, n, expected):
        assert probabilistic_baseline_accuracy(n) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("n", [2, 6, 9, 10, 12])
    def test_matches_independent_oracle(self, n):
        assert probabilistic_baseline_accuracy(n) == pytest.approx(
            enumeration_oracle(n), abs=1e-12
        )

    def test_non_increasing_along_odd_cue_counts(self):
        # monotonicity holds per parity: tie-free even counts carry a margin
        # of at least 2 and score above the neighbouring odd counts
        values = [probabilistic_baseline_accuracy(n) for n in range(1, 17, 2)]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))
        assert values[4:] == sorted(values[4:], reverse=True)  # 9,11,13,15 strict
        assert all(v > 0.5 for v in values)

    def test_even_counts_sit_above_adjacent_odd(self):
        assert probabilistic_baseline_accuracy(10) > probabilistic_baseline_accuracy(9)

    def test_memory_parameter(self):
        assert probabilistic_baseline_accuracy(9, memory=9) == 1.0
        assert probabilistic_baseline_accuracy(9, memory=3) == pytest.approx(
            enumeration_oracle(9, 3), abs=1e-12
        )

    def test_enumeration_size_guard(self):
        with pytest.raises(ValueError):
            probabilistic_baseline_accuracy(25)


class TestSamplers:
    def test_cue_sampler_deterministic_per_role(self):
        sampler = CueTaskSampler(CueTaskConfig(n_cues=3), root_seed=9)
        a = sampler("train-epoch0000", 3)
        b = sampler("train-epoch0000", 3)
        c = sampler("train-epoch0001", 3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.inputs, y.inputs)
        assert any(
            x.inputs.shape != y.inputs.shape or not np.array_equal(x.inputs, y.inputs)
            for x, y in zip(a, c)
        )

    def test_fixed_sampler_shuffles_and_wraps(self):
        samples = [
            Sample(inputs=np.full((4, 2), i, dtype=float), label=i % 2,
                   recall_window=(0, 4))
            for i in range(5)
        ]
        sampler = FixedDatasetSampler(samples, root_seed=0)
        got = sampler("train-epoch0000", 10)
        assert len(got) == 10
        firsts = [int(s.inputs[0, 0]) for s in got]
        assert sorted(firsts[:5]) == [0, 1, 2, 3, 4]
        assert firsts[:5] == firsts[5:]


class TestEpisodeFiles:
    def test_round_trip(self, tmp_path):
        cfg = CueTaskConfig(n_cues=3)
        sample = generate_cue_sample(cfg, 21)
        path = tmp_path / "ep.bin"
        write_episode_file(path, sample)
        back = read_episode_file(path)
        np.testing.assert_array_equal(back.spikes.data, sample.spikes.data)
        np.testing.assert_array_equal(back.cue_sequence, sample.cue_sequence)
        assert back.label == sample.label
        assert back.recall_window == sample.recall_window
        assert back.spikes.dt == sample.spikes.dt

    def test_dataset_manifest(self, tmp_path):
        import json

        cfg = CueTaskConfig(n_cues=3)
        paths = generate_dataset(tmp_path / "ds", cfg, count=4, root_seed=7)
        assert len(paths) == 4
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        assert manifest["count"] == 4
        assert manifest["root_seed"] == 7
        assert len(manifest["seeds"]) == 4
        # regenerating from the manifest reproduces the files byte-for-byte
        first = read_episode_file(paths[0])
        regen = generate_cue_sample(cfg, manifest["seeds"][0])
        np.testing.assert_array_equal(first.spikes.data, regen.spikes.data)


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 2049, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


@pytest.fixture
def synthetic_mnist_dir(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(30, 28, 28))
    labels = rng.integers(0, 10, size=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        write_idx_images(tmp_path / "train-images-idx3-ubyte", images)
        write_idx_labels(tmp_path / "train-labels-idx1-ubyte", labels)
    return tmp_path, images, labels


class TestPsmnist:
    def test_idx_reader_big_endian_exact(self, tmp_path):
        images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
        write_idx_images(tmp_path / "imgs", images)
        back = read_idx(tmp_path / "imgs")
        np.testing.assert_array_equal(back, images)

    def test_idx_reader_gzip_variant(self, tmp_path):
        labels = np.array([3, 1, 4], dtype=np.uint8)
        raw = struct.pack(">II", 2049, 3) + labels.tobytes()
        with gzip.open(tmp_path / "labels.gz", "wb") as fh:
            fh.write(raw)
        back = read_idx(tmp_path / "labels")
        np.testing.assert_array_equal(back, labels)

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(IngestionError) as err:
            read_idx(tmp_path / "absent")
        assert "absent" in str(err.value)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">IIII", 2051, 5, 28, 28) + b"\x00" * 10)
        with pytest.raises(IngestionError):
            read_idx(path)

    def test_checksum_warning_on_lookalike(self, synthetic_mnist_dir):
        data_dir, _, _ = synthetic_mnist_dir
        with pytest.warns(UserWarning, match="checksum"):
            load_psmnist(data_dir, permutation_seed=0)

    def test_permutation_is_bijection_and_seed_stable(self, synthetic_mnist_dir):
        data_dir, _, _ = synthetic_mnist_dir
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = load_psmnist(data_dir, permutation_seed=5)
            b = load_psmnist(data_dir, permutation_seed=5)
            c = load_psmnist(data_dir, permutation_seed=6)
        assert sorted(a.permutation.tolist()) == list(range(784))
        np.testing.assert_array_equal(a.permutation, b.permutation)
        assert not np.array_equal(a.permutation, c.permutation)

    def test_episode_shape_scaling_and_value_multiset(self, synthetic_mnist_dir):
        data_dir, images, labels = synthetic_mnist_dir
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = load_psmnist(data_dir, permutation_seed=3)
        ep = data.episode(0)
        assert ep.shape == (784, 1)
        assert ep.min() >= 0.0 and ep.max() <= 1.0
        # permutation preserves the pixel value multiset
        raw = np.sort(images[0].reshape(-1) / 255.0)
        np.testing.assert_allclose(np.sort(ep[:, 0]), raw, rtol=0, atol=0)
        sample = data.sample(0, readout_steps=56)
        assert sample.recall_window == (784 - 56, 784)
        assert sample.label == labels[0]
