"""Task generators and dataset ingestion.

The cue-accumulation episode: a sequence of left-or-right cues, each a burst
of Poisson-like spiking on the matching 10-channel group, followed by a
variable silence and a recall burst that tells the network when to answer.
Ten more channels carry background noise for the whole episode. The label is
the majority cue side.

Also here: the exact last-k-cues probabilistic baseline used as a reference
curve in cue-count sweeps, and the permuted sequential MNIST reader (IDX
files, pixels streamed one per timestep in a fixed shuffled order).
"""

from __future__ import annotations

import gzip
import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _binio
from .errors import IngestionError
from .network import SpikeTrain
from .seeding import derive_seed
from .training import Sample
from .validation import check_positive, check_positive_int

LEFT = 0
RIGHT = 1

EPISODE_MAGIC = b"AXEP"
EPISODE_VERSION = 1

# md5 of the canonical MNIST IDX files (uncompressed), used only to warn
# when a lookalike corpus is loaded in their place
_MNIST_MD5 = {
    "train-images-idx3-ubyte": "6bbc9ace898e44ae57da46a324031adb",
    "train-labels-idx1-ubyte": "a25bea736e30d166cdddb491f175f624",
    "t10k-images-idx3-ubyte": "2646ac647ad5339dbf082846283269ea",
    "t10k-labels-idx1-ubyte": "27ae3e4e09519cfbb04c329615203637",
}


@dataclass(frozen=True)
class CueTaskConfig:
    """Timing, population coding and firing rates of the cue task (ms / Hz)."""

    n_cues: int = 7
    cue_ms: float = 150.0
    pause_ms: float = 50.0
    wait_range_ms: tuple[float, float] = (500.0, 1500.0)
    recall_ms: float = 150.0
    channels_per_group: int = 10
    cue_hz: float = 40.0
    noise_hz: float = 5.0
    recall_hz: float = 40.0
    dt: float = 1.0
    resample_ties: bool = True

    def __post_init__(self):
        check_positive_int("n_cues", self.n_cues)
        for name in ("cue_ms", "pause_ms", "recall_ms", "dt"):
            check_positive(name, getattr(self, name))
        lo, hi = self.wait_range_ms
        if lo < 0 or hi < lo:
            raise ValueError(f"wait_range_ms must satisfy 0 <= lo <= hi, got {self.wait_range_ms}")
        if self.n_cues % 2 == 0 and not self.resample_ties:
            raise ValueError("even n_cues requires resample_ties")

    @property
    def n_channels(self) -> int:
        return 4 * self.channels_per_group

    def _steps(self, ms: float) -> int:
        return int(round(ms / self.dt))

    def episode_steps(self, wait_steps: int) -> int:
        per_cue = self._steps(self.cue_ms) + self._steps(self.pause_ms)
        return self.n_cues * per_cue + wait_steps + self._steps(self.recall_ms)


@dataclass
class CueSample:
    """Generated episode with its ground truth and timing metadata."""

    spikes: SpikeTrain
    label: int
    cue_sequence: np.ndarray  # 0 = left, 1 = right, in presentation order
    recall_window: tuple[int, int]  # half-open, in steps


def _rate_to_p(hz: float, dt: float) -> float:
    p = hz * dt / 1000.0
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"rate {hz} Hz at dt={dt} ms gives Bernoulli p={p} outside [0, 1]")
    return p


def generate_cue_sample(
    cfg: CueTaskConfig,
    rng_seed: int,
    n_cues: int | None = None,
    wait_ms: float | None = None,
) -> CueSample:
    """One deterministic episode for (cfg, rng_seed).

    Cue sides are uniform; a tied sequence (possible only for even cue
    counts) is resampled whole. The wait is drawn uniformly over whole
    timesteps of the configured range unless ``wait_ms`` pins it. Channel
    groups, in index order: left, right, noise, recall.
    """
    if wait_ms is not None and wait_ms < 0:
        raise ValueError(f"wait_ms must be non-negative, got {wait_ms}")
    if n_cues is not None or wait_ms is not None:
        cfg = replace(
            cfg,
            n_cues=cfg.n_cues if n_cues is None else n_cues,
            wait_range_ms=cfg.wait_range_ms if wait_ms is None else (wait_ms, wait_ms),
        )
    rng = np.random.default_rng(rng_seed)
    sides = rng.integers(0, 2, size=cfg.n_cues)
    while 2 * sides.sum() == cfg.n_cues:
        sides = rng.integers(0, 2, size=cfg.n_cues)

    lo, hi = cfg.wait_range_ms
    lo_s, hi_s = cfg._steps(lo), cfg._steps(hi)
    wait_steps = int(rng.integers(lo_s, hi_s + 1))
    T = cfg.episode_steps(wait_steps)
    g = cfg.channels_per_group
    cue_steps = cfg._steps(cfg.cue_ms)
    period = cue_steps + cfg._steps(cfg.pause_ms)
    recall_steps = cfg._steps(cfg.recall_ms)

    p = np.zeros((T, cfg.n_channels))
    p[:, 2 * g : 3 * g] = _rate_to_p(cfg.noise_hz, cfg.dt)
    p_cue = _rate_to_p(cfg.cue_hz, cfg.dt)
    for k, side in enumerate(sides):
        start = k * period
        group = slice(side * g, (side + 1) * g)
        p[start : start + cue_steps, group] = p_cue
    recall_start = cfg.n_cues * period + wait_steps
    p[recall_start : recall_start + recall_steps, 3 * g : 4 * g] = _rate_to_p(
        cfg.recall_hz, cfg.dt
    )
    spikes = (rng.random((T, cfg.n_channels)) < p).astype(np.float64)
    label = RIGHT if 2 * sides.sum() > cfg.n_cues else LEFT
    return CueSample(
        spikes=SpikeTrain(data=spikes, dt=cfg.dt),
        label=label,
        cue_sequence=sides,
        recall_window=(recall_start, recall_start + recall_steps),
    )


def generate_wait_variant(cfg: CueTaskConfig, wait_ms: float, rng_seed: int) -> CueSample:
    """Standard episode with a fixed wait (tested up to tens of seconds)."""
    return generate_cue_sample(cfg, rng_seed, wait_ms=wait_ms)


def generate_ncue_variant(cfg: CueTaskConfig, n_cues: int, rng_seed: int) -> CueSample:
    """Standard episode with a different cue count; even counts resample ties."""
    if n_cues % 2 == 0 and not cfg.resample_ties:
        raise ValueError("even n_cues requires resample_ties")
    return generate_cue_sample(cfg, rng_seed, n_cues=n_cues)


def probabilistic_baseline_accuracy(n_cues: int, memory: int = 7) -> float:
    """Exact accuracy of an observer that remembers only the last ``memory`` cues.

    Enumerates all tie-free cue sequences (uniform, matching the generator's
    resampling), predicts the majority of the last min(memory, n) cues, and
    counts a tie inside that window as half credit.
    """
    n = check_positive_int("n_cues", n_cues)
    memory = check_positive_int("memory", memory)
    if n > 24:
        raise ValueError("exact enumeration supports n_cues <= 24")
    window = min(memory, n)
    seqs = np.arange(1 << n, dtype=np.uint64)
    counts = np.bitwise_count(seqs).astype(np.int64)
    valid = 2 * counts != n
    majority_right = 2 * counts > n
    wcounts = np.bitwise_count(seqs >> np.uint64(n - window)).astype(np.int64)
    credit = np.where(
        2 * wcounts == window,
        0.5,
        ((2 * wcounts > window) == majority_right).astype(np.float64),
    )
    return float(credit[valid].mean())


def as_sample(cue: CueSample) -> Sample:
    return Sample(
        inputs=cue.spikes.data, label=cue.label, recall_window=cue.recall_window
    )


class CueTaskSampler:
    """Deterministic sample streams: seed = hash(root_seed, role, index)."""

    def __init__(
        self,
        cfg: CueTaskConfig,
        root_seed: int,
        n_cues: int | None = None,
        wait_ms: float | None = None,
    ):
        self.cfg = cfg
        self.root_seed = root_seed
        self.n_cues = n_cues
        self.wait_ms = wait_ms

    def __call__(self, role: str, count: int) -> list[Sample]:
        out = []
        for i in range(count):
            seed = derive_seed(self.root_seed, f"{role}-{i}")
            cue = generate_cue_sample(self.cfg, seed, self.n_cues, self.wait_ms)
            out.append(as_sample(cue))
        return out


class FixedDatasetSampler:
    """Serves a fixed list of samples, reshuffled per role; wraps if count > len."""

    def __init__(self, samples: list[Sample], root_seed: int):
        if not samples:
            raise ValueError("samples must be non-empty")
        self.samples = list(samples)
        self.root_seed = root_seed

    def __call__(self, role: str, count: int) -> list[Sample]:
        rng = np.random.default_rng(derive_seed(self.root_seed, role))
        order = rng.permutation(len(self.samples))
        return [self.samples[order[i % len(order)]] for i in range(count)]


def write_episode_raster_csv(path, cue: CueSample) -> None:
    """Episode spikes as (t, neuron, spike) rows, one per input spike event."""
    from .network import write_raster_csv

    write_raster_csv(path, cue.spikes.data)


def write_episode_file(path, cue: CueSample) -> None:
    T, n_channels = cue.spikes.data.shape
    meta = {
        "T": T,
        "n_channels": n_channels,
        "dt": cue.spikes.dt,
        "label": int(cue.label),
        "recall_window": [int(cue.recall_window[0]), int(cue.recall_window[1])],
    }
    arrays = {
        "cue_sequence": np.asarray(cue.cue_sequence, dtype=np.int64),
        "packed:spikes": _binio.pack_spikes(cue.spikes.data),
    }
    _binio.write_record(path, EPISODE_MAGIC, EPISODE_VERSION, meta, arrays)


def read_episode_file(path) -> CueSample:
    version, meta, arrays = _binio.read_record(path, EPISODE_MAGIC)
    spikes = _binio.unpack_spikes(
        arrays["packed:spikes"], (meta["T"], meta["n_channels"])
    )
    return CueSample(
        spikes=SpikeTrain(data=spikes, dt=float(meta["dt"])),
        label=int(meta["label"]),
        cue_sequence=arrays["cue_sequence"],
        recall_window=tuple(meta["recall_window"]),
    )


def generate_dataset(
    out_dir,
    cfg: CueTaskConfig,
    count: int,
    root_seed: int,
    n_cues: int | None = None,
    wait_ms: float | None = None,
) -> list[Path]:
    """Write ``count`` episodes plus a manifest allowing exact regeneration."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    seeds = []
    for i in range(count):
        seed = derive_seed(root_seed, f"dataset-{i}")
        cue = generate_cue_sample(cfg, seed, n_cues, wait_ms)
        path = out_dir / f"episode_{i:05d}.bin"
        write_episode_file(path, cue)
        paths.append(path)
        seeds.append(seed)
    manifest = {
        "format": "axondelay-episode-v1",
        "count": count,
        "root_seed": root_seed,
        "seeds": seeds,
        "n_cues_override": n_cues,
        "wait_ms_override": wait_ms,
        "config": {
            "n_cues": cfg.n_cues,
            "cue_ms": cfg.cue_ms,
            "pause_ms": cfg.pause_ms,
            "wait_range_ms": list(cfg.wait_range_ms),
            "recall_ms": cfg.recall_ms,
            "channels_per_group": cfg.channels_per_group,
            "cue_hz": cfg.cue_hz,
            "noise_hz": cfg.noise_hz,
            "recall_hz": cfg.recall_hz,
            "dt": cfg.dt,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return paths


def _open_idx(path: Path):
    gz = path.with_name(path.name + ".gz")
    if path.exists():
        return open(path, "rb"), path
    if gz.exists():
        return gzip.open(gz, "rb"), gz
    raise IngestionError(f"missing IDX file: {path} (or {gz})", path=str(path))


def read_idx(path) -> np.ndarray:
    """Read one big-endian IDX file (images: magic 2051, labels: 2049)."""
    path = Path(path)
    fh, real = _open_idx(path)
    with fh:
        header = fh.read(4)
        if len(header) != 4 or header[0] != 0 or header[1] != 0:
            raise IngestionError(f"bad IDX header in {real}", path=str(real))
        dtype_code, ndim = header[2], header[3]
        if dtype_code != 0x08:
            raise IngestionError(
                f"unsupported IDX dtype 0x{dtype_code:02x} in {real}", path=str(real)
            )
        dims_raw = fh.read(4 * ndim)
        if len(dims_raw) != 4 * ndim:
            raise IngestionError(f"truncated IDX dims in {real}", path=str(real))
        shape = struct.unpack(f">{ndim}I", dims_raw)
        data = fh.read()
    count = int(np.prod(shape))
    if len(data) != count:
        raise IngestionError(
            f"IDX payload size mismatch in {real}: expected {count} bytes, "
            f"got {len(data)}",
            path=str(real),
        )
    if path.name in _MNIST_MD5:
        digest = hashlib.md5(header + dims_raw + data).hexdigest()
        if digest != _MNIST_MD5[path.name]:
            warnings.warn(
                f"{real}: checksum differs from the canonical MNIST file "
                f"({digest})",
                stacklevel=2,
            )
    return np.frombuffer(data, dtype=np.uint8).reshape(shape)


@dataclass
class PsmnistData:
    """Pixel-permuted digit sequences: one analog input channel, 784 steps."""

    images: np.ndarray  # (N, 784) float64 in [0, 1], original pixel order
    labels: np.ndarray  # (N,) int64
    permutation: np.ndarray  # (784,) applied to the pixel axis

    def __len__(self) -> int:
        return self.images.shape[0]

    def episode(self, i: int) -> np.ndarray:
        return self.images[i, self.permutation][:, None]

    def sample(self, i: int, readout_steps: int = 56) -> Sample:
        T = self.images.shape[1]
        return Sample(
            inputs=self.episode(i),
            label=int(self.labels[i]),
            recall_window=(T - readout_steps, T),
        )


def load_psmnist(data_dir, permutation_seed: int, split: str = "train") -> PsmnistData:
    """Read the IDX pair for ``split`` and fix one pixel permutation per run.

    Pixels are scaled to [0, 1] and presented one per timestep for 784 steps;
    the permutation derives from ``permutation_seed`` alone, so every sample
    of a run is shuffled the same way.
    """
    data_dir = Path(data_dir)
    prefix = {"train": "train", "test": "t10k"}.get(split)
    if prefix is None:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    images = read_idx(data_dir / f"{prefix}-images-idx3-ubyte")
    labels = read_idx(data_dir / f"{prefix}-labels-idx1-ubyte")
    if images.ndim != 3:
        raise IngestionError(
            f"expected 3-d image tensor, got shape {images.shape}",
            path=str(data_dir),
        )
    if images.shape[0] != labels.shape[0]:
        raise IngestionError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}",
            path=str(data_dir),
        )
    n = images.shape[0]
    flat = images.reshape(n, -1).astype(np.float64) / 255.0
    rng = np.random.default_rng(permutation_seed)
    permutation = rng.permutation(flat.shape[1])
    return PsmnistData(
        images=flat, labels=labels.astype(np.int64), permutation=permutation
    )
