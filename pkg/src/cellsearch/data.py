"""Datasets: a synthetic desk-scale generator, the tiny-image binary-batch
loader, and a folder-of-patches loader driven by a CSV label manifest.

All loaders return ``Dataset`` objects holding dense float tensors; batching
and augmentation are seeded and reproducible.
"""

from __future__ import annotations

import csv
import json
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, ContractError, DataValidationError

CIFAR10_FILES = ["data_batch_1", "data_batch_2", "data_batch_3",
                 "data_batch_4", "data_batch_5"]


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    label_mode: str
    num_classes: int
    resolution: tuple
    splits: dict = field(default_factory=dict)
    augmentations: tuple = ()

    def __post_init__(self):
        if self.label_mode not in ("single_label", "multi_label"):
            raise ConfigError(f"unknown label mode {self.label_mode!r}")
        if any(v < 0 for v in self.splits.values()):
            raise ConfigError("split sizes must be nonnegative")


@dataclass
class Dataset:
    """Images (N, 3, H, W) float32 plus labels and stable sample ids."""

    images: torch.Tensor
    labels: torch.Tensor
    ids: list
    label_mode: str = "single_label"
    num_classes: int = None

    def __post_init__(self):
        if len(self.images) != len(self.labels) or len(self.images) != len(self.ids):
            raise DataValidationError("images, labels and ids disagree in length")
        if self.num_classes is None:
            if self.label_mode == "multi_label":
                self.num_classes = self.labels.shape[1]
            else:
                self.num_classes = int(self.labels.max().item()) + 1 if len(self.labels) else 0

    def __len__(self):
        return len(self.images)

    def subset(self, indices, suffix=""):
        idx = torch.as_tensor(indices, dtype=torch.long)
        return Dataset(self.images[idx], self.labels[idx],
                       [self.ids[i] + suffix for i in idx.tolist()],
                       label_mode=self.label_mode, num_classes=self.num_classes)


def batch_iter(ds: Dataset, batch_size: int, generator: torch.Generator | None = None,
               shuffle: bool = False, augment=None):
    """Yield (x, y) batches; shuffle order comes from ``generator`` only."""
    n = len(ds)
    if shuffle:
        if generator is None:
            generator = torch.Generator().manual_seed(0)
        order = torch.randperm(n, generator=generator)
    else:
        order = torch.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        x = ds.images[idx]
        if augment is not None:
            x = augment(x)
        yield x, ds.labels[idx]


def half_split(ds: Dataset, seed: int = 0):
    """Deterministic 50/50 split of a training set (search train/val halves)."""
    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(ds), generator=gen)
    half = len(ds) // 2
    return ds.subset(order[:half]), ds.subset(order[half:])


def resize_dataset(ds: Dataset, resolution: int) -> Dataset:
    if ds.images.shape[-1] == resolution and ds.images.shape[-2] == resolution:
        return ds
    images = F.interpolate(ds.images, size=(resolution, resolution),
                           mode="bilinear", align_corners=False)
    return Dataset(images, ds.labels, list(ds.ids),
                   label_mode=ds.label_mode, num_classes=ds.num_classes)


def channel_stats(ds: Dataset):
    mean = ds.images.mean(dim=(0, 2, 3))
    std = ds.images.std(dim=(0, 2, 3)).clamp_min(1e-6)
    return mean.tolist(), std.tolist()


def normalize(ds: Dataset, mean, std) -> Dataset:
    mean = torch.tensor(mean).view(1, -1, 1, 1)
    std = torch.tensor(std).view(1, -1, 1, 1)
    return Dataset((ds.images - mean) / std, ds.labels, list(ds.ids),
                   label_mode=ds.label_mode, num_classes=ds.num_classes)


# ---------------------------------------------------------------------------
# synthetic generator

def _class_pattern(c: int, h: int, w: int) -> np.ndarray:
    """A bright blob in a class-specific quadrant plus a class-keyed stripe
    texture; patterns are mutually distinct by construction."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    qy, qx = (c % 4) // 2, (c % 4) % 2
    cy = (0.25 + 0.5 * qy) * h
    cx = (0.25 + 0.5 * qx) * w
    sigma = 0.15 * min(h, w) * (1.0 + 0.15 * (c // 4))
    blob = 0.35 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    freq = 2.0 * math.pi * (c + 2) / w
    stripes = 0.1 * np.sin(freq * (xx + (c % 3) * yy))
    pattern = np.stack([blob * (1.0 if ch == c % 3 else 0.4) + stripes
                        for ch in range(3)])
    return pattern


def synth_generate(num_classes: int, label_mode: str, resolution, n_per_split: int,
                   background_uniformity: float = 0.8, seed: int = 0,
                   splits=("train", "test")) -> dict:
    """Procedural patches with exact labels; deterministic per seed."""
    if n_per_split < 1:
        raise ConfigError("n_per_split must be at least 1")
    if not 0.0 <= background_uniformity <= 1.0:
        raise ConfigError("background_uniformity must lie in [0, 1]")
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    if label_mode not in ("single_label", "multi_label"):
        raise ConfigError(f"unknown label mode {label_mode!r}")
    h, w = (resolution, resolution) if isinstance(resolution, int) else resolution
    rng = np.random.default_rng(seed)
    patterns = [_class_pattern(c, h, w) for c in range(num_classes)]
    noise_scale = 0.5 * (1.0 - background_uniformity)

    def background_field():
        # spatially correlated clutter: low-res noise upsampled, so it forms
        # blob-like structure that competes with the class patterns
        coarse = rng.standard_normal((3, h // 8 + 1, w // 8 + 1))
        field = torch.nn.functional.interpolate(
            torch.from_numpy(coarse[None]), size=(h, w),
            mode="bilinear", align_corners=False)[0].numpy()
        fine = rng.standard_normal((3, h, w))
        mix = 0.8 * field / max(field.std(), 1e-8) + 0.2 * fine
        return mix / max(mix.std(), 1e-8)
    out = {}
    for split in splits:
        images = np.empty((n_per_split, 3, h, w), dtype=np.float32)
        if label_mode == "single_label":
            labels = rng.integers(0, num_classes, size=n_per_split)
            y = torch.as_tensor(labels, dtype=torch.long)
        else:
            labels = rng.integers(0, 2, size=(n_per_split, num_classes))
            # guarantee at least one active class per sample
            empties = labels.sum(axis=1) == 0
            labels[empties, rng.integers(0, num_classes, size=int(empties.sum()))] = 1
            y = torch.as_tensor(labels, dtype=torch.float32)
        for i in range(n_per_split):
            base = 0.4 + (noise_scale * background_field() if noise_scale > 0
                          else np.zeros((3, h, w)))
            if label_mode == "single_label":
                base += patterns[int(labels[i])]
            else:
                for c in np.nonzero(labels[i])[0]:
                    base += patterns[int(c)]
            images[i] = np.clip(base, 0.0, 1.5)
        ids = [f"synth-{split}-{i:05d}" for i in range(n_per_split)]
        out[split] = Dataset(torch.from_numpy(images), y, ids,
                             label_mode=label_mode, num_classes=num_classes)
    return out


# ---------------------------------------------------------------------------
# tiny-image binary batches

def _load_pickle(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="bytes")
    except FileNotFoundError:
        raise DataValidationError(f"missing dataset file: {path}") from None
    except Exception as exc:
        raise DataValidationError(f"corrupt dataset file {path}: {exc}") from exc


def _batch_arrays(entry: dict, path: Path):
    data = entry.get(b"data")
    labels = entry.get(b"labels", entry.get(b"fine_labels"))
    if data is None or labels is None:
        raise DataValidationError(f"file {path} lacks data/labels fields")
    arr = np.asarray(data, dtype=np.uint8).reshape(-1, 3, 32, 32)
    return arr, np.asarray(labels, dtype=np.int64)


def load_cifar_format(path, search_mode: bool = False, seed: int = 0) -> dict:
    """Load the standard pickled-batch layout of the 10/100-class corpora.

    Returns {"train", "test"} splits, or {"train", "val", "test"} in search
    mode where the training set is re-split in half. Per-channel train-split
    normalization constants are cached next to the data.
    """
    root = Path(path)
    if (root / "train").exists():  # 100-class layout
        train_files, test_file = ["train"], "test"
    else:
        train_files, test_file = CIFAR10_FILES, "test_batch"
    arrays, labels = [], []
    for name in train_files:
        arr, lab = _batch_arrays(_load_pickle(root / name), root / name)
        arrays.append(arr)
        labels.append(lab)
    train_x = np.concatenate(arrays)
    train_y = np.concatenate(labels)
    test_x, test_y = _batch_arrays(_load_pickle(root / test_file), root / test_file)

    def to_ds(x, y, split):
        images = torch.from_numpy(x).float() / 255.0
        ids = [f"{split}-{i:05d}" for i in range(len(x))]
        return Dataset(images, torch.from_numpy(y), ids, label_mode="single_label",
                       num_classes=int(max(train_y.max(), test_y.max())) + 1)

    train = to_ds(train_x, train_y, "train")
    test = to_ds(test_x, test_y, "test")

    stats_file = root / "normalization.json"
    if stats_file.exists():
        stats = json.loads(stats_file.read_text())
    else:
        mean, std = channel_stats(train)
        stats = {"mean": mean, "std": std}
        try:
            stats_file.write_text(json.dumps(stats))
        except OSError:
            pass
    train = normalize(train, stats["mean"], stats["std"])
    test = normalize(test, stats["mean"], stats["std"])
    if search_mode:
        search_train, search_val = half_split(train, seed=seed)
        return {"train": search_train, "val": search_val, "test": test}
    return {"train": train, "test": test}


# ---------------------------------------------------------------------------
# patch folder + manifest

def load_patch_dataset(path, label_mode: str = "multi_label", search_mode: bool = False,
                       search_resolution: int = 64, resolution: int | None = None,
                       seed: int = 0) -> dict:
    """Images in a directory plus ``manifest.csv``.

    Manifest header: ``filename,<class_0>,...`` (multi-label, one 0/1 column
    per class) or ``filename,label`` (single-label).
    """
    from PIL import Image

    root = Path(path)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise DataValidationError(f"missing manifest: {manifest}")
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "filename":
            raise DataValidationError("manifest header must start with 'filename'")
        rows = list(reader)
    if not rows:
        raise DataValidationError("manifest lists no samples")
    class_names = header[1:]
    if label_mode == "multi_label":
        num_classes = len(class_names)
    else:
        if header[1:] != ["label"]:
            raise DataValidationError("single-label manifest needs a 'label' column")
        num_classes = None

    missing = [r[0] for r in rows if not (root / r[0]).exists()]
    if missing:
        raise DataValidationError(f"manifest names missing images: {missing[:10]}")

    images, labels, ids = [], [], []
    for row in rows:
        img = Image.open(root / row[0]).convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
        images.append(torch.from_numpy(arr).permute(2, 0, 1))
        ids.append(row[0])
        if label_mode == "multi_label":
            if len(row) != 1 + num_classes:
                raise DataValidationError(
                    f"row for {row[0]} has {len(row) - 1} labels, expected {num_classes}"
                )
            labels.append([float(v) for v in row[1:]])
        else:
            labels.append(int(row[1]))
    x = torch.stack(images)
    if label_mode == "multi_label":
        y = torch.tensor(labels, dtype=torch.float32)
    else:
        y = torch.tensor(labels, dtype=torch.long)
        num_classes = int(y.max().item()) + 1
    ds = Dataset(x, y, ids, label_mode=label_mode, num_classes=num_classes)
    if resolution is not None:
        ds = resize_dataset(ds, resolution)
    if search_mode:
        ds = resize_dataset(ds, search_resolution)
        train, val = half_split(ds, seed=seed)
        return {"train": train, "val": val}
    return {"train": ds}


# ---------------------------------------------------------------------------
# augmentation

def _random_affine(x: torch.Tensor, generator, max_deg=10.0, max_shift=0.1):
    n = x.shape[0]
    angle = (torch.rand(n, generator=generator) * 2 - 1) * math.radians(max_deg)
    shift = (torch.rand(n, 2, generator=generator) * 2 - 1) * max_shift
    cos, sin = torch.cos(angle), torch.sin(angle)
    theta = torch.zeros(n, 2, 3)
    theta[:, 0, 0] = cos
    theta[:, 0, 1] = -sin
    theta[:, 1, 0] = sin
    theta[:, 1, 1] = cos
    theta[:, :, 2] = shift
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return F.grid_sample(x, grid, align_corners=False, padding_mode="reflection")


def augment(batch: torch.Tensor, policy: str, generator: torch.Generator) -> torch.Tensor:
    """Shape- and label-preserving augmentation, deterministic per generator."""
    if policy == "identity":
        return batch
    if policy == "crop_flip":  # tiny-image: pad-4 random crop + horizontal flip
        n, _, h, w = batch.shape
        padded = F.pad(batch, (4, 4, 4, 4), mode="reflect")
        oy = torch.randint(0, 9, (n,), generator=generator)
        ox = torch.randint(0, 9, (n,), generator=generator)
        flip = torch.rand(n, generator=generator) < 0.5
        out = torch.empty_like(batch)
        for i in range(n):
            crop = padded[i, :, oy[i]:oy[i] + h, ox[i]:ox[i] + w]
            out[i] = torch.flip(crop, dims=[-1]) if flip[i] else crop
        return out
    if policy == "patch":  # horizontal+vertical flip, then random affine
        n = batch.shape[0]
        hflip = torch.rand(n, generator=generator) < 0.5
        vflip = torch.rand(n, generator=generator) < 0.5
        out = batch.clone()
        out[hflip] = torch.flip(out[hflip], dims=[-1])
        out[vflip] = torch.flip(out[vflip], dims=[-2])
        return _random_affine(out, generator)
    raise ConfigError(f"unknown augmentation policy {policy!r}")


def make_augment_fn(policy: str, seed: int):
    if policy == "identity":
        return None
    gen = torch.Generator().manual_seed(seed)
    return lambda batch: augment(batch, policy, gen)


def assert_disjoint_splits(splits: dict) -> None:
    seen = {}
    for name, ds in splits.items():
        for sample_id in ds.ids:
            if sample_id in seen and seen[sample_id] != name:
                raise ContractError(
                    f"sample {sample_id} appears in splits {seen[sample_id]} and {name}"
                )
            seen[sample_id] = name
