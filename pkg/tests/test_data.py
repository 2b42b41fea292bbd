"""Dataset generator and loader tests, including stand-in binary batches and
patch manifests."""

import csv
import pickle

import numpy as np
import pytest
import torch

from cellsearch.data import (Dataset, assert_disjoint_splits, augment,
                             batch_iter, channel_stats, half_split,
                             load_cifar_format, load_patch_dataset,
                             make_augment_fn, normalize, resize_dataset,
                             synth_generate)
from cellsearch.errors import ConfigError, ContractError, DataValidationError


def test_synth_shapes_and_determinism():
    a = synth_generate(4, "single_label", 32, 20, seed=3)
    b = synth_generate(4, "single_label", 32, 20, seed=3)
    c = synth_generate(4, "single_label", 32, 20, seed=4)
    for split in ("train", "test"):
        assert a[split].images.shape == (20, 3, 32, 32)
        assert a[split].images.dtype == torch.float32
        assert torch.equal(a[split].images, b[split].images)
        assert torch.equal(a[split].labels, b[split].labels)
    assert not torch.equal(a["train"].images, c["train"].images)


def test_synth_uniform_background_is_constant():
    splits = synth_generate(4, "single_label", 16, 8, background_uniformity=1.0,
                            seed=0)
    images, labels = splits["train"].images, splits["train"].labels
    # with u = 1 there is no clutter: same label -> identical image
    by_class = {}
    for img, lab in zip(images, labels.tolist()):
        if lab in by_class:
            assert torch.equal(img, by_class[lab])
        by_class[lab] = img


def test_synth_uniformity_controls_clutter():
    hard = synth_generate(4, "single_label", 32, 16, background_uniformity=0.0,
                          seed=0)["train"]
    easy = synth_generate(4, "single_label", 32, 16, background_uniformity=0.9,
                          seed=0)["train"]
    assert hard.images.std() > easy.images.std()


def test_synth_multi_label_has_active_class():
    splits = synth_generate(5, "multi_label", 16, 40, seed=1)
    labels = splits["train"].labels
    assert labels.shape == (40, 5)
    assert (labels.sum(dim=1) >= 1).all()
    assert splits["train"].label_mode == "multi_label"


def test_synth_validation():
    with pytest.raises(ConfigError):
        synth_generate(1, "single_label", 16, 8)
    with pytest.raises(ConfigError):
        synth_generate(4, "single_label", 16, 0)
    with pytest.raises(ConfigError):
        synth_generate(4, "single_label", 16, 8, background_uniformity=1.5)
    with pytest.raises(ConfigError):
        synth_generate(4, "both", 16, 8)


def test_synth_is_learnable_quickly():
    """A tiny convnet must exceed 80% train accuracy within 20 epochs."""
    splits = synth_generate(4, "single_label", 32, 96, seed=0,
                            background_uniformity=0.8)
    train = splits["train"]
    net = torch.nn.Sequential(
        torch.nn.Conv2d(3, 8, 3, stride=2, padding=1), torch.nn.ReLU(),
        torch.nn.Conv2d(8, 8, 3, stride=2, padding=1), torch.nn.ReLU(),
        torch.nn.Flatten(), torch.nn.Linear(8 * 8 * 8, 4))
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    gen = torch.Generator().manual_seed(0)
    acc = 0.0
    for _ in range(20):
        correct = total = 0
        for x, y in batch_iter(train, 32, generator=gen, shuffle=True):
            opt.zero_grad()
            logits = net(x)
            loss = torch.nn.functional.cross_entropy(logits, y)
            loss.backward()
            opt.step()
            correct += (logits.argmax(1) == y).sum().item()
            total += len(y)
        acc = correct / total
        if acc > 0.8:
            break
    assert acc > 0.8


def test_batch_iter_order_and_augment_hook():
    ds = synth_generate(3, "single_label", 8, 10, seed=0)["train"]
    plain = [y for _, y in batch_iter(ds, 4)]
    assert torch.equal(torch.cat(plain), ds.labels)
    g1 = torch.Generator().manual_seed(5)
    g2 = torch.Generator().manual_seed(5)
    b1 = [x for x, _ in batch_iter(ds, 4, generator=g1, shuffle=True)]
    b2 = [x for x, _ in batch_iter(ds, 4, generator=g2, shuffle=True)]
    for x1, x2 in zip(b1, b2):
        assert torch.equal(x1, x2)
    calls = []
    list(batch_iter(ds, 4, augment=lambda x: calls.append(len(x)) or x))
    assert calls == [4, 4, 2]


def test_half_split_disjoint_and_deterministic():
    ds = synth_generate(3, "single_label", 8, 21, seed=0)["train"]
    a1, b1 = half_split(ds, seed=2)
    a2, b2 = half_split(ds, seed=2)
    assert a1.ids == a2.ids and b1.ids == b2.ids
    assert len(a1) == 10 and len(b1) == 11
    assert not set(a1.ids) & set(b1.ids)
    assert_disjoint_splits({"train": a1, "val": b1})
    with pytest.raises(ContractError):
        assert_disjoint_splits({"train": a1, "val": a1.subset(range(3))})


def test_resize_and_normalize():
    ds = synth_generate(3, "single_label", 16, 6, seed=0)["train"]
    up = resize_dataset(ds, 32)
    assert up.images.shape == (6, 3, 32, 32)
    assert resize_dataset(ds, 16) is ds  # no-op path
    mean, std = channel_stats(ds)
    normed = normalize(ds, mean, std)
    m2, s2 = channel_stats(normed)
    assert np.allclose(m2, 0.0, atol=1e-5)
    assert np.allclose(s2, 1.0, atol=1e-4)


def test_dataset_validation():
    with pytest.raises(DataValidationError):
        Dataset(torch.zeros(3, 3, 4, 4), torch.zeros(2, dtype=torch.long),
                ["a", "b", "c"])


# ---------------------------------------------------------------------------
# binary-batch stand-in corpus

def _write_cifar_standin(root, train_total=50_000, test_total=10_000):
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    per = train_total // 5
    for i in range(5):
        data = rng.integers(0, 256, size=(per, 3072), dtype=np.uint8)
        labels = rng.integers(0, 10, size=per).tolist()
        with open(root / f"data_batch_{i + 1}", "wb") as fh:
            pickle.dump({b"data": data, b"labels": labels}, fh)
    data = rng.integers(0, 256, size=(test_total, 3072), dtype=np.uint8)
    labels = rng.integers(0, 10, size=test_total).tolist()
    with open(root / "test_batch", "wb") as fh:
        pickle.dump({b"data": data, b"labels": labels}, fh)


def test_cifar_loader_split_sizes(tmp_path):
    _write_cifar_standin(tmp_path / "cifar", train_total=500, test_total=100)
    splits = load_cifar_format(tmp_path / "cifar")
    assert len(splits["train"]) == 500
    assert len(splits["test"]) == 100
    assert splits["train"].images.shape[1:] == (3, 32, 32)
    # normalization constants cached next to the data
    assert (tmp_path / "cifar" / "normalization.json").exists()


def test_cifar_search_mode_half_split(tmp_path):
    _write_cifar_standin(tmp_path / "cifar", train_total=200, test_total=40)
    splits = load_cifar_format(tmp_path / "cifar", search_mode=True, seed=0)
    assert len(splits["train"]) == 100
    assert len(splits["val"]) == 100
    assert not set(splits["train"].ids) & set(splits["val"].ids)


def test_cifar_missing_and_corrupt_files(tmp_path):
    with pytest.raises(DataValidationError):
        load_cifar_format(tmp_path / "nothing")
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "data_batch_1").write_bytes(b"not a pickle")
    with pytest.raises(DataValidationError):
        load_cifar_format(bad)


def test_cifar100_layout(tmp_path):
    root = tmp_path / "c100"
    root.mkdir()
    rng = np.random.default_rng(1)
    for name, n in (("train", 120), ("test", 30)):
        data = rng.integers(0, 256, size=(n, 3072), dtype=np.uint8)
        labels = rng.integers(0, 100, size=n).tolist()
        with open(root / name, "wb") as fh:
            pickle.dump({b"data": data, b"fine_labels": labels}, fh)
    splits = load_cifar_format(root)
    assert len(splits["train"]) == 120
    assert splits["train"].num_classes > 10


# ---------------------------------------------------------------------------
# patch folder + manifest

def _write_patch_corpus(root, n=6, num_classes=33, size=24):
    from PIL import Image

    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    rows = []
    for i in range(n):
        name = f"patch_{i:03d}.png"
        arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        Image.fromarray(arr).save(root / name)
        labels = rng.integers(0, 2, size=num_classes)
        labels[i % num_classes] = 1
        rows.append([name] + labels.tolist())
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename"] + [f"class_{c}" for c in range(num_classes)])
        writer.writerows(rows)


def test_patch_loader_33_column_manifest(tmp_path):
    _write_patch_corpus(tmp_path / "patches", num_classes=33)
    splits = load_patch_dataset(tmp_path / "patches")
    ds = splits["train"]
    assert ds.num_classes == 33
    assert ds.labels.shape[1] == 33
    assert ds.images.shape[1:] == (3, 24, 24)


def test_patch_loader_search_mode_resizes(tmp_path):
    _write_patch_corpus(tmp_path / "patches", n=8, num_classes=4)
    splits = load_patch_dataset(tmp_path / "patches", search_mode=True,
                                search_resolution=16)
    assert splits["train"].images.shape[-1] == 16
    assert len(splits["train"]) + len(splits["val"]) == 8


def test_patch_loader_validation(tmp_path):
    with pytest.raises(DataValidationError):
        load_patch_dataset(tmp_path / "missing")
    root = tmp_path / "p"
    _write_patch_corpus(root, n=3, num_classes=4)
    manifest = (root / "manifest.csv").read_text().splitlines()
    # row with a wrong column count
    (root / "manifest.csv").write_text(
        "\n".join(manifest[:1] + [manifest[1].rsplit(",", 1)[0]] + manifest[2:]))
    with pytest.raises(DataValidationError):
        load_patch_dataset(root)
    # manifest naming a missing image
    (root / "manifest.csv").write_text(
        "filename,class_0\nno_such_file.png,1\n")
    with pytest.raises(DataValidationError):
        load_patch_dataset(root)


# ---------------------------------------------------------------------------
# augmentation

def test_augment_shapes_and_determinism():
    x = torch.rand(6, 3, 16, 16)
    for policy in ("crop_flip", "patch"):
        g1 = torch.Generator().manual_seed(9)
        g2 = torch.Generator().manual_seed(9)
        a1 = augment(x, policy, g1)
        a2 = augment(x, policy, g2)
        assert a1.shape == x.shape
        assert torch.equal(a1, a2)
        assert not torch.equal(a1, x)
    assert augment(x, "identity", torch.Generator()) is x
    with pytest.raises(ConfigError):
        augment(x, "mixup", torch.Generator())


def test_make_augment_fn():
    assert make_augment_fn("identity", 0) is None
    fn = make_augment_fn("crop_flip", 0)
    x = torch.rand(4, 3, 16, 16)
    assert fn(x).shape == x.shape
