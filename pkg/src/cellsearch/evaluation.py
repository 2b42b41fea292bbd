"""Discrete-network construction and from-scratch training.

The evaluation network shares the supernet's macro layout (stem, reduction
placement at 1/3 and 2/3 depth, global pooling + linear classifier) but each
cell realizes the genotype's (op, source) picks directly. An optional
auxiliary classifier hangs off the cell at the second reduction position and
its loss is added with a configurable weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .data import Dataset, batch_iter, resize_dataset
from .errors import ConfigError, ContractError, DivergenceError
from .genotype import Genotype
from .metrics import batch_accuracy, make_criterion
from .ops import FactorizedReduce, Identity, OpKind, ReLUConvBN, make_op
from .searchspace import _make_stem, default_reduction_positions


@dataclass
class EvalConfig:
    epochs: int = 600
    batch_size: int = 96
    init_channels: int = 36
    lr0: float = 0.025
    momentum: float = 0.9
    weight_decay: float = 3e-4
    cosine: bool = True
    cutout: bool = False
    cutout_length: int | None = None  # None -> half the input side
    auxiliary: bool = False
    auxiliary_weight: float = 0.4
    quick_epochs: int = 100
    stem: str = "tiny"
    stem_multiplier: int = 3

    def __post_init__(self):
        for name in ("epochs", "batch_size", "init_channels", "quick_epochs"):
            if getattr(self, name) < 0 or (name != "epochs" and getattr(self, name) == 0):
                raise ConfigError(f"{name} must be positive")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.quick_epochs > self.epochs and self.epochs > 0:
            raise ConfigError("quick_epochs may not exceed epochs")


class DiscreteCell(nn.Module):
    """One genotype cell: each node sums its two selected op outputs."""

    def __init__(self, picks, concat, channels, c_prev_prev, c_prev,
                 reduction, reduction_prev):
        super().__init__()
        self.reduction = reduction
        self.concat = list(concat)
        if reduction_prev:
            self.preprocess0 = FactorizedReduce(c_prev_prev, channels)
        else:
            self.preprocess0 = ReLUConvBN(c_prev_prev, channels, 1, 1, 0)
        self.preprocess1 = ReLUConvBN(c_prev, channels, 1, 1, 0)
        self.num_nodes = len(picks)
        self.sources = []
        self.ops = nn.ModuleList()
        for pairs in picks:
            for op, src in pairs:
                stride = 2 if reduction and src < 2 else 1
                op = OpKind(op)
                if op is OpKind.SKIP_CONNECT and stride == 1:
                    module = Identity()
                else:
                    module = make_op(op, channels, stride)
                self.ops.append(module)
                self.sources.append(src)
        self.multiplier = len(self.concat)

    def forward(self, s0, s1):
        s0 = self.preprocess0(s0)
        s1 = self.preprocess1(s1)
        states = [s0, s1]
        for t in range(self.num_nodes):
            a = self.ops[2 * t](states[self.sources[2 * t]])
            b = self.ops[2 * t + 1](states[self.sources[2 * t + 1]])
            states.append(a + b)
        return torch.cat([states[j] for j in self.concat], dim=1)


class AuxiliaryHead(nn.Module):
    """Small classifier attached mid-network; input size independent."""

    def __init__(self, c_in, num_classes):
        super().__init__()
        self.features = nn.Sequential(
            nn.ReLU(inplace=False),
            nn.AdaptiveAvgPool2d(2),
            nn.Conv2d(c_in, 128, 1, bias=False),
            nn.BatchNorm2d(128),
            nn.ReLU(inplace=False),
            nn.Conv2d(128, 768, 2, bias=False),
            nn.BatchNorm2d(768),
            nn.ReLU(inplace=False),
        )
        self.classifier = nn.Linear(768, num_classes)

    def forward(self, x):
        return self.classifier(self.features(x).flatten(1))


class EvalNetwork(nn.Module):
    def __init__(self, genotype: Genotype, num_cells, init_channels, num_classes,
                 auxiliary=False, stem="tiny", stem_multiplier=3):
        super().__init__()
        self.genotype = genotype
        self.reduction_positions = default_reduction_positions(num_cells)
        self._aux_position = max(self.reduction_positions)
        c_curr = stem_multiplier * init_channels
        self.stem = _make_stem(stem, c_curr)
        c_prev_prev, c_prev, c_curr = c_curr, c_curr, init_channels
        self.cells = nn.ModuleList()
        reduction_prev = False
        c_aux = None
        for i in range(num_cells):
            reduction = i in self.reduction_positions
            if reduction:
                c_curr *= 2
            picks = genotype.reduce if reduction else genotype.normal
            cell = DiscreteCell(picks, genotype.concat, c_curr, c_prev_prev,
                                c_prev, reduction, reduction_prev)
            self.cells.append(cell)
            reduction_prev = reduction
            c_prev_prev, c_prev = c_prev, cell.multiplier * c_curr
            if i == self._aux_position:
                c_aux = c_prev
        self.global_pooling = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(c_prev, num_classes)
        # constructed last so its presence never shifts the RNG draws that
        # initialize the main trunk
        self.auxiliary_head = AuxiliaryHead(c_aux, num_classes) if auxiliary else None

    def forward(self, x):
        s0 = s1 = self.stem(x)
        aux_logits = None
        for i, cell in enumerate(self.cells):
            s0, s1 = s1, cell(s0, s1)
            if i == self._aux_position and self.auxiliary_head is not None and self.training:
                aux_logits = self.auxiliary_head(s1)
        logits = self.classifier(self.global_pooling(s1).flatten(1))
        return logits, aux_logits

    def conv_registry(self):
        registry = []
        for name, module in self.named_modules():
            if isinstance(module, nn.Conv2d) and not name.startswith("auxiliary_head"):
                registry.append((f"{len(registry)}:{name}", module))
        return registry


def build_eval_network(g: Genotype, cfg: EvalConfig, num_classes: int,
                       label_mode: str, seed: int | None = None) -> EvalNetwork:
    num_cells = g.meta.get("num_cells")
    if num_cells is None:
        raise ConfigError("genotype meta lacks num_cells")
    if g.meta.get("nodes") not in (None, "-", g.num_nodes):
        raise ConfigError(
            f"genotype meta declares {g.meta['nodes']} nodes but lists {g.num_nodes}"
        )
    if label_mode not in ("single_label", "multi_label"):
        raise ConfigError(f"unknown label mode {label_mode!r}")
    if seed is not None:
        torch.manual_seed(seed)
    return EvalNetwork(g, num_cells, cfg.init_channels, num_classes,
                       auxiliary=cfg.auxiliary, stem=cfg.stem,
                       stem_multiplier=cfg.stem_multiplier)


def cosine_schedule(lr0: float, epoch: int, total: int) -> float:
    if total <= 0:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * min(epoch, total) / total))


def cutout(batch: torch.Tensor, length: int, generator: torch.Generator) -> torch.Tensor:
    """Zero a length x length square per image, clipped at the borders."""
    n, _, h, w = batch.shape
    out = batch.clone()
    cy = torch.randint(0, h, (n,), generator=generator)
    cx = torch.randint(0, w, (n,), generator=generator)
    half = length // 2
    for i in range(n):
        y0 = max(0, int(cy[i]) - half)
        y1 = min(h, int(cy[i]) + half)
        x0 = max(0, int(cx[i]) - half)
        x1 = min(w, int(cx[i]) + half)
        out[i, :, y0:y1, x0:x1] = 0.0
    return out


def train_eval(network: EvalNetwork, data: dict, cfg: EvalConfig, seed: int,
               label_mode: str = "single_label", epochs: int | None = None,
               augment_policy=None):
    """Train the discrete network from scratch; returns (network, history).

    ``data`` maps split names to Dataset; "train" and "test" are required.
    """
    epochs = cfg.epochs if epochs is None else epochs
    criterion = make_criterion(label_mode)
    optimizer = torch.optim.SGD(network.parameters(), lr=cfg.lr0,
                                momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    gen = torch.Generator().manual_seed(seed)
    train_ds = data["train"]
    cut_len = cfg.cutout_length or train_ds.images.shape[-1] // 2
    history = []
    for epoch in range(epochs):
        lr = cosine_schedule(cfg.lr0, epoch, epochs) if cfg.cosine else cfg.lr0
        for group in optimizer.param_groups:
            group["lr"] = lr
        network.train()
        t_loss = t_acc = 0.0
        n = 0
        for b, (x, y) in enumerate(
            batch_iter(train_ds, cfg.batch_size, generator=gen,
                       shuffle=True, augment=augment_policy)
        ):
            if cfg.cutout:
                x = cutout(x, cut_len, gen)
            optimizer.zero_grad()
            logits, aux_logits = network(x)
            loss = criterion(logits, y)
            if aux_logits is not None:
                loss = loss + cfg.auxiliary_weight * criterion(aux_logits, y)
            if not torch.isfinite(loss):
                raise DivergenceError("non-finite loss in evaluation training",
                                      epoch=epoch, batch_index=b)
            loss.backward()
            optimizer.step()
            t_loss += loss.item()
            t_acc += batch_accuracy(logits, y, label_mode)
            n += 1
        test_metrics = evaluate_metrics(network, data["test"], label_mode)
        history.append({
            "epoch": epoch + 1,
            "lr": lr,
            "train_loss": t_loss / max(n, 1),
            "train_acc": 100.0 * t_acc / max(n, 1),
            "test_loss": test_metrics["loss"],
            "test_acc": test_metrics["accuracy"],
        })
    return network, history


def evaluate_metrics(network, test_data: Dataset, label_mode: str,
                     batch_size: int = 128) -> dict:
    """Accuracy (percent) and mean loss over a held-out split."""
    if len(test_data) == 0:
        raise ContractError("test set is empty")
    criterion = make_criterion(label_mode)
    network.eval()
    total_loss = 0.0
    total_acc = 0.0
    total = 0
    with torch.no_grad():
        for x, y in batch_iter(test_data, batch_size, shuffle=False):
            out = network(x)
            logits = out[0] if isinstance(out, tuple) else out
            total_loss += criterion(logits, y).item() * len(x)
            total_acc += batch_accuracy(logits, y, label_mode) * len(x)
            total += len(x)
    network.train()
    return {"accuracy": 100.0 * total_acc / total, "loss": total_loss / total}


def resolution_sweep(g: Genotype, resolutions, data: dict, cfg: EvalConfig,
                     num_classes: int, label_mode: str, seed: int = 0,
                     epochs: int | None = None):
    """Retrain/evaluate at several input resolutions; returns result rows."""
    from .complexity import count_macs

    rows = []
    for res in resolutions:
        if res < 4:
            raise ConfigError(f"resolution {res} too small for two stride-2 reductions")
        scaled = {name: resize_dataset(ds, res) for name, ds in data.items()}
        network = build_eval_network(g, cfg, num_classes, label_mode, seed=seed)
        network, _history = train_eval(network, scaled, cfg, seed,
                                       label_mode=label_mode, epochs=epochs)
        metrics = evaluate_metrics(network, scaled["test"], label_mode)
        macs = count_macs(network, (res, res)).macs
        rows.append({"resolution": res, "accuracy": metrics["accuracy"], "macs": macs})
    return rows
