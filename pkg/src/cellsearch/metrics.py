"""Loss and accuracy helpers shared by search and evaluation."""

from __future__ import annotations

import torch
from torch import nn

from .errors import ConfigError


def make_criterion(label_mode: str):
    """Cross-entropy for single-label targets, per-class BCE for multi-label."""
    if label_mode == "single_label":
        return nn.CrossEntropyLoss()
    if label_mode == "multi_label":
        return nn.BCEWithLogitsLoss()
    raise ConfigError(f"unknown label mode {label_mode!r}")


def batch_accuracy(logits: torch.Tensor, targets: torch.Tensor, label_mode: str) -> float:
    """Top-1 match rate, or mean per-label binary accuracy at threshold 0.5."""
    with torch.no_grad():
        if label_mode == "single_label":
            pred = logits.argmax(dim=1)
            return (pred == targets).double().mean().item()
        if label_mode == "multi_label":
            pred = (torch.sigmoid(logits) > 0.5).to(targets.dtype)
            return (pred == targets).double().mean().item()
    raise ConfigError(f"unknown label mode {label_mode!r}")
