"""Stable-rank probing of convolutional layers.

Each 4-axis conv weight (out, in, kh, kw) is unfolded output-mode into an
(out, in*kh*kw) matrix. Singular values at or above ``delta * sigma_1`` are
retained; the stable rank is their sum normalized by d * sigma_1 with
d = min(rows, cols), which pins the value into [0, 1] and makes it
invariant to rescaling the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import ContractError, NumericError, ShapeError

DEFAULT_DELTA = 0.01
#: sigma_1 below this is treated as an identically-zero weight
ZERO_TOL = 1e-12


@dataclass
class LayerProbeSeries:
    """Per-epoch stable-rank values for one conv layer."""

    layer_id: str
    values: list = field(default_factory=list)  # [(epoch, stable_rank)]

    def append(self, epoch: int, s: float):
        if self.values and epoch <= self.values[-1][0]:
            raise ContractError(
                f"epochs must be strictly increasing for layer {self.layer_id}"
            )
        if not 0.0 <= s <= 1.0:
            raise ContractError(f"stable rank {s} outside [0, 1] for {self.layer_id}")
        self.values.append((epoch, s))

    @property
    def epochs(self):
        return [e for e, _ in self.values]

    @property
    def stable_ranks(self):
        return [s for _, s in self.values]


def unfold_conv_weight(weight: torch.Tensor) -> torch.Tensor:
    """(out, in, kh, kw) -> (out, in*kh*kw), row-major over (in, kh, kw)."""
    if weight.dim() != 4:
        raise ShapeError(f"expected a 4-axis conv weight, got {weight.dim()} axes")
    return weight.reshape(weight.shape[0], -1)


def estimate_rank(singular_values, delta: float) -> int:
    """Count singular values at or above delta * sigma_1."""
    if not 0.0 < delta < 1.0:
        raise ContractError(f"delta must be in (0, 1), got {delta}")
    sv = torch.as_tensor(singular_values, dtype=torch.float64)
    if sv.numel() == 0:
        return 0
    if (sv < 0).any():
        raise ContractError("singular values must be nonnegative")
    if (sv[:-1] < sv[1:]).any():
        raise ContractError("singular values must be sorted descending")
    top = sv[0].item()
    if top <= ZERO_TOL:
        return 0
    return int((sv >= delta * top).sum().item())


def stable_rank(weight: torch.Tensor, delta: float = DEFAULT_DELTA) -> float:
    """Normalized sum of the retained singular values of the unfolded weight."""
    mat = unfold_conv_weight(weight).detach().to(torch.float64)
    try:
        sv = torch.linalg.svdvals(mat)
    except Exception as exc:  # pragma: no cover - numerical failure path
        raise NumericError(f"singular value decomposition failed: {exc}") from exc
    top = sv[0].item()
    if top <= ZERO_TOL:
        return 0.0
    r = estimate_rank(sv, delta)
    d = min(mat.shape)
    return float(sv[:r].sum().item() / (d * top))


def probe_network(network, epoch: int, series: dict | None = None,
                  delta: float = DEFAULT_DELTA) -> dict:
    """Append the current stable rank of every registered conv layer.

    Read-only with respect to weights. Returns the (updated) mapping
    layer_id -> LayerProbeSeries.
    """
    if series is None:
        series = {}
    for layer_id, module in network.conv_registry():
        s = stable_rank(module.weight, delta=delta)
        series.setdefault(layer_id, LayerProbeSeries(layer_id)).append(epoch, s)
    return series
