"""Parameter and multiply-accumulate accounting.

MACs follow the dominant-term convention: one MAC per multiply+add of a
convolution or linear layer; batch norm, activations, pooling and skips
count zero. The auxiliary head is excluded from reported figures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ShapeError


@dataclass
class ComplexityReport:
    params: int
    macs: int
    per_layer: list = field(default_factory=list)  # (layer_id, kind, params, macs)
    input_resolution: tuple = None

    def conv_macs(self) -> int:
        return sum(m for _, kind, _, m in self.per_layer if kind == "conv")

    def to_text(self) -> str:
        lines = [f"input_resolution: {self.input_resolution}",
                 f"params: {self.params}", f"macs: {self.macs}", "layers:"]
        for layer_id, kind, p, m in self.per_layer:
            lines.append(f"  {layer_id} [{kind}] params={p} macs={m}")
        return "\n".join(lines) + "\n"


def _is_aux(name: str) -> bool:
    return name.startswith("auxiliary_head")


def count_params(network: nn.Module) -> int:
    """Trainable scalar count, auxiliary head excluded."""
    total = 0
    for name, param in network.named_parameters():
        if param.requires_grad and not _is_aux(name):
            total += param.numel()
    return total


def _layer_report(network: nn.Module, resolution, forward_fn):
    h, w = (resolution, resolution) if isinstance(resolution, int) else resolution
    records = []
    hooks = []

    def conv_hook(name):
        def fn(module, inputs, output):
            kh, kw = module.kernel_size
            macs = (module.out_channels * (module.in_channels // module.groups)
                    * kh * kw * output.shape[-2] * output.shape[-1])
            params = sum(p.numel() for p in module.parameters() if p.requires_grad)
            records.append((name, "conv", params, int(macs)))
        return fn

    def linear_hook(name):
        def fn(module, inputs, output):
            params = sum(p.numel() for p in module.parameters() if p.requires_grad)
            records.append((name, "linear", params, module.in_features * module.out_features))
        return fn

    def bn_hook(name):
        def fn(module, inputs, output):
            params = sum(p.numel() for p in module.parameters() if p.requires_grad)
            if params:
                records.append((name, "bn", params, 0))
        return fn

    for name, module in network.named_modules():
        if _is_aux(name):
            continue
        if isinstance(module, nn.Conv2d):
            hooks.append(module.register_forward_hook(conv_hook(name)))
        elif isinstance(module, nn.Linear):
            hooks.append(module.register_forward_hook(linear_hook(name)))
        elif isinstance(module, nn.BatchNorm2d):
            hooks.append(module.register_forward_hook(bn_hook(name)))
    was_training = network.training
    network.eval()
    try:
        dtype = next(network.parameters()).dtype
        x = torch.zeros(1, 3, h, w, dtype=dtype)
        with torch.no_grad():
            forward_fn(x)
    except RuntimeError as exc:
        raise ShapeError(f"resolution {(h, w)} incompatible with the network: {exc}") from exc
    finally:
        for hook in hooks:
            hook.remove()
        network.train(was_training)
    return records


def count_macs(network: nn.Module, input_resolution, forward_fn=None) -> ComplexityReport:
    """Traverse one forward pass and tally per-layer params and MACs.

    Non-conv parameters (batch norm, etc.) are folded into the params total
    but carry zero MACs.
    """
    if forward_fn is None:
        forward_fn = network
    per_layer = _layer_report(network, input_resolution, forward_fn)
    macs = sum(m for _, _, _, m in per_layer)
    h, w = ((input_resolution, input_resolution) if isinstance(input_resolution, int)
            else tuple(input_resolution))
    return ComplexityReport(params=count_params(network), macs=macs,
                            per_layer=per_layer, input_resolution=(h, w))
