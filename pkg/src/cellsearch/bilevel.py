"""Alternating optimization of model weights and architecture parameters.

One search step pairs a validation batch (architecture update) with a
training batch (weight update). The architecture update is first-order:
the validation gradient is taken at the current weights. Weight updates are
momentum SGD with an independent learning rate per registered conv layer;
everything else (batch norm, classifier, stem biases) follows the mean of
the per-layer rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .adas import AdasState, adas_init, adas_update
from .errors import DivergenceError
from .metrics import batch_accuracy, make_criterion
from .probing import probe_network
from .searchspace import ArchitectureParams, Supernet

ALPHA_LR = 3e-4
ALPHA_BETAS = (0.5, 0.999)
ALPHA_WEIGHT_DECAY = 1e-3
W_MOMENTUM = 0.9
W_WEIGHT_DECAY = 3e-4


def build_weight_optimizer(network: Supernet, lr0: float,
                           momentum: float = W_MOMENTUM,
                           weight_decay: float = W_WEIGHT_DECAY) -> torch.optim.SGD:
    """SGD with one param group per conv layer plus a 'rest' group.

    Group order matches the probing registry, so ``set_layer_lrs`` can map an
    eta vector straight onto groups.
    """
    registry = network.conv_registry()
    conv_param_ids = set()
    groups = []
    for _layer_id, module in registry:
        params = [p for p in module.parameters() if p.requires_grad]
        conv_param_ids.update(id(p) for p in params)
        groups.append({"params": params, "lr": lr0})
    rest = [p for p in network.parameters()
            if p.requires_grad and id(p) not in conv_param_ids]
    groups.append({"params": rest, "lr": lr0})
    return torch.optim.SGD(groups, lr=lr0, momentum=momentum, weight_decay=weight_decay)


def set_layer_lrs(optimizer: torch.optim.SGD, eta) -> None:
    """Assign per-conv-layer rates; the trailing 'rest' group gets the mean."""
    eta = list(eta)
    groups = optimizer.param_groups
    if len(eta) != len(groups) - 1:
        raise DivergenceError(
            f"eta has {len(eta)} entries for {len(groups) - 1} conv groups"
        )
    for group, lr in zip(groups[:-1], eta):
        group["lr"] = float(lr)
    groups[-1]["lr"] = float(sum(eta) / len(eta)) if eta else groups[-1]["lr"]


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    if total_epochs <= 0:
        return lr0
    t = min(epoch, total_epochs)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total_epochs))


@dataclass
class SearchState:
    """Everything mutable across search epochs for one run."""

    network: Supernet
    arch: ArchitectureParams
    w_optimizer: torch.optim.SGD
    alpha_optimizer: torch.optim.Adam
    label_mode: str
    rng_seed: int
    epoch: int = 0
    optimizer_mode: str = "sgd"  # "sgd" (cosine schedule) | "adas"
    lr0: float = 0.025
    total_epochs: int = 50
    adas: AdasState = None
    probe_series: dict = field(default_factory=dict)
    probe_delta: float = 0.01
    criterion_fn: object = None

    @property
    def criterion(self):
        return self.criterion_fn or make_criterion(self.label_mode)


def make_search_state(network: Supernet, label_mode: str, seed: int,
                      optimizer_mode: str = "sgd", lr0: float = 0.025,
                      total_epochs: int = 50, adas_beta: float = 0.98,
                      adas_zeta: float = 1.0, adas_eta_min: float = 1e-4,
                      probe_delta: float = 0.01) -> SearchState:
    w_opt = build_weight_optimizer(network, lr0)
    a_opt = torch.optim.Adam(network.arch.parameters(), lr=ALPHA_LR,
                             betas=ALPHA_BETAS, weight_decay=ALPHA_WEIGHT_DECAY)
    state = SearchState(
        network=network, arch=network.arch, w_optimizer=w_opt, alpha_optimizer=a_opt,
        label_mode=label_mode, rng_seed=seed, optimizer_mode=optimizer_mode,
        lr0=lr0, total_epochs=total_epochs, probe_delta=probe_delta,
    )
    if optimizer_mode == "adas":
        n_layers = len(network.conv_registry())
        state.adas = adas_init(n_layers, eta0=lr0, beta=adas_beta,
                               zeta=adas_zeta, eta_min=adas_eta_min)
        set_layer_lrs(w_opt, state.adas.eta)
    return state


def alpha_loss(network: Supernet, criterion, batch):
    x, y = batch
    return criterion(network(x), y)


def alpha_step(state: SearchState, val_batch, batch_index: int = 0):
    """One adaptive-moment step on alpha against the validation loss."""
    x, y = val_batch
    state.alpha_optimizer.zero_grad()
    logits = state.network(x)
    loss = state.criterion(logits, y)
    if not torch.isfinite(loss):
        raise DivergenceError("non-finite validation loss during alpha step",
                              epoch=state.epoch, batch_index=batch_index)
    loss.backward()
    state.alpha_optimizer.step()
    return loss.item(), batch_accuracy(logits, y, state.label_mode)


def weight_step(state: SearchState, train_batch, batch_index: int = 0):
    """One momentum-SGD step on the weights, per-layer learning rates applied."""
    x, y = train_batch
    state.w_optimizer.zero_grad()
    # clear stale alpha grads from the weight pass so they never leak into
    # the next alpha step
    state.alpha_optimizer.zero_grad()
    logits = state.network(x)
    loss = state.criterion(logits, y)
    if not torch.isfinite(loss):
        raise DivergenceError("non-finite training loss during weight step",
                              epoch=state.epoch, batch_index=batch_index)
    loss.backward()
    state.w_optimizer.step()
    state.alpha_optimizer.zero_grad()
    return loss.item(), batch_accuracy(logits, y, state.label_mode)


def search_epoch(state: SearchState, train_batches, val_batches):
    """Alternate alpha/weight steps over paired batches; returns epoch metrics.

    The validation stream wraps when shorter than the training stream. The
    per-layer learning-rate update (cosine or stable-rank driven) runs at the
    end of the epoch.
    """
    train_batches = list(train_batches)
    val_batches = list(val_batches)
    if not train_batches:
        return {}
    t_loss = t_acc = v_loss = v_acc = 0.0
    n = 0
    for b, train_batch in enumerate(train_batches):
        val_batch = val_batches[b % len(val_batches)]
        vl, va = alpha_step(state, val_batch, batch_index=b)
        tl, ta = weight_step(state, train_batch, batch_index=b)
        v_loss += vl
        v_acc += va
        t_loss += tl
        t_acc += ta
        n += 1
    state.epoch += 1
    end_of_epoch_lr_update(state)
    if n == 0:
        return {}
    return {
        "epoch": state.epoch,
        "train_loss": t_loss / n,
        "val_loss": v_loss / n,
        "train_acc": t_acc / n,
        "val_acc": v_acc / n,
        "lr_mean": mean_lr(state),
    }


def end_of_epoch_lr_update(state: SearchState) -> None:
    if state.optimizer_mode == "adas":
        series = probe_network(state.network, state.epoch, state.probe_series,
                               delta=state.probe_delta)
        s_now = [series[layer_id].values[-1][1]
                 for layer_id, _ in state.network.conv_registry()]
        state.adas = adas_update(state.adas, s_now)
        set_layer_lrs(state.w_optimizer, state.adas.eta)
    else:
        lr = cosine_lr(state.lr0, state.epoch, state.total_epochs)
        for group in state.w_optimizer.param_groups:
            group["lr"] = lr
        # probing is diagnostic-only under plain SGD
        probe_network(state.network, state.epoch, state.probe_series,
                      delta=state.probe_delta)


def mean_lr(state: SearchState) -> float:
    groups = state.w_optimizer.param_groups[:-1]
    if not groups:
        return state.w_optimizer.param_groups[-1]["lr"]
    return sum(g["lr"] for g in groups) / len(groups)
