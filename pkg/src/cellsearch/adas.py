"""Per-layer learning-rate adaptation driven by stable-rank deltas.

Each conv layer k keeps its own step size eta_k. Once per epoch:

    eta_k <- max(beta * eta_k + zeta * (S_now_k - S_prev_k), eta_min)

so layers whose stable rank is growing keep (or gain) step size while
stagnant layers decay geometrically toward the floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

DEFAULT_ETA0 = 0.175
DEFAULT_BETA = 0.98
DEFAULT_ZETA = 1.0
DEFAULT_ETA_MIN = 1e-4


@dataclass
class AdasState:
    eta: np.ndarray
    beta: float
    zeta: float
    eta_min: float
    prev_S: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.prev_S is None:
            self.prev_S = np.zeros_like(self.eta)

    @property
    def num_layers(self) -> int:
        return len(self.eta)

    def mean_eta(self) -> float:
        return float(self.eta.mean()) if len(self.eta) else 0.0


def adas_init(num_layers: int, eta0: float = DEFAULT_ETA0, beta: float = DEFAULT_BETA,
              zeta: float = DEFAULT_ZETA, eta_min: float = DEFAULT_ETA_MIN) -> AdasState:
    if eta0 <= 0:
        raise ConfigError(f"eta0 must be positive, got {eta0}")
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must be in [0, 1), got {beta}")
    if zeta < 0:
        raise ConfigError(f"zeta must be nonnegative, got {zeta}")
    if eta_min < 0:
        raise ConfigError(f"eta_min must be nonnegative, got {eta_min}")
    return AdasState(
        eta=np.full(num_layers, eta0, dtype=np.float64),
        beta=beta, zeta=zeta, eta_min=eta_min,
        prev_S=np.zeros(num_layers, dtype=np.float64),
    )


def adas_update(state: AdasState, S_now) -> AdasState:
    """One per-epoch update of every layer's step size."""
    S_now = np.asarray(S_now, dtype=np.float64)
    if S_now.shape != state.eta.shape:
        raise ContractError(
            f"stable-rank vector has {S_now.shape} entries, state has {state.eta.shape}"
        )
    if len(S_now) and (S_now.min() < 0.0 or S_now.max() > 1.0):
        raise ContractError("stable ranks must lie in [0, 1]")
    delta_S = S_now - state.prev_S
    eta = np.maximum(state.beta * state.eta + state.zeta * delta_S, state.eta_min)
    return AdasState(eta=eta, beta=state.beta, zeta=state.zeta,
                     eta_min=state.eta_min, prev_S=S_now.copy())
