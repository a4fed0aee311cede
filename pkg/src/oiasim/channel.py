"""Rayleigh channels and per-AP interference spaces.

Channel arrays are indexed ``[ran i, user j, ap k, rx antenna, tx antenna]``;
batched draws prepend a slot axis.
"""
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .errors import ContractViolation
from .matkernels import complex_normal, null_space, random_orthonormal


@dataclass(frozen=True)
class InterferenceSpaces:
    """``q[k]`` (M x (M-S)) spans AP k's interference space, ``u[k]`` its complement."""

    q: np.ndarray  # (K, M, M - S)
    u: np.ndarray  # (K, M, S)

    @property
    def u_h(self) -> np.ndarray:
        """Stack of ``U_k^H``, shape (K, S, M)."""
        return np.conj(np.swapaxes(self.u, -1, -2))


@dataclass
class SlotRealization:
    channels: np.ndarray  # (K, N, K, M, L)
    activity: np.ndarray  # (K, N) bool


def make_interference_spaces(cfg: NetworkConfig, rng: np.random.Generator) -> InterferenceSpaces:
    """Draw one (Q_k, U_k) pair per access point for a whole run."""
    n_draws = 1 if cfg.shared_interference_space else cfg.K
    qs, us = [], []
    for _ in range(n_draws):
        basis = random_orthonormal(cfg.M, cfg.M, rng)
        q = basis[:, : cfg.M - cfg.S]
        qs.append(q)
        us.append(null_space(q, cfg.S))
    if cfg.shared_interference_space:
        qs, us = qs * cfg.K, us * cfg.K
    return InterferenceSpaces(np.stack(qs), np.stack(us))


def draw_channels(cfg: NetworkConfig, rng: np.random.Generator, n_slots: int) -> np.ndarray:
    """CN(0, 1) channel tensors for ``n_slots`` slots, shape (B, K, N, K, M, L)."""
    return complex_normal(rng, (n_slots, cfg.K, cfg.N, cfg.K, cfg.M, cfg.L))


def draw_slot(cfg: NetworkConfig, rng: np.random.Generator, activity_override=None) -> SlotRealization:
    """One slot: fresh channels plus Bernoulli(p) activity unless overridden."""
    channels = draw_channels(cfg, rng, 1)[0]
    if activity_override is None:
        activity = rng.random((cfg.K, cfg.N)) < cfg.p
    else:
        activity = np.asarray(activity_override, dtype=bool)
        if activity.shape != (cfg.K, cfg.N):
            raise ContractViolation(f"activity override must have shape {(cfg.K, cfg.N)}")
    return SlotRealization(channels, activity)


def slot_bytes(cfg: NetworkConfig) -> int:
    return 16 * cfg.K * cfg.N * cfg.K * cfg.M * cfg.L
