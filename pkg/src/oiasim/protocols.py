"""Per-slot protocol orchestration.

A protocol is three choices: the transmit beamformer (minimum-leakage SVD
vector or an isotropic random vector), the access rule (p-persistent coin or
leakage-CDF opportunism) and the receive flow (see :mod:`oiasim.kernels`).

Simulation works on blocks of slots.  A :class:`SlotBlock` holds everything
that does not depend on ``p`` (channels, beamformers, leakage, access scores),
so one block can be decoded for a whole grid of transmit probabilities: a
user is active at probability ``p`` iff its access score is below ``p``.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .channel import InterferenceSpaces, draw_channels, slot_bytes
from .config import NetworkConfig
from .errors import ConfigurationError, ContractViolation, EstimationInfeasibleError, NotWarmedUpError
from .mac import EstimatorBank
from .matkernels import complex_normal
from .phy import (batch_effective_channels, batch_leakage, batch_leakage_matrices,
                  batch_random_beamformers, batch_svd_beamformers)

#: Candidate draws allowed per conditioned user before a cell is declared infeasible.
REJECTION_BUDGET = 1_000_000


class ProtocolKind(str, Enum):
    MPR = "mpr"
    IN = "in"
    OIA = "oia"
    OIA_NO_TXBF = "oia_no_txbf"
    OIA_NO_ORA = "oia_no_ora"

    @property
    def svd_beamforming(self) -> bool:
        return self in (ProtocolKind.IN, ProtocolKind.OIA, ProtocolKind.OIA_NO_ORA)

    @property
    def opportunistic(self) -> bool:
        return self in (ProtocolKind.OIA, ProtocolKind.OIA_NO_TXBF)

    @property
    def flow(self) -> int:
        return kernels.FLOW_MPR if self is ProtocolKind.MPR else kernels.FLOW_OIA

    @classmethod
    def parse(cls, text: str) -> "ProtocolKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"oia_wo_txbf": "oia_no_txbf", "oia_wo_ora": "oia_no_ora"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ConfigurationError(f"unknown protocol {text!r} (choose from {names})") from None


NULLING_CONSTRAINT = "S < min{L/(K-1), M}"


def validate(kind: ProtocolKind, cfg: NetworkConfig):
    """Raise :class:`ConfigurationError` if ``cfg`` is not valid for ``kind``."""
    if kind is ProtocolKind.IN and not cfg.satisfies_nulling_condition():
        raise ConfigurationError(
            f"interference nulling requires {NULLING_CONSTRAINT}; got S={cfg.S}, L={cfg.L}, K={cfg.K}, M={cfg.M}")


@dataclass
class SlotBlock:
    eff: np.ndarray     # (B, K, N, K, M) received vectors
    proj: np.ndarray    # (B, K, N, K, S) projections onto each AP's signal space
    lif: np.ndarray     # (B, K, N) leakage of the chosen beamformer
    scores: np.ndarray  # (B, K, N) user transmits at probability p iff score < p

    @property
    def n_slots(self) -> int:
        return self.eff.shape[0]

    def active(self, p: float) -> np.ndarray:
        return self.scores < p


@dataclass
class SlotOutcome:
    delivered: np.ndarray    # (K,) packets decoded by their own AP
    transmitted: np.ndarray  # (K, N)
    success: np.ndarray      # (K, N)

    @property
    def s_i(self) -> np.ndarray:
        return self.transmitted.sum(axis=1)

    @property
    def s(self) -> int:
        return int(self.transmitted.sum())


def chunk_slots(cfg: NetworkConfig, budget_bytes: float = 48e6) -> int:
    """Slots per block so one channel tensor stays within ``budget_bytes``."""
    return int(max(1, min(2000, budget_bytes // slot_bytes(cfg))))


def _beamform(kind, h, spaces, rng):
    g = batch_leakage_matrices(h, spaces)
    if kind.svd_beamforming:
        return batch_svd_beamformers(g)
    w = batch_random_beamformers(rng, h.shape[:3], h.shape[-1])
    return w, batch_leakage(g, w)


def prepare_block(kind: ProtocolKind, cfg: NetworkConfig, spaces: InterferenceSpaces,
                  rng: np.random.Generator, n_slots: int, bank: EstimatorBank = None) -> SlotBlock:
    """Draw ``n_slots`` slots and compute everything except the activity."""
    h = draw_channels(cfg, rng, n_slots)
    if kind is ProtocolKind.MPR:
        # MPR never projects or measures leakage
        w = batch_random_beamformers(rng, h.shape[:3], cfg.L)
        eff = np.matmul(h, w[:, :, :, None, :, None])[..., 0]
        proj = np.zeros((1, 1, 1, 1, cfg.S), dtype=complex)
        lif = np.full(h.shape[:3], np.nan)
    else:
        w, lif = _beamform(kind, h, spaces, rng)
        eff, proj = batch_effective_channels(h, w, spaces)
    uniforms = rng.random(h.shape[:3])
    if kind.opportunistic:
        if bank is None or not bank.warmed_up:
            raise NotWarmedUpError(f"{kind.value} needs warmed-up leakage CDFs")
        scores = bank.scores(lif, uniforms)
    else:
        scores = uniforms
    return SlotBlock(eff, proj, lif, scores)


def decode(kind: ProtocolKind, cfg: NetworkConfig, block: SlotBlock, active: np.ndarray, only_ap: int = -1):
    return kernels.decode_block(block.eff, block.proj, active, kind.flow,
                                cfg.noise_power, cfg.threshold_linear, only_ap)


def delivered_per_slot(kind, cfg, block: SlotBlock, p_values):
    """Total delivered packets per slot for each ``p``: array (len(p_values), B)."""
    out = np.empty((len(p_values), block.n_slots))
    for n, p in enumerate(p_values):
        out[n] = decode(kind, cfg, block, block.active(p)).sum(axis=(1, 2))
    return out


def warm_up(kind: ProtocolKind, cfg: NetworkConfig, spaces: InterferenceSpaces, n_samples: int,
            rng: np.random.Generator, shared: bool = True, bank: EstimatorBank = None) -> EstimatorBank:
    """Collect leakage samples for the kind's beamformer into an estimator bank.

    With a shared bank ``n_samples`` is the total; otherwise each user gets
    ``n_samples`` of its own.
    """
    if bank is None:
        bank = EstimatorBank(cfg.K, cfg.N, shared=shared)
    per_slot = cfg.K * cfg.N if bank.shared else 1
    need_slots = -(-n_samples // per_slot)
    step = chunk_slots(cfg)
    taken = 0
    while taken < need_slots:
        n = min(step, need_slots - taken)
        h = draw_channels(cfg, rng, n)
        _, lif = _beamform(kind, h, spaces, rng)
        if bank.shared:
            remaining = n_samples - taken * per_slot
            bank.add_samples(lif.ravel()[:remaining])
        else:
            bank.add_samples(lif)
        taken += n
    return bank


def run_slot(kind: ProtocolKind, cfg: NetworkConfig, spaces: InterferenceSpaces,
             estimators: EstimatorBank, rng: np.random.Generator) -> SlotOutcome:
    """Simulate one slot at ``cfg.p``."""
    validate(kind, cfg)
    block = prepare_block(kind, cfg, spaces, rng, 1, estimators)
    active = block.active(cfg.p)
    success = decode(kind, cfg, block, active)[0]
    return SlotOutcome(success.sum(axis=1), active[0], success)


# --- conditioned slots ---------------------------------------------------------

def _draw_user(kind, cfg, spaces, ran, n, rng):
    """Channels, beamformers and leakage for ``n`` independent users of network ``ran``."""
    h = complex_normal(rng, (n, cfg.K, cfg.M, cfg.L))
    others = [k for k in range(cfg.K) if k != ran]
    g = np.matmul(spaces.u_h[others], h[:, others]).reshape(n, (cfg.K - 1) * cfg.S, cfg.L)
    if kind.svd_beamforming:
        w, lif = batch_svd_beamformers(g)
    else:
        w = batch_random_beamformers(rng, (n,), cfg.L)
        lif = batch_leakage(g, w)
    return h, w, lif


def conditioned_block(kind: ProtocolKind, cfg: NetworkConfig, spaces: InterferenceSpaces,
                      m: int, j: int, n_samples: int, rng: np.random.Generator,
                      bank: EstimatorBank = None, budget: int = REJECTION_BUDGET):
    """Slots with exactly ``m`` active users in network 0 and ``j`` elsewhere.

    Network 0's users are a uniform ``m``-subset; the ``j`` others a uniform
    subset of the ``N (K - 1)`` remaining users.  Under opportunistic access
    each active user's channel is drawn from its distribution conditioned on
    the access rule firing, by redrawing that user until it would transmit.
    Users decide independently, so this is the same law as redrawing whole
    slots until the activity pattern matches, at a fraction of the cost.

    Returns ``(eff, proj, active, own_users)`` where ``own_users`` is an
    (n_samples, m) array of network-0 user indices.
    """
    K, N = cfg.K, cfg.N
    if not 1 <= m <= N:
        raise ContractViolation(f"m must lie in [1, N], got {m}")
    if not 0 <= j <= N * (K - 1):
        raise ContractViolation(f"j must lie in [0, N(K-1)], got {j}")
    if kind.opportunistic:
        if bank is None or not bank.warmed_up:
            raise NotWarmedUpError(f"{kind.value} needs warmed-up leakage CDFs")
        if cfg.p <= 0.0:
            raise EstimationInfeasibleError("no user ever transmits at p = 0")
    own = np.argsort(rng.random((n_samples, N)), axis=1)[:, :m]
    other = np.argsort(rng.random((n_samples, N * (K - 1))), axis=1)[:, :j] + N
    users = np.concatenate([own, other], axis=1)  # flat index i*N + j'
    s_idx = np.repeat(np.arange(n_samples), m + j)
    flat = users.ravel()
    ran_of, usr_of = flat // N, flat % N

    n_entries = flat.size
    h_all = np.empty((n_entries, K, cfg.M, cfg.L), dtype=complex)
    w_all = np.empty((n_entries, cfg.L), dtype=complex)
    pending = np.arange(n_entries)
    attempts = 0
    while pending.size:
        attempts += 1
        if attempts > budget:
            raise EstimationInfeasibleError(
                f"cell (m={m}, j={j}) not reachable within {budget} draws per user")
        accepted = []
        for ran in range(K):
            sel = pending[ran_of[pending] == ran]
            if sel.size == 0:
                continue
            h, w, lif = _draw_user(kind, cfg, spaces, ran, sel.size, rng)
            if kind.opportunistic:
                u = rng.random(sel.size)
                if bank.shared:
                    ok = np.asarray(bank.estimators[0].evaluate(lif, u)) < cfg.p
                else:
                    ok = np.array([bank.estimator(ran, v).evaluate(x, t) < cfg.p
                                   for v, x, t in zip(usr_of[sel], lif, u)], dtype=bool)
            else:
                ok = np.ones(sel.size, dtype=bool)
            h_all[sel[ok]] = h[ok]
            w_all[sel[ok]] = w[ok]
            accepted.append(sel[ok])
        done = np.concatenate(accepted) if accepted else np.zeros(0, dtype=int)
        pending = np.setdiff1d(pending, done, assume_unique=True)

    eff_e = np.matmul(h_all, w_all[:, None, :, None])[..., 0]      # (E, K, M)
    proj_e = np.matmul(spaces.u_h, eff_e[..., None])[..., 0]        # (E, K, S)
    eff = np.zeros((n_samples, K, N, K, cfg.M), dtype=complex)
    proj = np.zeros((n_samples, K, N, K, cfg.S), dtype=complex)
    active = np.zeros((n_samples, K, N), dtype=bool)
    eff[s_idx, ran_of, usr_of] = eff_e
    proj[s_idx, ran_of, usr_of] = proj_e
    active[s_idx, ran_of, usr_of] = True
    return eff, proj, active, own


def conditioned_successes(kind, cfg, spaces, m, j, n_samples, rng, bank=None,
                          budget: int = REJECTION_BUDGET, flow: int = None) -> np.ndarray:
    """Success flags of network 0's ``m`` streams, shape (n_samples, m).

    ``flow`` overrides the kind's receive flow (see :mod:`oiasim.kernels`).
    """
    validate(kind, cfg)
    eff, proj, active, own = conditioned_block(kind, cfg, spaces, m, j, n_samples, rng, bank, budget)
    flow = kind.flow if flow is None else flow
    success = kernels.decode_block(eff, proj, active, flow, cfg.noise_power,
                                   cfg.threshold_linear, only_ap=0)
    return np.take_along_axis(success[:, 0, :], own, axis=1)


def run_conditioned_slot(kind, cfg, spaces, m: int, j: int, rng, bank=None) -> np.ndarray:
    """One conditioned slot; returns the success of network 0's ``m`` streams."""
    return conditioned_successes(kind, cfg, spaces, m, j, 1, rng, bank)[0]
