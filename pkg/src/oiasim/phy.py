"""Transmit beamforming and ZF reception.

Single-instance functions (``build_leakage_matrix``, ``svd_beamformer``,
``zf_decode`` ...) follow the textbook definitions one matrix at a time.  The
``batch_*`` functions compute the same quantities for whole slot blocks and
are what the simulator uses.
"""
from dataclasses import dataclass, field

import numpy as np

from .channel import InterferenceSpaces, SlotRealization
from .errors import ContractViolation, RankDeficiencyError
from .matkernels import as_matrix, complex_normal, pseudo_inverse, svd

#: Minimum-leakage values below this are rounding noise of an exact null and
#: are reported as zero.  Channels have unit-variance entries, so any genuine
#: leakage is many orders of magnitude larger.
LEAKAGE_FLOOR = 1e-20


@dataclass
class BeamformerChoice:
    vector: np.ndarray  # (L,), unit norm
    lif: float


@dataclass
class DecodeReport:
    sinr: np.ndarray
    success: np.ndarray
    owners: list = field(default_factory=list)


def _channels(channels):
    return channels.channels if isinstance(channels, SlotRealization) else np.asarray(channels)


def build_leakage_matrix(user, channels, spaces: InterferenceSpaces) -> np.ndarray:
    """Stack ``U_k^H H_k^[i,j]`` over every AP ``k != i`` in ascending order.

    Returns a ((K-1)S x L) matrix; for a single network it has no rows.
    """
    i, j = user
    h = _channels(channels)
    n_ap, L = h.shape[2], h.shape[-1]
    u_h = spaces.u_h
    blocks = [u_h[k] @ h[i, j, k] for k in range(n_ap) if k != i]
    if not blocks:
        return np.zeros((0, L), dtype=complex)
    return np.vstack(blocks)


def svd_beamformer(g) -> BeamformerChoice:
    """Unit vector minimising ``||g w||^2``: the last right-singular vector."""
    g = np.asarray(g, dtype=complex)
    L = g.shape[1]
    if g.shape[0] == 0:
        w = np.zeros(L, dtype=complex)
        w[0] = 1.0
        return BeamformerChoice(w, 0.0)
    res = svd(g, full_matrices=True)
    w = res.right[:, -1]
    lif = float(np.sum(np.abs(g @ w) ** 2))
    return BeamformerChoice(w, 0.0 if lif < LEAKAGE_FLOOR else lif)


def compute_lif_to_ap(user, ap: int, w, channels, spaces: InterferenceSpaces) -> float:
    """Leakage ``||U_k^H H_k^[i,j] w||^2`` from user (i, j) into AP k's signal space."""
    i, j = user
    if ap == i:
        raise ContractViolation("leakage is only defined towards other networks' APs")
    h = _channels(channels)
    v = spaces.u_h[ap] @ (h[i, j, ap] @ np.asarray(w, dtype=complex))
    return float(np.sum(np.abs(v) ** 2))


def project_receive(ap: int, spaces: InterferenceSpaces, vectors):
    """Apply ``U_k^H`` to each M-vector, discarding the interference space."""
    u_h = spaces.u_h[ap]
    return [u_h @ np.asarray(v, dtype=complex).reshape(-1) for v in vectors]


def zf_sinr(desired, interferers, noise_power: float, stream_power: float = 1.0) -> np.ndarray:
    """Per-stream SINR after zero-forcing the ``desired`` columns.

    Leakage from ``interferers`` passes through the ZF rows and counts as
    interference.  Raises :class:`RankDeficiencyError` if the desired channels
    are linearly dependent.
    """
    d = as_matrix(desired)
    f = pseudo_inverse(d)
    noise = noise_power * np.sum(np.abs(f) ** 2, axis=1)
    interferers = np.asarray(interferers, dtype=complex)
    if interferers.size:
        interference = stream_power * np.sum(np.abs(f @ as_matrix(interferers)) ** 2, axis=1)
    else:
        interference = 0.0
    return stream_power / (noise + interference)


def zf_decode(desired, interferers, noise_power: float, stream_power: float,
              threshold_db: float, owners=None) -> DecodeReport:
    """ZF-decode a list of effective channel vectors.

    ``desired`` and ``interferers`` are lists of r-dimensional vectors.  A
    rank-deficient desired set is a collision: every stream fails with SINR 0.
    """
    desired = [np.asarray(v, dtype=complex).reshape(-1) for v in desired]
    owners = list(owners) if owners is not None else list(range(len(desired)))
    if not desired:
        return DecodeReport(np.zeros(0), np.zeros(0, dtype=bool), owners)
    d = np.stack(desired, axis=1)
    if len(desired) > d.shape[0]:
        raise ContractViolation(f"cannot zero-force {len(desired)} streams with {d.shape[0]} dimensions")
    g = (np.stack([np.asarray(v, dtype=complex).reshape(-1) for v in interferers], axis=1)
         if len(interferers) else np.zeros((d.shape[0], 0), dtype=complex))
    try:
        sinr = zf_sinr(d, g, noise_power, stream_power)
    except RankDeficiencyError:
        sinr = np.zeros(len(desired))
        return DecodeReport(sinr, np.zeros(len(desired), dtype=bool), owners)
    threshold = 10.0 ** (threshold_db / 10.0)
    return DecodeReport(sinr, sinr >= threshold, owners)


# --- batched forms -----------------------------------------------------------

def _other_aps(K: int) -> np.ndarray:
    return np.array([[k for k in range(K) if k != i] for i in range(K)], dtype=np.int64).reshape(K, K - 1)


def batch_leakage_matrices(h: np.ndarray, spaces: InterferenceSpaces) -> np.ndarray:
    """Leakage matrices for a block of slots.

    ``h`` has shape (B, K, N, K, M, L); the result is (B, K, N, (K-1)S, L)
    with the same row-block order as :func:`build_leakage_matrix`.
    """
    B, K, N, _, M, L = h.shape
    S = spaces.u.shape[-1]
    projected = np.matmul(spaces.u_h, h)  # (B, K, N, K, S, L)
    others = _other_aps(K)
    out = np.empty((B, K, N, (K - 1) * S, L), dtype=complex)
    for i in range(K):
        out[:, i] = projected[:, i][:, :, others[i]].reshape(B, N, (K - 1) * S, L)
    return out


def batch_svd_beamformers(g: np.ndarray):
    """Minimum-leakage unit vectors and their leakage for stacked matrices.

    Uses the eigenvector of ``g^H g`` with the smallest eigenvalue, which is
    the last right-singular vector of ``g``.  The returned leakage is
    recomputed as ``||g w||^2`` so it is consistent with the vector, then
    clipped to zero below ``LEAKAGE_FLOOR``.
    """
    gram = np.matmul(np.conj(np.swapaxes(g, -1, -2)), g)
    _, vecs = np.linalg.eigh(gram)
    w = np.ascontiguousarray(vecs[..., :, 0])
    lif = batch_leakage(g, w)
    lif[lif < LEAKAGE_FLOOR] = 0.0
    return w, lif


def batch_random_beamformers(rng: np.random.Generator, shape, L: int) -> np.ndarray:
    """Isotropic unit vectors, shape ``shape + (L,)``."""
    w = complex_normal(rng, tuple(shape) + (L,))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    return w


def batch_leakage(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    gw = np.matmul(g, w[..., None])[..., 0]
    return np.sum(gw.real ** 2 + gw.imag ** 2, axis=-1)


def batch_effective_channels(h: np.ndarray, w: np.ndarray, spaces: InterferenceSpaces):
    """Received vectors ``H_k w`` (B, K, N, K, M) and their projections ``U_k^H H_k w``."""
    eff = np.matmul(h, w[:, :, :, None, :, None])[..., 0]
    proj = np.matmul(spaces.u_h, eff[..., None])[..., 0]
    return eff, proj
