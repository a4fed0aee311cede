import numpy as np
import pytest

from oiasim._jit import numba_enabled
from oiasim.channel import make_interference_spaces
from oiasim.config import NetworkConfig
from oiasim.kernels import FLOW_MPR, FLOW_OIA, FLOW_PROJECTED, decode_block
from oiasim.phy import (batch_effective_channels, batch_leakage_matrices, batch_svd_beamformers,
                        zf_decode)

from conftest import crandn


def random_block(cfg, n_slots, p, seed):
    gen = np.random.default_rng(seed)
    spaces = make_interference_spaces(cfg, gen)
    h = crandn(gen, n_slots, cfg.K, cfg.N, cfg.K, cfg.M, cfg.L)
    w, _ = batch_svd_beamformers(batch_leakage_matrices(h, spaces))
    eff, proj = batch_effective_channels(h, w, spaces)
    active = gen.random((n_slots, cfg.K, cfg.N)) < p
    return eff, proj, active


def reference_decode(eff, proj, active, flow, cfg):
    """Slot-by-slot receiver built from the single-instance ZF routine."""
    out = np.zeros(active.shape, dtype=bool)
    for b in range(active.shape[0]):
        users = [tuple(u) for u in np.argwhere(active[b])]
        s = len(users)
        for k in range(cfg.K):
            own = [u for u in users if u[0] == k]
            if not own:
                continue
            if s <= cfg.M and flow != FLOW_PROJECTED:
                rep = zf_decode([eff[b, i, j, k] for i, j in users], [], cfg.noise_power, 1.0,
                                cfg.sinr_threshold_db, owners=users)
                for (i, j), ok in zip(rep.owners, rep.success):
                    if i == k:
                        out[b, i, j] = ok
            elif flow != FLOW_MPR and len(own) <= cfg.S:
                others = [u for u in users if u[0] != k]
                rep = zf_decode([proj[b, i, j, k] for i, j in own], [proj[b, i, j, k] for i, j in others],
                                cfg.noise_power, 1.0, cfg.sinr_threshold_db, owners=own)
                for (i, j), ok in zip(rep.owners, rep.success):
                    out[b, i, j] = ok
    return out


@pytest.mark.parametrize("S", [1, 2, 3])
@pytest.mark.parametrize("flow", [FLOW_MPR, FLOW_OIA, FLOW_PROJECTED])
def test_backends_match_reference(S, flow):
    cfg = NetworkConfig(K=3, N=4, M=3, L=3, S=S)
    eff, proj, active = random_block(cfg, 300, 0.3, S + 10 * flow)
    ref = reference_decode(eff, proj, active, flow, cfg)
    for backend in ("numba", "numpy"):
        got = decode_block(eff, proj, active, flow, cfg.noise_power, cfg.threshold_linear, backend=backend)
        assert np.array_equal(got, ref), backend


@pytest.mark.parametrize("cfg", [NetworkConfig(K=2, N=5, M=4, L=2, S=2, snr_db=5, sinr_threshold_db=2),
                                 NetworkConfig(K=4, N=3, M=4, L=4, S=3, snr_db=-3)])
def test_backends_agree_on_large_blocks(cfg):
    for flow in (FLOW_MPR, FLOW_OIA, FLOW_PROJECTED):
        eff, proj, active = random_block(cfg, 4000, 0.2, 7)
        a = decode_block(eff, proj, active, flow, cfg.noise_power, cfg.threshold_linear, backend="numba")
        b = decode_block(eff, proj, active, flow, cfg.noise_power, cfg.threshold_linear, backend="numpy")
        assert np.array_equal(a, b)
        assert a.any()


def test_only_ap_restricts_output():
    cfg = NetworkConfig(K=3, N=4, M=3, L=3, S=2)
    eff, proj, active = random_block(cfg, 200, 0.2, 3)
    full = decode_block(eff, proj, active, FLOW_OIA, 1.0, 1.0)
    for backend in ("numba", "numpy"):
        part = decode_block(eff, proj, active, FLOW_OIA, 1.0, 1.0, only_ap=1, backend=backend)
        assert np.array_equal(part[:, 1], full[:, 1])
        assert not part[:, [0, 2]].any()


def test_successes_are_active_users_only():
    cfg = NetworkConfig(K=3, N=5, M=3, L=3, S=3, snr_db=20)
    eff, proj, active = random_block(cfg, 500, 0.1, 5)
    got = decode_block(eff, proj, active, FLOW_OIA, cfg.noise_power, cfg.threshold_linear)
    assert not (got & ~active).any()


def test_rank_deficient_slot_fails(monkeypatch):
    eff = np.zeros((1, 1, 2, 1, 2), dtype=complex)
    eff[0, 0, 0, 0] = [1, 1j]
    eff[0, 0, 1, 0] = [2, 2j]
    proj = eff.copy()
    active = np.ones((1, 1, 2), dtype=bool)
    for backend in ("numba", "numpy"):
        assert not decode_block(eff, proj, active, FLOW_MPR, 1e-6, 1.0, backend=backend).any()


def test_env_flag_selects_numpy(monkeypatch):
    monkeypatch.setenv("OIASIM_DISABLE_NUMBA", "1")
    assert not numba_enabled()
    monkeypatch.setenv("OIASIM_DISABLE_NUMBA", "0")
    import oiasim._jit as jit
    assert numba_enabled() == jit.HAVE_NUMBA


def test_unknown_backend():
    with pytest.raises(ValueError):
        decode_block(np.zeros((1, 1, 1, 1, 1)), np.zeros((1, 1, 1, 1, 1)), np.zeros((1, 1, 1), bool), 0, 1, 1,
                     backend="fortran")


def test_projected_flow_differs_only_below_m():
    cfg = NetworkConfig(K=3, N=4, M=3, L=3, S=2)
    eff, proj, active = random_block(cfg, 2000, 0.2, 5)
    a = decode_block(eff, proj, active, FLOW_OIA, cfg.noise_power, cfg.threshold_linear)
    b = decode_block(eff, proj, active, FLOW_PROJECTED, cfg.noise_power, cfg.threshold_linear)
    crowded = active.sum(axis=(1, 2)) > cfg.M
    assert np.array_equal(a[crowded], b[crowded])
    assert not np.array_equal(a[~crowded], b[~crowded])
