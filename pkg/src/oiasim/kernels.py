"""Per-slot receiver kernels.

``decode_block`` is the simulator's inner loop: for every slot in a block and
every access point it picks the receive mode from the activity pattern, zero
forces, and compares SINRs with the threshold.  Two interchangeable
implementations exist; :func:`decode_block` dispatches on
:func:`oiasim._jit.numba_enabled`.

Receive modes, with ``s`` active users in total and ``m_k`` in network k:

* ``s <= M``: joint ZF over all ``s`` received vectors with all M antennas;
  the streams of network k are kept.  No residual interference.
* ``FLOW_OIA`` only, ``s > M`` and ``m_k <= S``: project onto ``U_k`` and
  zero-force the ``m_k`` own streams in S dimensions; every other active
  user's projected vector counts as interference.
* otherwise every stream of network k fails.

``FLOW_PROJECTED`` skips the joint mode and always uses the projected
receiver when ``m_k <= S``.  The simulator never runs it; it isolates the
projected receiver's success for any ``(m_k, s)`` when tabulating it.
"""
import numpy as np

from ._jit import njit, numba_enabled
from .matkernels import RANK_TOL

FLOW_MPR = 0
FLOW_OIA = 1
FLOW_PROJECTED = 2


def decode_block(eff, proj, active, flow, noise, threshold, only_ap=-1, backend=None):
    """Decode a block of slots.

    Parameters
    ----------
    eff : complex array (B, K, N, K, M)
        ``eff[b, i, j, k]`` is user (i, j)'s received vector at AP k.
    proj : complex array (B, K, N, K, S)
        ``U_k^H eff[b, i, j, k]``.
    active : bool array (B, K, N)
    flow : int
        ``FLOW_MPR``, ``FLOW_OIA`` or ``FLOW_PROJECTED``.
    noise, threshold : float
        Noise variance and linear SINR threshold; stream power is 1.
    only_ap : int
        Decode only this AP (-1 for all).
    backend : {"numba", "numpy", None}
        None follows the ``OIASIM_DISABLE_NUMBA`` switch.

    Returns
    -------
    bool array (B, K, N)
        True where the user's packet was delivered to its own AP.
    """
    if backend is None:
        backend = "numba" if numba_enabled() else "numpy"
    eff = np.ascontiguousarray(eff, dtype=np.complex128)
    proj = np.ascontiguousarray(proj, dtype=np.complex128)
    active = np.ascontiguousarray(active, dtype=np.bool_)
    if backend == "numba":
        return _decode_numba(eff, proj, active, int(flow), float(noise), float(threshold), int(only_ap))
    if backend == "numpy":
        return _decode_numpy(eff, proj, active, int(flow), float(noise), float(threshold), int(only_ap))
    raise ValueError(f"unknown backend {backend!r}")


@njit(cache=True)
def _zf_gram(d, m, g, n, a, x, norms, leaks):
    """ZF statistics for the first ``m`` columns of ``d`` against ``n`` columns of ``g``.

    Solves with the Cholesky factor of ``d^H d`` instead of forming the
    pseudo-inverse: ``norms[q] = ||f_q||^2 = (d^H d)^-1_qq`` and
    ``leaks[q] = sum_l |f_q^H g_l|^2``.  ``a`` and ``x`` are scratch buffers.
    Returns False when a Cholesky pivot falls below the rank tolerance.
    """
    r = d.shape[0]
    scale = 0.0
    for p in range(m):
        for c in range(p, m):
            acc = 0j
            for t in range(r):
                acc += np.conj(d[t, p]) * d[t, c]
            a[p, c] = acc
            a[c, p] = np.conj(acc)
        if a[p, p].real > scale:
            scale = a[p, p].real
    if scale <= 0.0:
        return False
    for c in range(m):
        v = a[c, c].real
        for t in range(c):
            v -= a[c, t].real ** 2 + a[c, t].imag ** 2
        if v <= RANK_TOL * RANK_TOL * scale:
            return False
        lcc = np.sqrt(v)
        a[c, c] = lcc
        for q in range(c + 1, m):
            acc = a[q, c]
            for t in range(c):
                acc -= a[q, t] * np.conj(a[c, t])
            a[q, c] = acc / lcc
    width = m + n
    for p in range(m):
        for c in range(m):
            x[p, c] = 1.0 if p == c else 0.0
        for l in range(n):
            acc = 0j
            for t in range(r):
                acc += np.conj(d[t, p]) * g[t, l]
            x[p, m + l] = acc
    # forward substitution with L, then back substitution with L^H
    for p in range(m):
        for c in range(width):
            acc = x[p, c]
            for t in range(p):
                acc -= a[p, t] * x[t, c]
            x[p, c] = acc / a[p, p].real
    for p in range(m - 1, -1, -1):
        for c in range(width):
            acc = x[p, c]
            for t in range(p + 1, m):
                acc -= np.conj(a[t, p]) * x[t, c]
            x[p, c] = acc / a[p, p].real
    for p in range(m):
        norms[p] = x[p, p].real
        total = 0.0
        for l in range(n):
            v = x[p, m + l]
            total += v.real ** 2 + v.imag ** 2
        leaks[p] = total
    return True


@njit(cache=True)
def _decode_numba(eff, proj, active, flow, noise, threshold, only_ap):
    B, K, N, _, M = eff.shape
    S = proj.shape[4]
    n_users = K * N
    success = np.zeros((B, K, N), dtype=np.bool_)
    ran = np.empty(n_users, dtype=np.int64)
    usr = np.empty(n_users, dtype=np.int64)
    counts = np.zeros(K, dtype=np.int64)
    dbuf = np.empty((M, M), dtype=np.complex128)
    gbuf = np.empty((M, n_users), dtype=np.complex128)
    abuf = np.empty((M, M), dtype=np.complex128)
    xbuf = np.empty((M, M + n_users), dtype=np.complex128)
    norms = np.empty(M)
    leaks = np.empty(M)
    for b in range(B):
        s = 0
        counts[:] = 0
        for i in range(K):
            for j in range(N):
                if active[b, i, j]:
                    ran[s] = i
                    usr[s] = j
                    counts[i] += 1
                    s += 1
        if s == 0:
            continue
        for k in range(K):
            if only_ap >= 0 and k != only_ap:
                continue
            mk = counts[k]
            if mk == 0:
                continue
            if s <= M and flow != FLOW_PROJECTED:
                # own streams first; everyone else is zero-forced too
                col = 0
                for q in range(s):
                    if ran[q] == k:
                        dbuf[:, col] = eff[b, k, usr[q], k, :]
                        col += 1
                for q in range(s):
                    if ran[q] != k:
                        dbuf[:, col] = eff[b, ran[q], usr[q], k, :]
                        col += 1
                if not _zf_gram(dbuf[:, :s], s, gbuf, 0, abuf, xbuf, norms, leaks):
                    continue
                col = 0
                for q in range(s):
                    if ran[q] == k:
                        success[b, k, usr[q]] = 1.0 / (noise * norms[col]) >= threshold
                        col += 1
            elif flow != FLOW_MPR and mk <= S:
                col = 0
                gcol = 0
                for q in range(s):
                    if ran[q] == k:
                        dbuf[:S, col] = proj[b, k, usr[q], k, :]
                        col += 1
                    else:
                        gbuf[:S, gcol] = proj[b, ran[q], usr[q], k, :]
                        gcol += 1
                if not _zf_gram(dbuf[:S, :mk], mk, gbuf[:S], gcol, abuf, xbuf, norms, leaks):
                    continue
                col = 0
                for q in range(s):
                    if ran[q] == k:
                        sinr = 1.0 / (noise * norms[col] + leaks[col])
                        success[b, k, usr[q]] = sinr >= threshold
                        col += 1
    return success


def _batched_zf_rows(d):
    u, s, vh = np.linalg.svd(d, full_matrices=False)
    ok = (s[:, 0] > 0.0) & (s[:, -1] > RANK_TOL * s[:, 0])
    s_safe = np.where(s > 0.0, s, 1.0)
    f = np.matmul(np.conj(np.swapaxes(vh, -1, -2)) / s_safe[:, None, :], np.conj(np.swapaxes(u, -1, -2)))
    return f, ok


def _decode_numpy(eff, proj, active, flow, noise, threshold, only_ap):
    B, K, N, _, M = eff.shape
    S = proj.shape[4]
    n_users = K * N
    eff_f = eff.reshape(B, n_users, K, M)
    # the MPR flow never reads projections, so callers may pass a placeholder
    proj_f = proj.reshape(B, n_users, K, S) if flow != FLOW_MPR else None
    act_f = active.reshape(B, n_users)
    owner = np.repeat(np.arange(K), N)
    s_tot = act_f.sum(axis=1)
    success = np.zeros((B, n_users), dtype=bool)
    aps = range(K) if only_ap < 0 else (only_ap,)
    for k in aps:
        own = act_f & (owner == k)[None, :]
        mk = own.sum(axis=1)
        # order users: own active, then other active, then idle
        key = np.where(own, 0, np.where(act_f, 1, 2))
        order = np.argsort(key, axis=1, kind="stable")
        for t in range(1, M + 1 if flow != FLOW_PROJECTED else 1):
            rows = np.nonzero((s_tot == t) & (mk > 0))[0]
            if rows.size == 0:
                continue
            cols = order[rows, :t]
            d = np.swapaxes(eff_f[rows[:, None], cols, k, :], 1, 2)  # (G, M, t)
            f, ok = _batched_zf_rows(d)
            sinr = 1.0 / (noise * np.sum(np.abs(f) ** 2, axis=2))  # (G, t)
            keep = (np.arange(t)[None, :] < mk[rows, None]) & ok[:, None]
            hit = keep & (sinr >= threshold)
            success[rows[:, None], cols] |= hit
        if flow == FLOW_MPR:
            continue
        projected = s_tot > M if flow == FLOW_OIA else s_tot > 0
        for t in range(1, S + 1):
            rows = np.nonzero(projected & (mk == t))[0]
            if rows.size == 0:
                continue
            width = int(s_tot[rows].max()) - t
            cols = order[rows, :t]
            d = np.swapaxes(proj_f[rows[:, None], cols, k, :], 1, 2)  # (G, S, t)
            icols = order[rows, t: t + width]
            g = proj_f[rows[:, None], icols, k, :]  # (G, width, S)
            g = np.where((np.arange(width)[None, :] < (s_tot[rows] - t)[:, None])[..., None], g, 0.0)
            f, ok = _batched_zf_rows(d)
            leak = np.matmul(f, np.swapaxes(g, 1, 2))  # (G, t, width)
            interference = np.sum(leak.real ** 2 + leak.imag ** 2, axis=2)
            sinr = 1.0 / (noise * np.sum(np.abs(f) ** 2, axis=2) + interference)
            hit = ok[:, None] & (sinr >= threshold)
            success[rows[:, None], cols] |= hit
    return success.reshape(B, K, N)
