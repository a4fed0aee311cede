"""Transmission decisions.

Plain p-persistent access draws a coin per user and slot.  Opportunistic
access keeps an empirical CDF of the user's own leakage metric and transmits
when the CDF value of the current leakage is below ``p``; since a continuous
statistic evaluated through its own CDF is uniform, the user still transmits
with probability ``p`` but only in its low-leakage slots.
"""
import io

import numpy as np

from .errors import ContractViolation, NotWarmedUpError

SAMPLE_BUFFER = "sample-buffer"
RECURSIVE = "recursive-window"

_FORMAT = "oiasim-lifcdf"
_VERSION = 1


def default_grid(points: int = 1024, lo: float = 1e-8, hi: float = 1e3) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), points)


class LifCdfEstimator:
    """Empirical CDF of a user's leakage metric.

    Two storage modes are supported.  ``sample-buffer`` keeps every sample and
    evaluates ``#(samples <= eta) / count`` exactly.  ``recursive-window``
    keeps CDF ordinates on a fixed grid and applies the exponential-forgetting
    update ``F <- (W F + 1[eta >= eta0]) / (W + 1)``; until ``count`` reaches
    ``W`` the effective window is ``count``, which makes the early estimate
    the plain empirical CDF instead of one biased towards zero.
    """

    def __init__(self, mode: str = SAMPLE_BUFFER, window: float = 1000.0, grid=None):
        if mode not in (SAMPLE_BUFFER, RECURSIVE):
            raise ContractViolation(f"unknown estimator mode {mode!r}")
        self.mode = mode
        self.count = 0
        if mode == SAMPLE_BUFFER:
            self._pending = []
            self._samples = np.zeros(0)
            self.window = None
            self.grid = None
            self.ordinates = None
        else:
            if window <= 0:
                raise ContractViolation("observation window must be positive")
            self.window = float(window)
            self.grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
            self.ordinates = np.zeros_like(self.grid)

    @property
    def samples(self) -> np.ndarray:
        if self._pending:
            self._samples = np.sort(np.concatenate([self._samples] + self._pending))
            self._pending = []
        return self._samples

    def update(self, eta0: float) -> "LifCdfEstimator":
        if eta0 < 0:
            raise ContractViolation("leakage values are nonnegative")
        if self.mode == SAMPLE_BUFFER:
            self._pending.append(np.array([float(eta0)]))
        else:
            w = min(self.window, float(self.count))
            self.ordinates = (w * self.ordinates + (self.grid >= eta0)) / (w + 1.0)
        self.count += 1
        return self

    def extend(self, etas) -> "LifCdfEstimator":
        """Add many samples (in order, for the recursive form)."""
        etas = np.asarray(etas, dtype=float).ravel()
        if np.any(etas < 0):
            raise ContractViolation("leakage values are nonnegative")
        if self.mode == SAMPLE_BUFFER:
            self._pending.append(etas.copy())
            self.count += etas.size
        else:
            for eta0 in etas:
                self.update(eta0)
        return self

    def evaluate(self, eta, u=None):
        """CDF value(s) at ``eta``; scalar in, scalar out.

        With ``u`` (uniforms shaped like ``eta``) a sample-buffer estimator
        returns ``F(eta-) + u (F(eta) - F(eta-))`` instead, which splits ties
        at random.  Leakage has an atom at zero whenever nulling is perfect,
        and without the split every user at the atom would share one score.
        """
        if self.count == 0:
            raise NotWarmedUpError("the leakage CDF has no samples yet")
        eta_arr = np.asarray(eta, dtype=float)
        if self.mode == SAMPLE_BUFFER:
            out = np.searchsorted(self.samples, eta_arr, side="right") / self.count
            if u is not None:
                below = np.searchsorted(self.samples, eta_arr, side="left") / self.count
                out = below + np.asarray(u, dtype=float) * (out - below)
        else:
            out = np.interp(eta_arr, self.grid, self.ordinates)
            out = np.where(eta_arr < self.grid[0], 0.0, out)
            out = np.where(eta_arr >= self.grid[-1], 1.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, q: float) -> float:
        """Smallest stored leakage value whose CDF reaches ``q`` (sample-buffer only)."""
        if self.mode != SAMPLE_BUFFER:
            raise ContractViolation("quantiles are only available for the sample buffer")
        if self.count == 0:
            raise NotWarmedUpError("the leakage CDF has no samples yet")
        idx = int(np.ceil(q * self.count)) - 1
        return float(self.samples[min(max(idx, 0), self.count - 1)])

    # serialisation -----------------------------------------------------------

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"{_FORMAT} {_VERSION}\n")
        buf.write(f"mode {self.mode}\n")
        buf.write(f"count {self.count}\n")
        if self.mode == SAMPLE_BUFFER:
            buf.write("window -\n")
            for v in self.samples:
                buf.write(f"{v:.17g}\n")
        else:
            buf.write(f"window {self.window:.17g}\n")
            for x, f in zip(self.grid, self.ordinates):
                buf.write(f"{x:.17g} {f:.17g}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "LifCdfEstimator":
        lines = text.splitlines()
        magic = lines[0].split()
        if len(magic) != 2 or magic[0] != _FORMAT or int(magic[1]) != _VERSION:
            raise ContractViolation(f"not a version-{_VERSION} leakage CDF file")
        mode = lines[1].split(maxsplit=1)[1]
        count = int(lines[2].split()[1])
        window = lines[3].split()[1]
        body = [ln for ln in lines[4:] if ln.strip()]
        if mode == SAMPLE_BUFFER:
            est = cls(mode)
            est._samples = np.array([float(ln) for ln in body])
            if est._samples.size != count:
                raise ContractViolation("sample count does not match header")
        else:
            pairs = np.array([[float(t) for t in ln.split()] for ln in body])
            est = cls(mode, window=float(window), grid=pairs[:, 0])
            est.ordinates = pairs[:, 1].copy()
        est.count = count
        return est


def cdf_update(est: LifCdfEstimator, eta0: float) -> LifCdfEstimator:
    return est.update(eta0)


def cdf_eval(est: LifCdfEstimator, eta):
    return est.evaluate(eta)


def transmit_decision_opportunistic(est: LifCdfEstimator, eta, p: float):
    """Transmit iff the CDF value of the current leakage is below ``p``."""
    return est.evaluate(eta) < p


def transmit_decision_bernoulli(p: float, rng: np.random.Generator, size=None):
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"p must lie in [0, 1], got {p}")
    return rng.random(size) < p


class EstimatorBank:
    """Leakage CDFs for every user, either one shared estimator or one per user."""

    def __init__(self, K: int, N: int, shared: bool = True, mode: str = SAMPLE_BUFFER, window: float = 1000.0):
        self.K, self.N, self.shared = K, N, shared
        n = 1 if shared else K * N
        self.estimators = [LifCdfEstimator(mode, window) for _ in range(n)]

    def estimator(self, i: int, j: int) -> LifCdfEstimator:
        return self.estimators[0] if self.shared else self.estimators[i * self.N + j]

    def add_samples(self, lif: np.ndarray):
        """Feed a (B, K, N) block of leakage values."""
        lif = np.asarray(lif, dtype=float)
        if self.shared:
            self.estimators[0].extend(lif.ravel())
        else:
            flat = lif.reshape(-1, self.K * self.N)
            for u, est in enumerate(self.estimators):
                est.extend(flat[:, u])

    def scores(self, lif: np.ndarray, u=None) -> np.ndarray:
        """CDF values of a (..., K, N) leakage array, evaluated per user.

        ``u`` are optional tie-breaking uniforms, see ``LifCdfEstimator.evaluate``.
        """
        lif = np.asarray(lif, dtype=float)
        if self.shared:
            return np.asarray(self.estimators[0].evaluate(lif, u), dtype=float)
        out = np.empty_like(lif)
        for i in range(self.K):
            for j in range(self.N):
                uu = None if u is None else u[..., i, j]
                out[..., i, j] = self.estimator(i, j).evaluate(lif[..., i, j], uu)
        return out

    @property
    def warmed_up(self) -> bool:
        return all(est.count > 0 for est in self.estimators)

    def dumps(self) -> str:
        kind = "shared" if self.shared else "per-user"
        parts = [f"{_FORMAT}-bank {_VERSION} {kind} {self.K} {self.N}\n"]
        for est in self.estimators:
            parts.append(est.dumps())
            parts.append("end\n")
        return "".join(parts)

    @classmethod
    def loads(cls, text: str) -> "EstimatorBank":
        header, _, rest = text.partition("\n")
        magic, version, kind, K, N = header.split()
        if magic != f"{_FORMAT}-bank" or int(version) != _VERSION:
            raise ContractViolation(f"not a version-{_VERSION} estimator bank file")
        bank = cls(int(K), int(N), shared=(kind == "shared"))
        blocks = [b for b in rest.split("end\n") if b.strip()]
        if len(blocks) != len(bank.estimators):
            raise ContractViolation("estimator count does not match header")
        bank.estimators = [LifCdfEstimator.loads(b) for b in blocks]
        return bank
