"""Scenario parameters."""
from dataclasses import asdict, dataclass, replace

from .errors import ConfigurationError


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters of K overlapped slotted-ALOHA networks.

    Attributes
    ----------
    K, N : int
        Number of networks and users per network.
    M, L : int
        Antennas per access point and per user.
    S : int
        Dimension of each access point's signal space, ``1 <= S <= M``.
    p : float
        Per-slot transmit probability.
    snr_db : float
        Average received SNR per receive antenna.  Transmit power is 1 and the
        noise variance is ``10 ** (-snr_db / 10)``.
    sinr_threshold_db : float
        A stream is decoded when its post-ZF SINR is at least this value.
    shared_interference_space : bool
        Give every access point the same interference space.
    seed : int
    """

    K: int = 3
    N: int = 10
    M: int = 3
    L: int = 3
    S: int = 3
    p: float = 0.1
    snr_db: float = 0.0
    sinr_threshold_db: float = 0.0
    shared_interference_space: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "N", "M", "L", "S"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.S > self.M:
            raise ConfigurationError(f"S must satisfy 1 <= S <= M, got S={self.S}, M={self.M}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"p must lie in [0, 1], got {self.p!r}")

    @property
    def noise_power(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def threshold_linear(self) -> float:
        return 10.0 ** (self.sinr_threshold_db / 10.0)

    @property
    def n_users(self) -> int:
        return self.K * self.N

    def satisfies_nulling_condition(self) -> bool:
        """``S < min(L / (K - 1), M)``, needed for exact interference nulling."""
        if self.K == 1:
            return self.S < self.M
        return self.S * (self.K - 1) < self.L and self.S < self.M

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)
