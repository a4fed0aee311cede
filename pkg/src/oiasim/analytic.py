"""Closed-form MAC throughput from per-packet success tables.

Each formula is a nonnegative combination of table entries weighted by
binomial activity probabilities, so the functions below first expand a
formula into ``(coefficient, table, cell)`` terms; the throughput is the
weighted sum and its standard error follows from the cell standard errors.
Binomial weights are assembled in log space (``lgamma``) so that large
``N K`` does not overflow.
"""
import io
import math
from dataclasses import dataclass, field

from .config import NetworkConfig
from .errors import ConfigurationError, ContractViolation, IncompleteTableError

MPR_BY_TOTAL = "mpr_by_total"
MPR_BY_DIM = "mpr_by_dim"
OIA = "oia"
KINDS = (MPR_BY_TOTAL, MPR_BY_DIM, OIA)

_MAGIC = "oiasim-successtable"
_VERSION = 1


@dataclass
class SuccessTable:
    """Per-packet success probabilities keyed by ``(m, j)``.

    ``mpr_by_total`` tables use ``(m, 0)`` for ``m`` concurrent streams,
    ``mpr_by_dim`` tables ``(m, dim)`` for ``m`` streams in ``dim`` receive
    dimensions, and ``oia`` tables ``(m, j)`` for ``m`` own and ``j`` foreign
    active users.  ``counts`` holds the number of trials behind measured cells.
    """

    kind: str
    values: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    provenance: str = "measured"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown table kind {self.kind!r}")
        for cell, value in self.values.items():
            if not 0.0 <= value <= 1.0:
                raise ContractViolation(f"probability out of range at {cell}: {value}")

    def set(self, m: int, j: int, value: float, count: int = 0):
        if not 0.0 <= value <= 1.0:
            raise ContractViolation(f"probability out of range at {(m, j)}: {value}")
        self.values[(int(m), int(j))] = float(value)
        self.counts[(int(m), int(j))] = int(count)

    def __contains__(self, cell):
        return tuple(cell) in self.values

    def get(self, m: int, j: int = 0) -> float:
        try:
            return self.values[(m, j)]
        except KeyError:
            raise IncompleteTableError([(m, j)]) from None

    def stderr(self, m: int, j: int = 0) -> float:
        """Binomial standard error of a measured cell (0 for hypothetical tables)."""
        n = self.counts.get((m, j), 0)
        if self.provenance != "measured" or n <= 0:
            return 0.0
        p = self.get(m, j)
        return math.sqrt(p * (1.0 - p) / n)

    def dumps(self) -> str:
        buf = io.StringIO()
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
        buf.write(f"{_MAGIC} v{_VERSION} kind={self.kind} provenance={self.provenance}"
                  + (f" {meta}" if meta else "") + "\n")
        for (m, j) in sorted(self.values):
            buf.write(f"{m} {j} {self.values[(m, j)]:.6f} {self.counts.get((m, j), 0)}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "SuccessTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ContractViolation("empty success table")
        head = lines[0].split()
        if head[0] != _MAGIC or head[1] != f"v{_VERSION}":
            raise ContractViolation(f"not a v{_VERSION} success table")
        attrs = dict(tok.split("=", 1) for tok in head[2:])
        kind = attrs.pop("kind")
        provenance = attrs.pop("provenance", "measured")
        table = cls(kind, provenance=provenance, meta=attrs)
        for ln in lines[1:]:
            m, j, p, n = ln.split()
            table.set(int(m), int(j), float(p), int(n))
        return table


def ones_table(kind: str, cells) -> SuccessTable:
    """Hypothetical table with every listed cell equal to 1."""
    table = SuccessTable(kind, provenance="hypothetical")
    for m, j in cells:
        table.set(m, j, 1.0)
    return table


def zf_rayleigh_success(m: int, dim: int, snr_db: float = 0.0, threshold_db: float = 0.0) -> float:
    """Per-stream success of ZF over ``m`` i.i.d. Rayleigh streams in ``dim`` dimensions.

    The post-ZF SNR is ``snr * X`` with ``X ~ Gamma(dim - m + 1, 1)``, so the
    success probability is the Poisson tail ``exp(-x) sum_{k<n} x^k / k!``
    with ``x = threshold / snr``.
    """
    if m > dim:
        return 0.0
    x = 10.0 ** ((threshold_db - snr_db) / 10.0)
    n = dim - m + 1
    term, total = 1.0, 1.0
    for k in range(1, n):
        term *= x / k
        total += term
    return math.exp(-x) * total


def rayleigh_zf_table(max_streams: int, dim: int, snr_db: float = 0.0, threshold_db: float = 0.0,
                      kind: str = MPR_BY_TOTAL) -> SuccessTable:
    table = SuccessTable(kind, provenance="hypothetical", meta={"dim": dim, "source": "closed-form"})
    for m in range(1, max_streams + 1):
        table.set(m, 0 if kind == MPR_BY_TOTAL else dim, zf_rayleigh_success(m, dim, snr_db, threshold_db))
    return table


def log_binom_pmf(n: int, k: int, p: float) -> float:
    if k < 0 or k > n:
        return -math.inf
    if p <= 0.0:
        return 0.0 if k == 0 else -math.inf
    if p >= 1.0:
        return 0.0 if k == n else -math.inf
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            + k * math.log(p) + (n - k) * math.log1p(-p))


def binom_pmf(n: int, k: int, p: float) -> float:
    return math.exp(log_binom_pmf(n, k, p))


def _total_cell(table: SuccessTable, m: int, dim: int):
    return (m, dim) if table.kind == MPR_BY_DIM else (m, 0)


def _mpr_terms(cfg: NetworkConfig, table: SuccessTable):
    nk, p = cfg.N * cfg.K, cfg.p
    return [(m * binom_pmf(nk, m, p), table, _total_cell(table, m, cfg.M)) for m in range(1, cfg.M + 1)]


def _in_terms(cfg: NetworkConfig, table_dim_s: SuccessTable, table_dim_m: SuccessTable):
    K, N, M, S, p = cfg.K, cfg.N, cfg.M, cfg.S, cfg.p
    others = N * (K - 1)
    terms = [(K * m * binom_pmf(N, m, p), table_dim_s, _total_cell(table_dim_s, m, S))
             for m in range(1, S + 1)]
    for m in range(S + 1, M + 1):
        w = K * m * binom_pmf(N, m, p)
        for j in range(0, M - m + 1):
            terms.append((w * binom_pmf(others, j, p), table_dim_m, _total_cell(table_dim_m, m + j, M)))
    return terms


def _oia_terms(cfg: NetworkConfig, table_mpr_total: SuccessTable, table_oia: SuccessTable):
    K, N, M, S, p = cfg.K, cfg.N, cfg.M, cfg.S, cfg.p
    others = N * (K - 1)
    terms = []
    for m in range(1, M + 1):
        w = K * m * binom_pmf(N, m, p)
        for j in range(0, M - m + 1):
            terms.append((w * binom_pmf(others, j, p), table_mpr_total, _total_cell(table_mpr_total, m + j, M)))
    for m in range(1, S + 1):
        w = K * m * binom_pmf(N, m, p)
        for j in range(M - m + 1, others + 1):
            terms.append((w * binom_pmf(others, j, p), table_oia, (m, j)))
    return terms


def _evaluate(terms):
    missing = [cell for _, table, cell in terms if cell not in table]
    if missing:
        raise IncompleteTableError(set(missing))
    value = sum(c * table.get(*cell) for c, table, cell in terms)
    # a cell can appear in several terms; its error enters once with the summed weight
    weights = {}
    for c, table, cell in terms:
        key = (id(table), cell)
        weights[key] = (weights.get(key, (0.0, table))[0] + c, table)
    var = sum((c * table.stderr(*key[1])) ** 2 for key, (c, table) in weights.items())
    return value, math.sqrt(var)


def required_cells(cfg: NetworkConfig, protocol: str):
    """Cells each formula reads, as ``{role: [(m, j), ...]}``."""
    K, N, M, S = cfg.K, cfg.N, cfg.M, cfg.S
    if protocol == "mpr":
        return {"mpr": [(m, 0) for m in range(1, M + 1)]}
    if protocol == "in":
        return {"dim_s": [(m, S) for m in range(1, S + 1)],
                "dim_m": [(t, 0) for t in range(S + 1, M + 1)]}
    if protocol == "oia":
        return {"mpr": [(t, 0) for t in range(1, M + 1)],
                "oia": [(m, j) for m in range(1, S + 1) for j in range(M - m + 1, N * (K - 1) + 1)]}
    raise ContractViolation(f"no analytic formula for {protocol!r}")


def throughput_mpr(cfg: NetworkConfig, table: SuccessTable) -> float:
    """MPR throughput: sum_m m Binom(NK, m; p) P_m over m <= M."""
    return _evaluate(_mpr_terms(cfg, table))[0]


def throughput_in(cfg: NetworkConfig, table_dim_s: SuccessTable, table_dim_m: SuccessTable) -> float:
    """Interference-nulling throughput (requires ``S < min(L / (K-1), M)``)."""
    if not cfg.satisfies_nulling_condition():
        raise ConfigurationError(f"interference nulling requires S < min{{L/(K-1), M}}; got S={cfg.S}")
    return _evaluate(_in_terms(cfg, table_dim_s, table_dim_m))[0]


def throughput_oia(cfg: NetworkConfig, table_mpr_total: SuccessTable, table_oia: SuccessTable) -> float:
    """OIA throughput: joint-ZF regime (s <= M) plus signal-space regime (s > M, m <= S)."""
    return _evaluate(_oia_terms(cfg, table_mpr_total, table_oia))[0]


def throughput_with_stderr(protocol: str, cfg: NetworkConfig, *tables):
    """``(throughput, standard error)`` with table errors propagated linearly."""
    builders = {"mpr": _mpr_terms, "in": _in_terms, "oia": _oia_terms}
    if protocol not in builders:
        raise ContractViolation(f"no analytic formula for {protocol!r}")
    if protocol == "in" and not cfg.satisfies_nulling_condition():
        raise ConfigurationError(f"interference nulling requires S < min{{L/(K-1), M}}; got S={cfg.S}")
    return _evaluate(builders[protocol](cfg, *tables))


CSV_HEADER = "protocol,K,N,M,L,S,p,slots,replications,seed,throughput,stderr"


@dataclass
class ThroughputRecord:
    protocol: str
    K: int
    N: int
    M: int
    L: int
    S: int
    p: float
    throughput: float
    stderr: float = 0.0
    source: str = "analytic"
    slots: int = 0
    replications: int = 0
    seed: int = 0
    transmit_rate: float = math.nan  # mean fraction of users active per slot (simulated only)

    def __post_init__(self):
        bound = min(self.M * self.K, self.N * self.K * self.p) * (1 + 1e-9)
        if self.source == "analytic" and not 0.0 <= self.throughput <= bound + 1e-12:
            raise ContractViolation(f"throughput {self.throughput} violates the bound {bound}")

    def csv_row(self) -> str:
        return (f"{self.protocol},{self.K},{self.N},{self.M},{self.L},{self.S},{self.p:.6f},"
                f"{self.slots},{self.replications},{self.seed},{self.throughput:.6f},{self.stderr:.6f}")

    @classmethod
    def from_csv_row(cls, row: str, source: str = "simulated") -> "ThroughputRecord":
        f = row.strip().split(",")
        return cls(f[0], int(f[1]), int(f[2]), int(f[3]), int(f[4]), int(f[5]), float(f[6]),
                   float(f[10]), float(f[11]), source, int(f[7]), int(f[8]), int(f[9]))
