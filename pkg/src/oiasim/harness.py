"""Experiment driver: throughput sweeps, success-table estimation, presets.

Random numbers are drawn from substreams keyed by ``(seed, purpose, curve,
replication, chunk)`` so results do not depend on worker count or on which
other curves share the plan.
"""
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels, rng as rngmod
from ._jit import numba_enabled
from .analytic import CSV_HEADER, MPR_BY_TOTAL, OIA, SuccessTable, ThroughputRecord
from .channel import make_interference_spaces
from .config import NetworkConfig
from .errors import ConfigurationError, ContractViolation, EstimationInfeasibleError
from .protocols import (REJECTION_BUDGET, ProtocolKind, chunk_slots, conditioned_successes, delivered_per_slot,
                        prepare_block, validate, warm_up)

REFERENCE_SCENARIO = NetworkConfig(K=3, N=10, M=3, L=3, S=3)
P_GRID = tuple(round(0.01 * i, 2) for i in range(1, 31))


@dataclass(frozen=True)
class Curve:
    """One protocol in one network configuration (``cfg.p`` is ignored)."""

    kind: ProtocolKind
    cfg: NetworkConfig

    @property
    def label(self) -> str:
        c = self.cfg
        return (f"{self.kind.value}:K={c.K}:N={c.N}:M={c.M}:L={c.L}:S={c.S}:snr={c.snr_db:g}"
                f":thr={c.sinr_threshold_db:g}:shared={int(c.shared_interference_space)}")


@dataclass
class ExperimentPlan:
    curves: list
    p_values: tuple = P_GRID
    slots: int = 100_000
    replications: int = 3
    warmup_samples: int = 100_000
    shared_cdf: bool = True
    seed: int = 0
    out: str = None
    workers: int = 1
    name: str = "custom"

    @classmethod
    def grid(cls, protocols, base: NetworkConfig, p_values=P_GRID, S_values=None, K_values=None,
             tie_antennas: bool = False, **kwargs) -> "ExperimentPlan":
        """Cartesian product of protocols x K x S.

        With ``tie_antennas`` every K point uses ``M = L = S = K``.
        """
        curves = []
        for K in (K_values or [base.K]):
            for S in (S_values or [base.S]):
                for kind in protocols:
                    kind = ProtocolKind.parse(kind) if isinstance(kind, str) else kind
                    if tie_antennas:
                        cfg = base.with_(K=K, M=K, L=K, S=K)
                    else:
                        cfg = base.with_(K=K, S=base.M if kind is ProtocolKind.MPR else S)
                    curve = Curve(kind, cfg)
                    if curve not in curves:
                        curves.append(curve)
        return cls(curves=curves, p_values=tuple(p_values), **kwargs)

    def validate(self):
        if self.slots < 1 or self.replications < 1:
            raise ConfigurationError("slots and replications must be at least 1")
        if not self.curves or not self.p_values:
            raise ConfigurationError("the parameter grid is empty")
        for p in self.p_values:
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"p={p} is outside [0, 1]")
        for curve in self.curves:
            try:
                validate(curve.kind, curve.cfg)
            except ConfigurationError as exc:
                raise ConfigurationError(f"invalid point {curve.label}: {exc}") from None


@dataclass
class SweepResult:
    records: list
    metadata: dict = field(default_factory=dict)

    def select(self, protocol, **match):
        protocol = protocol.value if isinstance(protocol, ProtocolKind) else ProtocolKind.parse(protocol).value
        out = [r for r in self.records if r.protocol == protocol
               and all(getattr(r, k) == v for k, v in match.items())]
        return sorted(out, key=lambda r: r.p)

    def to_csv(self) -> str:
        return CSV_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in self.records)

    def write(self, path: str):
        write_atomic(path, self.to_csv())
        write_atomic(path + ".meta.json", json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path: str) -> "SweepResult":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if lines[0] != CSV_HEADER:
            raise ContractViolation(f"{path} does not have the sweep CSV header")
        return cls([ThroughputRecord.from_csv_row(ln) for ln in lines[1:] if ln])


def write_atomic(path: str, text: str):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _curve_task(curve: Curve, plan: ExperimentPlan, rep: int, progress=None):
    """Sums over the slots of one replication: (sum, sum of squares, active users)."""
    cfg, kind = curve.cfg, curve.kind
    key = rngmod.label_key(curve.label)
    spaces = make_interference_spaces(cfg, rngmod.substream(plan.seed, rngmod.SPACES, key, rep))
    bank = None
    if kind.opportunistic:
        bank = warm_up(kind, cfg, spaces, plan.warmup_samples,
                       rngmod.substream(plan.seed, rngmod.WARMUP, key, rep), shared=plan.shared_cdf)
    n_p = len(plan.p_values)
    total, total_sq, active = np.zeros(n_p), np.zeros(n_p), np.zeros(n_p)
    step = chunk_slots(cfg)
    for c, start in enumerate(range(0, plan.slots, step)):
        n = min(step, plan.slots - start)
        block = prepare_block(kind, cfg, spaces, rngmod.substream(plan.seed, rngmod.SLOTS, key, rep, c), n, bank)
        delivered = delivered_per_slot(kind, cfg, block, plan.p_values)
        total += delivered.sum(axis=1)
        total_sq += (delivered ** 2).sum(axis=1)
        active += [block.active(p).sum() for p in plan.p_values]
        if progress is not None:
            progress(curve, rep, start + n)
    return total, total_sq, active


def run_sweep(plan: ExperimentPlan, progress=None) -> SweepResult:
    """Simulate every curve at every ``p`` of the plan.

    The throughput of a point is the mean number of packets delivered per
    slot summed over all networks.  Its standard error is computed from the
    per-slot variance over all ``slots * replications`` i.i.d. slots.  Slots
    are shared across the ``p`` grid (common random numbers), which keeps
    each point unbiased and makes the curves smooth in ``p``.
    """
    plan.validate()
    started = time.time()
    tasks = [(ci, rep) for ci in range(len(plan.curves)) for rep in range(plan.replications)]
    workers = max(1, int(plan.workers))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {t: pool.submit(_curve_task, plan.curves[t[0]], plan, t[1]) for t in tasks}
            results = {t: f.result() for t, f in futures.items()}
    else:
        results = {t: _curve_task(plan.curves[t[0]], plan, t[1], progress) for t in tasks}

    records = []
    n_total = plan.slots * plan.replications
    for ci, curve in enumerate(plan.curves):
        total = sum(results[(ci, r)][0] for r in range(plan.replications))
        total_sq = sum(results[(ci, r)][1] for r in range(plan.replications))
        active = sum(results[(ci, r)][2] for r in range(plan.replications))
        mean = total / n_total
        var = np.maximum(total_sq / n_total - mean ** 2, 0.0) * n_total / max(n_total - 1, 1)
        stderr = np.sqrt(var / n_total)
        c = curve.cfg
        for n, p in enumerate(plan.p_values):
            records.append(ThroughputRecord(
                curve.kind.value, c.K, c.N, c.M, c.L, c.S, float(p), float(mean[n]), float(stderr[n]),
                "simulated", plan.slots, plan.replications, plan.seed,
                transmit_rate=float(active[n] / (n_total * c.K * c.N))))
    records.sort(key=lambda r: (r.protocol, r.K, r.S, r.p))
    metadata = {
        "plan": plan.name,
        "seed": plan.seed,
        "slots": plan.slots,
        "replications": plan.replications,
        "warmup_samples": plan.warmup_samples,
        "shared_cdf": plan.shared_cdf,
        "curves": [curve.label for curve in plan.curves],
        "build": f"oiasim {__version__} ({'numba' if numba_enabled() else 'numpy'} kernels)",
        "wall_time_s": round(time.time() - started, 3),
    }
    result = SweepResult(records, metadata)
    if plan.out:
        result.write(plan.out)
    return result


def find_max_throughput(sweep: SweepResult, protocol, **match):
    """Grid argmax of a protocol's curve, ties resolved towards smaller ``p``.

    Returns ``(p_star, throughput, stderr)``.
    """
    records = sweep.select(protocol, **match)
    if not records:
        raise LookupError(f"sweep has no records for {protocol} {match or ''}".strip())
    best = records[0]
    for rec in records[1:]:
        if rec.throughput > best.throughput:
            best = rec
    return best.p, best.throughput, best.stderr


# --- success tables ------------------------------------------------------------

def estimate_success_tables(kind, cfg: NetworkConfig, cells, samples_per_cell: int,
                            rng: np.random.Generator, bank=None, table_kind: str = OIA,
                            warmup_samples: int = 100_000, budget: int = REJECTION_BUDGET,
                            flow: int = None) -> SuccessTable:
    """Monte-Carlo per-packet success probability for each ``(m, j)`` cell.

    Each trial is one conditioned slot (exactly ``m`` active users in network
    0 and ``j`` elsewhere); a cell's value is the fraction of network 0's
    streams that were decoded and its count is the number of trials.  Cells
    the access rule cannot reach are left out of the table.  ``flow``
    overrides the kind's receive flow.
    """
    kind = ProtocolKind.parse(kind) if isinstance(kind, str) else kind
    if samples_per_cell < 100:
        raise ContractViolation("samples_per_cell must be at least 100")
    validate(kind, cfg)
    spaces = make_interference_spaces(cfg, rng)
    if kind.opportunistic and bank is None:
        bank = warm_up(kind, cfg, spaces, warmup_samples, rng)
    meta = {"protocol": kind.value, "K": cfg.K, "N": cfg.N, "M": cfg.M, "L": cfg.L, "S": cfg.S,
            "p": f"{cfg.p:.6f}", "snr_db": f"{cfg.snr_db:g}", "threshold_db": f"{cfg.sinr_threshold_db:g}"}
    table = SuccessTable(table_kind, meta=meta)
    for m, j in cells:
        m_own, j_other = (m, 0) if table_kind == MPR_BY_TOTAL else (m, j)
        try:
            ok = conditioned_successes(kind, cfg, spaces, m_own, j_other, samples_per_cell, rng, bank, budget,
                                       flow)
        except EstimationInfeasibleError:
            continue
        table.set(m, j, float(ok.mean()), samples_per_cell)
    return table


def measure_oia_tables(cfg: NetworkConfig, samples_per_cell: int, seed: int, kind=ProtocolKind.OIA,
                       warmup_samples: int = 100_000, j_max: int = None):
    """Both tables the OIA throughput formula reads, measured under ``kind``."""
    key = rngmod.label_key(Curve(kind, cfg).label)
    rng = rngmod.substream(seed, rngmod.TABLES, key)
    spaces = make_interference_spaces(cfg, rng)
    bank = warm_up(kind, cfg, spaces, warmup_samples, rng) if kind.opportunistic else None
    j_max = cfg.N * (cfg.K - 1) if j_max is None else j_max
    mpr_cells = [(t, 0) for t in range(1, cfg.M + 1)]
    oia_cells = [(m, j) for m in range(1, cfg.S + 1) for j in range(cfg.M - m + 1, j_max + 1)]
    total = estimate_success_tables(kind, cfg, mpr_cells, samples_per_cell, rng, bank, MPR_BY_TOTAL)
    table = estimate_success_tables(kind, cfg, oia_cells, samples_per_cell, rng, bank, OIA)
    return total, table


# --- presets -------------------------------------------------------------------

PRESETS = ("fig4", "fig5", "fig6", "fig7")


def preset_plan(name: str, seed: int = 0, slots: int = None, replications: int = None,
                warmup_samples: int = None, p_values=None, out: str = None, workers: int = 1) -> ExperimentPlan:
    """Sweep recipes for the throughput figures.

    fig5: MPR, IN and OIA with S in {1, 2, 3} over p (K=3, N=10, M=L=3).
    fig6: MPR, OIA and its two ablations at S=3, same scenario.
    fig7: MPR, both ablations and OIA for K = 2..8 with M = L = S = K.
    """
    base = REFERENCE_SCENARIO
    extra = dict(seed=seed, out=out, workers=workers, name=name)
    if name == "fig5":
        curves = [Curve(ProtocolKind.MPR, base), Curve(ProtocolKind.IN, base.with_(S=1))]
        curves += [Curve(ProtocolKind.OIA, base.with_(S=s)) for s in (1, 2, 3)]
        plan = ExperimentPlan(curves, **extra)
    elif name == "fig6":
        kinds = (ProtocolKind.MPR, ProtocolKind.OIA_NO_TXBF, ProtocolKind.OIA_NO_ORA, ProtocolKind.OIA)
        plan = ExperimentPlan([Curve(k, base) for k in kinds], **extra)
    elif name == "fig7":
        kinds = (ProtocolKind.MPR, ProtocolKind.OIA_NO_TXBF, ProtocolKind.OIA_NO_ORA, ProtocolKind.OIA)
        plan = ExperimentPlan.grid(kinds, base, K_values=range(2, 9), tie_antennas=True,
                                   slots=20_000, **extra)
    elif name == "fig4":
        raise ConfigurationError("fig4 is a success-table preset; use fig4_table()")
    else:
        raise ConfigurationError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    if slots is not None:
        plan.slots = slots
    if replications is not None:
        plan.replications = replications
    if warmup_samples is not None:
        plan.warmup_samples = warmup_samples
    if p_values is not None:
        plan.p_values = tuple(p_values)
    return plan


def fig4_table(seed: int = 0, samples_per_cell: int = 2000, j_max: int = 10, p: float = 0.15,
               warmup_samples: int = 100_000) -> SuccessTable:
    """OIA per-packet success versus (m, j) at K=3, M=L=S=3.

    Every cell uses the projected receiver, the one the OIA success symbol
    describes.  Cells with ``m + j <= M`` would otherwise be decoded jointly
    and report the joint receiver's success instead.
    """
    cfg = REFERENCE_SCENARIO.with_(p=p)
    key = rngmod.label_key(Curve(ProtocolKind.OIA, cfg).label)
    rng = rngmod.substream(seed, rngmod.TABLES, key, 4)
    cells = [(m, j) for m in (1, 2, 3) for j in range(0, j_max + 1)]
    return estimate_success_tables(ProtocolKind.OIA, cfg, cells, samples_per_cell, rng,
                                   warmup_samples=warmup_samples, flow=kernels.FLOW_PROJECTED)


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n > 0 else math.inf
