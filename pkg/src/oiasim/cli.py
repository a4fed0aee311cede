"""Command-line interface.

Every run is fully described by its flags, optionally read from a flat
``key = value`` config file (keys are flag names; flags win).  Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import math
import os
import sys
from dataclasses import dataclass

from . import __version__, rng as rngmod
from .analytic import (CSV_HEADER, MPR_BY_TOTAL, OIA, SuccessTable, ThroughputRecord, rayleigh_zf_table,
                       throughput_with_stderr)
from .channel import make_interference_spaces
from .config import NetworkConfig
from .errors import ConfigurationError, OiaSimError
from .harness import (PRESETS, Curve, ExperimentPlan, SweepResult, estimate_success_tables, fig4_table,
                      measure_oia_tables, preset_plan, run_sweep, write_atomic)
from .protocols import NULLING_CONSTRAINT, ProtocolKind, validate, warm_up

SUBCOMMANDS = ("simulate", "sweep", "analytic", "estimate-tables", "warmup-cdf", "preset")


class UsageError(Exception):
    """Bad flag value or combination; reported with exit code 2."""


@dataclass(frozen=True)
class Flag:
    name: str
    kind: type
    default: object
    lo: float = None
    hi: float = None
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")

    def range_text(self) -> str:
        if self.kind is bool:
            return "switch"
        if self.lo is None and self.hi is None:
            return "any real" if self.kind is float else "any text"
        fmt = "{:d}" if self.kind is int else "{:g}"
        hi = "inf" if self.hi is None else fmt.format(self.hi)
        return f"[{fmt.format(self.lo)}, {hi}]"

    def convert(self, raw):
        if self.kind is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise UsageError(f"--{self.name}: expected a boolean, got {raw!r}")
        try:
            value = self.kind(raw)
        except (TypeError, ValueError):
            raise UsageError(f"--{self.name}: expected {self.kind.__name__}, got {raw!r}") from None
        if self.kind in (int, float):
            if isinstance(value, float) and not math.isfinite(value):
                raise UsageError(f"--{self.name}: value must be finite, got {raw!r}")
            if (self.lo is not None and value < self.lo) or (self.hi is not None and value > self.hi):
                raise UsageError(f"--{self.name}: {value} is outside {self.range_text()}")
        return value


_NET = [
    Flag("protocol", str, "oia", help="mpr, in, oia, oia_no_txbf or oia_no_ora (comma list for sweep)"),
    Flag("K", int, 3, 1, 64, "overlapped networks"),
    Flag("N", int, 10, 1, 10_000, "users per network"),
    Flag("M", int, 3, 1, 64, "antennas per access point"),
    Flag("L", int, 3, 1, 64, "antennas per user"),
    Flag("S", int, 3, 1, 64, "signal-space dimension, at most M"),
    Flag("snr-db", float, 0.0, -50, 80, "received SNR per antenna in dB"),
    Flag("sinr-threshold-db", float, 0.0, -50, 80, "decoding threshold in dB"),
    Flag("shared-space", bool, False, help="one interference space for every access point"),
    Flag("seed", int, 0, 0, 2 ** 63 - 1, "master seed"),
]
_P = Flag("p", float, 0.1, 0, 1, "transmit probability")
_GRID = [
    Flag("p-start", float, 0.01, 0, 1, "first p of the grid"),
    Flag("p-end", float, 0.30, 0, 1, "last p of the grid (inclusive)"),
    Flag("p-step", float, 0.01, 1e-6, 1, "grid spacing"),
]
_RUN = [
    Flag("slots", int, 100_000, 1, 10 ** 9, "measurement slots per point and replication"),
    Flag("replications", int, 3, 1, 1000, "independent replications"),
    Flag("warmup", int, 100_000, 1, 10 ** 9, "leakage samples collected before measuring"),
    Flag("per-user-cdf", bool, False, help="one leakage CDF per user instead of a shared one"),
]
_P_OPT = Flag("p", float, None, 0, 1, "single transmit probability; the p grid is used when absent")
_PRESET = [
    Flag("slots", int, None, 1, 10 ** 9, "override the recipe's slots per point"),
    Flag("replications", int, None, 1, 1000, "override the recipe's replications"),
    Flag("warmup", int, None, 1, 10 ** 9, "override the recipe's warm-up samples"),
]
_OUT = Flag("out", str, None, help="output path (written atomically)")
_TABLES = Flag("tables", str, None, help="success-table file(s), comma separated")
_SAMPLES = Flag("samples", int, 2000, 100, 10 ** 8, "conditioned trials per table cell")
_JMAX = Flag("j-max", int, None, 0, 10 ** 6, "largest foreign-user count j to tabulate")

FLAGS = {
    "simulate": _NET + [_P] + _RUN + [_OUT],
    "sweep": _NET + _GRID + _RUN + [_OUT],
    "analytic": _NET + [_P_OPT] + _GRID + [_TABLES, _OUT],
    "estimate-tables": _NET + [_P, _SAMPLES, _JMAX, _RUN[2], _RUN[3], _OUT],
    "warmup-cdf": _NET + [_RUN[2], _RUN[3], _OUT],
    "preset": [_NET[-1]] + _PRESET + [_SAMPLES, _OUT],
}
_DESCRIPTIONS = {
    "simulate": "simulate one protocol at one transmit probability",
    "sweep": "simulate protocols over a grid of transmit probabilities",
    "analytic": "evaluate the closed-form throughput from success tables",
    "estimate-tables": "measure per-packet success tables by conditioned simulation",
    "warmup-cdf": "collect leakage samples and write the CDF estimators",
    "preset": "run a figure recipe: " + ", ".join(PRESETS),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oiasim", description="Opportunistic interference alignment simulator.")
    parser.add_argument("--version", action="version", version=f"oiasim {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sub = subs.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name])
        if name == "preset":
            sub.add_argument("name", choices=PRESETS, help="figure recipe")
        sub.add_argument("--config", default=None, help="key = value file with flag defaults")
        for flag in FLAGS[name]:
            default = "none" if flag.default is None else flag.default
            text = f"{flag.help}; range {flag.range_text()}, default {default}"
            if flag.kind is bool:
                sub.add_argument(f"--{flag.name}", dest=flag.dest, action="store_const", const=True,
                                 default=None, help=text)
            else:
                sub.add_argument(f"--{flag.name}", dest=flag.dest, default=None,
                                 metavar=flag.name.upper().replace("-", "_"), help=text)
    return parser


def help_text() -> str:
    """Top-level help followed by every subcommand's help."""
    parser = build_parser()
    parts = [parser.format_help()]
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name in SUBCOMMANDS:
        parts.append(subs.choices[name].format_help())
    return "\n".join(parts)


def read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().lstrip("-").replace("_", "-")] = value.strip()
    return values


@dataclass
class CliInvocation:
    command: str
    values: dict
    preset: str = None

    def cfg(self, **overrides) -> NetworkConfig:
        v = self.values
        fields = dict(K=v["K"], N=v["N"], M=v["M"], L=v["L"], S=v["S"], p=v.get("p", 0.1),
                      snr_db=v["snr_db"], sinr_threshold_db=v["sinr_threshold_db"],
                      shared_interference_space=v["shared_space"], seed=v["seed"])
        fields.update(overrides)
        return NetworkConfig(**fields)

    def protocols(self):
        return [ProtocolKind.parse(t) for t in str(self.values["protocol"]).split(",") if t.strip()]

    def p_grid(self):
        v = self.values
        if v["p_end"] < v["p_start"]:
            raise UsageError("--p-end must not be smaller than --p-start")
        n = int(math.floor((v["p_end"] - v["p_start"]) / v["p_step"] + 1e-9)) + 1
        return tuple(round(v["p_start"] + i * v["p_step"], 10) for i in range(n))


def parse_and_validate(argv) -> CliInvocation:
    """Parse ``argv`` and check every value; raises :class:`UsageError`."""
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
    flags = FLAGS[args.command]
    known = {f.name for f in flags}
    from_file = read_config_file(args.config) if args.config else {}
    for key in from_file:
        if key not in known:
            raise UsageError(f"--config: unknown key {key!r} for {args.command}")
    values = {}
    for flag in flags:
        raw = getattr(args, flag.dest)
        if raw is None:
            raw = from_file.get(flag.name, flag.default)
        values[flag.dest] = None if raw is None else flag.convert(raw)
    inv = CliInvocation(args.command, values, getattr(args, "name", None))
    if args.command != "preset":
        try:
            kinds = inv.protocols()
            if not kinds:
                raise UsageError("--protocol: no protocol given")
            cfg = inv.cfg()
            for kind in kinds:
                validate(kind, cfg)
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from None
        if args.command in ("warmup-cdf",) and not any(k.opportunistic for k in kinds):
            raise UsageError("--protocol: warmup-cdf needs an opportunistic protocol (oia, oia_no_txbf)")
        if args.command == "sweep" or (args.command == "analytic" and values.get("p") is None):
            inv.p_grid()
    return inv


# --- dispatch ------------------------------------------------------------------

def _check_writable(path: str):
    if path is None:
        return
    directory = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise OSError(f"output directory {directory} is not writable")
    if os.path.exists(path) and not os.access(path, os.W_OK):
        raise OSError(f"output file {path} is not writable")


def _emit(path: str, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _workers() -> int:
    raw = os.environ.get("OIASIM_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"OIASIM_WORKERS must be an integer, got {raw!r}") from None


def _plan(inv: CliInvocation, p_values) -> ExperimentPlan:
    v = inv.values
    cfg = inv.cfg()
    curves = [Curve(kind, cfg) for kind in inv.protocols()]
    return ExperimentPlan(curves, p_values=p_values, slots=v["slots"], replications=v["replications"],
                          warmup_samples=v["warmup"], shared_cdf=not v["per_user_cdf"], seed=v["seed"],
                          out=None, workers=_workers(), name=inv.command)


def _finish_sweep(result: SweepResult, out: str):
    if out is None:
        sys.stdout.write(result.to_csv())
    else:
        result.write(out)


def _load_tables(spec: str):
    tables = []
    for path in spec.split(","):
        with open(path.strip(), encoding="utf-8") as fh:
            text = fh.read()
        chunks, current = [], []
        for line in text.splitlines():
            if line.startswith("oiasim-successtable") and current:
                chunks.append("\n".join(current))
                current = []
            current.append(line)
        if current:
            chunks.append("\n".join(current))
        tables += [SuccessTable.loads(c) for c in chunks if c.strip()]
    return tables


def _analytic_tables(kind: ProtocolKind, cfg: NetworkConfig, tables):
    if kind is ProtocolKind.MPR:
        if not tables:
            return (rayleigh_zf_table(cfg.M, cfg.M, cfg.snr_db, cfg.sinr_threshold_db),)
        return (tables[0],)
    if kind is ProtocolKind.IN:
        if not tables:
            return (rayleigh_zf_table(cfg.S, cfg.S, cfg.snr_db, cfg.sinr_threshold_db),
                    rayleigh_zf_table(cfg.M, cfg.M, cfg.snr_db, cfg.sinr_threshold_db))
        if len(tables) < 2:
            raise UsageError("--tables: in needs two tables (dimension S, then dimension M)")
        return tables[0], tables[1]
    oia = [t for t in tables if t.kind == OIA]
    total = [t for t in tables if t.kind != OIA]
    if not oia or not total:
        raise UsageError(f"--tables: {kind.value} needs an oia table and an mpr table")
    return total[0], oia[0]


def dispatch(inv: CliInvocation) -> int:
    v = inv.values
    out = v.get("out")
    _check_writable(out)
    if inv.command == "preset":
        if inv.preset == "fig4":
            table = fig4_table(seed=v["seed"], samples_per_cell=v["samples"],
                               warmup_samples=v["warmup"] or 100_000)
            _emit(out, table.dumps())
            return 0
        plan = preset_plan(inv.preset, seed=v["seed"], slots=v["slots"], replications=v["replications"],
                           warmup_samples=v["warmup"], workers=_workers())
        _finish_sweep(run_sweep(plan), out)
        return 0
    if inv.command == "simulate":
        _finish_sweep(run_sweep(_plan(inv, (v["p"],))), out)
        return 0
    if inv.command == "sweep":
        _finish_sweep(run_sweep(_plan(inv, inv.p_grid())), out)
        return 0
    if inv.command == "analytic":
        tables = _load_tables(v["tables"]) if v["tables"] else []
        p_values = (v["p"],) if v["p"] is not None else inv.p_grid()
        lines = [CSV_HEADER]
        for kind in inv.protocols():
            if kind.value not in ("mpr", "in", "oia"):
                raise UsageError(f"--protocol: no closed form for {kind.value}")
            for p in p_values:
                cfg = inv.cfg(p=p)
                value, _ = throughput_with_stderr(kind.value, cfg, *_analytic_tables(kind, cfg, tables))
                rec = ThroughputRecord(kind.value, cfg.K, cfg.N, cfg.M, cfg.L, cfg.S, p, value, 0.0,
                                       "analytic", seed=cfg.seed)
                lines.append(rec.csv_row())
        _emit(out, "\n".join(lines) + "\n")
        return 0
    if inv.command == "estimate-tables":
        kind = inv.protocols()[0]
        cfg = inv.cfg()
        if kind is ProtocolKind.MPR:
            rng = rngmod.substream(cfg.seed, rngmod.TABLES, rngmod.label_key(Curve(kind, cfg).label))
            cells = [(t, 0) for t in range(1, cfg.M + 1)]
            _emit(out, estimate_success_tables(kind, cfg, cells, v["samples"], rng, table_kind=MPR_BY_TOTAL).dumps())
            return 0
        total, table = measure_oia_tables(cfg, v["samples"], v["seed"], kind=kind,
                                          warmup_samples=v["warmup"], j_max=v["j_max"])
        _emit(out, total.dumps() + table.dumps())
        return 0
    if inv.command == "warmup-cdf":
        kind = inv.protocols()[0]
        cfg = inv.cfg()
        key = rngmod.label_key(Curve(kind, cfg).label)
        spaces = make_interference_spaces(cfg, rngmod.substream(cfg.seed, rngmod.SPACES, key, 0))
        bank = warm_up(kind, cfg, spaces, v["warmup"], rngmod.substream(cfg.seed, rngmod.WARMUP, key, 0),
                       shared=not v["per_user_cdf"])
        _emit(out, bank.dumps())
        return 0
    raise UsageError(f"unknown command {inv.command}")  # pragma: no cover


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if any(a in ("-h", "--help", "--version") for a in argv):
        try:
            build_parser().parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
    try:
        inv = parse_and_validate(argv)
    except UsageError as exc:
        message = str(exc)
        if "nulling" in message and NULLING_CONSTRAINT not in message:
            message += f" ({NULLING_CONSTRAINT})"
        print(f"oiasim: error: {message}", file=sys.stderr)
        return 2
    try:
        return dispatch(inv)
    except UsageError as exc:
        print(f"oiasim: error: {exc}", file=sys.stderr)
        return 2
    except OiaSimError as exc:
        print(f"oiasim: {exc.category} error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"oiasim: io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
