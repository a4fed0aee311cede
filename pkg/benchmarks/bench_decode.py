"""Compare the numba and numpy decode kernels on identical slot blocks.

Run with ``python benchmarks/bench_decode.py [--slots 4000] [--repeat 5]``.
Both backends are checked to return the same success flags before timing.
"""
import argparse
import time

import numpy as np

from oiasim import rng as rngmod
from oiasim.channel import make_interference_spaces
from oiasim.config import NetworkConfig
from oiasim.kernels import decode_block
from oiasim.protocols import ProtocolKind, prepare_block, warm_up


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"{'scenario':<28}{'p':>6}{'numba us/slot':>15}{'numpy us/slot':>15}{'speedup':>9}")
    for kind, cfg in [(ProtocolKind.MPR, NetworkConfig()),
                      (ProtocolKind.OIA, NetworkConfig(S=3)),
                      (ProtocolKind.OIA, NetworkConfig(S=1)),
                      (ProtocolKind.OIA, NetworkConfig(K=6, M=6, L=6, S=6))]:
        rng = rngmod.substream(1, 99)
        spaces = make_interference_spaces(cfg, rng)
        bank = warm_up(kind, cfg, spaces, 20_000, rng) if kind.opportunistic else None
        block = prepare_block(kind, cfg, spaces, rng, args.slots, bank)
        for p in (0.05, 0.15):
            active = block.active(p)
            run = {b: (lambda b=b: decode_block(block.eff, block.proj, active, kind.flow, cfg.noise_power,
                                                cfg.threshold_linear, backend=b))
                   for b in ("numba", "numpy")}
            if not np.array_equal(run["numba"](), run["numpy"]()):
                raise SystemExit("backends disagree")
            t_nb, t_np = (_time(run[b], args.repeat) * 1e6 / args.slots for b in ("numba", "numpy"))
            label = f"{kind.value} K={cfg.K} S={cfg.S}"
            print(f"{label:<28}{p:>6.2f}{t_nb:>15.2f}{t_np:>15.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
