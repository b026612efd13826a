"""Run TrimCI on a periodic Hubbard lattice and print the convergence trace.

    python3 scripts/hubbard_run.py --u 2 --max-dets 1000
"""

import argparse
import json
import time
from pathlib import Path

from trimci.engine import TrimCIConfig, TrimCIRun
from trimci.integrals import HubbardSpec, hubbard_integrals
from trimci.io import save_wavefunction


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lattice", default="4x4")
    ap.add_argument("--u", type=float, default=2.0)
    ap.add_argument("--basis", default="momentum", choices=("site", "momentum", "hartley"))
    ap.add_argument("--max-dets", type=int, default=1000)
    ap.add_argument("--ratios", default="1,1,1,1.1", help="core_set_ratio cycle")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--random-start", action="store_true", help="omit the reference determinant")
    ap.add_argument("--time-limit", type=float, default=None, help="seconds")
    ap.add_argument("--target", type=float, default=None, help="stop once E <= target")
    ap.add_argument("--out", default=None, help="directory for wavefunction and trace")
    args = ap.parse_args()

    lx, ly = (int(x) for x in args.lattice.split("x"))
    ints = hubbard_integrals(HubbardSpec(lx, ly, u=args.u, basis=args.basis))
    cfg = TrimCIConfig(max_final_dets=args.max_dets, seed=args.seed,
                       core_set_ratio=[float(r) for r in args.ratios.split(",")],
                       seed_reference=not args.random_start)
    runner = TrimCIRun(cfg, ints)
    start = time.perf_counter()
    while not runner.done:
        rec = runner.step()
        if rec is None:
            break
        print(f"{rec.iteration:4d} core {rec.core_size:8d} pool {rec.pool_size:9d} "
              f"E {rec.energy:.8f} t {rec.wall_time:8.1f}s", flush=True)
        if args.target is not None and rec.energy <= args.target:
            break
        if args.time_limit and time.perf_counter() - start > args.time_limit:
            break
    state = runner.state
    print(f"final E {state.energy:.10f} with {len(state)} determinants "
          f"({runner.stop_reason or 'stopped'})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_wavefunction(state, out / "wavefunction.txt", ints.n_up, ints.n_down)
        with open(out / "iterations.jsonl", "w") as fh:
            for rec in runner.records:
                fh.write(rec.to_json() + "\n")
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))


if __name__ == "__main__":
    main()
