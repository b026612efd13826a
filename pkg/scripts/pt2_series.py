"""Variational + PT2 energies at several core sizes and the linear extrapolation.

Writes series.csv (n_dets, e_var, e_per, e_tot) to --out.
"""

import argparse
import csv
from pathlib import Path

from trimci.engine import TrimCIConfig, TrimCIRun
from trimci.integrals import HubbardSpec, hubbard_integrals
from trimci.pt2 import extrapolate, pt2_correction

FCI_4X4_U2 = -18.0175717


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--u", type=float, default=2.0)
    ap.add_argument("--sizes", default="1000,2000,4000,8000")
    ap.add_argument("--epsilon2", type=float, default=1e-6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=".")
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    ints = hubbard_integrals(HubbardSpec(4, 4, u=args.u, basis="momentum"))
    cfg = TrimCIConfig(max_final_dets=max(sizes), core_set_ratio=(1.0, 1.5),
                       seed_reference=True, seed=args.seed)
    runner = TrimCIRun(cfg, ints)
    rows, pending = [], list(sizes)
    while not runner.done and pending:
        runner.step()
        while pending and len(runner.state) >= pending[0]:
            pending.pop(0)
            res = pt2_correction(runner.state, ints, args.epsilon2)
            rows.append((len(runner.state), res.e_var, res.e_per, res.e_tot))
            print(f"{len(runner.state):8d} E_var {res.e_var:.8f} E_per {res.e_per:.8f} "
                  f"E_tot {res.e_tot:.8f}", flush=True)
    fit = extrapolate([(v, p) for _, v, p, _ in rows])
    print(f"intercept {fit.intercept:.8f} slope {fit.slope:.4f} r2 {fit.r_squared:.5f}")
    if args.u == 2.0:
        print(f"relative error vs FCI {abs(fit.intercept - FCI_4X4_U2) / abs(FCI_4X4_U2):.2e}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_dets", "e_var", "e_per", "e_tot"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
