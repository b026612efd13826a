"""Two ensemble runs from different seeds; compares their top-20 determinant sets."""

import argparse

import numpy as np

from trimci.determinants import from_array
from trimci.engine import TrimCIConfig, ensemble_run
from trimci.integrals import HubbardSpec, hubbard_integrals


def top(state, k):
    order = np.lexsort((np.arange(len(state)), -np.abs(state.coeffs)))[:k]
    return set(from_array(state.dets[order]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--u", type=float, default=2.0)
    ap.add_argument("--seeds", default="0,100")
    ap.add_argument("--runs", type=int, default=2)
    ap.add_argument("--max-dets", type=int, default=1000)
    ap.add_argument("--k", type=int, default=20)
    args = ap.parse_args()

    ints = hubbard_integrals(HubbardSpec(4, 4, u=args.u, basis="momentum"))
    sets = []
    for seed in (int(s) for s in args.seeds.split(",")):
        state, _, summaries = ensemble_run(
            TrimCIConfig(max_final_dets=args.max_dets, num_runs=args.runs, seed=seed,
                         seed_reference=True), ints)
        print(f"seed {seed}: E {state.energy:.8f}; early energies "
              + ", ".join(f"{s.energy:.4f}" for s in summaries))
        sets.append(top(state, args.k))
    a, b = sets[0], sets[1]
    swapped = {d.swap_spins() for d in b}
    print(f"top-{args.k} overlap {len(a & b)}, with spins exchanged {len(a & swapped)}")


if __name__ == "__main__":
    main()
