"""Hamming profile, rank power law and MDS coordinates for a saved wavefunction."""

import argparse
from pathlib import Path

from trimci import analysis
from trimci.io import load_wavefunction


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wavefunction")
    ap.add_argument("--out", default=".")
    ap.add_argument("--k-max", type=int, default=2000)
    args = ap.parse_args()

    state = load_wavefunction(args.wavefunction).state
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dist = analysis.hamming_distribution(state)
    analysis.write_hamming_csv(dist, out / "hamming.csv")
    print("hamming weights:", ", ".join(f"{d}:{w:.4f}" for d, w in dist.rows()))

    analysis.write_cumulative_csv(state.coeffs, out / "cumulative.csv")
    fit = analysis.cumulative_and_fit(state)
    print(f"power law alpha {fit.alpha:.3f} (r2 {fit.r_squared:.3f}, ranks {fit.fit_range})")

    emb = analysis.mds_embedding(state, args.k_max)
    analysis.write_mds_csv(state, emb, out / "mds.csv")
    print(f"mds stress {emb.stress:.3f} over {len(emb.selected)} determinants")


if __name__ == "__main__":
    main()
