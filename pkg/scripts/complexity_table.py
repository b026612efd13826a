"""Complexity indices for the 4x4 determinant counts and the lattice-size scaling fit."""

from trimci.analysis import complexity_report, scaling_fit

# determinant counts reaching 99% of the 4x4 FCI energy for U = 2, 4, 8
COUNTS = {2: 4.2e2, 4: 7.2e4, 8: 1.2e6}
FRACTIONS = [(16, 2.5e-6), (36, 3.6e-16), (64, 1.5e-28)]


def main():
    for u, r in COUNTS.items():
        rep = complexity_report(0.01, r)
        print(f"U={u}: r_alg={r:.1e} log10_r={rep.log10_r:.2f} sigma_a={rep.sigma_a:.2f}")
    slope, intercept, r2 = scaling_fit(FRACTIONS)
    print(f"log10 r = {slope:.3f} N + {intercept:.3f}  (r2 {r2:.4f})")


if __name__ == "__main__":
    main()
