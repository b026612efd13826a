"""Command-line driver.

Exit codes:
    0  success
    1  unexpected internal error
    2  usage error (bad arguments, unknown analysis, invalid lattice)
    3  configuration or manifest error
    4  input file missing or malformed (FCIDUMP, wavefunction)
    5  solver failure (eigensolver, iteration, ensemble, PT2 near-degeneracy)
    6  sector too large for the exact solver
    7  wavefunction does not match the problem dimensions
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
EXIT_INPUT, EXIT_SOLVER, EXIT_TOO_LARGE, EXIT_MISMATCH = 4, 5, 6, 7


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _threads(args):
    n = getattr(args, "threads", None)
    if n is None:
        env = os.environ.get("TRIMCI_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise CLIError(f"TRIMCI_THREADS must be an integer, got {env!r}", EXIT_USAGE)
    if n is not None and n < 1:
        raise CLIError("thread count must be >= 1", EXIT_USAGE)
    if n is not None:
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def _outdir(args, default):
    out = Path(getattr(args, "output_dir", None) or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lattice(text):
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise CLIError(f"lattice must look like 4x4, got {text!r}", EXIT_USAGE)
    if len(parts) == 1:
        parts.append(1)
    if len(parts) != 2 or min(parts) < 1:
        raise CLIError(f"invalid lattice {text!r}", EXIT_USAGE)
    return parts


def _hubbard_spec(args):
    from .integrals import HubbardSpec
    lx, ly = _lattice(args.hubbard)
    spec = HubbardSpec(lx, ly, t=args.t, u=args.u, boundary=args.boundary,
                       n_up=args.n_up, n_down=args.n_down, basis=args.basis)
    try:
        spec.validate()
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_USAGE)
    return spec


def _problem(args):
    from .integrals import hubbard_integrals
    from .io import load_manifest
    chosen = [x for x in (args.manifest, args.fcidump, args.hubbard) if x]
    if len(chosen) != 1:
        raise CLIError("give exactly one of --manifest, --fcidump or --hubbard", EXIT_USAGE)
    if args.manifest:
        return load_manifest(args.manifest).integrals()
    if args.fcidump:
        from .integrals import parse_fcidump
        return parse_fcidump(args.fcidump)
    return hubbard_integrals(_hubbard_spec(args))


def _add_problem_args(p):
    g = p.add_argument_group("problem")
    g.add_argument("--manifest", help="run manifest (YAML) whose problem section is used")
    g.add_argument("--fcidump", help="FCIDUMP integral file")
    g.add_argument("--hubbard", metavar="LXxLY", help="Hubbard lattice, e.g. 4x4")
    g.add_argument("--u", type=float, default=4.0)
    g.add_argument("--t", type=float, default=1.0)
    g.add_argument("--boundary", choices=("periodic", "open"), default="periodic")
    g.add_argument("--basis", choices=("site", "momentum", "hartley"), default="site")
    g.add_argument("--n-up", type=int, default=None)
    g.add_argument("--n-down", type=int, default=None)


# -- commands ----------------------------------------------------------------

def cmd_run(args):
    from .engine import TrimCIRun, ensemble_run
    from .io import load_manifest, save_wavefunction
    manifest = load_manifest(args.manifest)
    cfg = manifest.config
    if args.seed is not None:
        cfg.seed = args.seed
    threads = _threads(args)
    if threads:
        cfg.workers = threads
    cfg.validate()
    ints = manifest.integrals()
    out = _outdir(args, Path(manifest.base_dir) / manifest.outputs)
    cfg.log_path = str(out / "iterations.jsonl")
    t0 = time.perf_counter()
    summaries = None
    if cfg.num_runs > 1:
        state, records, summaries = ensemble_run(cfg, ints)
        stop = None
    else:
        with open(cfg.log_path, "w") as log:
            runner = TrimCIRun(cfg, ints, log_stream=log)
            state, records = runner.run()
        stop = runner.stop_reason
    wall = time.perf_counter() - t0
    save_wavefunction(state, out / "wavefunction.txt", ints.n_up, ints.n_down)
    summary = {"energy": state.energy, "n_dets": len(state), "iterations": len(records) - 1,
               "wall_time_s": wall, "seed": cfg.seed, "stop_reason": stop}
    if summaries is not None:
        summary["ensemble"] = [s.__dict__ for s in summaries]
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"energy {state.energy:.12f}")
    print(f"determinants {len(state)}")
    print(f"wall_time_s {wall:.2f}")
    return EXIT_OK


def _check_dims(wf, ints, path):
    if wf.state.m != ints.m or wf.n_up != ints.n_up or wf.n_down != ints.n_down:
        raise CLIError(f"{path}: wavefunction (m={wf.state.m}, {wf.n_up}, {wf.n_down}) does not "
                       f"match problem (m={ints.m}, {ints.n_up}, {ints.n_down})", EXIT_MISMATCH)


def cmd_pt2(args):
    from .io import load_wavefunction
    from .pt2 import extrapolate, pt2_correction
    _threads(args)
    ints = _problem(args)
    if not args.series and len(args.wavefunctions) != 1:
        raise CLIError("pt2 takes one wavefunction unless --series is given", EXIT_USAGE)
    points = []
    for path in args.wavefunctions:
        wf = load_wavefunction(path)
        _check_dims(wf, ints, path)
        res = pt2_correction(wf.state, ints, args.epsilon2)
        points.append((res.e_var, res.e_per))
        print(f"{path}: E_var {res.e_var:.12f} E_per {res.e_per:.12f} E_tot {res.e_tot:.12f}")
    if not args.series:
        return EXIT_OK
    fit = extrapolate(points, weighted=args.weighted)
    out = _outdir(args, ".")
    with open(out / "extrapolation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["neg_e_per", "e_tot", "e_var", "e_per"])
        for (x, y), (v, p) in zip(fit.points, points):
            w.writerow([repr(x), repr(y), repr(v), repr(p)])
    print(f"intercept {fit.intercept:.12f}")
    print(f"slope {fit.slope:.12f}")
    print(f"r_squared {fit.r_squared:.12f}")
    return EXIT_OK


def cmd_analyze(args):
    from . import analysis
    from .io import load_wavefunction
    wf = load_wavefunction(args.wavefunction)
    out = _outdir(args, ".")
    state = wf.state
    if args.which == "hamming":
        dist = analysis.hamming_distribution(state)
        analysis.write_hamming_csv(dist, out / "hamming.csv")
        for d, v in dist.rows():
            print(f"{d},{v!r}")
    elif args.which == "powerlaw":
        analysis.write_cumulative_csv(state.coeffs, out / "cumulative.csv")
        fit = analysis.cumulative_and_fit(state, args.fit_lo, args.fit_hi)
        print(f"alpha {fit.alpha:.6f}")
        print(f"r_squared {fit.r_squared:.6f}")
        print(f"sigma {fit.sigma:.6f}")
    elif args.which == "mds":
        emb = analysis.mds_embedding(state, args.k_max)
        analysis.write_mds_csv(state, emb, out / "mds.csv")
        print(f"points {len(emb.selected)}")
        print(f"stress {emb.stress:.6f}")
    else:
        rep = analysis.complexity_report(args.epsilon, len(state))
        with open(out / "complexity.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "r_alg", "sigma_a", "log10_r"])
            w.writerow([repr(rep.epsilon), rep.r_alg, repr(rep.sigma_a), repr(rep.log10_r)])
        print(f"sigma_a {rep.sigma_a:.6f}")
        print(f"log10_r {rep.log10_r:.6f}")
    return EXIT_OK


def cmd_fci(args):
    from .fci import fci_state
    from .io import save_wavefunction
    _threads(args)
    ints = _problem(args)
    state = fci_state(ints, cap=args.cap)
    print(f"energy {state.energy:.12f}")
    print(f"determinants {len(state)}")
    if args.write_wavefunction:
        out = _outdir(args, ".")
        save_wavefunction(state, out / "fci_wavefunction.txt", ints.n_up, ints.n_down)
    return EXIT_OK


def cmd_hubbard_dump(args):
    from .integrals import HubbardSpec, hubbard_integrals, write_fcidump
    lx, ly = _lattice(args.lattice)
    spec = HubbardSpec(lx, ly, t=args.t, u=args.u, boundary=args.boundary,
                       n_up=args.n_up, n_down=args.n_down, basis=args.basis)
    try:
        spec.validate()
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_USAGE)
    path = Path(args.out)
    if not path.is_absolute() and getattr(args, "output_dir", None):
        path = _outdir(args, ".") / path
    write_fcidump(hubbard_integrals(spec), path)
    print(str(path))
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (falls back to TRIMCI_THREADS)")
    common.add_argument("--output-dir", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="trimci", parents=[common],
                                     description="Trimmed configuration interaction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run TrimCI from a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_run)

    def pt2_args(p):
        p.add_argument("wavefunctions", nargs="+")
        p.add_argument("--epsilon2", type=float, default=1e-6)
        p.add_argument("--weighted", action="store_true")
        _add_problem_args(p)

    p = sub.add_parser("pt2", parents=[common], help="perturbative correction")
    pt2_args(p)
    p.add_argument("--series", action="store_true", help="extrapolate over several files")
    p.set_defaults(func=cmd_pt2)

    p = sub.add_parser("extrapolate", parents=[common], help="alias of pt2 --series")
    pt2_args(p)
    p.set_defaults(func=cmd_pt2, series=True)

    p = sub.add_parser("analyze", parents=[common], help="wavefunction statistics")
    p.add_argument("which", choices=("hamming", "powerlaw", "mds", "complexity"))
    p.add_argument("wavefunction")
    p.add_argument("--fit-lo", type=float, default=0.01)
    p.add_argument("--fit-hi", type=float, default=0.5)
    p.add_argument("--k-max", type=int, default=2000)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fci", parents=[common], help="exact ground state of a small sector")
    _add_problem_args(p)
    p.add_argument("--cap", type=int, default=2_000_000)
    p.add_argument("--write-wavefunction", action="store_true")
    p.set_defaults(func=cmd_fci)

    p = sub.add_parser("hubbard-dump", parents=[common], help="write a Hubbard FCIDUMP")
    p.add_argument("lattice", help="LXxLY, e.g. 4x4")
    p.add_argument("--out", default="FCIDUMP")
    p.add_argument("--u", type=float, default=4.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--boundary", choices=("periodic", "open"), default="periodic")
    p.add_argument("--basis", choices=("site", "momentum", "hartley"), default="site")
    p.add_argument("--n-up", type=int, default=None)
    p.add_argument("--n-down", type=int, default=None)
    p.set_defaults(func=cmd_hubbard_dump)
    return parser


def _exit_code(exc):
    from .eigensolver import DavidsonError
    from .engine import ConfigError, EnsembleError, IterationError
    from .fci import SectorTooLargeError
    from .integrals import FCIDUMPError
    from .io import WavefunctionFormatError
    from .pt2 import DegenerateFitError, NearDegeneracyError
    if isinstance(exc, CLIError):
        return exc.code
    if isinstance(exc, SectorTooLargeError):
        return EXIT_TOO_LARGE
    if isinstance(exc, (ConfigError, DegenerateFitError)):
        return EXIT_CONFIG
    if isinstance(exc, (FCIDUMPError, WavefunctionFormatError, OSError)):
        return EXIT_INPUT
    if isinstance(exc, (DavidsonError, IterationError, EnsembleError, NearDegeneracyError)):
        return EXIT_SOLVER
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_INTERNAL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "threads", "output_dir", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # mapped to documented exit codes
        code = _exit_code(exc)
        print(f"trimci: error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
