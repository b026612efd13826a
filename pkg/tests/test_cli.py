import json
import math

import numpy as np
import pytest

from trimci.cli import main
from trimci.integrals import parse_fcidump
from trimci.io import load_wavefunction

EXACT_TWO_SITE = 2 - 2 * math.sqrt(2)


def manifest(tmp_path, body=None):
    path = tmp_path / "run.yaml"
    path.write_text(body or (
        "config:\n  max_final_dets: 10\n  initial_random_count: 4\n"
        "problem:\n  hubbard: {lx: 2, ly: 1, u: 4.0, boundary: open}\noutputs: out\n"))
    return path


def test_run_two_site(tmp_path, capsys):
    assert main(["run", str(manifest(tmp_path))]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert abs(summary["energy"] - EXACT_TWO_SITE) < 1e-8
    log = (tmp_path / "out" / "iterations.jsonl").read_text().splitlines()
    assert set(json.loads(log[0])) == {"iteration", "core_size", "pool_size", "theta", "energy",
                                       "wall_time_s"}


def test_run_is_deterministic(tmp_path):
    m = manifest(tmp_path)
    main(["run", str(m), "--output-dir", str(tmp_path / "a")])
    main(["run", str(m), "--output-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "wavefunction.txt").read_bytes() == \
        (tmp_path / "b" / "wavefunction.txt").read_bytes()


def test_run_ensemble(tmp_path):
    m = manifest(tmp_path, "config: {max_final_dets: 30, num_runs: 2}\n"
                           "problem:\n  hubbard: {lx: 3, ly: 2, u: 4.0}\n")
    assert main(["run", str(m), "--seed", "3", "--output-dir", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["seed"] == 3 and len(summary["ensemble"]) == 2


def test_missing_fcidump(tmp_path, capsys):
    m = manifest(tmp_path, "problem: {fcidump: nowhere.fcidump}\n")
    assert main(["run", str(m)]) == 4
    assert "error" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    m = manifest(tmp_path, "config: {keep_ratio: 2}\nproblem:\n  hubbard: {lx: 2}\n")
    assert main(["run", str(m)]) == 3


def test_fci_and_pt2(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["fci", "--hubbard", "2x1", "--u", "4", "--boundary", "open",
                 "--write-wavefunction", "--output-dir", out]) == 0
    text = capsys.readouterr().out
    assert f"{EXACT_TWO_SITE:.12f}" in text
    wf = str(tmp_path / "fci_wavefunction.txt")
    assert main(["pt2", wf, "--hubbard", "2x1", "--u", "4", "--boundary", "open"]) == 0
    assert "E_per 0.000000000000" in capsys.readouterr().out


def test_fci_tight_binding(capsys):
    assert main(["fci", "--hubbard", "4x1", "--u", "0", "--boundary", "open"]) == 0
    eps = np.linalg.eigvalsh(np.diag([-1.0] * 3, 1) + np.diag([-1.0] * 3, -1))
    assert f"{2 * eps[:2].sum():.12f}" in capsys.readouterr().out


def test_fci_too_large(capsys):
    assert main(["fci", "--hubbard", "4x4"]) == 6
    assert "TrimCI" in capsys.readouterr().err


def test_pt2_dimension_mismatch(tmp_path):
    main(["fci", "--hubbard", "2x1", "--boundary", "open", "--write-wavefunction",
          "--output-dir", str(tmp_path)])
    wf = str(tmp_path / "fci_wavefunction.txt")
    assert main(["pt2", wf, "--hubbard", "2x2"]) == 7


def write_wf(path, m, n_up, n_down, records, energy):
    lines = ["# trimci-wavefunction 1", f"# m {m}", f"# n_up {n_up}", f"# n_down {n_down}",
             f"# energy {energy!r}", f"# count {len(records)}", "# hamming spin-orbital"]
    lines += [f"{a:x} {b:x} {c!r}" for a, b, c in records]
    path.write_text("\n".join(lines) + "\n")


def test_extrapolate_series(tmp_path, capsys):
    # three runs of growing size on a small lattice
    paths = []
    for i, size in enumerate((4, 8, 16)):
        m = manifest(tmp_path, f"config: {{max_final_dets: {size}, seed: 1}}\n"
                               "problem:\n  hubbard: {lx: 3, ly: 2, u: 4.0}\n")
        d = tmp_path / f"r{i}"
        main(["run", str(m), "--output-dir", str(d)])
        paths.append(str(d / "wavefunction.txt"))
    capsys.readouterr()
    assert main(["extrapolate", *paths, "--hubbard", "3x2", "--epsilon2", "0",
                 "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "intercept" in out
    rows = (tmp_path / "extrapolation.csv").read_text().splitlines()
    assert rows[0] == "neg_e_per,e_tot,e_var,e_per" and len(rows) == 4


def test_analyze_hamming_single(tmp_path, capsys):
    wf = tmp_path / "wf.txt"
    write_wf(wf, 2, 1, 1, [(1, 1, 1.0)], 4.0)
    assert main(["analyze", "hamming", str(wf), "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "hamming.csv").read_text().splitlines() == ["d,weight", "0,1.0"]


def test_analyze_powerlaw_synthetic(tmp_path, capsys):
    import itertools
    R = 2000
    tail = 0.5 * np.arange(1, R + 1, dtype=float) ** -0.5
    c = np.sqrt(np.diff(np.concatenate([[0.0], 1 - tail])))
    strings = [sum(1 << p for p in x) for x in itertools.combinations(range(12), 6)]
    recs = [(strings[i % 924], strings[i // 924], float(v)) for i, v in enumerate(c)]
    wf = tmp_path / "wf.txt"
    write_wf(wf, 12, 6, 6, recs, -1.0)
    assert main(["analyze", "powerlaw", str(wf), "--output-dir", str(tmp_path)]) == 0
    assert "alpha 0.500000" in capsys.readouterr().out


def test_analyze_mds_and_complexity(tmp_path, capsys):
    wf = tmp_path / "wf.txt"
    write_wf(wf, 4, 2, 2, [(3, 3, 0.8), (5, 3, 0.48), (9, 3, 0.36)], -1.0)
    assert main(["analyze", "mds", str(wf), "--output-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "mds.csv").read_text().splitlines()) == 4
    assert main(["analyze", "complexity", str(wf), "--epsilon", "0.1",
                 "--output-dir", str(tmp_path)]) == 0


def test_unknown_analysis_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["analyze", "entropy", "x"])
    assert info.value.code == 2


def test_hubbard_dump(tmp_path, capsys):
    out = tmp_path / "h.fcidump"
    assert main(["hubbard-dump", "2x1", "--u", "4", "--boundary", "open", "--out", str(out)]) == 0
    from trimci.integrals import HubbardSpec, hubbard_integrals
    assert parse_fcidump(out) == hubbard_integrals(HubbardSpec(2, 1, u=4.0, boundary="open"))
    big = tmp_path / "big.fcidump"
    main(["hubbard-dump", "4x4", "--u", "2", "--out", str(big)])
    body = [l.split() for l in big.read_text().splitlines() if l[:1] not in (" ", "&")]
    one = [l for l in body if l[3] == "0" and l[1] != "0"]
    two = [l for l in body if l[3] != "0"]
    core = [l for l in body if l[1:] == ["0", "0", "0", "0"]]
    assert (len(one), len(two), len(core)) == (32, 16, 1)
    assert main(["hubbard-dump", "0x3", "--out", str(tmp_path / "bad")]) == 2


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TRIMCI_THREADS", "1")
    assert main(["fci", "--hubbard", "2x1", "--boundary", "open"]) == 0
    monkeypatch.setenv("TRIMCI_THREADS", "many")
    assert main(["fci", "--hubbard", "2x1", "--boundary", "open"]) == 2
    assert main(["fci", "--hubbard", "2x1", "--boundary", "open", "--threads", "1"]) == 0
