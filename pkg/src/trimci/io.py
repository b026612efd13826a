"""Wavefunction files and run manifests."""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

import numpy as np
import yaml

from .determinants import Determinant, popcount, to_array
from .engine import ConfigError, TrimCIConfig, WavefunctionState
from .integrals import HubbardSpec, IntegralTable, hubbard_integrals, parse_fcidump

FORMAT_TAG = "trimci-wavefunction"
FORMAT_VERSION = 1
HAMMING_TAG = "spin-orbital"


class WavefunctionFormatError(ValueError):
    pass


def _records_order(state):
    # descending |c|, ties in canonical order (rows are already canonical)
    return np.lexsort((np.arange(len(state)), -np.abs(state.coeffs)))


def format_wavefunction(state: WavefunctionState, n_up, n_down) -> str:
    lines = [
        f"# {FORMAT_TAG} {FORMAT_VERSION}",
        f"# m {state.m}",
        f"# n_up {n_up}",
        f"# n_down {n_down}",
        f"# energy {state.energy:.17g}",
        f"# count {len(state)}",
        f"# hamming {HAMMING_TAG}",
    ]
    dets = state.determinants()
    for i in _records_order(state):
        d = dets[i]
        lines.append(f"{d.alpha:x} {d.beta:x} {state.coeffs[i]:.17g}")
    return "\n".join(lines) + "\n"


def save_wavefunction(state: WavefunctionState, path, n_up, n_down):
    Path(path).write_text(format_wavefunction(state, n_up, n_down))


@dataclasses.dataclass
class WavefunctionFile:
    state: WavefunctionState
    n_up: int
    n_down: int
    version: int


def load_wavefunction(path) -> WavefunctionFile:
    header, dets, coeffs = {}, [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    header[parts[0]] = parts[1]
                continue
            parts = line.split()
            if len(parts) != 3:
                raise WavefunctionFormatError(f"line {lineno}: expected 3 fields")
            try:
                dets.append(Determinant(int(parts[0], 16), int(parts[1], 16)))
                coeffs.append(float(parts[2]))
            except ValueError as exc:
                raise WavefunctionFormatError(f"line {lineno}: {exc}") from None
    if FORMAT_TAG not in header:
        raise WavefunctionFormatError("missing format header")
    try:
        m, n_up, n_down = int(header["m"]), int(header["n_up"]), int(header["n_down"])
        energy = float(header["energy"])
        count = int(header["count"])
        version = int(header[FORMAT_TAG])
    except (KeyError, ValueError) as exc:
        raise WavefunctionFormatError(f"bad header: {exc}") from None
    if count != len(dets):
        raise WavefunctionFormatError(f"header count {count} but {len(dets)} records")
    for d in dets:
        if popcount(d.alpha) != n_up or popcount(d.beta) != n_down:
            raise WavefunctionFormatError(f"determinant {d} outside the ({n_up}, {n_down}) sector")
    arr = to_array(dets, m)
    state = WavefunctionState.from_eigen(arr, np.array(coeffs), energy, 0, m)
    return WavefunctionFile(state, n_up, n_down, version)


# -- manifests ---------------------------------------------------------------

@dataclasses.dataclass
class RunManifest:
    config: TrimCIConfig
    problem: dict
    outputs: str = "trimci_out"
    seed: int | None = None
    base_dir: str = "."

    def integrals(self) -> IntegralTable:
        return load_problem(self.problem, self.base_dir)


def hubbard_spec_from(d) -> HubbardSpec:
    names = {f.name for f in dataclasses.fields(HubbardSpec)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown hubbard keys: {sorted(unknown)}")
    return HubbardSpec(**d)


def load_problem(problem: dict, base_dir=".") -> IntegralTable:
    if not isinstance(problem, dict):
        raise ConfigError("problem must be a mapping")
    sources = [k for k in ("fcidump", "hubbard") if k in problem]
    if len(sources) != 1:
        raise ConfigError("problem needs exactly one of 'fcidump' or 'hubbard'")
    if "fcidump" in problem:
        path = Path(base_dir) / problem["fcidump"]
        return parse_fcidump(path)
    return hubbard_integrals(hubbard_spec_from(problem["hubbard"]))


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("manifest must be a mapping")
    unknown = set(raw) - {"config", "problem", "outputs", "seed"}
    if unknown:
        raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
    if "problem" not in raw:
        raise ConfigError("manifest has no problem section")
    config = TrimCIConfig.from_dict(raw.get("config") or {})
    seed = raw.get("seed")
    if seed is not None:
        config.seed = int(seed)
    base = os.path.dirname(os.path.abspath(path))
    return RunManifest(config, raw["problem"], raw.get("outputs", "trimci_out"), seed, base)
