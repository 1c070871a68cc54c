"""Columnar CSV snapshots, report bundles, and the chain model text format.

CSV conventions: comma separated, one header row, LF line endings, floats
printed with 12 significant digits.  Wiener solution snapshots use the
columns ``path_id, node_time, Y_1, Z_11..Z_1d, stopped_flag``; chain
snapshots replace the noise coordinates with the state index.  Reports are a
key=value metadata block plus one verdict line per checked invariant, each
carrying the measured value and its threshold.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import ChainSolution, MarkovChainModel
from .errors import ConfigError, StructuralError
from .wiener import SolutionEnsemble


def format_float(x: float) -> str:
    return f"{float(x):.12g}"


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else format_float(c) for c in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_csv(path):
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def write_solution_csv(sol: SolutionEnsemble, path) -> None:
    """Flat per-path snapshot of a Wiener solution ensemble."""
    d = sol.Z.shape[2]
    header = ["path_id", "node_time", "Y_1"] + [f"Z_1{a + 1}" for a in range(d)] + ["stopped_flag"]
    rows = []
    for p in range(sol.paths):
        for j, t in enumerate(sol.grid.nodes):
            rows.append(
                [str(p), format_float(t), format_float(sol.Y[p, j])]
                + [format_float(sol.Z[p, j, a]) for a in range(d)]
                + [str(int(j >= sol.stop_idx[p]))]
            )
    write_csv(path, header, rows)


def read_solution_csv(path) -> dict:
    header, rows = read_csv(path)
    n_z = sum(1 for h in header if h.startswith("Z_"))
    path_ids = sorted({int(r[0]) for r in rows})
    times = sorted({float(r[1]) for r in rows})
    P, n = len(path_ids), len(times)
    Y = np.empty((P, n))
    Z = np.empty((P, n, n_z))
    stopped = np.zeros((P, n), dtype=int)
    t_index = {format_float(t): i for i, t in enumerate(times)}
    for r in rows:
        p, j = int(r[0]), t_index[format_float(float(r[1]))]
        Y[p, j] = float(r[2])
        for a in range(n_z):
            Z[p, j, a] = float(r[3 + a])
        stopped[p, j] = int(r[3 + n_z])
    return {"times": np.array(times), "Y": Y, "Z": Z, "stopped": stopped}


def write_chain_solution_csv(sol: ChainSolution, path) -> None:
    """Per-path chain snapshot; the state index replaces the noise coordinates."""
    if sol.path_Y is None:
        raise StructuralError("chain solution carries no path ensemble to export")
    header = ["path_id", "node_time", "state", "Y_1", "stopped_flag"]
    rows = []
    for p in range(sol.path_Y.shape[0]):
        for j, t in enumerate(sol.grid.nodes):
            rows.append(
                [
                    str(p),
                    format_float(t),
                    str(int(sol.path_states[p, j])),
                    format_float(sol.path_Y[p, j]),
                    str(int(j >= sol.stop_idx[p])),
                ]
            )
    write_csv(path, header, rows)


def write_state_values_csv(sol: ChainSolution, path) -> None:
    """Dense value-function table: one column per state."""
    N = sol.state_values.shape[1]
    header = ["node_time"] + [f"Y_state_{i}" for i in range(N)]
    rows = [
        [format_float(t)] + [format_float(sol.state_values[j, i]) for i in range(N)]
        for j, t in enumerate(sol.grid.nodes)
    ]
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# chain model text config
# ---------------------------------------------------------------------------

_PROFILES = ("constant", "linear", "polynomial")


def _parse_profile(spec: str):
    parts = spec.split()
    kind, args = parts[0], [float(x) for x in parts[1:]]
    if kind == "constant":
        if len(args) != 1:
            raise ConfigError(f"constant profile takes one value, got {spec!r}")
        return lambda t: args[0]
    if kind == "linear":
        if len(args) != 2:
            raise ConfigError(f"linear profile takes two values, got {spec!r}")
        return lambda t: args[0] + args[1] * t
    if kind == "polynomial":
        if not args:
            raise ConfigError(f"polynomial profile needs coefficients, got {spec!r}")
        coeffs = args

        def poly(t, c=tuple(coeffs)):
            out = 0.0
            for a in reversed(c):
                out = out * t + a
            return out

        return poly
    raise ConfigError(f"unknown rate profile {kind!r}; known: {_PROFILES}")


@dataclass
class ChainModelConfig:
    model: MarkovChainModel
    state_names: list
    hitting_set: frozenset
    loss_rate: object  # callable (t, state_index) -> float


def load_chain_model(path) -> ChainModelConfig:
    """Chain model from the sectioned text format.

    ::

        [chain]
        states = idle busy done
        initial = idle
        rate_bound = 4.0

        [rates]
        idle->busy = constant 1.0
        busy->done = linear 0.5 0.1

        [hitting]
        set = done

        [loss]
        busy = polynomial 1.0 1.0
    """
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read chain config {path!r}")
    try:
        names = cp.get("chain", "states").split()
        initial = cp.get("chain", "initial")
        bound = cp.getfloat("chain", "rate_bound")
    except (configparser.Error, ValueError) as e:
        raise ConfigError(f"bad [chain] section: {e}") from e
    index = {nm: i for i, nm in enumerate(names)}
    if initial not in index:
        raise ConfigError(f"initial state {initial!r} not among states")
    N = len(names)

    entries = []
    if cp.has_section("rates"):
        for key, spec in cp.items("rates"):
            if "->" not in key:
                raise ConfigError(f"rate key {key!r} must look like 'from->to'")
            src, dst = (s.strip() for s in key.split("->", 1))
            if src not in index or dst not in index:
                raise ConfigError(f"rate key {key!r} names unknown states")
            if src == dst:
                raise ConfigError("self-rates are implied by column balance; drop them")
            entries.append((index[dst], index[src], _parse_profile(spec)))

    def rate_fn(t: float) -> np.ndarray:
        A = np.zeros((N, N))
        for i, j, prof in entries:
            A[i, j] = prof(t)
        A -= np.diag(A.sum(axis=0))
        return A

    hitting = frozenset()
    if cp.has_section("hitting"):
        hit_names = cp.get("hitting", "set").split()
        unknown = [h for h in hit_names if h not in index]
        if unknown:
            raise ConfigError(f"hitting set names unknown states {unknown}")
        hitting = frozenset(index[h] for h in hit_names)

    loss_profiles = {}
    if cp.has_section("loss"):
        for key, spec in cp.items("loss"):
            if key not in index:
                raise ConfigError(f"loss key {key!r} names an unknown state")
            loss_profiles[index[key]] = _parse_profile(spec)

    def loss_rate(t: float, i: int) -> float:
        prof = loss_profiles.get(i)
        return prof(t) if prof is not None else 0.0

    model = MarkovChainModel(N, rate_fn, index[initial], bound)
    model.validate([0.0])
    return ChainModelConfig(model=model, state_names=names, hitting_set=hitting, loss_rate=loss_rate)
