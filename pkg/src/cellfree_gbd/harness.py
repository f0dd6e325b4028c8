"""Experiment specs, sweep execution and CSV / plot-data output."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import (
    brute_force_joint,
    gale_shapley_grouping,
    metrics,
    no_grouping_solution,
    random_grouping,
)
from .beamform import MRT, ZF, FrameOverflow, InfeasiblePrecoder
from .gbd import GbdConfig, gpga, solve_fixed_grouping
from .master import EBSA, GFSA
from .scenario import InvalidInput, RadioConfig, generate_scenario, sample_qos

OUTPUT_ENV = "CFGBD_OUTPUT_ROOT"
CSV_HEADER = ["sweep", "algorithm", "beamforming", "seed", "power_dbm", "interference", "iterations", "gap", "wall_ms", "feasible"]
ALGORITHMS = ("GPGA-EBSA", "GPGA-GFSA", "BCGA", "GALE_S", "NON_GROUPING")
AXES = ("users", "aps", "rate-range", "groups", "coherence-length", "delta")

# Desk-scale radio defaults: the reference AP density (200 APs on 9 km^2) kept
# for 24 APs, and a frame only slightly longer than the user count so that
# serving everyone at once pays a real pilot overhead.
DESK_RADIO = RadioConfig(area_km=1.04, coherence_len=24)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    aps: int = 24
    users: int = 20
    groups: int = 4
    seeds: tuple = tuple(range(20))
    radio: RadioConfig = DESK_RADIO
    rate_lo_bps: float = 1e5
    rate_hi_bps: float = 1.5e6
    algorithms: tuple = ALGORITHMS
    beamforming: tuple = (MRT,)
    axis: str = "users"
    values: tuple = (20,)
    delta: float = 1e-9
    max_iterations: int | None = None
    zf_samples: int = 200
    timing: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise InvalidInput("an experiment needs at least one seed")
        if self.axis not in AXES:
            raise InvalidInput(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if not self.values:
            raise InvalidInput("the sweep needs at least one value")
        if list(self.values) != sorted(self.values):
            raise InvalidInput("sweep values must be sorted ascending")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise InvalidInput(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
        for b in self.beamforming:
            if b not in (MRT, ZF):
                raise InvalidInput(f"unknown beamforming {b!r}")
        if self.rate_lo_bps < 0 or self.rate_hi_bps < self.rate_lo_bps:
            raise InvalidInput("invalid rate range")

    def replace(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["values"] = list(self.values)
        d["algorithms"] = list(self.algorithms)
        d["beamforming"] = list(self.beamforming)
        return d


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def parse_seeds(value) -> tuple:
    """``20`` means ``0..19``; a list or ``"1,5,9"`` is taken literally; ``"3:7"`` is a range."""
    if isinstance(value, int):
        return tuple(range(value))
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value).strip()
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi)))
    if "," in text:
        return tuple(int(v) for v in text.split(",") if v)
    return tuple(range(int(text)))


def load_spec(path) -> ExperimentSpec:
    """Read a TOML experiment file.

    Top-level keys: ``name``, ``seeds``, ``algorithms``, ``beamforming``,
    ``delta``, ``max_iterations``, ``zf_samples``, ``timing``. Tables:
    ``[scenario]`` (aps, users, groups), ``[radio]`` (any RadioConfig field),
    ``[qos]`` (rate_lo_bps, rate_hi_bps), ``[sweep]`` (axis, values),
    ``[output]`` (dir).
    """
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise InvalidInput(f"cannot read spec {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidInput(f"malformed spec {path}: {exc}") from exc
    kw: dict = {}
    for key in ("name", "delta", "max_iterations", "zf_samples", "timing"):
        if key in data:
            kw[key] = data[key]
    if "seeds" in data:
        kw["seeds"] = parse_seeds(data["seeds"])
    if "algorithms" in data:
        kw["algorithms"] = _as_tuple(data["algorithms"])
    if "beamforming" in data:
        kw["beamforming"] = _as_tuple(data["beamforming"])
    sc = data.get("scenario", {})
    for key in ("aps", "users", "groups"):
        if key in sc:
            kw[key] = int(sc[key])
    if "radio" in data:
        try:
            kw["radio"] = DESK_RADIO.replace(**data["radio"])
        except TypeError as exc:
            raise InvalidInput(f"bad [radio] table in {path}: {exc}") from exc
    qos = data.get("qos", {})
    if "rate_lo_bps" in qos:
        kw["rate_lo_bps"] = float(qos["rate_lo_bps"])
    if "rate_hi_bps" in qos:
        kw["rate_hi_bps"] = float(qos["rate_hi_bps"])
    sweep = data.get("sweep", {})
    if "axis" in sweep:
        kw["axis"] = sweep["axis"]
    if "values" in sweep:
        kw["values"] = _as_tuple(sweep["values"])
    if "dir" in data.get("output", {}):
        kw["output_dir"] = data["output"]["dir"]
    try:
        return ExperimentSpec(**kw)
    except TypeError as exc:
        raise InvalidInput(f"bad spec {path}: {exc}") from exc


@dataclass
class ResultRow:
    """One run. ``error`` is not part of the CSV; it goes to ``errors.csv``."""

    sweep: float
    algorithm: str
    beamforming: str
    seed: int
    power_dbm: float
    interference: float
    iterations: int
    gap: float
    wall_ms: float
    feasible: bool
    error: str = field(default="", compare=False)

    @property
    def crashed(self) -> bool:
        return bool(self.error) and not self.error.startswith("infeasible")

    def cells(self) -> list:
        return [
            _fmt(self.sweep), self.algorithm, self.beamforming, str(self.seed), _fmt(self.power_dbm),
            _fmt(self.interference), str(self.iterations), _fmt(self.gap), f"{self.wall_ms:.3f}",
            "true" if self.feasible else "false",
        ]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def point_setup(spec: ExperimentSpec, value):
    """Apply one sweep value; returns ``(M, N, G, radio, lo, hi, delta)``."""
    M, N, G, radio = spec.aps, spec.users, spec.groups, spec.radio
    lo, hi, delta = spec.rate_lo_bps, spec.rate_hi_bps, spec.delta
    if spec.axis == "users":
        N = int(value)
    elif spec.axis == "aps":
        M = int(value)
    elif spec.axis == "groups":
        G = int(value)
    elif spec.axis == "rate-range":
        hi = float(value)
    elif spec.axis == "coherence-length":
        radio = radio.replace(coherence_len=int(value))
    elif spec.axis == "delta":
        delta = float(value)
    return M, N, G, radio, lo, hi, delta


def run_cell(spec: ExperimentSpec, value, seed: int, algorithm: str, beamforming: str) -> ResultRow:
    """One (sweep value, seed, algorithm, beamforming) run; failures become infeasible rows."""
    M, N, G, radio, lo, hi, delta = point_setup(spec, value)
    t0 = time.perf_counter()
    try:
        scenario = generate_scenario(radio, M, N, seed)
        qos = sample_qos(N, lo, hi, seed)
        cfg = GbdConfig(
            num_groups=G, delta=delta, max_iterations=spec.max_iterations, beamforming=beamforming,
            search=GFSA if algorithm == "GPGA-GFSA" else EBSA, zf_samples=spec.zf_samples, zf_seed=seed,
        )
        if algorithm.startswith("GPGA"):
            sol, _ = gpga(scenario, qos, cfg)
        elif algorithm == "BCGA":
            sol = solve_fixed_grouping(scenario, qos, random_grouping(N, G, [seed, 0xBC6A]), cfg)
        elif algorithm == "GALE_S":
            sol = solve_fixed_grouping(scenario, qos, gale_shapley_grouping(scenario, qos, cfg), cfg)
        else:
            sol, _ = no_grouping_solution(scenario, qos, cfg)
        rep = metrics(sol)
        error = ""
    except (FrameOverflow, InfeasiblePrecoder) as exc:
        sol, rep, error = None, None, f"infeasible: {exc}"
    except Exception as exc:  # recorded in-row, never aborts the sweep
        sol, rep, error = None, None, f"{type(exc).__name__}: {exc}"
    wall = (time.perf_counter() - t0) * 1e3 if spec.timing else 0.0
    if sol is None or not sol.feasible:
        return ResultRow(value, algorithm, beamforming, seed, math.inf, math.nan,
                         sol.iterations if sol else 0, math.inf, wall, False, error or "infeasible")
    return ResultRow(value, algorithm, beamforming, seed, rep.total_power_dbm, rep.mean_interference,
                     sol.iterations, sol.gap, wall, True)


def _cell_star(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list:
    """All rows, ordered by sweep value, algorithm, beamforming and seed regardless of ``jobs``."""
    tasks = [
        (spec, value, seed, alg, bf)
        for value in spec.values
        for alg in spec.algorithms
        for bf in spec.beamforming
        for seed in spec.seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_cell_star(t) for t in tasks]
    return rows


def emit_csv(rows, path) -> None:
    if not rows:
        raise InvalidInput("refusing to write an empty result set")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in rows:
                w.writerow(r.cells())
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> list:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise InvalidInput(f"unexpected header in {path}: {header}")
        for c in reader:
            sweep = float(c[0])
            out.append(ResultRow(
                int(sweep) if sweep.is_integer() and "." not in c[0] else sweep, c[1], c[2], int(c[3]),
                float(c[4]), float(c[5]), int(c[6]), float(c[7]), float(c[8]), c[9] == "true",
            ))
    return out


def emit_plotdata(rows, directory, metric: str = "power_dbm") -> list:
    """One CSV per (algorithm, beamforming): ``x, median, p25, p75`` over feasible runs."""
    if not rows:
        raise InvalidInput("refusing to summarise an empty result set")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    series: dict = {}
    for r in rows:
        series.setdefault((r.algorithm, r.beamforming), {}).setdefault(r.sweep, []).append(r)
    written = []
    for (alg, bf), points in sorted(series.items()):
        path = directory / f"{alg}_{bf}_{metric}.csv"
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "median", "p25", "p75"])
                for x in sorted(points):
                    vals = np.array([getattr(r, metric) for r in points[x] if r.feasible], dtype=float)
                    if vals.size:
                        p25, med, p75 = np.percentile(vals, [25, 50, 75])
                    else:
                        p25 = med = p75 = math.nan
                    w.writerow([_fmt(x), _fmt(med), _fmt(p25), _fmt(p75)])
        except OSError as exc:
            raise OSError(f"cannot write plot data to {path}: {exc}") from exc
        written.append(path)
    return written


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def resolve_output(spec: ExperimentSpec, override=None) -> Path:
    if override:
        return Path(override)
    if spec.output_dir:
        return Path(spec.output_dir)
    return output_root() / spec.name


def write_outputs(spec: ExperimentSpec, rows, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    emit_csv(rows, out / "results.csv")
    emit_plotdata(rows, out / "plotdata")
    errors = [r for r in rows if r.error and r.error != "infeasible"]
    if errors:
        with (out / "errors.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "algorithm", "beamforming", "seed", "error"])
            for r in errors:
                w.writerow([_fmt(r.sweep), r.algorithm, r.beamforming, r.seed, r.error])


def oracle_rows(spec: ExperimentSpec):
    """GPGA with the exact loop search against exhaustive enumeration, per sweep value and seed."""
    out = []
    for value in spec.values:
        M, N, G, radio, lo, hi, delta = point_setup(spec, value)
        for bf in spec.beamforming:
            for seed in spec.seeds:
                scenario = generate_scenario(radio, M, N, seed)
                qos = sample_qos(N, lo, hi, seed)
                cfg = GbdConfig(num_groups=G, delta=delta, beamforming=bf, zf_samples=spec.zf_samples, zf_seed=seed)
                sol, _ = gpga(scenario, qos, cfg)
                ref = brute_force_joint(scenario, qos, cfg)
                if sol.feasible and ref.feasible:
                    ok = abs(sol.total_power_w - ref.total_power_w) <= max(delta, 1e-6 * ref.total_power_w)
                else:
                    ok = sol.feasible == ref.feasible
                out.append((value, bf, seed, sol.total_power_w, ref.total_power_w, ok))
    return out
