"""Scenario generation, parameter sweeps and CSV export."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .model import GENERALIZED, GLOBAL, LOS, SCHEMES, SUBCARRIER_MODES, ChannelParams, ModelError, Scenario
from .optimizer import AlternatingConfig, fixed_abs_baseline, run_alternating

__all__ = [
    "CSV_COLUMNS",
    "ResultRow",
    "SweepSpec",
    "assignment_to_list",
    "placement_to_list",
    "scenario_from_dict",
    "scenario_to_dict",
    "export_csv",
    "generate_scenario",
    "parse_csv",
    "rows_to_csv",
    "run_cell",
    "run_sweep",
]

CHANNEL_PRESETS = {"urban": ChannelParams.urban}


def generate_scenario(I: int, seed: int, J: int = 1, M: int = 2, L: int | None = None,
                      tau: float = 500e3, side: float = 1000.0, pad: float = 1.0,
                      channel: str = "urban", subcarrier_mode: str = GLOBAL,
                      h_min: float = 100.0, h_max: float = 2000.0) -> Scenario:
    """Users uniform on a ``side`` x ``side`` square shifted by ``pad`` so every coordinate is positive.

    The user layout depends only on ``(I, seed, side, pad)``, so scenarios
    that differ in J, M or scheme share the same users. ``L`` defaults to I.
    """
    if I < 1:
        raise ModelError("I must be >= 1")
    if channel not in CHANNEL_PRESETS:
        raise ModelError(f"unknown channel preset {channel!r}")
    rng = np.random.default_rng(seed)
    users = pad + rng.uniform(0.0, side, size=(I, 2))
    return Scenario(users=users, J=J, M=M, L=I if L is None else L, tau=tau,
                    h_min=h_min, h_max=h_max, area=(pad, pad + side, pad, pad + side),
                    subcarrier_mode=subcarrier_mode, channel=CHANNEL_PRESETS[channel]())


def scenario_to_dict(sc: Scenario) -> dict:
    """JSON-ready description; the channel is stored field by field."""
    return {
        "users": sc.users.tolist(), "J": sc.J, "M": sc.M, "L": sc.L, "tau": sc.tau.tolist(),
        "symbol_rate": sc.symbol_rate, "h_min": sc.h_min, "h_max": sc.h_max,
        "area": list(sc.area), "subcarrier_mode": sc.subcarrier_mode,
        "channel": asdict(sc.channel),
    }


def scenario_from_dict(d: dict) -> Scenario:
    d = dict(d)
    ch = d.pop("channel", None)
    try:
        channel = ChannelParams(**ch) if ch is not None else ChannelParams.urban()
        return Scenario(channel=channel, **d)
    except TypeError as exc:
        raise ModelError(f"bad scenario description: {exc}") from exc


def placement_to_list(p) -> list:
    return p.positions.tolist()


def assignment_to_list(a) -> list:
    """Sorted (i, m, j, l) entries, all zero-based except m."""
    return [list(e) for e in sorted(a.entries)]


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian sweep over J, scheme, modulation-set size and seed.

    ``mods`` lists M values; M means the modulation set {1, ..., M}.
    """

    J_values: tuple = (2, 3, 4, 5)
    I: int = 40
    mods: tuple = (1, 2)
    schemes: tuple = (LOS, GENERALIZED)
    seeds: int = 20
    first_seed: int = 0
    tau: float = 500e3
    L: int | None = None
    subcarrier_mode: str = GLOBAL
    T: int = 30
    sigma: float = 1e-9
    G: int = 100
    multistart: int = 4
    timing: bool = False
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        for name in ("J_values", "mods", "schemes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ModelError(f"{name} must be nonempty")
        if self.seeds < 1:
            raise ModelError("seeds must be >= 1")
        if self.I < 1 or any(j < 1 for j in self.J_values) or any(m < 1 for m in self.mods):
            raise ModelError("I, J and M values must be >= 1")
        if any(s not in SCHEMES for s in self.schemes):
            raise ModelError(f"schemes must be among {SCHEMES}")
        if self.subcarrier_mode not in SUBCARRIER_MODES:
            raise ModelError(f"unknown subcarrier mode {self.subcarrier_mode!r}")
        if self.workers < 1:
            raise ModelError("workers must be >= 1")

    def cells(self) -> list:
        """(J, scheme, M, seed) tuples in export order."""
        return [(J, s, M, seed)
                for J in self.J_values for s in self.schemes for M in self.mods
                for seed in range(self.first_seed, self.first_seed + self.seeds)]


def mods_label(M: int) -> str:
    return "+".join(str(m) for m in range(1, M + 1))


CSV_COLUMNS = ("seed", "scheme", "J", "I", "mods", "total_power_w", "avg_altitude_m", "iters",
               "wall_ms", "baseline_power_w", "baseline_feasible", "status")


@dataclass
class ResultRow:
    seed: int
    scheme: str
    J: int
    I: int
    mods: str
    total_power_w: float
    avg_altitude_m: float
    iters: int
    wall_ms: float
    baseline_power_w: float
    baseline_feasible: bool
    status: str
    placement: object = field(default=None, compare=False, repr=False)
    assignment: object = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "max-iter")


def serving_altitude(placement, assignment) -> float:
    """Mean altitude over ABSs that serve at least one user."""
    used = sorted({j for (_, _, j, _) in assignment.entries})
    h = placement.positions[used, 2] if used else placement.positions[:, 2]
    return float(np.mean(h))


def run_cell(spec: SweepSpec, J: int, scheme: str, M: int, seed: int) -> ResultRow:
    """One sweep cell; failures come back as rows with an ``error:`` status."""
    t0 = time.perf_counter()
    base = dict(seed=seed, scheme=scheme, J=J, I=spec.I, mods=mods_label(M))
    try:
        sc = generate_scenario(spec.I, seed, J=J, M=M, L=spec.L, tau=spec.tau,
                               subcarrier_mode=spec.subcarrier_mode)
        cfg = AlternatingConfig(scheme=scheme, T=spec.T, sigma=spec.sigma, G=spec.G, seed=seed,
                                multistart=spec.multistart)
        res = run_alternating(sc, cfg)
        bl = fixed_abs_baseline(sc, scheme)
    except (ModelError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        return ResultRow(**base, total_power_w=math.nan, avg_altitude_m=math.nan, iters=0,
                         wall_ms=(time.perf_counter() - t0) * 1e3 if spec.timing else 0.0,
                         baseline_power_w=math.nan, baseline_feasible=False,
                         status=f"error: {type(exc).__name__}: {msg}")
    return ResultRow(**base, total_power_w=float(res.objective),
                     avg_altitude_m=serving_altitude(res.placement, res.assignment),
                     iters=res.trace.iterations,
                     wall_ms=(time.perf_counter() - t0) * 1e3 if spec.timing else 0.0,
                     baseline_power_w=float(bl.objective), baseline_feasible=bl.feasible,
                     status=res.trace.status, placement=res.placement, assignment=res.assignment)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(spec: SweepSpec, progress=None) -> list:
    """Run every cell of ``spec`` and return rows in ``spec.cells()`` order.

    With ``workers > 1`` cells run in separate processes; the result order
    does not depend on scheduling.
    """
    cells = spec.cells()
    if spec.workers == 1:
        rows = []
        for c in cells:
            rows.append(run_cell(spec, *c))
            if progress is not None:
                progress(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_cell_args, [(spec, *c) for c in cells]))
    if spec.output:
        export_csv(rows, spec.output)
    return rows


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    if not rows:
        raise ModelError("nothing to export")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def export_csv(rows, path: str) -> None:
    """Write rows as LF-terminated CSV; floats use shortest round-trip repr."""
    text = rows_to_csv(rows)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ModelError(f"cannot write {path}: {exc.strerror}") from exc


_TYPES = {f.name: f.type for f in fields(ResultRow)}


def _parse(name, s):
    t = _TYPES[name]
    if t == "int":
        return int(s)
    if t == "float":
        return float(s)
    if t == "bool":
        return s == "1"
    return s


def parse_csv(text_or_path: str) -> list:
    """Rows back from CSV text or a file path."""
    text = text_or_path
    if "\n" not in text_or_path and os.path.exists(text_or_path):
        with open(text_or_path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ModelError("unexpected CSV header")
    return [ResultRow(**{c: _parse(c, v) for c, v in zip(CSV_COLUMNS, line)}) for line in reader]
