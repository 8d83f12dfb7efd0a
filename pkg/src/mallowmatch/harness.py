"""Monte Carlo experiments over sweeps of market parameters.

Each trial is a pure function of ``(config, cell index, trial index)``: the
market seed is drawn from ``SeedSequence([master_seed, cell, trial])``, so
record streams are identical for any worker count and any cell can be
re-run on its own.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .market import MarketConfig, generate
from .matching import (
    BRUTE_FORCE_MAX_MEN,
    BRUTE_FORCE_MAX_WOMEN,
    Side,
    StableSet,
    brute_force_stable,
    deferred_acceptance,
    enumerate_stable,
)
from .metrics import average_ranks, holzman_check, market_displacement, pair_gaps, welfare_ratios

__all__ = [
    "ConfigError",
    "ThresholdSpec",
    "ExperimentConfig",
    "Cell",
    "TrialRecord",
    "WORKERS_ENV",
    "trial_seed",
    "run_trial",
    "run",
    "localization_rate",
    "convergence_table",
    "welfare_table",
    "emit",
    "load_records",
]

WORKERS_ENV = "MALLOWMATCH_WORKERS"
MODES = ("extremes_only", "enumerate", "brute_force")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdSpec:
    """Displacement threshold d(t) = c ln t with c = c_margin (z + 1) / (-ln phi)."""

    z: float = 1.0
    c_margin: float = 1.5

    def __post_init__(self):
        if self.z < 0:
            raise ConfigError(f"z must be nonnegative, got {self.z}")
        if not self.c_margin > 1:
            raise ConfigError(f"c_margin must exceed 1, got {self.c_margin}")

    def c(self, phi: float) -> float:
        if not 0.0 <= phi < 1.0:
            raise ConfigError(f"threshold events need phi < 1 (ln phi = 0 at phi = 1), got {phi}")
        if phi == 0.0:
            return 0.0
        return self.c_margin * (self.z + 1) / -math.log(phi)

    def limit(self, phi: float, t: int) -> float:
        """d(t); infinite at phi = 0 where nothing is ever displaced."""
        if phi == 0.0:
            return math.inf
        return self.c(phi) * math.log(t)


@dataclass(frozen=True)
class Cell:
    index: int
    n: int
    k: int
    phi_m: float
    phi_w: float


@dataclass(frozen=True)
class ExperimentConfig:
    n: tuple[int, ...]
    k: tuple[int, ...] = (0,)
    phi_m: tuple[float, ...] = ()
    phi_w: tuple[float, ...] = ()
    phi: tuple[float, ...] = ()
    trials: int = 1
    master_seed: int = 0
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    enumeration_cap: int = 10_000
    mode: str = "extremes_only"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.n or min(self.n) < 1:
            raise ConfigError("n must be a non-empty list of positive integers")
        if not self.k or min(self.k) < 0:
            raise ConfigError("k must be a non-empty list of nonnegative integers")
        if self.phi and (self.phi_m or self.phi_w):
            raise ConfigError("give either phi or phi_m/phi_w, not both")
        if not self.phi and not (self.phi_m and self.phi_w):
            raise ConfigError("phi, or both phi_m and phi_w, must be given")
        for phi in self.phi + self.phi_m + self.phi_w:
            if not 0.0 <= phi <= 1.0:
                raise ConfigError(f"phi values must lie in [0, 1], got {phi}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.enumeration_cap < 2:
            raise ConfigError("enumeration_cap must be >= 2")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        for n, k in itertools.product(self.n, self.k):
            if k > n**self.threshold.z:
                raise ConfigError(f"k = {k} exceeds n^z = {n}^{self.threshold.z}")
            if self.mode == "brute_force" and (n > BRUTE_FORCE_MAX_MEN or n + k > BRUTE_FORCE_MAX_WOMEN):
                raise ConfigError(f"brute_force mode needs n <= {BRUTE_FORCE_MAX_MEN}, n + k <= {BRUTE_FORCE_MAX_WOMEN}")

    def cells(self) -> list[Cell]:
        if self.phi:
            phis = [(p, p) for p in self.phi]
        else:
            phis = list(itertools.product(self.phi_m, self.phi_w))
        combos = itertools.product(self.n, self.k, phis)
        return [Cell(i, n, k, pm, pw) for i, (n, k, (pm, pw)) in enumerate(combos)]

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(doc)
        try:
            for key in ("n", "k", "phi_m", "phi_w", "phi"):
                if key in kwargs:
                    val = kwargs[key]
                    kwargs[key] = tuple(val) if isinstance(val, list) else (val,)
            for key in ("n", "k"):
                if key in kwargs:
                    if not all(isinstance(v, int) and not isinstance(v, bool) for v in kwargs[key]):
                        raise ConfigError(f"{key} entries must be integers")
            for key in ("phi_m", "phi_w", "phi"):
                if key in kwargs:
                    kwargs[key] = tuple(float(v) for v in kwargs[key])
            if "threshold" in kwargs:
                th = kwargs["threshold"]
                if not isinstance(th, dict) or set(th) - {"z", "c_margin"}:
                    raise ConfigError("threshold must be an object with fields z, c_margin")
                kwargs["threshold"] = ThresholdSpec(**th)
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        for key in ("n", "k", "phi_m", "phi_w", "phi"):
            doc[key] = list(doc[key])
        return doc


@dataclass
class TrialRecord:
    """Statistics of one trial. Field order is the CSV column order."""

    cell: int
    trial: int
    n: int
    k: int
    phi_m: float
    phi_w: float
    mode: str
    seed: int
    delta_rm: int | None = None
    delta_rw: int | None = None
    max_mutual_gap: int | None = None
    max_central_gap: int | None = None
    max_quantile_gap: float | None = None
    holzman_bound: int | None = None
    holzman_violations: int | None = None
    am_mu_m: float | None = None
    am_mu_w: float | None = None
    aw_mu_m: float | None = None
    aw_mu_w: float | None = None
    ratio_men: float | None = None
    ratio_women: float | None = None
    w_over_m_mu_m: float | None = None
    w_over_m_mu_w: float | None = None
    max_w_over_m: float | None = None
    max_m_over_w: float | None = None
    localization_event: bool | None = None
    stable_count: int | None = None
    truncated: bool | None = None
    error: str | None = None
    wall_time: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


TIMING_FIELDS = ("wall_time",)
RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(TrialRecord))


def trial_seed(master_seed: int, cell: int, trial: int) -> int:
    """64-bit market seed mixed from (master seed, cell index, trial index)."""
    words = np.random.SeedSequence([master_seed, cell, trial]).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _localized(instance, threshold: ThresholdSpec) -> bool | None:
    cfg = instance.config
    if cfg.phi_m >= 1.0 or cfg.phi_w >= 1.0:
        return None
    ids_w = np.arange(instance.n_women)
    ids_m = np.arange(instance.n)
    men_disp = np.abs(instance.men_prefs.ranks - ids_w).max(initial=0)
    women_disp = np.abs(instance.women_prefs.ranks - ids_m).max(initial=0)
    return bool(men_disp < threshold.limit(cfg.phi_m, instance.n_women)
                and women_disp < threshold.limit(cfg.phi_w, instance.n))


def run_trial(config: ExperimentConfig, cell: Cell, trial: int) -> TrialRecord:
    seed = trial_seed(config.master_seed, cell.index, trial)
    rec = TrialRecord(cell.index, trial, cell.n, cell.k, cell.phi_m, cell.phi_w, config.mode, seed)
    start = time.perf_counter()
    try:
        instance = generate(MarketConfig(cell.n, cell.k, cell.phi_m, cell.phi_w, seed))
        mu_m = deferred_acceptance(instance, Side.MEN)
        mu_w = deferred_acceptance(instance, Side.WOMEN)
        if config.mode == "extremes_only":
            members = [mu_m] if mu_m == mu_w else [mu_m, mu_w]
            stable = StableSet(members, False, 0, len(members) - 1)
        else:
            if config.mode == "enumerate":
                stable = enumerate_stable(instance, config.enumeration_cap)
            else:
                stable = brute_force_stable(instance)
            if stable.mu_m != mu_m or stable.mu_w != mu_w:
                raise RuntimeError("stable set extremes disagree with deferred acceptance")
            rec.stable_count = len(stable)
            rec.truncated = stable.truncated

        rec.delta_rm, rec.delta_rw = market_displacement(instance)
        mutual = central = 0
        quantile = None if cell.k else 0.0
        violations = 0
        for mu in stable.matchings:
            gaps = pair_gaps(instance, mu)
            mutual = max(mutual, gaps.max_mutual_gap)
            central = max(central, gaps.max_central_gap)
            if quantile is not None:
                quantile = max(quantile, gaps.max_quantile_gap)
            hz = holzman_check(instance, mu)
            rec.holzman_bound = hz.bound
            violations += not hz.holds
        rec.max_mutual_gap, rec.max_central_gap, rec.max_quantile_gap = mutual, central, quantile
        rec.holzman_violations = violations

        best, worst = average_ranks(instance, mu_m), average_ranks(instance, mu_w)
        rec.am_mu_m, rec.aw_mu_m = best.a_m, best.a_w
        rec.am_mu_w, rec.aw_mu_w = worst.a_m, worst.a_w
        ratios = welfare_ratios(instance, stable)
        rec.ratio_men = ratios.men_pessimal_over_optimal
        rec.ratio_women = ratios.women_pessimal_over_optimal
        rec.max_w_over_m = ratios.max_women_over_men
        rec.max_m_over_w = ratios.max_men_over_women
        rec.w_over_m_mu_m = best.a_w / best.a_m
        rec.w_over_m_mu_w = worst.a_w / worst.a_m
        rec.localization_event = _localized(instance, config.threshold)
    except Exception as exc:  # recorded, the sweep carries on
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - start
    return rec


def _run_task(args) -> TrialRecord:
    config, cell, trial = args
    return run_trial(config, cell, trial)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run(config: ExperimentConfig, workers: int | None = None) -> Iterator[TrialRecord]:
    """Yield one record per (cell, trial), ordered by cell then trial."""
    workers = default_workers() if workers is None else workers
    tasks = [(config, cell, t) for cell in config.cells() for t in range(config.trials)]
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield _run_task(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order whatever the completion order
        yield from pool.map(_run_task, tasks)


# --- summaries ---------------------------------------------------------------


def _cell_records(records: Iterable[TrialRecord], cell: int) -> list[TrialRecord]:
    rows = [r for r in records if r.cell == cell]
    if not rows:
        raise ValueError(f"no records for cell {cell}")
    return rows


def _by_cell(records: Iterable[TrialRecord]) -> dict[int, list[TrialRecord]]:
    out: dict[int, list[TrialRecord]] = {}
    for r in records:
        out.setdefault(r.cell, []).append(r)
    if not out:
        raise ValueError("no records")
    return dict(sorted(out.items()))


def _ok(rows: list[TrialRecord]) -> list[TrialRecord]:
    return [r for r in rows if r.error is None]


def localization_rate(records: Iterable[TrialRecord], cell: int) -> float:
    """Fraction of the cell's trials in which no displacement reaches d(t)."""
    rows = _cell_records(records, cell)
    if rows[0].phi_m >= 1.0 or rows[0].phi_w >= 1.0:
        raise ValueError("localization is undefined at phi = 1")
    rows = _ok(rows)
    if not rows:
        raise ValueError(f"every trial in cell {cell} failed")
    return sum(bool(r.localization_event) for r in rows) / len(rows)


def _cell_head(rows: list[TrialRecord]) -> dict:
    r = rows[0]
    return {"cell": r.cell, "n": r.n, "k": r.k, "phi_m": r.phi_m, "phi_w": r.phi_w, "trials": len(rows)}


def convergence_table(records: Iterable[TrialRecord]) -> list[dict]:
    """Per balanced cell: median / 90th percentile of the max quantile gap and
    the max central gap scaled by ln n."""
    table = []
    for cell, rows in _by_cell(records).items():
        if rows[0].k != 0:
            raise ValueError(f"cell {cell} is unbalanced (k = {rows[0].k}); quantile gaps need k = 0")
        ok = _ok(rows)
        q = np.array([r.max_quantile_gap for r in ok], dtype=float)
        c = np.array([r.max_central_gap for r in ok], dtype=float)
        log_n = math.log(rows[0].n)
        scaled = c / log_n if log_n > 0 else np.full_like(c, np.nan)
        row = _cell_head(rows)
        row.update(
            median_max_quantile_gap=float(np.median(q)) if q.size else math.nan,
            p90_max_quantile_gap=float(np.percentile(q, 90)) if q.size else math.nan,
            median_central_gap_over_log_n=float(np.median(scaled)) if q.size else math.nan,
            max_central_gap_over_log_n=float(scaled.max()) if q.size else math.nan,
        )
        table.append(row)
    return table


_WELFARE_MEANS = (
    "am_mu_m", "am_mu_w", "aw_mu_m", "aw_mu_w", "ratio_men", "ratio_women",
    "w_over_m_mu_m", "w_over_m_mu_w", "max_w_over_m", "max_m_over_w",
)


def welfare_table(records: Iterable[TrialRecord]) -> list[dict]:
    """Per-cell means of the average-rank welfare statistics.

    Uniform cells (phi = 1 on both sides) also carry ln n and n / ln n,
    the growth rates of the optimal and pessimal averages in that regime.
    """
    table = []
    for cell, rows in _by_cell(records).items():
        ok = _ok(rows)
        row = _cell_head(rows)
        for key in _WELFARE_MEANS:
            vals = [getattr(r, key) for r in ok]
            row[f"mean_{key}"] = float(np.mean(vals)) if vals else math.nan
        n = rows[0].n
        uniform = rows[0].phi_m == 1.0 and rows[0].phi_w == 1.0
        row["log_n"] = math.log(n) if uniform else None
        row["n_over_log_n"] = n / math.log(n) if uniform and n > 1 else None
        table.append(row)
    return table


# --- emission ----------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    # 17 significant digits always round-trip a double
    return format(x, ".17g")


def _json_value(v) -> str:
    if isinstance(v, float):
        return _fmt_float(v) if math.isfinite(v) else "null"
    return json.dumps(v)


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    return str(v)


def _columns(timing: bool) -> tuple[str, ...]:
    return RECORD_FIELDS if timing else tuple(f for f in RECORD_FIELDS if f not in TIMING_FIELDS)


def emit(records: Iterable[TrialRecord], format: str, destination, *, timing: bool = False) -> None:
    """Write records as CSV (header + rows) or JSON lines.

    Wall time is left out unless ``timing`` is set, so identical configs
    give byte-identical files.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    cols = _columns(timing)
    buf = io.StringIO()
    if format == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in records:
            writer.writerow([_csv_value(getattr(r, c)) for c in cols])
    else:
        for r in records:
            body = ", ".join(f"{json.dumps(c)}: {_json_value(getattr(r, c))}" for c in cols)
            buf.write("{" + body + "}\n")
    text = buf.getvalue()
    if hasattr(destination, "write"):
        destination.write(text)
        return
    path = Path(destination)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc.strerror or exc}") from exc


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrialRecord)}


def _parse_csv_value(name: str, raw: str):
    if raw == "":
        return None
    kind = _FIELD_TYPES[name]
    if kind.startswith("bool"):
        return raw == "true"
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def _coerce_floats(doc: dict) -> dict:
    # integral floats are written without a decimal point
    return {k: float(v) if isinstance(v, int) and _FIELD_TYPES[k].startswith("float") else v
            for k, v in doc.items()}


def load_records(source) -> list[TrialRecord]:
    """Read records written by :func:`emit` (format inferred from content)."""
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    if not text.strip():
        return []
    if text.lstrip().startswith("{"):
        return [TrialRecord(**_coerce_floats(json.loads(line))) for line in text.splitlines() if line.strip()]
    reader = csv.DictReader(io.StringIO(text))
    return [TrialRecord(**{k: _parse_csv_value(k, v) for k, v in row.items()}) for row in reader]
