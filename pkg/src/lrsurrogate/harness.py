"""Experiment runner: configs in, verified bound reports out.

Every grid point yields one row with the bounds that apply to it and, when
the dense Hilbert space fits under the cap, the measured error. A row is
satisfied when ``empirical <= bound + 1e-9``.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .continuum import (ContinuumBathSpec, ReferenceSystem, bath_from_dict, make_partition, reference_bound,
                        surrogate_error, total_bound)
from .errors import CatalogError, NumericError, ResourceError, ValidationError
from .graph import build_graph
from .model import HamiltonianSpec, InteractionTerm, SiteKind, SiteSpec, _check_keys, spec_from_dict
from .operators import (assemble_operator, catalog_entry, default_cap, interaction_norm, local_operator,
                        trotter_error, trotter_plan, truncation_error)
from .truncation import (LRBoundParams, layer_partition, lr_error_bound, min_layers, remainder_bound_exact,
                         truncate_generator)

SLACK = 1e-9
MODES = ("discrete_truncation", "continuum_surrogate", "trotter_cost", "flow")

EXIT_SUCCESS = 0
EXIT_VIOLATION = 2
EXIT_INDETERMINATE = 3
EXIT_CONFIG = 4

CSV_COLUMNS = ("mode", "t", "n", "bound_closed", "bound_exact", "bound", "empirical",
               "satisfied", "skipped", "note")


# ---------------------------------------------------------------------------
# config

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    mode: str
    model: HamiltonianSpec | ContinuumBathSpec
    observable: str
    time_grid: tuple[float, ...]
    n_grid: tuple[int, ...] = ()
    epsilon: float = 0.1
    seed: int = 0
    output_path: str | None = None
    cap: int | None = None
    mu: float = 1.0
    reference_n: int = 10
    workers: int = 1
    source: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        continuum = self.mode == "continuum_surrogate"
        if continuum != isinstance(self.model, ContinuumBathSpec):
            raise ValidationError(f"mode {self.mode!r} does not match model type {type(self.model).__name__}")
        object.__setattr__(self, "time_grid", tuple(float(t) for t in self.time_grid))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        _check_grid(self.time_grid, "time_grid")
        if any(t < 0 for t in self.time_grid):
            raise ValidationError("times must be nonnegative")
        if self.mode != "flow":
            _check_grid(self.n_grid, "n_grid")
            if self.n_grid[0] < 1:
                raise ValidationError("n_grid entries must be >= 1")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if continuum:
            bad = [n for n in self.n_grid if self.reference_n % n]
            if bad:
                raise ValidationError(f"partition sizes {bad} do not divide reference_n={self.reference_n}")
            site = self.model.system_h.site(self.model.system_site)
        else:
            site = self.model.site(self.model.system_ids[0])
        try:
            catalog_entry(self.observable, site.dim)
        except CatalogError as exc:
            raise ValidationError(f"observable: {exc}") from None

    @property
    def effective_cap(self) -> int:
        return default_cap() if self.cap is None else self.cap

    def digest(self) -> str:
        """SHA-256 of the resolved config (model contents, not file paths)."""
        payload = _config_payload(self)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _check_grid(grid, name):
    if not grid:
        raise ValidationError(f"{name} must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"{name} must be strictly increasing")


def _config_payload(cfg: ExperimentConfig) -> dict:
    model = cfg.model.to_dict()
    return {"mode": cfg.mode, "model": model, "observable": cfg.observable, "time_grid": list(cfg.time_grid),
            "n_grid": list(cfg.n_grid), "epsilon": cfg.epsilon, "seed": cfg.seed, "cap": cfg.cap,
            "mu": cfg.mu, "reference_n": cfg.reference_n}


_CONFIG_KEYS = ("mode", "model", "observable", "time_grid", "n_grid", "partition_grid", "epsilon", "seed",
                "output_path", "cap", "mu", "reference_n", "workers")


def random_chain(n_sites: int, max_coupling: float, seed: int) -> HamiltonianSpec:
    """XX+YY chain with couplings drawn uniformly from ``(0, max_coupling]``; site 0 is the system."""
    rng = np.random.default_rng(seed)
    couplings = max_coupling * (1.0 - rng.random(n_sites - 1))
    sites = tuple(SiteSpec(i, 2, SiteKind.SYSTEM if i == 0 else SiteKind.ENVIRONMENT) for i in range(n_sites))
    terms = []
    for i, c in enumerate(couplings):
        for op in ("sx", "sy"):
            terms.append(InteractionTerm((i, i + 1), (op, op), float(c) / math.sqrt(2.0)))
    return HamiltonianSpec(sites, tuple(terms), (0,))


def _model_from(obj, mode: str, seed: int, base: Path | None):
    if isinstance(obj, str):
        path = Path(obj) if base is None or Path(obj).is_absolute() else base / obj
        with open(path) as fh:
            obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValidationError("model must be an object or a path to a JSON file")
    if "random_chain" in obj:
        _check_keys(obj, ("random_chain",), "model")
        rc = obj["random_chain"]
        _check_keys(rc, ("n_sites", "max_coupling"), "random_chain")
        return random_chain(int(rc["n_sites"]), float(rc["max_coupling"]), seed)
    if mode == "continuum_surrogate":
        return bath_from_dict(obj)
    return spec_from_dict(obj)


def config_from_dict(data: dict, base: Path | None = None) -> ExperimentConfig:
    """Build a config from JSON data; ``model`` may be inline, a file path or ``{"random_chain": ...}``."""
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(data) - set(_CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"config: unknown field(s) {sorted(unknown)}")
    for key in ("mode", "model", "observable", "time_grid", "epsilon"):
        if key not in data:
            raise ValidationError(f"config: missing field {key!r}")
    if "n_grid" in data and "partition_grid" in data:
        raise ValidationError("config: give n_grid or partition_grid, not both")
    seed = int(data.get("seed", 0))
    model = _model_from(data["model"], data["mode"], seed, base)
    return ExperimentConfig(
        mode=data["mode"], model=model, observable=data["observable"], time_grid=data["time_grid"],
        n_grid=data.get("n_grid", data.get("partition_grid", ())), epsilon=float(data["epsilon"]), seed=seed,
        output_path=data.get("output_path"), cap=data.get("cap"), mu=float(data.get("mu", 1.0)),
        reference_n=int(data.get("reference_n", 10)), workers=int(data.get("workers", 1)), source=data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, base=path.parent)


# ---------------------------------------------------------------------------
# report

@dataclass(frozen=True)
class ReportRow:
    mode: str
    t: float
    n: int
    bound_closed: float | None
    bound_exact: float | None
    bound: float
    empirical: float | None
    satisfied: bool | None
    skipped: bool = False
    note: str = ""

    @classmethod
    def make(cls, mode, t, n, bound_closed, bound_exact, bound, empirical, note=""):
        if empirical is None:
            return cls(mode, t, n, bound_closed, bound_exact, bound, None, None, True, note)
        return cls(mode, t, n, bound_closed, bound_exact, bound, empirical, empirical <= bound + SLACK, False, note)

    def key(self):
        return (self.mode, self.t, self.n)


@dataclass(frozen=True)
class VerificationReport:
    rows: tuple[ReportRow, ...]
    provenance: dict

    @property
    def summary(self) -> dict:
        return {"satisfied": sum(r.satisfied is True for r in self.rows),
                "violated": sum(r.satisfied is False for r in self.rows),
                "skipped": sum(r.skipped for r in self.rows)}

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "summary": self.summary,
                "rows": [dataclasses.asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        """Rows only; provenance lives in the JSON form, so the CSV carries no timestamp."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def digest(self) -> str:
        """Hash of the rows and of the provenance without its timestamp."""
        d = self.to_dict()
        d["provenance"] = {k: v for k, v in d["provenance"].items() if k != "timestamp"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        try:
            rows = tuple(ReportRow(**r) for r in data["rows"])
            return cls(rows, dict(data.get("provenance", {})))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed report: {exc}") from exc

    def write(self, path, fmt: str | None = None) -> None:
        path = Path(path)
        fmt = fmt or ("csv" if path.suffix == ".csv" else "json")
        path.write_text(self.to_csv() if fmt == "csv" else self.to_json())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_report(path) -> VerificationReport:
    with open(path) as fh:
        return VerificationReport.from_dict(json.load(fh))


@dataclass(frozen=True)
class Verdict:
    code: int
    message: str
    violations: tuple[ReportRow, ...] = ()

    @property
    def ok(self) -> bool:
        return self.code == EXIT_SUCCESS


def verify_bounds(report: VerificationReport) -> Verdict:
    """0 when every computed row holds, 2 on any violation, 3 when nothing was computed."""
    computed = [r for r in report.rows if not r.skipped]
    # judged from the numbers, not the stored flag, so edited reports are caught
    bad = tuple(r for r in computed if not (r.empirical is not None and r.empirical <= r.bound + SLACK))
    if bad:
        lines = [f"  {r.mode} t={r.t:g} n={r.n}: empirical={r.empirical!r} bound={r.bound!r} "
                 f"closed={r.bound_closed!r} exact={r.bound_exact!r} {r.note}".rstrip() for r in bad]
        return Verdict(EXIT_VIOLATION, f"{len(bad)} violated row(s):\n" + "\n".join(lines), bad)
    if not computed:
        return Verdict(EXIT_INDETERMINATE, f"all {len(report.rows)} row(s) skipped; nothing verified")
    return Verdict(EXIT_SUCCESS, f"{len(computed)} row(s) satisfied, {len(report.rows) - len(computed)} skipped")


# ---------------------------------------------------------------------------
# runners

def _discrete_context(cfg: ExperimentConfig):
    spec = cfg.model
    g = build_graph(spec)
    ld = layer_partition(spec, g)
    op_norm = interaction_norm(spec)
    a_norm = catalog_entry(cfg.observable, spec.site(spec.system_ids[0]).dim).norm
    params = LRBoundParams.from_graph(g, op_norm, a_norm, cfg.mu)
    H = None
    A = None
    if spec.total_dim <= cfg.effective_cap:
        H = assemble_operator(spec, cap=cfg.effective_cap)
        H.eigh  # shared by all rows
        A = local_operator(cfg.observable, spec.system_ids[0], spec, cap=cfg.effective_cap)
    return spec, g, ld, op_norm, a_norm, params, H, A


def _too_big(spec, cap):
    return f"dimension {spec.total_dim} exceeds cap {cap}"


def _discrete_point(cfg, ctx, t, n):
    spec, g, ld, op_norm, a_norm, params, H, A = ctx
    closed = lr_error_bound(params, n, t)
    exact = remainder_bound_exact(g, op_norm, a_norm, n, t, ld=ld)
    note = f"v={params.velocity:.6g}"
    if H is None:
        return ReportRow.make(cfg.mode, t, n, closed, exact, exact, None, _too_big(spec, cfg.effective_cap))
    Hn = assemble_operator(truncate_generator(ld, n), layout=spec, cap=cfg.effective_cap, label=f"H_{n}")
    emp = truncation_error(H, Hn, A, t)
    return ReportRow.make(cfg.mode, t, n, closed, exact, exact, emp, note)


def _flow_point(cfg, ctx, t):
    spec, g, ld, op_norm, a_norm, params, H, A = ctx
    n = min_layers(params, t, cfg.epsilon)
    closed = lr_error_bound(params, n, t)
    exact = remainder_bound_exact(g, op_norm, a_norm, n, t, ld=ld)
    note = f"n(t)={n}"
    if H is None:
        return ReportRow.make(cfg.mode, t, n, closed, exact, cfg.epsilon, None, _too_big(spec, cfg.effective_cap))
    Hn = assemble_operator(truncate_generator(ld, n), layout=spec, cap=cfg.effective_cap, label=f"H_{n}")
    return ReportRow.make(cfg.mode, t, n, closed, exact, cfg.epsilon, truncation_error(H, Hn, A, t), note)


def _trotter_point(cfg, ctx, t, n):
    spec, g, ld, *_ = ctx
    Hn = truncate_generator(ld, n)
    plan = trotter_plan(Hn, t, cfg.epsilon)
    predicted = plan.predicted_error
    note = f"steps={plan.steps} terms={plan.n_terms}"
    if Hn.total_dim > cfg.effective_cap:
        return ReportRow.make(cfg.mode, t, n, cfg.epsilon, predicted, cfg.epsilon, None,
                              _too_big(Hn, cfg.effective_cap))
    emp = trotter_error(Hn, t, plan.steps, cap=cfg.effective_cap)
    return ReportRow.make(cfg.mode, t, n, cfg.epsilon, predicted, cfg.epsilon, emp, note)


def _continuum_context(cfg):
    bath = cfg.model
    a_norm = catalog_entry(cfg.observable, bath.system_h.site(bath.system_site).dim).norm
    P_ref = make_partition(bath.x_max, cfg.reference_n)
    ref_dim = bath.system_h.total_dim * bath.boson_levels ** cfg.reference_n
    ref = None
    if ref_dim <= cfg.effective_cap:
        ref = ReferenceSystem.build(bath, P_ref, cap=cfg.effective_cap)
        ref.H.eigh
    return bath, a_norm, ref, ref_dim


def _continuum_point(cfg, ctx, t, n):
    bath, a_norm, ref, ref_dim = ctx
    P = make_partition(bath.x_max, n)
    estimate = total_bound(bath, P, t, a_norm).total
    if ref is None:
        return ReportRow.make(cfg.mode, t, n, estimate, None, estimate, None,
                              f"reference dimension {ref_dim} exceeds cap {cfg.effective_cap}")
    measured = reference_bound(bath, P, t, a_norm, ref).total
    emp = surrogate_error(ref, P, cfg.observable, t)
    return ReportRow.make(cfg.mode, t, n, estimate, measured, measured, emp, f"reference n={cfg.reference_n}")


def _tasks(cfg: ExperimentConfig) -> tuple[object, list[tuple[Callable, tuple]]]:
    if cfg.mode == "continuum_surrogate":
        ctx = _continuum_context(cfg)
        return ctx, [(_continuum_point, (t, n)) for t in cfg.time_grid for n in cfg.n_grid]
    ctx = _discrete_context(cfg)
    if cfg.mode == "flow":
        return ctx, [(_flow_point, (t,)) for t in cfg.time_grid]
    fn = _discrete_point if cfg.mode == "discrete_truncation" else _trotter_point
    return ctx, [(fn, (t, n)) for t in cfg.time_grid for n in cfg.n_grid]


def _run_one(cfg, ctx, fn, args):
    try:
        return fn(cfg, ctx, *args)
    except (ResourceError, NumericError, MemoryError) as exc:
        t, n = (args[0], args[1]) if len(args) == 2 else (args[0], -1)
        return ReportRow(cfg.mode, t, n, None, None, math.nan, None, None, True, f"{type(exc).__name__}: {exc}")


def run_experiment(cfg: ExperimentConfig, write: bool = True,
                   clock: Callable[[], _dt.datetime] | None = None) -> VerificationReport:
    """Evaluate every grid point, sort the rows and (optionally) write ``cfg.output_path``.

    The output format follows the file suffix: ``.csv`` writes the row table,
    anything else the JSON report.
    """
    ctx, tasks = _tasks(cfg)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda task: _run_one(cfg, ctx, *task), tasks))
    else:
        rows = [_run_one(cfg, ctx, fn, args) for fn, args in tasks]
    rows.sort(key=ReportRow.key)
    now = (clock or (lambda: _dt.datetime.now(_dt.timezone.utc)))()
    provenance = {"config_sha256": cfg.digest(), "version": __version__, "mode": cfg.mode,
                  "seed": cfg.seed, "timestamp": now.isoformat()}
    report = VerificationReport(tuple(rows), provenance)
    if write and cfg.output_path:
        report.write(cfg.output_path)
    return report


# ---------------------------------------------------------------------------
# domain tables for the CLI

LR_COLUMNS = ("t", "n", "bound_closed_form", "bound_exact_series", "empirical_error", "velocity", "mu")
CONTINUUM_COLUMNS = ("n", "norm_Pn", "r_j", "r_b", "r1", "r2", "total", "empirical_error")


def lr_table(spec: HamiltonianSpec, times: Sequence[float], epsilon: float, mu: float = 1.0,
             observable: str = "sz", cap: int | None = None, n_values: Sequence[int] | None = None) -> list[dict]:
    """One row per ``(t, n)``; ``n`` defaults to the minimal layer count for ``epsilon``."""
    cap = default_cap() if cap is None else cap
    g = build_graph(spec)
    ld = layer_partition(spec, g)
    op_norm = interaction_norm(spec)
    a_norm = catalog_entry(observable, spec.site(spec.system_ids[0]).dim).norm
    params = LRBoundParams.from_graph(g, op_norm, a_norm, mu)
    H = A = None
    if spec.total_dim <= cap:
        H = assemble_operator(spec, cap=cap)
        A = local_operator(observable, spec.system_ids[0], spec, cap=cap)
    out = []
    for t in times:
        for n in (n_values or [min_layers(params, t, epsilon)]):
            emp = None
            if H is not None:
                Hn = assemble_operator(truncate_generator(ld, n), layout=spec, cap=cap)
                emp = truncation_error(H, Hn, A, t)
            out.append({"t": t, "n": n, "bound_closed_form": lr_error_bound(params, n, t),
                        "bound_exact_series": remainder_bound_exact(g, op_norm, a_norm, n, t, ld=ld),
                        "empirical_error": emp, "velocity": params.velocity, "mu": mu})
    return out


def write_table(rows: list[dict], columns: Sequence[str], fmt: str, stream) -> None:
    if fmt == "json":
        json.dump([{c: r.get(c) for c in columns} for r in rows], stream, indent=2)
        stream.write("\n")
        return
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in columns])
