"""Experiment drivers: single solves, convergence studies, method comparison and network training."""

from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .. import __version__
from ..core import ControlPath, TimeGrid, relative_error
from ..optim import (
    OPTIMIZERS,
    ConstantLR,
    ContractionConfig,
    DivergenceError,
    ProjectionConfig,
    RobbinsMonro,
    run_contraction_lanes,
    run_projection_lanes,
)
from ..problems import example1, example2
from ..problems.hjb import HjbSpec, RandomizedNet, hjb_reference_value, simulate_cost, train_hjb
from .config import ConfigError, ExperimentConfig

HISTORY_FIELDS = ["k", "grad_norm", "rel_error", "wall_time_s"]
SUMMARY_FIELDS = ["method", "N", "M", "K", "mean_rel_err", "std_rel_err", "mean_time_s"]
COMPARE_FIELDS = ["method", "M", "K", "N", "time_s", "rel_error"]

# floats per lane group kept below this (states, adjoints and noise are alive together)
_LANE_BUDGET = 4_000_000


# -- csv helpers ---------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows, footer: Optional[Sequence] = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        if footer is not None:
            w.writerow([_fmt(v) for v in footer])


def _parse(text: str):
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv(path: Path):
    """Inverse of :func:`write_csv`: ``(header, rows)`` with numbers parsed back."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[_parse(v) for v in row] for row in r]
    return header, rows


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out: Path, cfg: ExperimentConfig, extra: Optional[dict] = None):
    out.mkdir(parents=True, exist_ok=True)
    payload = {"version": _version(), "config": cfg.to_dict()}
    if extra:
        payload.update(extra)
    (out / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- problem setup -------------------------------------------------------------


def build_problem(cfg: ExperimentConfig, N: int):
    """Spec, grid and reference control for the configured benchmark."""
    grid = TimeGrid(1.0, N)
    if cfg.problem == "example1":
        spec = example1.example1_spec()
        source = "data" if cfg.reference == "data" else "exact"
        return spec, grid, example1.reference_control(grid, source=source)
    if cfg.problem == "example2":
        spec = example2.example2_spec()
        return spec, grid, spec.reference_control(grid)
    raise ConfigError(f"problem {cfg.problem!r} is not a deterministic-control benchmark")


def _schedule(cfg: ExperimentConfig):
    if cfg.lr == "constant":
        if cfg.eta is None:
            raise ConfigError("lr = constant needs eta")
        return ConstantLR(cfg.eta)
    if cfg.theta is None or cfg.offset is None:
        raise ConfigError("lr = robbins_monro needs theta and offset")
    return RobbinsMonro(cfg.theta, cfg.offset)


def _lane_groups(seeds: List[int], M: int, N: int, d: int, lanes: int):
    if lanes <= 0:
        lanes = max(1, _LANE_BUDGET // max(1, 6 * M * (N + 1) * d))
    return [seeds[i : i + lanes] for i in range(0, len(seeds), lanes)]


@dataclass
class RunSummary:
    method: str
    N: int
    M: int
    K: int
    errors: List[float]
    times: List[float]
    controls: List[ControlPath] = field(default_factory=list, repr=False)

    @property
    def mean_rel_err(self) -> float:
        return float(np.mean(self.errors))

    @property
    def std_rel_err(self) -> float:
        return float(np.std(self.errors))

    @property
    def mean_time_s(self) -> float:
        return float(np.mean(self.times))

    def row(self):
        return [self.method, self.N, self.M, self.K, self.mean_rel_err, self.std_rel_err, self.mean_time_s]


def solve(cfg: ExperimentConfig, N: Optional[int] = None, seed_offset: int = 0, out: Optional[Path] = None) -> RunSummary:
    """Run the configured control method for every seed; optionally write per-seed histories.

    Seeds are advanced together in lane groups, so the reported time per run
    is the group's wall time divided by its size.
    """
    N, M, K = cfg.resolved(N)
    spec, grid, ref = build_problem(cfg, N)
    seeds = [s + seed_offset for s in cfg.seeds]
    errors, times, controls = [], [], []
    for group in _lane_groups(seeds, M, N, spec.d, cfg.lanes):
        t0 = time.perf_counter()
        try:
            if cfg.method == "batch_sgd":
                pcfg = ProjectionConfig(K=K, M=M, lr=_schedule(cfg), scheme=cfg.scheme)
                results = run_projection_lanes(spec, grid, pcfg, group, reference=ref, record_every=cfg.record_every)
            elif cfg.method == "contraction":
                ccfg = ContractionConfig(K=K, M=M, rho=cfg.rho)
                results = run_contraction_lanes(spec, grid, ccfg, group, reference=ref, record_every=cfg.record_every)
            else:
                raise ConfigError(f"method {cfg.method!r} applies to the network problem only")
        except DivergenceError as exc:
            if out is not None:
                write_csv(out / "history_diverged.csv", HISTORY_FIELDS, _history_rows(exc.history, len(group)))
            raise
        elapsed = time.perf_counter() - t0
        for seed, (u, hist) in zip(group, results):
            errors.append(relative_error(u, ref))
            times.append(elapsed / len(group))
            controls.append(u)
            if out is not None:
                write_csv(out / f"history_{seed}.csv", HISTORY_FIELDS, _history_rows(hist, len(group)))
    return RunSummary(cfg.method, N, M, K, errors, times, controls)


def _history_rows(hist, lanes: int):
    return [(r.k, r.grad_norm, r.rel_error, r.wall_time / lanes) for r in hist]


def run_experiment(cfg: ExperimentConfig, out, seed_offset: int = 0) -> RunSummary:
    """Single solve: histories, ``summary.csv`` and ``manifest.json`` under ``out``."""
    out = Path(out)
    write_manifest(out, cfg, {"seed_offset": seed_offset})
    summary = solve(cfg, seed_offset=seed_offset, out=out)
    write_csv(out / "summary.csv", SUMMARY_FIELDS, [summary.row()])
    return summary


# -- rate fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``log y = intercept + slope * log x``; a decay of order p has slope -p."""

    xs: tuple
    ys: tuple
    slope: float
    intercept: float
    r2: float

    @property
    def order(self) -> float:
        return -self.slope


def fit_rate(xs, ys) -> RateFit:
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    if len(lx) < 2:
        raise ValueError("need at least two points to fit a rate")
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(np.clip(1 - np.sum(resid**2) / ss_tot, 0.0, 1.0))
    return RateFit(tuple(float(x) for x in xs), tuple(float(y) for y in ys), float(slope), float(intercept), r2)


def convergence_study(cfg: ExperimentConfig, out=None, seed_offset: int = 0):
    """Run every ``N`` in ``cfg.N_list``, fit the decay of the mean error; returns ``(RateFit, summaries)``."""
    if len(cfg.N_list) < 3:
        raise ConfigError("a convergence study needs at least three values of N")
    summaries = []
    for N in cfg.N_list:
        sub = None if out is None else Path(out) / f"N{N}"
        summaries.append(solve(cfg, N=N, seed_offset=seed_offset, out=sub))
    fit = fit_rate([s.N for s in summaries], [s.mean_rel_err for s in summaries])
    if out is not None:
        out = Path(out)
        write_manifest(out, cfg, {"seed_offset": seed_offset})
        write_csv(out / "summary.csv", SUMMARY_FIELDS, [s.row() for s in summaries])
        write_csv(
            out / "ratefit.csv",
            ["N", "mean_err", "slope", "r2"],
            [(s.N, s.mean_rel_err, None, None) for s in summaries],
            footer=("fit", None, fit.order, fit.r2),
        )
    return fit, summaries


def contraction_preset_N(K: int, eta: float = 0.995) -> int:
    """``N = floor(1 / eta^K)``, coupling grid size to the contraction iteration count."""
    return int(np.floor(1.0 / eta**K))


# -- method comparison -----------------------------------------------------------


def compare_methods(cfg: ExperimentConfig, N: Optional[int] = None, out=None, seed_offset: int = 0,
                    contraction_K="710", plain_seeds: Optional[List[int]] = None):
    """Plain SGD (``M = 1, K = N^3``), batch SGD (``M = N, K = N^2``) and contraction (``M = N^2``).

    Returns the summaries in that order and writes ``compare.csv``.
    """
    N = cfg.N if N is None else N
    plain = cfg.with_overrides(method="batch_sgd", N=N, M="1", K=str(N**3),
                               seeds=cfg.seeds if plain_seeds is None else plain_seeds)
    batch = cfg.with_overrides(method="batch_sgd", N=N, M="N", K="N^2")
    contr = cfg.with_overrides(method="contraction", N=N, M="N^2", K=str(contraction_K))
    summaries = []
    for label, sub in (("plain_sgd", plain), ("batch_sgd", batch), ("contraction", contr)):
        s = solve(sub, seed_offset=seed_offset)
        s.method = label
        summaries.append(s)
    if out is not None:
        out = Path(out)
        write_manifest(out, cfg, {"seed_offset": seed_offset, "N": N, "contraction_K": str(contraction_K)})
        rows = [(s.method, s.M, s.K, s.N, s.mean_time_s, s.mean_rel_err) for s in summaries]
        write_csv(out / "compare.csv", COMPARE_FIELDS, rows)
    return summaries


# -- network training ------------------------------------------------------------


@dataclass
class HjbReport:
    optimizer: str
    d: int
    lam: float
    value: float
    value_stderr: float
    reference: float
    reference_stderr: float
    history: list

    @property
    def rel_error(self) -> float:
        return abs(self.value - self.reference) / abs(self.reference)


def hjb_train(cfg: ExperimentConfig, out=None, seed_offset: int = 0) -> List[HjbReport]:
    """Train the randomized network once per seed and compare with the Monte-Carlo value."""
    if cfg.problem != "hjb":
        raise ConfigError("hjb_train needs problem = hjb")
    method = "param_sgd" if cfg.method == "batch_sgd" else cfg.method
    if method not in OPTIMIZERS:
        raise ConfigError(f"method {cfg.method!r} is not a parameter optimizer")
    spec = HjbSpec(lam=cfg.lam, d=cfg.d, N=cfg.hjb_n)
    ref, ref_se = hjb_reference_value(spec, cfg.ref_samples, seed=10_007)
    reports = []
    for seed in (s + seed_offset for s in cfg.seeds):
        net = RandomizedNet.init(cfg.d, cfg.hjb_n, width=cfg.width, seed=seed)
        if cfg.epochs == 0:
            value, se = simulate_cost(spec, net, cfg.eval_samples, seed + 1_000_003)
            history = []
        else:
            res = train_hjb(spec, net, OPTIMIZERS[method], cfg.hjb_lr, cfg.epochs, batch=cfg.batch,
                            seed=seed, eval_samples=cfg.eval_samples)
            if not np.isfinite(res.value):
                raise DivergenceError(f"network training diverged for seed {seed}", res.epochs, None)
            value, se, history = res.value, res.value_stderr, res.epochs
        rep = HjbReport(method, cfg.d, cfg.lam, value, se, ref, ref_se, history)
        reports.append(rep)
        if out is not None:
            write_csv(Path(out) / f"hjb_history_{seed}.csv", ["epoch", "value_estimate"], history)
    if out is not None:
        out = Path(out)
        write_manifest(out, cfg, {"seed_offset": seed_offset})
        write_csv(
            out / "hjb_summary.csv",
            ["optimizer", "d", "lam", "value", "value_stderr", "reference", "reference_stderr", "rel_error"],
            [(r.optimizer, r.d, r.lam, r.value, r.value_stderr, r.reference, r.reference_stderr, r.rel_error) for r in reports],
        )
    return reports
