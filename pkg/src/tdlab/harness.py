"""Seeded multi-run experiments, hyperparameter sweeps and result tables.

All seeds of one configuration advance together as a batch: each row of
the learner state is an independent run with its own transition stream.
A run that diverges is frozen (its step size is set to zero) and excluded
from the aggregate statistics.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .envs import build_env, stationary_distribution
from .errors import EmptyGrid, InvalidHyper
from .learners import AlgoSpec, FollowOn, LearnerState, RegFn, StepSchedule, step
from .rng import Xoshiro256, seed_for_run
from .tdcore import METRICS, MetricEvaluator, Transition, expected_matrices, sample_indices

CSV_COLUMNS = ("env", "family", "eta", "beta", "kappa", "reg_fn", "alpha", "steps", "seeds", "diverged", "mean", "std")


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    algo: AlgoSpec
    steps: int = 20_000
    seeds: int = 30
    metric: str = "rmsve"
    record_every: int = 100
    divergence_norm: float = 1e6
    seed: int = 0
    env_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1 or self.seeds < 1 or self.record_every < 1:
            raise InvalidHyper("steps, seeds and record_every must all be >= 1")
        if self.metric not in METRICS:
            raise InvalidHyper(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if not self.divergence_norm > 0:
            raise InvalidHyper("divergence_norm must be positive")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["algo"] = self.algo.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        if "env" in d and "env_name" not in d:
            d["env_name"] = d.pop("env")
        d["algo"] = AlgoSpec.from_dict(d["algo"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class RunResult:
    config: ExperimentConfig
    finals: np.ndarray  # per seed, NaN where diverged
    diverged: np.ndarray  # per seed flags
    mean: float
    std: float
    initial_mean: float
    metric_curve: list[tuple[int, float]]

    @property
    def diverged_count(self) -> int:
        return int(np.sum(self.diverged))

    @property
    def all_diverged(self) -> bool:
        return self.diverged_count == self.config.seeds

    def row(self) -> dict[str, Any]:
        cfg = self.config
        a = cfg.algo
        return {
            "env": cfg.env_name,
            "family": a.family,
            "eta": a.eta,
            "beta": a.beta,
            "kappa": a.kappa,
            "reg_fn": a.reg_fn.label(),
            "alpha": a.schedule.alpha if a.schedule.kind == "constant" else f"{a.schedule.a:g}/(1+k)^{a.schedule.p:g}",
            "steps": cfg.steps,
            "seeds": cfg.seeds,
            "diverged": self.diverged_count,
            "mean": self.mean,
            "std": self.std,
        }


def aggregate(values: Iterable[float]) -> tuple[float, float, int]:
    """(mean, sample std, diverged count); non-finite entries count as diverged."""
    v = np.asarray(list(values), dtype=float)
    ok = v[np.isfinite(v)]
    bad = int(v.size - ok.size)
    if ok.size == 0:
        return math.nan, math.nan, bad
    # sorting makes the float sums independent of seed order
    ok = np.sort(ok)
    mean = float(math.fsum(ok) / ok.size)
    std = 0.0 if ok.size == 1 else float(math.sqrt(math.fsum((ok - mean) ** 2) / (ok.size - 1)))
    return mean, std, bad


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    env = build_env(cfg.env_name, **cfg.env_overrides)
    d = stationary_distribution(env)
    km = expected_matrices(env, d)
    evaluate = MetricEvaluator(env, cfg.metric, d, km)
    B, T = cfg.seeds, cfg.steps

    S = np.empty((T, B), dtype=np.intp)
    Aa = np.empty((T, B), dtype=np.intp)
    S2 = np.empty((T, B), dtype=np.intp)
    for i in range(B):
        rng = Xoshiro256(seed_for_run(cfg.seed, i))
        S[:, i], Aa[:, i], S2[:, i] = sample_indices(env, d, rng, T)
    R = env.reward[S, Aa, S2]
    RHO = env.rho[S, Aa]
    PHI = env.features[S]
    PHI_NEXT = env.features[S2] * env.continuation[S, Aa, S2][..., None]

    state = LearnerState.initial(env.initial_xi, batch=B)
    aux = FollowOn(np.zeros(B), np.ones(B)) if cfg.algo.family == "etd" else None
    active = np.ones(B, dtype=bool)
    alpha = np.ones(B)  # per-seed multiplier, zeroed once a seed diverges
    thr2 = cfg.divergence_norm**2
    sched = cfg.algo.schedule

    record_steps = sorted(set(range(0, T + 1, cfg.record_every)) | {T})
    curve_vals = np.empty((len(record_steps), B))
    curve_vals[0] = evaluate(state.xi)
    rec = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            t = Transition(S[k], Aa[k], S2[k], R[k], RHO[k], PHI[k], PHI_NEXT[k], env.gamma)
            state, aux = step(cfg.algo, state, t, alpha * sched(k), aux)
            sq = np.einsum("bi,bi->b", state.xi, state.xi)
            lam_sq = np.einsum("bi,bi->b", state.lam, state.lam)
            blown = active & ~((sq <= thr2) & np.isfinite(lam_sq))
            if blown.any():
                active &= ~blown
                alpha = active.astype(float)
            if rec < len(record_steps) and record_steps[rec] == k + 1:
                curve_vals[rec] = evaluate(state.xi)
                rec += 1
    diverged = ~active
    finals = np.where(diverged, np.nan, evaluate(state.xi))
    mean, std, _ = aggregate(finals)
    keep = ~diverged
    curve = [
        (s, float(np.mean(curve_vals[j, keep])) if keep.any() else math.nan) for j, s in enumerate(record_steps)
    ]
    initial = float(np.mean(curve_vals[0]))
    return RunResult(cfg, finals, diverged, mean, std, initial, curve)


# --------------------------------------------------------------------------
# sweeps

_ALGO_KEYS = ("family", "eta", "beta", "kappa")


def apply_overrides(base: ExperimentConfig, params: dict[str, Any]) -> ExperimentConfig:
    """Return ``base`` with grid parameters substituted.

    Recognised keys: env/env_name, family, eta, beta, kappa, reg_fn, alpha,
    steps, seeds, metric, seed. ``kappa="1/eta"`` ties kappa to eta.
    """
    algo_kw: dict[str, Any] = {}
    cfg_kw: dict[str, Any] = {}
    for key, value in params.items():
        if key in ("env", "env_name"):
            cfg_kw["env_name"] = value
        elif key in _ALGO_KEYS:
            algo_kw[key] = value
        elif key == "reg_fn":
            algo_kw["reg_fn"] = value if isinstance(value, RegFn) else RegFn.from_dict(value)
        elif key == "alpha":
            algo_kw["schedule"] = StepSchedule("constant", alpha=float(value))
        elif key in ("steps", "seeds", "metric", "seed", "record_every", "divergence_norm"):
            cfg_kw[key] = value
        else:
            raise InvalidHyper(f"unknown grid key {key!r}")
    tie = algo_kw.get("kappa") == "1/eta"
    if tie:
        algo_kw.pop("kappa")
    algo = replace(base.algo, **algo_kw)
    if tie:
        algo = replace(algo, kappa=1.0 / algo.eta)
    return replace(base, algo=algo, **cfg_kw)


def grid_cells(base: ExperimentConfig, grid: dict[str, Sequence[Any]]) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise EmptyGrid("the sweep grid has no cells")
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        cells.append((params, apply_overrides(base, params)))
    return cells


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("TDLAB_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass(frozen=True, eq=False)
class SweepResult:
    cells: list[tuple[dict[str, Any], RunResult]]

    @property
    def results(self) -> list[RunResult]:
        return [r for _, r in self.cells]

    def best(self, by: Sequence[str] = ("env",)) -> dict[tuple, tuple[dict[str, Any], RunResult]]:
        """Cell with the smallest finite mean within each group (groups keyed by ``by``)."""
        out: dict[tuple, tuple[dict[str, Any], RunResult]] = {}
        for params, res in self.cells:
            key = tuple(_group_value(res, k) for k in by)
            if not math.isfinite(res.mean):
                out.setdefault(key, (params, res))
                continue
            cur = out.get(key)
            if cur is None or not math.isfinite(cur[1].mean) or res.mean < cur[1].mean:
                out[key] = (params, res)
        return out


def _group_value(res: RunResult, key: str):
    if key in ("env", "env_name"):
        return res.config.env_name
    if key == "alpha":
        return res.config.algo.schedule.alpha
    if key == "reg_fn":
        return res.config.algo.reg_fn.label()
    return getattr(res.config.algo, key)


def run_sweep(base: ExperimentConfig, grid: dict[str, Sequence[Any]], workers: int | None = None) -> SweepResult:
    """Run every cell of the Cartesian grid; results keep grid order."""
    cells = grid_cells(base, grid)
    n = min(worker_count(workers), len(cells))
    configs = [cfg for _, cfg in cells]
    if n <= 1:
        results = [run_experiment(cfg) for cfg in configs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(run_experiment, configs))
    return SweepResult([(params, res) for (params, _), res in zip(cells, results)])


# --------------------------------------------------------------------------
# output


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_results_csv(path: str | Path, results: Iterable[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in results:
            row = res.row()
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def format_cell(res: RunResult, digits: int = 3) -> str:
    if res.all_diverged:
        return "-"
    return f"{res.mean:.{digits}f} ± {res.std:.{digits}f}"


def markdown_table(results: Iterable[RunResult], column: str = "eta", digits: int = 3) -> str:
    """Rows are environments, columns the values of one hyperparameter."""
    results = list(results)
    envs: list[str] = []
    cols: list[Any] = []
    cell: dict[tuple[str, Any], RunResult] = {}
    for res in results:
        env = res.config.env_name
        c = _group_value(res, column)
        if env not in envs:
            envs.append(env)
        if c not in cols:
            cols.append(c)
        cell[(env, c)] = res
    head = f"| env | " + " | ".join(f"{column}={_short(c)}" for c in cols) + " |"
    sep = "|---|" + "---|" * len(cols)
    lines = [head, sep]
    for env in envs:
        vals = [format_cell(cell[(env, c)], digits) if (env, c) in cell else "" for c in cols]
        lines.append(f"| {env} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def _short(v: Any) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)
