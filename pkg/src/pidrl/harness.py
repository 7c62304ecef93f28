"""Experiment orchestration: configs, multi-run fan-out, aggregation, grid
search and CSV/SVG output.

A config is a flat JSON object whose keys match the CLI flags (dashes become
underscores).  Run ``i`` of an experiment draws from
``numpy.random.default_rng(seed + i)``.  For Garnet studies ``n_mdps > 1``
adds an outer level: MDP ``j`` is generated with ``garnet_seed + j`` and the
aggregate curve is the mean over MDPs of each MDP's average trajectory.
"""
from __future__ import annotations

import csv
import html
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .environments import ENVIRONMENTS, make_environment
from .gain_adaptation import GainAdaptationConfig, run_pid_q_with_ga, run_pid_td_with_ga
from .learning import (
    ALGORITHMS,
    SAMPLING_MODES,
    RunResult,
    ScheduleTriple,
    is_control,
    parse_schedule,
    run_learning,
)
from .mdp import exact_value_control, exact_value_pe, load_mdp, uniform_policy
from .planning import Gains

TARGET_ERROR = 0.2

# published learning-rate grid, eps -> M values per component; P -> V, I -> z, D -> V'
LR_GRID_P = {1.0: (10, 50, 100, 500, 1000, 10000), 0.75: (10, 50, 100, 500, 1000),
            0.5: (10, 50, 100, 500, 1000), 0.25: (10, 50, 100), 0.1: (10, 50, 100),
            0.01: (10000,), 0.001: (10000,), 0.0001: (10000,)}
LR_GRID_I = {1.0: (math.inf, 100), 0.5: (math.inf,), 0.1: (math.inf,), 0.0: (math.inf,)}
LR_GRID_D = {1.0: (math.inf, 100), 0.5: (math.inf,), 0.25: (math.inf,), 0.1: (math.inf,),
            0.01: (math.inf,), 0.0: (math.inf,)}
GA_PE_GRID = {"eta": [0.1, 0.01, 0.001, 0.0001], "eps_norm": [0.1, 0.01]}
GA_CONTROL_GRID = {"eta": [1e-5, 5e-5, 1e-6], "eps_norm": [0.1]}


class ConfigError(ValueError):
    pass


def _lr_strings(table) -> list[str]:
    return [f"{eps:g},{m:g}" for eps, ms in table.items() for m in ms]


def default_grids(config: "ExperimentConfig") -> dict[str, list]:
    """Learning-rate grid (and GA grid when adapting) for ``config``'s algorithm."""
    grids = {"lr_v": _lr_strings(LR_GRID_P)}
    if config.algorithm.startswith("pid"):
        grids["lr_z"] = _lr_strings(LR_GRID_I)
        grids["lr_vp"] = _lr_strings(LR_GRID_D)
    if config.adapt_gains:
        grids.update(GA_CONTROL_GRID if is_control(config.algorithm) else GA_PE_GRID)
    return grids


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "chain-walk"
    gamma: float = 0.9
    mdp_file: str | None = None
    garnet_states: int = 50
    garnet_actions: int = 3
    garnet_branching: int = 5
    garnet_reward_states: int = 10
    garnet_seed: int = 0
    n_mdps: int = 1
    algo: str = "td"
    gains: str = "1,0,0,0.05,0.95"
    lr_v: str = "0.5,50"
    lr_z: str | None = None
    lr_vp: str | None = None
    adapt_gains: bool = False
    eta: float = 0.0
    lam: float = 0.5
    eps_norm: float = 1e-20
    steps: int = 10000
    eval_every: int = 1000
    runs: int = 80
    seed: int = 0
    sampling: str | None = None
    explore: float = 0.1

    @property
    def algorithm(self) -> str:
        return self.algo

    @property
    def problem(self) -> str:
        return "control" if is_control(self.algo) else "pe"

    def validate(self) -> "ExperimentConfig":
        if self.mdp_file is None and self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {ENVIRONMENTS}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {ALGORITHMS}")
        if self.adapt_gains and not self.algo.startswith("pid"):
            raise ConfigError("gain adaptation needs pid-td or pid-q")
        if self.sampling is not None and self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"unknown sampling {self.sampling!r}; choose from {SAMPLING_MODES}")
        if self.sampling == "iid-state-action" and not is_control(self.algo):
            raise ConfigError("iid-state-action sampling is for control algorithms")
        if self.steps < 1 or self.eval_every < 1 or self.runs < 1 or self.n_mdps < 1:
            raise ConfigError("steps, eval_every, runs and n_mdps must be positive")
        if self.n_mdps > 1 and (self.env != "garnet" or self.mdp_file is not None):
            raise ConfigError("n_mdps > 1 is only meaningful for generated Garnets")
        if self.mdp_file is None and not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        try:
            self.parsed_gains()
            self.schedules()
            self.ga_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def parsed_gains(self) -> Gains:
        return Gains.parse(self.gains)

    def schedules(self) -> ScheduleTriple:
        v = parse_schedule(self.lr_v)
        z = parse_schedule(self.lr_z) if self.lr_z is not None else v
        vp = parse_schedule(self.lr_vp) if self.lr_vp is not None else v
        return ScheduleTriple(v, z, vp)

    def ga_config(self) -> GainAdaptationConfig:
        return GainAdaptationConfig(self.eta, self.lam, self.eps_norm, self.parsed_gains())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        clean = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(clean) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("gains", "lr_v", "lr_z", "lr_vp"):
            if isinstance(clean.get(key), (int, float)):
                clean[key] = repr(float(clean[key]))
        return cls(**clean).validate()

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None}).validate()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return ExperimentConfig.from_dict(doc)


@lru_cache(maxsize=16)
def _problem(env, gamma, mdp_file, n, m, b, nr, mdp_seed, control):
    if mdp_file is not None:
        mdp = load_mdp(mdp_file)
        policy = uniform_policy(mdp)
    else:
        mdp, policy = make_environment(env, gamma, n_states=n, n_actions=m, branching=b,
                                       n_reward_states=nr, seed=mdp_seed) if env == "garnet" \
            else make_environment(env, gamma)
    exact = exact_value_control(mdp) if control else exact_value_pe(mdp, policy)
    return mdp, policy, exact


def build_problem(config: ExperimentConfig, mdp_index: int = 0):
    """(mdp, policy, exact solution) for one outer index."""
    return _problem(config.env, config.gamma, config.mdp_file, config.garnet_states,
                    config.garnet_actions, config.garnet_branching, config.garnet_reward_states,
                    config.garnet_seed + mdp_index, is_control(config.algo))


def run_single(config: ExperimentConfig, mdp_index: int, run_id: int) -> RunResult:
    mdp, policy, exact = build_problem(config, mdp_index)
    seed = config.seed + run_id
    rng = np.random.default_rng(seed)
    common = dict(total_steps=config.steps, eval_every=config.eval_every, rng=rng, exact=exact)
    if config.adapt_gains and config.algo == "pid-td":
        res = run_pid_td_with_ga(mdp, policy, config.ga_config(), config.schedules(),
                                 sampling=config.sampling, run_id=run_id, seed=seed,
                                 explore=config.explore, **common)
    elif config.adapt_gains:
        res = run_pid_q_with_ga(mdp, config.ga_config(), config.schedules(), config.sampling,
                                run_id=run_id, seed=seed, explore=config.explore, **common)
    else:
        gains = config.parsed_gains() if config.algo.startswith("pid") else None
        res = run_learning(mdp, policy, config.algo, gains, config.schedules(),
                           sampling=config.sampling, run_id=run_id, seed=seed,
                           explore=config.explore, **common)
    res.final_state = None
    if config.env == "garnet" and config.mdp_file is None:
        res.mdp_seed = config.garnet_seed + mdp_index
    return res


def _run_task(task):
    config, mdp_index, run_id = task
    return mdp_index, run_single(config, mdp_index, run_id)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("PIDRL_JOBS")
        try:
            jobs = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"PIDRL_JOBS must be an integer, got {env!r}") from exc
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


@dataclass
class Aggregate:
    steps: list
    mean: np.ndarray
    stderr: np.ndarray
    n_included: int
    n_diverged: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list = field(default_factory=list)
    mdp_index: list = field(default_factory=list)
    aggregate: Aggregate | None = None

    @property
    def all_diverged(self) -> bool:
        return bool(self.runs) and all(r.diverged for r in self.runs)


def _mean_stderr(rows: np.ndarray):
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, rows.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate_runs(runs, mdp_index=None) -> Aggregate:
    """Mean and standard error per evaluation step over non-diverged runs.

    With several MDPs the per-MDP mean trajectories are averaged and the
    standard error is taken across MDPs.
    """
    if not runs:
        return Aggregate([], np.zeros(0), np.zeros(0), 0, 0)
    mdp_index = list(mdp_index) if mdp_index is not None else [0] * len(runs)
    steps = list(runs[0].steps)
    kept = [(j, r) for j, r in zip(mdp_index, runs) if not r.diverged]
    n_div = len(runs) - len(kept)
    if not kept:
        nan = np.full(len(steps), np.nan)
        return Aggregate(steps, nan, nan.copy(), 0, n_div)
    groups = sorted({j for j, _ in kept})
    if len(groups) == 1:
        mean, se = _mean_stderr(np.array([r.errors for _, r in kept], dtype=float))
    else:
        per_mdp = np.array([np.mean([r.errors for j, r in kept if j == g], axis=0) for g in groups])
        mean, se = _mean_stderr(per_mdp)
    return Aggregate(steps, mean, se, len(kept), n_div)


def run_experiment(config: ExperimentConfig, jobs: int | None = None) -> ExperimentResult:
    config.validate()
    jobs = resolve_jobs(jobs)
    tasks = [(config, j, i) for j in range(config.n_mdps) for i in range(config.runs)]
    if jobs == 1 or len(tasks) == 1:
        out = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_task, tasks))
    out.sort(key=lambda p: (p[0], p[1].run_id))
    result = ExperimentResult(config, [r for _, r in out], [j for j, _ in out])
    result.aggregate = aggregate_runs(result.runs, result.mdp_index)
    return result


def steps_to_target(aggregate: Aggregate, target: float = TARGET_ERROR) -> float:
    for step, err in zip(aggregate.steps, aggregate.mean):
        if err <= target:
            return float(step)
    return math.inf


def _rank_key(row):
    final = row["final_error"]
    return (row["steps_to_target"], final if math.isfinite(final) else math.inf)


@dataclass
class GridResult:
    best: ExperimentConfig
    table: list


def grid_search(template: ExperimentConfig, grids: dict | None = None, jobs: int | None = None) -> GridResult:
    """Evaluate every point of the Cartesian product of ``grids`` (config
    field -> candidate values).  Best = fewest steps to mean error 0.2, then
    lowest final mean error."""
    grids = default_grids(template) if grids is None else grids
    if not grids or any(len(v) == 0 for v in grids.values()):
        raise ConfigError("grid search needs nonempty grids")
    keys = list(grids)
    table = []
    best = None
    for values in itertools.product(*(grids[k] for k in keys)):
        cfg = template.override(**dict(zip(keys, values)))
        agg = run_experiment(cfg, jobs).aggregate
        final = float(agg.mean[-1]) if agg.n_included else math.inf
        row = dict(zip(keys, values))
        row.update(steps_to_target=steps_to_target(agg), final_error=final,
                   n_diverged=agg.n_diverged)
        table.append(row)
        if best is None or _rank_key(row) < _rank_key(best[0]):
            best = (row, cfg)
    return GridResult(best[1], table)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@contextmanager
def _sink(target):
    """Open ``target`` for writing unless it already is a text stream."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


def emit_csv(results, path, mdp_index=None) -> None:
    """Long-form rows ``step,run,error`` (plus ``kp,ki,kd`` when any run
    carries a gain trace, and a leading ``mdp`` column for multi-MDP runs)."""
    results = list(results)
    with_gains = any(r.gains for r in results)
    multi = mdp_index is not None and len(set(mdp_index)) > 1
    header = (["mdp"] if multi else []) + ["step", "run", "error"] + (["kp", "ki", "kd"] if with_gains else [])
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, r in enumerate(results):
            for i, (step, err) in enumerate(zip(r.steps, r.errors)):
                row = ([mdp_index[k]] if multi else []) + [step, r.run_id, _fmt(err)]
                if with_gains:
                    row += [_fmt(g) for g in r.gains[i]] if r.gains else ["", "", ""]
                w.writerow(row)


def emit_aggregate_csv(aggregate: Aggregate, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean", "stderr"])
        for s, m, e in zip(aggregate.steps, aggregate.mean, aggregate.stderr):
            w.writerow([s, _fmt(m), _fmt(e)])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def emit_svg(aggregate, path, title: str = "", width: int = 640, height: int = 400) -> None:
    """Line chart of mean error with a shaded +-stderr band.  ``aggregate``
    may be one Aggregate or a ``{label: Aggregate}`` mapping."""
    series = aggregate if isinstance(aggregate, dict) else {"mean": aggregate}
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 40
    xs = [s for a in series.values() for s in a.steps]
    ys = [v for a in series.values() for v in np.concatenate([a.mean + a.stderr, a.mean - a.stderr])
          if np.isfinite(v)]
    x0, x1 = (min(xs), max(xs)) if xs else (0, 1)
    y0, y1 = (min(0.0, min(ys)), max(ys)) if ys else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * (width - pad_l - pad_r)

    def py(y):
        return height - pad_b - (y - y0) / (y1 - y0) * (height - pad_t - pad_b)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad_l}" y1="{py(y0):.2f}" x2="{width - pad_r}" y2="{py(y0):.2f}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
           f'<text x="{pad_l}" y="{height - 10}" font-size="11">{_fmt(x0)}</text>',
           f'<text x="{width - pad_r}" y="{height - 10}" font-size="11" text-anchor="end">{_fmt(x1)}</text>',
           f'<text x="5" y="{py(y1) + 4:.2f}" font-size="11">{y1:.3g}</text>',
           f'<text x="5" y="{py(y0) + 4:.2f}" font-size="11">{y0:.3g}</text>']
    if title:
        out.append(f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{html.escape(title)}</text>')
    for k, (label, agg) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = [(s, m, e) for s, m, e in zip(agg.steps, agg.mean, agg.stderr) if np.isfinite(m)]
        if not pts:
            continue
        upper = " ".join(f"{px(s):.2f},{py(m + e):.2f}" for s, m, e in pts)
        lower = " ".join(f"{px(s):.2f},{py(m - e):.2f}" for s, m, e in reversed(pts))
        line = " ".join(f"{px(s):.2f},{py(m):.2f}" for s, m, _ in pts)
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{width - pad_r - 5}" y="{pad_t + 14 * (k + 1)}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{html.escape(str(label))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
