"""Experiment orchestration and statistics.

Runs the cross product of functions x algorithms x seeds, writes one curve
CSV per run plus a summary CSV, and provides the improvement metric and a
paired Wilcoxon signed-rank test (exact null distribution up to n = 20,
normal approximation with continuity correction above).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ddpg
from .benchmarks import FUNCTIONS, make_objective
from .records import RunRecord
from .swarm import DEFAULT_REFRESH_GAP, Swarm, schedule_coeffs

ALGORITHMS = (
    "pso",
    "pso-linear",
    "pso-tvac",
    "clpso",
    "rlam-absolute",
    "rlam-relative",
    "rlpso",
)

_MODEL_ALGOS = ("rlam-absolute", "rlam-relative", "rlpso")


class ConfigError(ValueError):
    """Invalid or missing experiment-configuration key."""


def improvement(origin: float, adapted: float, best: float) -> float:
    """Normalized gain of ``adapted`` over ``origin`` toward the optimum
    ``best``, as a signed percentage (100 means the optimum was reached)."""
    if origin == best:
        raise ValueError("improvement undefined: origin equals the optimum")
    return 100.0 * (origin - adapted) / (origin - best)


def _signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |diffs|, returned doubled so tied averages stay integral."""
    order = np.argsort(np.abs(diffs), kind="stable")
    sorted_abs = np.abs(diffs)[order]
    doubled = np.empty(len(diffs), dtype=np.int64)
    i = 0
    while i < len(diffs):
        j = i
        while j + 1 < len(diffs) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        doubled[order[i : j + 1]] = (i + 1) + (j + 1)  # 2 * average of ranks i+1..j+1
        i = j + 1
    return doubled, np.sign(diffs)


def wilcoxon_signed_rank(x, y) -> tuple[float, float]:
    """Two-sided paired Wilcoxon test; returns (smaller rank sum, p-value).

    Zero differences are dropped; fewer than five nonzero differences is an
    error.  Ties among |differences| get average ranks.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two equal-length 1-D samples")
    if len(x) < 5:
        raise ValueError("need at least 5 pairs")
    diffs = x - y
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n < 5:
        raise ValueError(f"only {n} nonzero differences; need at least 5")
    doubled, signs = _signed_ranks(diffs)
    total2 = int(doubled.sum())  # == 2 * n(n+1)/2
    w_plus2 = int(doubled[signs > 0].sum())
    w_minus2 = total2 - w_plus2
    statistic = min(w_plus2, w_minus2) / 2.0
    if n <= 20:
        # exact null distribution of the doubled positive rank sum
        dist = np.zeros(total2 + 1)
        dist[0] = 1.0
        for r2 in doubled:
            nxt = dist.copy()
            nxt[r2:] += dist[: total2 + 1 - r2]
            dist = nxt
        total_count = 2.0**n
        p_le = dist[: w_plus2 + 1].sum() / total_count
        p_ge = dist[w_plus2:].sum() / total_count
        p = min(1.0, 2.0 * min(p_le, p_ge))
    else:
        mu = n * (n + 1) / 4.0
        tie_adj = 0.0
        _, counts = np.unique(doubled, return_counts=True)
        for t in counts[counts > 1]:
            tie_adj += (t**3 - t) / 48.0
        sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_adj)
        z = (statistic - mu + 0.5) / sigma  # continuity-corrected, statistic <= mu
        p = min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))
    return statistic, p


def normalized_pairs(a_values, b_values) -> tuple[np.ndarray, np.ndarray]:
    """Rescale two paired samples to [0, 1] by their pooled min/max."""
    a = np.asarray(a_values, dtype=float)
    b = np.asarray(b_values, dtype=float)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return np.zeros_like(a), np.zeros_like(b)
    return (a - lo) / (hi - lo), (b - lo) / (hi - lo)


# -- single runs -------------------------------------------------------------

_SCHEDULE_FOR_ALGO = {"pso": "constant", "pso-linear": "linear_dec_w", "pso-tvac": "tvac"}
_ADAPTER_FOR_ALGO = {
    "pso": "none",
    "pso-linear": "linear_dec_w",
    "pso-tvac": "tvac",
    "clpso": "linear_dec_w",
    "rlam-absolute": "rlam-absolute",
    "rlam-relative": "rlam-relative",
    "rlpso": "rlam-absolute",
}


def run_single(algorithm: str, function: str, dim: int, fn_seed: int, budget: int,
               run_seed: int, particles: int = 40, model=None,
               refresh_gap: int = DEFAULT_REFRESH_GAP) -> RunRecord:
    """Execute one run of one algorithm and return its record."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")
    objective = make_objective(function, dim, fn_seed)
    if algorithm in _MODEL_ALGOS:
        if model is None:
            raise ValueError(f"algorithm {algorithm!r} needs a trained model file")
        policy, meta = model if isinstance(model, tuple) else ddpg.load_model(model)
        if algorithm == "rlpso":
            variant, mode = "rlpso", "absolute"
        else:
            variant, mode = "pso", algorithm.split("-", 1)[1]
        declared = meta.get("mode")
        if declared and algorithm != "rlpso" and declared != mode:
            raise ValueError(f"model was trained in {declared!r} mode, run asked for {mode!r}")
        expected = ddpg.action_width(variant)
        if policy.action_dim != expected:
            raise ValueError(
                f"model emits {policy.action_dim} action values, {algorithm} needs {expected}"
            )
        return ddpg.adapted_run(policy, objective, variant, mode, budget, run_seed,
                                n_particles=particles, refresh_gap=refresh_gap)

    variant = "clpso" if algorithm == "clpso" else "pso"
    swarm = Swarm(objective, particles, budget, run_seed, variant=variant)
    record = RunRecord(function, dim, run_seed, variant, _ADAPTER_FOR_ALGO[algorithm])
    record.curve.append((swarm.eval_count, swarm.gbest_fit))
    t_max = max(1, budget // particles - 1)
    t = 0
    while swarm.eval_count < swarm.eval_budget:
        if algorithm == "clpso":
            sched = schedule_coeffs("linear_dec_w", min(t, t_max), t_max)
            swarm.clpso_step(sched.w, 1.494, refresh_gap)
        else:
            coeffs = schedule_coeffs(_SCHEDULE_FOR_ALGO[algorithm], min(t, t_max), t_max)
            swarm.pso_step([coeffs] * swarm.subgroup_count)
        record.curve.append((swarm.eval_count, swarm.gbest_fit))
        t += 1
    return record.close()


# -- experiment configuration -------------------------------------------------

@dataclass
class ExperimentConfig:
    functions: list
    algorithms: list
    dim: int = 10
    runs: int = 20
    budget: int = 10_000
    seed: int = 1
    particles: int = 40
    out_dir: str = "results"
    model: str = ""

    def validate(self) -> "ExperimentConfig":
        if not self.functions:
            raise ConfigError("config needs at least one function")
        if not self.algorithms:
            raise ConfigError("config needs at least one algorithm")
        for f in self.functions:
            if f not in FUNCTIONS:
                raise ConfigError(f"unknown function {f!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; valid: {', '.join(ALGORITHMS)}")
        if any(a in _MODEL_ALGOS for a in self.algorithms) and not self.model:
            raise ConfigError("config uses a model-driven algorithm but sets no model path")
        if self.runs < 1 or self.budget < self.particles or self.dim < 2:
            raise ConfigError("runs, budget, and dim must be sensible positive values")
        return self


_CONFIG_KEYS = {
    "functions": lambda v: [s.strip() for s in v.split(",") if s.strip()],
    "algorithms": lambda v: [s.strip() for s in v.split(",") if s.strip()],
    "dim": int,
    "runs": int,
    "budget": int,
    "seed": int,
    "particles": int,
    "out_dir": str,
    "model": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the line-based ``key=value`` config format (# starts a comment)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_KEYS[key](value.strip())
    if "functions" not in values or "algorithms" not in values:
        raise ConfigError("config must set both 'functions' and 'algorithms'")
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


# -- CSV emission --------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_curve_csv(record: RunRecord, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("eval_count,gbest\n")
        for count, fit in record.curve:
            f.write(f"{count},{_fmt(fit)}\n")


def read_curve_csv(path) -> list:
    curve = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "eval_count,gbest":
            raise ValueError(f"unexpected curve header {header!r} in {path}")
        for line in f:
            count, fit = line.strip().split(",")
            curve.append((int(count), float(fit)))
    return curve


@dataclass
class SummaryRow:
    function: str
    algorithm: str
    median: float
    mean: float
    std: float
    improvement_pct: float
    wins: int
    losses: int
    p_value: float


@dataclass
class ComparisonSummary:
    rows: list = field(default_factory=list)

    def csv_lines(self):
        yield "function,algorithm,median,mean,std,improvement_pct,wins,losses,p_value"
        for r in self.rows:
            yield (
                f"{r.function},{r.algorithm},{_fmt(r.median)},{_fmt(r.mean)},{_fmt(r.std)},"
                f"{_fmt(r.improvement_pct)},{r.wins},{r.losses},{_fmt(r.p_value)}"
            )


def summarize(finals: dict, config: ExperimentConfig) -> ComparisonSummary:
    """Build the summary from per-(function, algorithm) final-fit lists.

    The first configured algorithm is the comparison baseline: other
    algorithms get an improvement percentage (of means, toward the known
    optimum), a per-function win/loss against the baseline median, a
    per-function Wilcoxon p, and one pooled "ALL" row whose Wilcoxon runs
    over per-(function, seed) pairs normalized per function.
    """
    summary = ComparisonSummary()
    baseline = config.algorithms[0]
    n_algos = len(config.algorithms)
    per_fn_improvements: dict = {ai: [] for ai in range(n_algos)}
    pooled_pairs: dict = {ai: ([], []) for ai in range(n_algos)}
    win_counts = {ai: [0, 0] for ai in range(n_algos)}

    for fn in config.functions:
        base_vals = np.array(finals[(fn, baseline)])
        for ai, alg in enumerate(config.algorithms):
            vals = np.array(finals[(fn, alg)])
            median = float(np.median(vals))
            mean = float(np.mean(vals))
            std = float(np.std(vals))
            if ai == 0:
                summary.rows.append(SummaryRow(fn, alg, median, mean, std, 0.0, 0, 0, float("nan")))
                continue
            best = FUNCTIONS[fn].bias
            try:
                impr = improvement(float(np.mean(base_vals)), mean, best)
            except ValueError:
                impr = float("nan")
            per_fn_improvements[ai].append(impr)
            base_median = float(np.median(base_vals))
            win = 1 if median < base_median else 0
            loss = 1 if median > base_median else 0
            win_counts[ai][0] += win
            win_counts[ai][1] += loss
            norm_base, norm_alg = normalized_pairs(base_vals, vals)
            pooled_pairs[ai][0].extend(norm_base)
            pooled_pairs[ai][1].extend(norm_alg)
            try:
                _, p = wilcoxon_signed_rank(norm_base, norm_alg)
            except ValueError:
                p = float("nan")
            summary.rows.append(SummaryRow(fn, alg, median, mean, std, impr, win, loss, p))

    for ai, alg in enumerate(config.algorithms):
        if ai == 0:
            continue
        all_vals = np.concatenate([finals[(fn, alg)] for fn in config.functions])
        imprs = [v for v in per_fn_improvements[ai] if not math.isnan(v)]
        mean_impr = float(np.mean(imprs)) if imprs else float("nan")
        try:
            _, pooled_p = wilcoxon_signed_rank(*map(np.asarray, pooled_pairs[ai]))
        except ValueError:
            pooled_p = float("nan")
        summary.rows.append(
            SummaryRow("ALL", alg, float(np.median(all_vals)), float(np.mean(all_vals)),
                       float(np.std(all_vals)), mean_impr,
                       win_counts[ai][0], win_counts[ai][1], pooled_p)
        )
    return summary


def curve_filename(function: str, algorithm: str, run: int) -> str:
    return f"{function}__{algorithm}__run{run:03d}.csv"


def run_experiment(config: ExperimentConfig, quiet: bool = True):
    """Execute the full cross product and write curve CSVs plus summary.csv.

    Per-run swarm seeds are ``seed + run_index`` (identical across
    algorithms, so comparisons are seed-paired); per-function instance seeds
    are ``seed + 1000 * (function_index + 1)``.
    """
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = None
    if any(a in _MODEL_ALGOS for a in config.algorithms):
        model = ddpg.load_model(config.model)
    records = []
    finals: dict = {}
    for fi, fn in enumerate(config.functions):
        fn_seed = config.seed + 1000 * (fi + 1)
        for alg in config.algorithms:
            finals[(fn, alg)] = []
            for k in range(config.runs):
                rec = run_single(alg, fn, config.dim, fn_seed, config.budget,
                                 config.seed + k, config.particles, model)
                write_curve_csv(rec, out / curve_filename(fn, alg, k))
                finals[(fn, alg)].append(rec.final_fit)
                records.append(rec)
            if not quiet:
                med = float(np.median(finals[(fn, alg)]))
                print(f"{fn} / {alg}: median final {med:.6g} over {config.runs} runs")
    summary = summarize(finals, config)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as f:
        for line in summary.csv_lines():
            f.write(line + "\n")
    return records, summary
