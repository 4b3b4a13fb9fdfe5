"""Per-move annotations, per-game metrics, t-intervals, paired tests,
the alpha sweep, and byte-stable report emission.

Four metrics per game, agent moves only: blunder rate (drop >= 100),
good-move rate (drop < 50), median centipawn drop, and exploration ratio
(mean of considered/legal per move).  Tables report the per-game mean
with a Student-t 95% interval, the game being the independence unit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .board import legal_moves
from .errors import HarnessError
from .gameplay import (
    GameRecord,
    agent_plays_white,
    game_seed,
    load_archive,
    play_game,
)
from .oracle import BLUNDER_THRESHOLD_CP, GOOD_MOVE_THRESHOLD_CP
from .selection import StrategyConfig, StrategyKind

METRIC_NAMES = ("blunder_rate", "good_move_rate", "median_cp_drop", "exploration_ratio")


@dataclass(frozen=True)
class MoveAnnotation:
    cp_drop: int
    is_blunder: bool
    is_good: bool
    considered_count: int
    legal_count: int

    def __post_init__(self):
        if self.is_blunder and self.is_good:
            raise HarnessError("a move cannot be both a blunder and good")
        if not 1 <= self.considered_count <= self.legal_count:
            raise HarnessError(
                f"considered_count {self.considered_count} outside "
                f"[1, {self.legal_count}]"
            )


@dataclass(frozen=True)
class GameMetrics:
    blunder_rate: float
    good_move_rate: float
    median_cp_drop: float
    exploration_ratio: float
    n_agent_moves: int

    def value(self, metric: str) -> float:
        return getattr(self, metric)


def annotate_game(record: GameRecord) -> list:
    """One annotation per agent ply; thresholds applied to the raw drop.

    Negative drops (the move improved the oracle's eval) stay negative and
    count as good.
    """
    annotations = []
    for index, ply in enumerate(record.plies):
        if not ply.by_agent:
            continue
        if ply.label is None:
            raise HarnessError(f"agent ply {index} has no blunder label")
        if ply.selection is None:
            raise HarnessError(f"agent ply {index} has no selection result")
        drop = ply.label.drop
        annotations.append(MoveAnnotation(
            cp_drop=drop,
            is_blunder=drop >= BLUNDER_THRESHOLD_CP,
            is_good=drop < GOOD_MOVE_THRESHOLD_CP,
            considered_count=ply.selection.considered_count,
            legal_count=len(legal_moves(ply.before)),
        ))
    return annotations


def game_metrics(annotations: Sequence[MoveAnnotation]) -> GameMetrics:
    if not annotations:
        raise HarnessError("no agent moves to score")
    n = len(annotations)
    drops = np.array([a.cp_drop for a in annotations], dtype=np.float64)
    ratios = np.array([a.considered_count / a.legal_count for a in annotations],
                      dtype=np.float64)
    return GameMetrics(
        blunder_rate=sum(a.is_blunder for a in annotations) / n,
        good_move_rate=sum(a.is_good for a in annotations) / n,
        median_cp_drop=float(np.median(drops)),
        exploration_ratio=float(ratios.mean()),
        n_agent_moves=n,
    )


def metrics_for_record(record: GameRecord) -> GameMetrics:
    return game_metrics(annotate_game(record))


# ---------------------------------------------------------------------------
# Aggregation and tests.

@dataclass(frozen=True)
class Interval:
    mean: float
    lo: float
    hi: float
    n: int

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2.0


def t_interval(values: Sequence[float], confidence: float = 0.95) -> Interval:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n < 2:
        raise HarnessError(f"interval needs >= 2 values, got {n}")
    mean = float(values.mean())
    s = float(values.std(ddof=1))
    half = float(stats.t.ppf(0.5 + confidence / 2.0, n - 1)) * s / math.sqrt(n)
    return Interval(mean=mean, lo=mean - half, hi=mean + half, n=n)


def aggregate(per_game: Sequence[GameMetrics]) -> dict:
    """Mean and 95% t-interval for each of the four metrics."""
    if len(per_game) < 2:
        raise HarnessError("aggregation needs >= 2 games")
    return {
        metric: t_interval([g.value(metric) for g in per_game])
        for metric in METRIC_NAMES
    }


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired Student t.  Degenerate variance follows declared
    conventions: identical samples give 1.0; constant nonzero differences
    give 0.0 (below any epsilon)."""
    if len(a) != len(b):
        raise HarnessError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise HarnessError("paired test needs >= 2 pairs")
    diffs = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    s = float(diffs.std(ddof=1))
    mean = float(diffs.mean())
    if s == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (s / math.sqrt(len(diffs)))
    return float(2.0 * stats.t.sf(abs(t), len(diffs) - 1))


# ---------------------------------------------------------------------------
# Evaluation driver.

def evaluate_strategy(policy, strategy: StrategyConfig, opponent, labeler,
                      n_games: int, base_seed: int = 0, max_plies: int = 200,
                      risk_provider=None, starts=None):
    """Play n_games with alternating colors and per-game derived seeds;
    returns (records, per-game metrics).

    starts, when given, is a position list cycled by game index so a fixed
    suite of test positions can stand in for the opening.
    """
    if n_games < 1:
        raise HarnessError(f"n_games must be >= 1, got {n_games}")
    records = []
    per_game = []
    for i in range(n_games):
        record = play_game(
            policy, strategy, opponent, labeler, max_plies=max_plies,
            seed=game_seed(base_seed, i), agent_white=agent_plays_white(i),
            risk_provider=risk_provider,
            start=None if starts is None else starts[i % len(starts)],
        )
        records.append(record)
        per_game.append(metrics_for_record(record))
    return records, per_game


@dataclass(frozen=True)
class MetricsReport:
    """Per-method intervals plus the raw per-game table."""

    methods: dict  # name -> {metric -> Interval}
    per_game: dict  # name -> list[GameMetrics]
    fingerprint: str

    def __post_init__(self):
        if set(self.methods) != set(self.per_game):
            raise HarnessError("report methods and per-game tables disagree")


def build_report(per_method: dict, fingerprint: str = "") -> MetricsReport:
    """per_method: name -> list[GameMetrics], insertion order preserved."""
    if not per_method:
        raise HarnessError("no methods to report")
    return MetricsReport(
        methods={name: aggregate(games) for name, games in per_method.items()},
        per_game=dict(per_method),
        fingerprint=fingerprint,
    )


# ---------------------------------------------------------------------------
# Alpha sweep.

@dataclass(frozen=True)
class AlphaRow:
    alpha: float
    blunder: Interval
    drop: Interval


@dataclass(frozen=True)
class AlphaSweepResult:
    rows: tuple
    spearman_blunder: Optional[float]
    spearman_drop: Optional[float]


def alpha_sweep(alphas: Sequence[float], policy, opponent, labeler,
                risk_provider, n_games: int, base_seed: int = 0,
                max_plies: int = 200, starts=None) -> AlphaSweepResult:
    """Run the utility strategy at each alpha over identical game seeds;
    correlations are Spearman rank over the per-alpha means (absent for a
    single alpha or a constant series)."""
    if not alphas:
        raise HarnessError("alpha sweep needs at least one alpha")
    if list(alphas) != sorted(alphas):
        raise HarnessError("alphas must be sorted ascending")
    if any(not 0 <= a <= 1 for a in alphas):
        raise HarnessError("alphas must lie in [0, 1]")
    rows = []
    for alpha in alphas:
        strategy = StrategyConfig(kind=StrategyKind.OGSS_UTILITY, alpha=alpha)
        _, per_game = evaluate_strategy(
            policy, strategy, opponent, labeler, n_games,
            base_seed=base_seed, max_plies=max_plies, risk_provider=risk_provider,
            starts=starts,
        )
        rows.append(AlphaRow(
            alpha=alpha,
            blunder=t_interval([g.blunder_rate for g in per_game]),
            drop=t_interval([g.median_cp_drop for g in per_game]),
        ))

    def correlate(series):
        if len(rows) < 2 or len(set(series)) < 2:
            return None
        rho = float(stats.spearmanr(list(alphas), series).statistic)
        return None if math.isnan(rho) else rho

    return AlphaSweepResult(
        rows=tuple(rows),
        spearman_blunder=correlate([r.blunder.mean for r in rows]),
        spearman_drop=correlate([r.drop.mean for r in rows]),
    )


# ---------------------------------------------------------------------------
# Emission.  All numbers render via a fixed format so identical inputs
# produce byte-identical files.

def _fmt(x: float) -> str:
    return f"{x:.10g}"


def emit_report(report: MetricsReport, out_dir,
                formats: Sequence[str] = ("csv", "json", "plotdata")) -> list:
    if not report.methods:
        raise HarnessError("refusing to emit an empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / "report.csv"
        lines = ["method,metric,mean,ci_lo,ci_hi,n"]
        for name, cis in report.methods.items():
            for metric in METRIC_NAMES:
                ci = cis[metric]
                lines.append(
                    f"{name},{metric},{_fmt(ci.mean)},{_fmt(ci.lo)},{_fmt(ci.hi)},{ci.n}"
                )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    if "json" in formats:
        path = out_dir / "report.json"
        payload = {
            "fingerprint": report.fingerprint,
            "methods": {
                name: {
                    metric: {"mean": cis[metric].mean, "ci_lo": cis[metric].lo,
                             "ci_hi": cis[metric].hi, "n": cis[metric].n}
                    for metric in METRIC_NAMES
                }
                for name, cis in report.methods.items()
            },
            "per_game": {
                name: [
                    {metric: g.value(metric) for metric in METRIC_NAMES}
                    | {"n_agent_moves": g.n_agent_moves}
                    for g in games
                ]
                for name, games in report.per_game.items()
            },
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        written.append(path)
    if "plotdata" in formats:
        path = out_dir / "fig2-scatter.dat"
        lines = ["# method exploration_ratio blunder_rate"]
        for name, cis in report.methods.items():
            lines.append(
                f"{name} {_fmt(cis['exploration_ratio'].mean)} "
                f"{_fmt(cis['blunder_rate'].mean)}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def emit_sweep(sweep: AlphaSweepResult, out_dir,
               formats: Sequence[str] = ("csv", "json", "plotdata")) -> list:
    if not sweep.rows:
        raise HarnessError("refusing to emit an empty sweep")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / "sweep.csv"
        lines = ["alpha,metric,mean,ci_lo,ci_hi,n"]
        for row in sweep.rows:
            lines.append(f"{_fmt(row.alpha)},blunder_rate,{_fmt(row.blunder.mean)},"
                         f"{_fmt(row.blunder.lo)},{_fmt(row.blunder.hi)},{row.blunder.n}")
            lines.append(f"{_fmt(row.alpha)},median_cp_drop,{_fmt(row.drop.mean)},"
                         f"{_fmt(row.drop.lo)},{_fmt(row.drop.hi)},{row.drop.n}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    if "json" in formats:
        path = out_dir / "sweep.json"
        payload = {
            "rows": [
                {"alpha": row.alpha,
                 "blunder_rate": {"mean": row.blunder.mean, "ci_lo": row.blunder.lo,
                                  "ci_hi": row.blunder.hi, "n": row.blunder.n},
                 "median_cp_drop": {"mean": row.drop.mean, "ci_lo": row.drop.lo,
                                    "ci_hi": row.drop.hi, "n": row.drop.n}}
                for row in sweep.rows
            ],
            "spearman_blunder": sweep.spearman_blunder,
            "spearman_drop": sweep.spearman_drop,
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        written.append(path)
    if "plotdata" in formats:
        path = out_dir / "fig3-sweep.dat"
        lines = ["# alpha blunder_rate median_cp_drop"]
        for row in sweep.rows:
            lines.append(f"{_fmt(row.alpha)} {_fmt(row.blunder.mean)} {_fmt(row.drop.mean)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def recompute_from_archive(path) -> list:
    """Per-game metrics rebuilt from the serialized archive by replay."""
    return [metrics_for_record(record) for record in load_archive(path)]
