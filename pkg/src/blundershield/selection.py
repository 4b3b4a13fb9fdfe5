"""Move-selection strategies over a shared confidence / risk interface.

Nine selectors cover the three shielded strategies (elimination, utility,
top-K shield) and the six baseline families (random, greedy, top-K
sampling, temperature sampling, surprisal filtering, risk pruning).
The two SafeDAgger evaluation methods are not separate selectors: they
run greedy / top-K over a policy trained with oracle-flagged aggregation,
which the preset registry records as a policy role.

Risk is queried lazily where the strategy allows it: elimination stops at
the first acceptable move and the top-K shield scores only its K
candidates.  Every selector breaks ties deterministically, preferring
higher confidence first and the canonical move ordering second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .board import Move
from .errors import ConfigError, SelectionError
from .models import ConfidenceMap

RiskFn = Callable[[Move], float]


class StrategyKind(str, Enum):
    RANDOM = "random"
    GREEDY = "greedy"
    TOP_K = "top-k"
    TEMPERATURE = "temperature"
    ENTROPY_FILTER = "entropy-filter"
    ACTION_PRUNING = "action-pruning"
    OGSS_ELIMINATION = "ogss-elimination"
    OGSS_UTILITY = "ogss-utility"
    OGSS_TOP_K_SHIELD = "ogss-top-k-shield"


# Parameter each kind requires; every other tunable must stay unset.
_REQUIRED = {
    StrategyKind.RANDOM: (),
    StrategyKind.GREEDY: (),
    StrategyKind.TOP_K: ("k",),
    StrategyKind.TEMPERATURE: ("tau",),
    StrategyKind.ENTROPY_FILTER: ("surprisal_bits",),
    StrategyKind.ACTION_PRUNING: ("risk_cutoff",),
    StrategyKind.OGSS_ELIMINATION: ("delta",),
    StrategyKind.OGSS_UTILITY: ("alpha",),
    StrategyKind.OGSS_TOP_K_SHIELD: ("k",),
}

# Kinds that query the risk model at all.
RISK_KINDS = frozenset({
    StrategyKind.ACTION_PRUNING,
    StrategyKind.OGSS_ELIMINATION,
    StrategyKind.OGSS_UTILITY,
    StrategyKind.OGSS_TOP_K_SHIELD,
})

DEFAULTS = {
    "k": 3,
    "tau": 1.0,
    "surprisal_bits": 2.0,
    "risk_cutoff": 0.5,
    "delta": 0.3,
    "alpha": 0.6,
}


@dataclass(frozen=True)
class StrategyConfig:
    kind: StrategyKind
    k: Optional[int] = None
    tau: Optional[float] = None
    surprisal_bits: Optional[float] = None
    risk_cutoff: Optional[float] = None
    delta: Optional[float] = None
    alpha: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        kind = StrategyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        required = _REQUIRED[kind]
        for name in ("k", "tau", "surprisal_bits", "risk_cutoff", "delta", "alpha"):
            value = getattr(self, name)
            if name in required and value is None:
                raise ConfigError(f"{kind.value} requires {name}")
            if name not in required and value is not None:
                raise ConfigError(f"{name} does not apply to {kind.value}")
        if self.k is not None and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.surprisal_bits is not None and self.surprisal_bits < 0:
            raise ConfigError(f"surprisal_bits must be >= 0, got {self.surprisal_bits}")
        if self.risk_cutoff is not None and not 0 < self.risk_cutoff < 1:
            raise ConfigError(f"risk_cutoff must be in (0, 1), got {self.risk_cutoff}")
        if self.delta is not None and not 0 <= self.delta <= 1:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")

    @classmethod
    def make(cls, kind, **overrides) -> "StrategyConfig":
        """Build a config, filling each required tunable from DEFAULTS."""
        kind = StrategyKind(kind)
        params = {name: DEFAULTS[name] for name in _REQUIRED[kind]}
        params.update(overrides)
        return cls(kind=kind, **params)

    def uses_risk(self) -> bool:
        return self.kind in RISK_KINDS

    def label(self) -> str:
        """Human-readable tag, e.g. "top-k(k=3)"."""
        parts = [f"{n}={getattr(self, n)}" for n in _REQUIRED[self.kind]]
        return self.kind.value + (f"({', '.join(parts)})" if parts else "")


@dataclass(frozen=True)
class MoveDiagnostics:
    move: Move
    confidence: float
    risk: Optional[float] = None
    utility: Optional[float] = None
    considered: bool = False


@dataclass(frozen=True)
class SelectionResult:
    move: Move
    considered_count: int
    fallback_used: bool
    kind: StrategyKind
    diagnostics: tuple = ()


def _ranked(conf: ConfidenceMap):
    """Moves by descending confidence, canonical order within ties."""
    return sorted(conf.items(), key=lambda kv: (-kv[1], kv[0]))


def _weighted_pick(moves, weights, rng) -> Move:
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        return moves[0]
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
    return moves[min(idx, len(moves) - 1)]


def _diag_table(conf, risks=None, utilities=None, considered=()):
    considered = set(considered)
    out = []
    for m in sorted(conf.moves()):
        out.append(MoveDiagnostics(
            move=m,
            confidence=conf[m],
            risk=None if risks is None else risks.get(m),
            utility=None if utilities is None else utilities.get(m),
            considered=m in considered,
        ))
    return tuple(out)


def _require_conf(conf: ConfidenceMap):
    if len(conf) == 0:
        raise SelectionError("no moves to select from")


def select_random(conf: ConfidenceMap, rng) -> SelectionResult:
    _require_conf(conf)
    moves = sorted(conf.moves())
    move = moves[int(rng.integers(len(moves)))]
    return SelectionResult(move, len(moves), False, StrategyKind.RANDOM,
                           _diag_table(conf, considered=moves))


def select_greedy(conf: ConfidenceMap) -> SelectionResult:
    _require_conf(conf)
    move = _ranked(conf)[0][0]
    return SelectionResult(move, 1, False, StrategyKind.GREEDY,
                           _diag_table(conf, considered=[move]))


def select_top_k(conf: ConfidenceMap, k: int, rng) -> SelectionResult:
    _require_conf(conf)
    prefix = _ranked(conf)[:min(k, len(conf))]
    moves = [m for m, _ in prefix]
    move = _weighted_pick(moves, [c for _, c in prefix], rng)
    return SelectionResult(move, len(prefix), False, StrategyKind.TOP_K,
                           _diag_table(conf, considered=moves))


def select_temperature(conf: ConfidenceMap, tau: float, rng) -> SelectionResult:
    _require_conf(conf)
    ranked = _ranked(conf)
    moves = [m for m, _ in ranked]
    weights = [c ** (1.0 / tau) for _, c in ranked]
    # Underflow at tiny tau degenerates to the argmax, the tau -> 0 limit.
    move = _weighted_pick(moves, weights, rng)
    return SelectionResult(move, len(moves), False, StrategyKind.TEMPERATURE,
                           _diag_table(conf, considered=moves))


def select_entropy_filter(conf: ConfidenceMap, surprisal_bits: float,
                          rng) -> SelectionResult:
    _require_conf(conf)
    kept = [m for m in sorted(conf.moves())
            if conf[m] > 0 and -math.log2(conf[m]) <= surprisal_bits]
    if not kept:
        move = _ranked(conf)[0][0]
        return SelectionResult(move, 1, True, StrategyKind.ENTROPY_FILTER,
                               _diag_table(conf, considered=[move]))
    move = kept[int(rng.integers(len(kept)))]
    return SelectionResult(move, len(kept), False, StrategyKind.ENTROPY_FILTER,
                           _diag_table(conf, considered=kept))


def select_action_pruning(conf: ConfidenceMap, risk_fn: RiskFn, cutoff: float,
                          rng) -> SelectionResult:
    _require_conf(conf)
    moves = sorted(conf.moves())
    risks = {m: float(risk_fn(m)) for m in moves}
    kept = [m for m in moves if risks[m] <= cutoff]
    if not kept:
        move = moves[int(rng.integers(len(moves)))]
        return SelectionResult(move, len(moves), True, StrategyKind.ACTION_PRUNING,
                               _diag_table(conf, risks=risks, considered=moves))
    move = kept[int(rng.integers(len(kept)))]
    return SelectionResult(move, len(kept), False, StrategyKind.ACTION_PRUNING,
                           _diag_table(conf, risks=risks, considered=kept))


def select_ogss_elimination(conf: ConfidenceMap, risk_fn: RiskFn,
                            delta: float) -> SelectionResult:
    """Highest-confidence move whose risk clears delta; risk is queried in
    rank order and scanning stops at the first acceptable move."""
    _require_conf(conf)
    ranked = _ranked(conf)
    risks = {}
    for i, (m, _) in enumerate(ranked):
        risks[m] = float(risk_fn(m))
        if risks[m] <= delta:
            return SelectionResult(
                m, i + 1, False, StrategyKind.OGSS_ELIMINATION,
                _diag_table(conf, risks=risks, considered=[mm for mm, _ in ranked[:i + 1]]),
            )
    return SelectionResult(
        ranked[0][0], len(ranked), True, StrategyKind.OGSS_ELIMINATION,
        _diag_table(conf, risks=risks, considered=[m for m, _ in ranked]),
    )


def select_ogss_utility(conf: ConfidenceMap, risk_fn: RiskFn,
                        alpha: float) -> SelectionResult:
    """Argmax of alpha * Conf + (1 - alpha) * (1 - Risk) over all moves."""
    _require_conf(conf)
    moves = sorted(conf.moves())
    risks = {m: float(risk_fn(m)) for m in moves}
    utilities = {m: alpha * conf[m] + (1.0 - alpha) * (1.0 - risks[m]) for m in moves}
    best = moves[0]
    for m in moves[1:]:
        if utilities[m] > utilities[best]:
            best = m
    return SelectionResult(best, 1, False, StrategyKind.OGSS_UTILITY,
                           _diag_table(conf, risks=risks, utilities=utilities,
                                       considered=[best]))


def select_ogss_top_k_shield(conf: ConfidenceMap, risk_fn: RiskFn,
                             k: int) -> SelectionResult:
    """Lowest-risk move among the K most confident; only those K are scored."""
    _require_conf(conf)
    prefix = _ranked(conf)[:min(k, len(conf))]
    risks = {m: float(risk_fn(m)) for m, _ in prefix}
    best = prefix[0][0]
    for m, _ in prefix[1:]:
        if risks[m] < risks[best]:
            best = m
    return SelectionResult(best, len(prefix), False, StrategyKind.OGSS_TOP_K_SHIELD,
                           _diag_table(conf, risks=risks,
                                       considered=[m for m, _ in prefix]))


def select_move(cfg: StrategyConfig, conf: ConfidenceMap,
                risk_fn: Optional[RiskFn] = None,
                rng: Optional[np.random.Generator] = None) -> SelectionResult:
    """Dispatch one selection.  ``risk_fn`` is required exactly for the
    risk-querying kinds; ``rng`` only for the stochastic ones."""
    if cfg.uses_risk() and risk_fn is None:
        raise ConfigError(f"{cfg.kind.value} requires a risk model")
    kind = cfg.kind
    if kind in (StrategyKind.RANDOM, StrategyKind.TOP_K, StrategyKind.TEMPERATURE,
                StrategyKind.ENTROPY_FILTER, StrategyKind.ACTION_PRUNING):
        if rng is None:
            if cfg.seed is None:
                raise ConfigError(f"{kind.value} is stochastic: pass rng or set seed")
            rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if kind is StrategyKind.RANDOM:
        return select_random(conf, rng)
    if kind is StrategyKind.GREEDY:
        return select_greedy(conf)
    if kind is StrategyKind.TOP_K:
        return select_top_k(conf, cfg.k, rng)
    if kind is StrategyKind.TEMPERATURE:
        return select_temperature(conf, cfg.tau, rng)
    if kind is StrategyKind.ENTROPY_FILTER:
        return select_entropy_filter(conf, cfg.surprisal_bits, rng)
    if kind is StrategyKind.ACTION_PRUNING:
        return select_action_pruning(conf, risk_fn, cfg.risk_cutoff, rng)
    if kind is StrategyKind.OGSS_ELIMINATION:
        return select_ogss_elimination(conf, risk_fn, cfg.delta)
    if kind is StrategyKind.OGSS_UTILITY:
        return select_ogss_utility(conf, risk_fn, cfg.alpha)
    return select_ogss_top_k_shield(conf, risk_fn, cfg.k)


@dataclass(frozen=True)
class MethodPreset:
    """One evaluation row: a strategy plus which policy it runs on."""

    name: str
    config: StrategyConfig
    safedagger_policy: bool = False


def method_presets() -> tuple:
    """The sixteen standard evaluation methods."""
    mk = StrategyConfig.make
    K = StrategyKind
    return (
        MethodPreset("random", mk(K.RANDOM)),
        MethodPreset("greedy", mk(K.GREEDY)),
        MethodPreset("top-3", mk(K.TOP_K, k=3)),
        MethodPreset("top-5", mk(K.TOP_K, k=5)),
        MethodPreset("temperature-0.5", mk(K.TEMPERATURE, tau=0.5)),
        MethodPreset("temperature-1.5", mk(K.TEMPERATURE, tau=1.5)),
        MethodPreset("entropy-2.0", mk(K.ENTROPY_FILTER, surprisal_bits=2.0)),
        MethodPreset("entropy-4.0", mk(K.ENTROPY_FILTER, surprisal_bits=4.0)),
        MethodPreset("action-pruning", mk(K.ACTION_PRUNING, risk_cutoff=0.5)),
        MethodPreset("safedagger-greedy", mk(K.GREEDY), safedagger_policy=True),
        MethodPreset("safedagger-top-3", mk(K.TOP_K, k=3), safedagger_policy=True),
        MethodPreset("safedagger-top-5", mk(K.TOP_K, k=5), safedagger_policy=True),
        MethodPreset("ogss-elimination", mk(K.OGSS_ELIMINATION, delta=0.3)),
        MethodPreset("ogss-utility", mk(K.OGSS_UTILITY, alpha=0.6)),
        MethodPreset("ogss-shield-top-3", mk(K.OGSS_TOP_K_SHIELD, k=3)),
        MethodPreset("ogss-shield-top-5", mk(K.OGSS_TOP_K_SHIELD, k=5)),
    )


def preset_by_name(name: str) -> MethodPreset:
    for preset in method_presets():
        if preset.name == name:
            return preset
    known = ", ".join(p.name for p in method_presets())
    raise ConfigError(f"unknown method {name!r}; known: {known}")
