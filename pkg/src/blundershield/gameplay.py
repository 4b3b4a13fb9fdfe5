"""Exploration games, blunder-dataset construction, and the retraining round.

The agent picks moves through a selection strategy; the opponent replies
with the oracle's best move; a labeling oracle scores every agent ply.
Rounds aggregate oracle corrections for flagged blunders into the policy
dataset and pair each blunder with its correction for the risk model,
mirroring query-efficient imitation with a safety filter.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .board import BoardState, Move, apply_move, is_in_check, legal_moves
from .dataset import BlunderDataset, BlunderExample, PolicyDataset, PolicyPair
from .encoding import encode_board, encode_metadata, encode_move
from .errors import ConfigError, DatasetError, HarnessError, OracleError
from .models import (
    BlunderModel,
    PolicyModel,
    TrainingConfig,
    blunder_forward,
    move_confidences,
    policy_forward,
    train_policy,
)
from .oracle import BlunderLabel, CentipawnScore, OracleLabeler
from .pgn import move_to_san
from .selection import (
    MoveDiagnostics,
    SelectionResult,
    StrategyConfig,
    StrategyKind,
    select_move,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_PLIES = 200

RiskProvider = Callable[[BoardState], Callable[[Move], float]]


class GameOutcome(Enum):
    AGENT_WIN = "agent-win"
    AGENT_LOSS = "agent-loss"
    DRAW = "draw"
    ADJUDICATED = "adjudicated"


@dataclass(frozen=True)
class PlyRecord:
    before: BoardState
    move: Move
    by_agent: bool
    selection: Optional[SelectionResult] = None
    label: Optional[BlunderLabel] = None


@dataclass(frozen=True)
class GameRecord:
    agent_white: bool
    start_fen: str
    plies: tuple
    outcome: GameOutcome
    termination: str
    seed: int
    adjudication: Optional[int] = None  # sign of final eval, agent view
    error: Optional[str] = None

    def agent_plies(self):
        return [p for p in self.plies if p.by_agent]


def model_risk(model: BlunderModel) -> RiskProvider:
    """Risk from the trained model; board and metadata tensors are encoded
    once per position and per-move scores memoized."""

    def provider(state: BoardState):
        board = encode_board(state)
        meta = encode_metadata(state)
        memo = {}

        def risk(move: Move) -> float:
            if move not in memo:
                memo[move] = blunder_forward(model, board, meta, encode_move(move))
            return memo[move]

        return risk

    return provider


def oracle_truth_risk(labeler: OracleLabeler) -> RiskProvider:
    """Ground-truth risk: 1.0 when the labeling oracle flags the move as a
    blunder, else 0.0.  Memoized per move."""

    def provider(state: BoardState):
        memo = {}

        def risk(move: Move) -> float:
            if move not in memo:
                memo[move] = 1.0 if labeler.label(state, move).is_blunder else 0.0
            return memo[move]

        return risk

    return provider


def agent_plays_white(game_index: int) -> bool:
    """Colors alternate; the agent takes White in even-indexed games."""
    return game_index % 2 == 0


def game_seed(base_seed: int, game_index: int) -> int:
    """Stable per-game seed derived from the run seed and game index."""
    seq = np.random.SeedSequence([base_seed, game_index])
    return int(seq.generate_state(1, np.uint64)[0])


def play_game(policy: PolicyModel, strategy: StrategyConfig,
              opponent: OracleLabeler, labeler: OracleLabeler,
              max_plies: int = DEFAULT_MAX_PLIES, seed: int = 0,
              agent_white: bool = True,
              risk_provider: Optional[RiskProvider] = None,
              start: Optional[BoardState] = None) -> GameRecord:
    """Play one game; every agent ply carries its selection and label.

    Ends on checkmate, stalemate, the 50-move rule, threefold repetition,
    or max_plies (adjudicated by the sign of the labeler's final eval from
    the agent's side).  An oracle failure mid-game returns the partial
    record with the error recorded rather than raising.
    """
    if strategy.uses_risk() and risk_provider is None:
        raise ConfigError(f"{strategy.kind.value} requires a risk provider")
    if max_plies < 1:
        raise ConfigError(f"max_plies must be >= 1, got {max_plies}")
    state = BoardState.startpos() if start is None else start
    start_fen = state.fen()
    rng = np.random.Generator(np.random.PCG64(seed))
    plies = []
    seen = Counter([state.position_key()])

    def finish(outcome, termination, adjudication=None, error=None):
        return GameRecord(
            agent_white=agent_white, start_fen=start_fen, plies=tuple(plies),
            outcome=outcome, termination=termination, seed=seed,
            adjudication=adjudication, error=error,
        )

    while True:
        legal = legal_moves(state)
        if not legal:
            if is_in_check(state):
                mated_is_agent = state.white_to_move == agent_white
                outcome = GameOutcome.AGENT_LOSS if mated_is_agent else GameOutcome.AGENT_WIN
                return finish(outcome, "checkmate")
            return finish(GameOutcome.DRAW, "stalemate")
        if state.halfmove_clock >= 100:
            return finish(GameOutcome.DRAW, "fifty-move")
        if seen[state.position_key()] >= 3:
            return finish(GameOutcome.DRAW, "threefold")
        if len(plies) >= max_plies:
            try:
                score = labeler.evaluate(state)
            except OracleError as exc:
                return finish(GameOutcome.ADJUDICATED, "error", error=str(exc))
            agent_view = score.value if state.white_to_move == agent_white else -score.value
            sign = (agent_view > 0) - (agent_view < 0)
            return finish(GameOutcome.ADJUDICATED, "max-plies", adjudication=sign)

        agent_turn = state.white_to_move == agent_white
        try:
            if agent_turn:
                heads = policy_forward(policy, encode_board(state))
                conf = move_confidences(heads, legal)
                risk_fn = risk_provider(state) if strategy.uses_risk() else None
                result = select_move(strategy, conf, risk_fn, rng)
                label = labeler.label(state, result.move)
                plies.append(PlyRecord(state, result.move, True, result, label))
                state = apply_move(state, result.move)
            else:
                move = opponent.best_move(state)
                plies.append(PlyRecord(state, move, False))
                state = apply_move(state, move)
        except OracleError as exc:
            return finish(GameOutcome.ADJUDICATED, "error", error=str(exc))
        seen[state.position_key()] += 1


def play_many(policy: PolicyModel, strategy: StrategyConfig,
              oracle_factory: Callable[[], OracleLabeler], n_games: int,
              base_seed: int = 0, max_plies: int = DEFAULT_MAX_PLIES,
              risk_provider_factory: Optional[Callable[[OracleLabeler], RiskProvider]] = None,
              jobs: int = 1, close_after: bool = True) -> list:
    """Play n_games, each owning the oracle its factory builds; the same
    labeler serves as opponent.  Per-game seeds derive from (base_seed,
    index), so results are independent of scheduling; jobs > 1 runs games
    on a thread pool.  close_after closes factory-built oracles that have
    a close method (pass False when the factory returns a shared one)."""
    if n_games < 1:
        raise HarnessError(f"n_games must be >= 1, got {n_games}")

    def run_one(i: int) -> GameRecord:
        labeler = oracle_factory()
        try:
            provider = (risk_provider_factory(labeler)
                        if risk_provider_factory is not None else None)
            return play_game(
                policy, strategy, labeler, labeler, max_plies=max_plies,
                seed=game_seed(base_seed, i), agent_white=agent_plays_white(i),
                risk_provider=provider,
            )
        finally:
            if close_after:
                close = getattr(labeler.oracle, "close", None)
                if close is not None:
                    close()

    if jobs <= 1:
        return [run_one(i) for i in range(n_games)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_one, range(n_games)))


def build_blunder_dataset(records: Sequence[GameRecord]) -> BlunderDataset:
    """Each flagged agent blunder yields (state, played, 1) and
    (state, correction, 0).  A correction equal to the played move is
    contradictory and drops the pair with a warning; exact duplicates
    (position, move, label) are kept once."""
    examples = []
    seen = set()

    def add(state, move, label_value, game_index, ply):
        key = (state.position_key(), move, label_value)
        if key in seen:
            return
        seen.add(key)
        examples.append(BlunderExample(
            state=state, move=move, label=label_value,
            game_index=game_index, ply=ply,
        ))

    for game_index, record in enumerate(records):
        for ply_index, ply in enumerate(record.plies):
            if not ply.by_agent or ply.label is None or not ply.label.is_blunder:
                continue
            if ply.label.correction == ply.move:
                log.warning(
                    "game %d ply %d: correction equals the played move %s, "
                    "dropping the contradictory pair",
                    game_index, ply_index, ply.move.uci(),
                )
                continue
            add(ply.before, ply.move, 1, game_index, ply_index)
            add(ply.before, ply.label.correction, 0, game_index, ply_index)
    return BlunderDataset(examples=examples)


def candidate_blunder_dataset(records: Sequence[GameRecord], policy: PolicyModel,
                              labeler: OracleLabeler, k: int = 5) -> BlunderDataset:
    """Label the policy's top-k candidate moves at every agent position.

    Played-move labels alone never contrast two moves of the same position,
    so a risk model trained on them learns which positions are dangerous
    but not which move to prefer.  Labeling the k most confident candidates
    at each visited position supplies that contrast.  Duplicates by
    (position, move, label) are kept once.
    """
    if k < 1:
        raise DatasetError(f"k must be >= 1, got {k}")
    examples = []
    seen = set()
    for game_index, record in enumerate(records):
        for ply_index, ply in enumerate(record.plies):
            if not ply.by_agent:
                continue
            state = ply.before
            position = state.position_key()
            legal = legal_moves(state)
            conf = move_confidences(policy_forward(policy, encode_board(state)), legal)
            for move in sorted(legal, key=lambda m: (-conf.probs[m], m))[:k]:
                label_value = 1 if labeler.label(state, move).is_blunder else 0
                key = (position, move, label_value)
                if key in seen:
                    continue
                seen.add(key)
                examples.append(BlunderExample(
                    state=state, move=move, label=label_value,
                    game_index=game_index, ply=ply_index,
                ))
    return BlunderDataset(examples=examples)


def collect_corrections(records: Sequence[GameRecord], source: str) -> list:
    """Imitation pairs (state, oracle correction), one per flagged blunder."""
    pairs = []
    for game_index, record in enumerate(records):
        for ply in record.plies:
            if ply.by_agent and ply.label is not None and ply.label.is_blunder:
                pairs.append(PolicyPair(
                    state=ply.before, move=ply.label.correction,
                    source=source, game_index=game_index,
                ))
    return pairs


@dataclass
class RoundResult:
    policy: PolicyModel
    blunder_dataset: BlunderDataset
    aggregate: PolicyDataset
    records: list
    n_flagged: int
    loss_curve: list = field(default_factory=list)


def safedagger_round(policy: PolicyModel, aggregate: PolicyDataset,
                     n_games: int, strategy: StrategyConfig,
                     opponent: OracleLabeler, labeler: OracleLabeler,
                     train_cfg: TrainingConfig, base_seed: int = 0,
                     round_index: int = 0,
                     risk_provider: Optional[RiskProvider] = None,
                     max_plies: int = DEFAULT_MAX_PLIES,
                     oracle_factory: Optional[Callable[[], OracleLabeler]] = None,
                     risk_provider_factory=None, jobs: int = 1) -> RoundResult:
    """One exploration round: play, collect corrections for every flagged
    blunder, extend the aggregate by exactly that many pairs, and retrain
    the policy on it warm-started from the incoming weights.

    With an oracle_factory the games run through play_many (and may be
    parallel); otherwise they play sequentially on the given oracles.
    """
    if n_games < 1:
        raise HarnessError(f"n_games must be >= 1, got {n_games}")
    if oracle_factory is not None:
        records = play_many(
            policy, strategy, oracle_factory, n_games, base_seed=base_seed,
            max_plies=max_plies, risk_provider_factory=risk_provider_factory,
            jobs=jobs,
        )
    else:
        records = []
        for i in range(n_games):
            records.append(play_game(
                policy, strategy, opponent, labeler,
                max_plies=max_plies, seed=game_seed(base_seed, i),
                agent_white=agent_plays_white(i), risk_provider=risk_provider,
            ))
    corrections = collect_corrections(records, source=f"round{round_index}")
    new_aggregate = PolicyDataset(pairs=list(aggregate.pairs) + corrections)
    blunder_ds = build_blunder_dataset(records)
    new_policy, curve = train_policy(new_aggregate, train_cfg, model=policy)
    return RoundResult(
        policy=new_policy, blunder_dataset=blunder_ds,
        aggregate=new_aggregate, records=records,
        n_flagged=len(corrections), loss_curve=curve,
    )


# ---------------------------------------------------------------------------
# Archive: one JSON object per game, replayable from the start FEN.

def _selection_to_json(sel: SelectionResult) -> dict:
    return {
        "kind": sel.kind.value,
        "considered": sel.considered_count,
        "fallback": sel.fallback_used,
        "diagnostics": [
            [d.move.uci(), round(d.confidence, 9),
             None if d.risk is None else round(d.risk, 9),
             None if d.utility is None else round(d.utility, 9),
             d.considered]
            for d in sel.diagnostics
        ],
    }


def _label_to_json(label: BlunderLabel) -> dict:
    return {
        "before": label.eval_before.value, "after": label.eval_after.value,
        "drop": label.drop, "blunder": label.is_blunder,
        "correction": label.correction.uci(),
    }


def record_to_json(record: GameRecord) -> dict:
    return {
        "agent_white": record.agent_white,
        "start_fen": record.start_fen,
        "outcome": record.outcome.value,
        "termination": record.termination,
        "seed": record.seed,
        "adjudication": record.adjudication,
        "error": record.error,
        "plies": [
            {
                "move": p.move.uci(),
                "agent": p.by_agent,
                "selection": None if p.selection is None else _selection_to_json(p.selection),
                "label": None if p.label is None else _label_to_json(p.label),
            }
            for p in record.plies
        ],
    }


def _selection_from_json(data: dict) -> SelectionResult:
    diags = tuple(
        MoveDiagnostics(move=Move.from_uci(u), confidence=c, risk=r,
                        utility=util, considered=cons)
        for u, c, r, util, cons in data["diagnostics"]
    )
    chosen = data.get("move")
    return SelectionResult(
        move=Move.from_uci(chosen) if chosen else diags[0].move,
        considered_count=data["considered"],
        fallback_used=data["fallback"],
        kind=StrategyKind(data["kind"]),
        diagnostics=diags,
    )


def record_from_json(data: dict) -> GameRecord:
    """Rebuild a record by replaying its moves; an illegal stored move
    surfaces as an error rather than a corrupt record."""
    state = BoardState.from_fen(data["start_fen"])
    plies = []
    for ply in data["plies"]:
        move = Move.from_uci(ply["move"])
        selection = None
        if ply["selection"] is not None:
            sel = dict(ply["selection"])
            sel["move"] = ply["move"]
            selection = _selection_from_json(sel)
        label = None
        if ply["label"] is not None:
            ld = ply["label"]
            label = BlunderLabel(
                eval_before=CentipawnScore(ld["before"]),
                eval_after=CentipawnScore(ld["after"]),
                drop=ld["drop"], is_blunder=ld["blunder"],
                correction=Move.from_uci(ld["correction"]),
            )
        plies.append(PlyRecord(state, move, ply["agent"], selection, label))
        state = apply_move(state, move)
    return GameRecord(
        agent_white=data["agent_white"], start_fen=data["start_fen"],
        plies=tuple(plies), outcome=GameOutcome(data["outcome"]),
        termination=data["termination"], seed=data["seed"],
        adjudication=data["adjudication"], error=data["error"],
    )


def save_archive(records: Sequence[GameRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), sort_keys=True))
            fh.write("\n")


def load_archive(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise HarnessError(f"{path}:{line_no}: bad archive line: {exc}") from exc
    return records


_RESULT_BY_OUTCOME = {
    (GameOutcome.AGENT_WIN, True): "1-0",
    (GameOutcome.AGENT_WIN, False): "0-1",
    (GameOutcome.AGENT_LOSS, True): "0-1",
    (GameOutcome.AGENT_LOSS, False): "1-0",
}


def export_pgn(records: Sequence[GameRecord], path,
               opponent_name: str = "oracle") -> None:
    """Readable export; Result is '*' for adjudicated or errored games."""
    with open(path, "w", encoding="utf-8") as fh:
        for index, record in enumerate(records):
            if record.outcome == GameOutcome.DRAW:
                result = "1/2-1/2"
            else:
                result = _RESULT_BY_OUTCOME.get((record.outcome, record.agent_white), "*")
            white = "agent" if record.agent_white else opponent_name
            black = opponent_name if record.agent_white else "agent"
            fh.write(f'[Event "blundershield exploration"]\n')
            fh.write(f'[Site "?"]\n[Date "????.??.??"]\n[Round "{index + 1}"]\n')
            fh.write(f'[White "{white}"]\n[Black "{black}"]\n[Result "{result}"]\n')
            start = BoardState.from_fen(record.start_fen)
            if record.start_fen != BoardState.startpos().fen():
                fh.write(f'[SetUp "1"]\n[FEN "{record.start_fen}"]\n')
            fh.write("\n")
            state = start
            tokens = []
            for ply in record.plies:
                if state.white_to_move:
                    tokens.append(f"{state.fullmove_number}.")
                elif not tokens:
                    tokens.append(f"{state.fullmove_number}...")
                tokens.append(move_to_san(state, ply.move))
                state = apply_move(state, ply.move)
            tokens.append(result)
            line = ""
            for token in tokens:
                if line and len(line) + 1 + len(token) > 80:
                    fh.write(line + "\n")
                    line = token
                else:
                    line = f"{line} {token}".strip()
            if line:
                fh.write(line + "\n")
            fh.write("\n")
