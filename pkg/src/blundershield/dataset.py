"""Supervised datasets and their on-disk form.

Both dataset files are line-oriented TSV with a versioned header line, so
they append cleanly and diff cleanly:

    #blundershield-dataset policy v1
    <fen>\t<uci>\t<source>\t<game_index>

    #blundershield-dataset blunder v1
    <fen>\t<uci>\t<label>\t<game_index>\t<ply>
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .board import BoardState, Move, _apply_unchecked, legal_moves, parse_fen
from .errors import DatasetError, EmptyDatasetError
from .pgn import GameRecordRaw, PgnGameError

log = logging.getLogger(__name__)

POLICY_HEADER = "#blundershield-dataset policy v1"
BLUNDER_HEADER = "#blundershield-dataset blunder v1"


@dataclass(frozen=True)
class PolicyPair:
    state: BoardState
    move: Move
    source: str
    game_index: int


@dataclass
class PolicyDataset:
    pairs: list

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class BlunderExample:
    state: BoardState
    move: Move
    label: int  # 1 = the move was a blunder
    game_index: int
    ply: int


@dataclass
class BlunderDataset:
    examples: list

    def __len__(self) -> int:
        return len(self.examples)


def build_policy_dataset(
    games: Iterable[Union[GameRecordRaw, PgnGameError]],
    limit: Optional[int] = None,
    winner_only: bool = True,
) -> PolicyDataset:
    """Collect (state, move) pairs from games that end in checkmate.

    With winner_only, only the mating side's moves are kept.  `limit` caps
    the number of qualifying games consumed.  Raises EmptyDatasetError if
    no game qualifies.
    """
    pairs = []
    used = 0
    skipped_errors = 0
    for game in games:
        if isinstance(game, PgnGameError):
            skipped_errors += 1
            continue
        if not game.ends_in_checkmate:
            continue
        if limit is not None and used >= limit:
            break
        used += 1
        state = game.start_state()
        # Replay to find the mated side; the winner made the last move.
        side = state.white_to_move
        winner_white = side if len(game.moves) % 2 == 1 else not side
        for mv in game.moves:
            if not winner_only or state.white_to_move == winner_white:
                pairs.append(PolicyPair(state, mv, game.source, game.index))
            state = _apply_unchecked(state, mv)
    if skipped_errors:
        log.warning("build_policy_dataset: skipped %d unparseable games", skipped_errors)
    if used == 0:
        raise EmptyDatasetError("no games ending in checkmate in the input")
    return PolicyDataset(pairs)


def split_dataset(ds: PolicyDataset, fraction: float, seed: int):
    """Deterministic shuffled split; |train| = round(fraction * N)."""
    if not 0.0 <= fraction <= 1.0:
        raise DatasetError(f"fraction must be in [0, 1], got {fraction}")
    n = len(ds.pairs)
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    n_train = round(fraction * n)
    train = PolicyDataset([ds.pairs[i] for i in order[:n_train]])
    val = PolicyDataset([ds.pairs[i] for i in order[n_train:]])
    if n and not val.pairs:
        log.warning("split_dataset: validation split is empty (N=%d, fraction=%s)", n, fraction)
    return train, val


# ---------------------------------------------------------------------------
# Serialization.

def save_policy_dataset(ds: PolicyDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(POLICY_HEADER + "\n")
        for p in ds.pairs:
            fh.write(f"{p.state.fen()}\t{p.move.uci()}\t{p.source}\t{p.game_index}\n")


def load_policy_dataset(path) -> PolicyDataset:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != POLICY_HEADER:
            raise DatasetError(f"{path}: bad or missing header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            fen, uci, source, game_index = parts
            state, move = _checked_pair(fen, uci, path, lineno)
            pairs.append(PolicyPair(state, move, source, int(game_index)))
    return PolicyDataset(pairs)


def save_blunder_dataset(ds: BlunderDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BLUNDER_HEADER + "\n")
        for e in ds.examples:
            fh.write(f"{e.state.fen()}\t{e.move.uci()}\t{e.label}\t{e.game_index}\t{e.ply}\n")


def load_blunder_dataset(path) -> BlunderDataset:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != BLUNDER_HEADER:
            raise DatasetError(f"{path}: bad or missing header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DatasetError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            fen, uci, label, game_index, ply = parts
            if label not in ("0", "1"):
                raise DatasetError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            state, move = _checked_pair(fen, uci, path, lineno)
            examples.append(BlunderExample(state, move, int(label), int(game_index), int(ply)))
    return BlunderDataset(examples)


def _checked_pair(fen: str, uci: str, path, lineno: int):
    try:
        state = parse_fen(fen)
        move = Move.from_uci(uci)
    except Exception as exc:
        raise DatasetError(f"{path}:{lineno}: {exc}") from None
    if move not in legal_moves(state):
        raise DatasetError(f"{path}:{lineno}: move {uci} is not legal in its position")
    return state, move
