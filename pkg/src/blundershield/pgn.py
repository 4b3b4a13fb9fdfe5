"""PGN ingestion: game splitting, SAN resolution, replay.

Covers the subset found in game dumps: tag pairs, movetext with move
numbers, ``{}`` comments, ``;`` line comments, ``()`` variations (skipped),
NAG codes, annotation suffixes, and the four result tokens.  Games whose
movetext cannot be resolved are yielded as PgnGameError records rather
than dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Union

from .board import (
    BoardState,
    FILES,
    Move,
    CHAR_TO_PROMO,
    PROMO_CHARS,
    _apply_unchecked,
    is_in_check,
    legal_moves,
    square_index,
    square_name,
)
from .errors import PgnError


class GameResult(Enum):
    WHITE_WIN = "1-0"
    BLACK_WIN = "0-1"
    DRAW = "1/2-1/2"
    UNKNOWN = "*"


_RESULT_TOKENS = {r.value: r for r in GameResult}

_TAG_RE = re.compile(r'\[\s*(\w+)\s*"((?:[^"\\]|\\.)*)"\s*\]')
_MOVENUM_RE = re.compile(r"^\d+\.*$")
_SAN_RE = re.compile(
    r"^(?:(O-O-O|O-O|0-0-0|0-0)"
    r"|(?:([KQRBN])?([a-h])?([1-8])?(x)?([a-h][1-8])(?:=?([QRBN]))?))"
    r"([+#])?$"
)

_PIECE_KIND = {"K": 5, "Q": 4, "R": 3, "B": 2, "N": 1}


@dataclass(frozen=True)
class GameRecordRaw:
    """One parsed game: tags, replayed moves, result, and whether the final
    position is checkmate (derived from replay, not from the tags)."""

    tags: dict
    moves: tuple
    result: GameResult
    ends_in_checkmate: bool
    source: str
    index: int

    def start_state(self) -> BoardState:
        if "FEN" in self.tags:
            return BoardState.from_fen(self.tags["FEN"])
        return BoardState.startpos()


@dataclass(frozen=True)
class PgnGameError:
    """A game that failed to parse; `ply` is None for structural failures."""

    source: str
    index: int
    ply: Optional[int]
    message: str


def resolve_san(state: BoardState, san: str) -> Move:
    """Resolve a SAN token against the legal moves of `state`.

    Raises:
        PgnError: token malformed, matches no legal move, or is ambiguous.
    """
    m = _SAN_RE.match(san)
    if not m:
        raise PgnError(f"malformed SAN token {san!r}")
    castle, piece, dis_file, dis_rank, _capture, target, promo, _check = m.groups()
    legal = legal_moves(state)

    if castle:
        king_from = 4 if state.white_to_move else 60
        to_file = 2 if castle in ("O-O-O", "0-0-0") else 6
        move = Move(king_from, (king_from & ~7) | to_file)
        if move not in legal:
            raise PgnError(f"castling {san!r} is not legal here")
        return move

    to_sq = square_index(target)
    kind = _PIECE_KIND[piece] if piece else 0
    base = 0 if state.white_to_move else 6
    want_promo = CHAR_TO_PROMO[promo.lower()] if promo else 0
    candidates = []
    for mv in legal:
        if mv.to_sq != to_sq or mv.promotion != want_promo:
            continue
        if state.piece_at(mv.from_sq) != base + kind:
            continue
        if dis_file and (mv.from_sq & 7) != ord(dis_file) - ord("a"):
            continue
        if dis_rank and (mv.from_sq >> 3) != int(dis_rank) - 1:
            continue
        candidates.append(mv)
    if not candidates:
        raise PgnError(f"no legal move matches {san!r}")
    if len(candidates) > 1:
        raise PgnError(f"ambiguous SAN {san!r}")
    return candidates[0]


_KIND_LETTER = {v: k for k, v in _PIECE_KIND.items()}


def move_to_san(state: BoardState, move: Move) -> str:
    """Render a legal move in SAN, with minimal disambiguation and +/# marks."""
    legal = legal_moves(state)
    if move not in legal:
        raise PgnError(f"{move.uci()} is not legal here")
    after = _apply_unchecked(state, move)
    if not legal_moves(after):
        suffix = "#" if is_in_check(after) else ""
    else:
        suffix = "+" if is_in_check(after) else ""

    piece = state.piece_at(move.from_sq)
    kind = piece % 6
    if kind == 5 and abs((move.from_sq & 7) - (move.to_sq & 7)) == 2:
        return ("O-O" if (move.to_sq & 7) == 6 else "O-O-O") + suffix

    is_ep = kind == 0 and state.ep_square is not None and move.to_sq == state.ep_square
    capture = state.piece_at(move.to_sq) is not None or is_ep
    target = square_name(move.to_sq)
    if kind == 0:
        core = (FILES[move.from_sq & 7] + "x" if capture else "") + target
        if move.promotion:
            core += "=" + PROMO_CHARS[move.promotion].upper()
        return core + suffix

    clashing = [m for m in legal
                if m.to_sq == move.to_sq and m.from_sq != move.from_sq
                and state.piece_at(m.from_sq) == piece]
    dis = ""
    if clashing:
        if all((m.from_sq & 7) != (move.from_sq & 7) for m in clashing):
            dis = FILES[move.from_sq & 7]
        elif all((m.from_sq >> 3) != (move.from_sq >> 3) for m in clashing):
            dis = str((move.from_sq >> 3) + 1)
        else:
            dis = square_name(move.from_sq)
    return _KIND_LETTER[kind] + dis + ("x" if capture else "") + target + suffix


def _split_games(text: str):
    """Split raw PGN text into (tags, movetext tokens, result token) triples."""
    games = []
    tags: dict = {}
    tokens: list = []
    result: Optional[str] = None
    in_movetext = False
    depth = 0

    def close():
        nonlocal tags, tokens, result, in_movetext
        games.append((tags, tokens, result))
        tags, tokens, result, in_movetext = {}, [], None, False

    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == "{":
            j = text.find("}", i + 1)
            i = n if j < 0 else j + 1
        elif c == ";":
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif c == "(":
            depth += 1
            i += 1
        elif c == ")":
            depth = max(0, depth - 1)
            i += 1
        elif c == "$":
            i += 1
            while i < n and text[i].isdigit():
                i += 1
        elif c == "[" and depth == 0:
            if in_movetext or result is not None:
                close()
            m = _TAG_RE.match(text, i)
            if m:
                tags[m.group(1)] = m.group(2).replace('\\"', '"').replace("\\\\", "\\")
                i = m.end()
            else:
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "{};()[]":
                j += 1
            if j == i:  # stray bracket
                i += 1
                continue
            tok = text[i:j]
            i = j
            if depth:
                continue
            if tok in _RESULT_TOKENS:
                result = tok
                close()
            else:
                in_movetext = True
                tokens.append(tok)
    if tags or tokens or result is not None:
        close()
    return games


def _build_game(tags, tokens, result_token, source, index) -> Union[GameRecordRaw, PgnGameError]:
    try:
        state = BoardState.from_fen(tags["FEN"]) if "FEN" in tags else BoardState.startpos()
    except Exception as exc:
        return PgnGameError(source, index, None, f"bad FEN tag: {exc}")

    moves = []
    ply = 0
    for tok in tokens:
        if _MOVENUM_RE.match(tok) or tok == "...":
            continue
        san = tok.rstrip("!?")
        if not san:
            continue
        try:
            mv = resolve_san(state, san)
        except PgnError as exc:
            return PgnGameError(source, index, ply, str(exc))
        moves.append(mv)
        state = _apply_unchecked(state, mv)
        ply += 1

    mate = not legal_moves(state) and is_in_check(state)
    result = _RESULT_TOKENS[result_token] if result_token else GameResult.UNKNOWN
    if mate:
        expected = GameResult.BLACK_WIN if state.white_to_move else GameResult.WHITE_WIN
        if result not in (expected, GameResult.UNKNOWN):
            return PgnGameError(
                source, index, ply - 1,
                f"result tag {result.value} contradicts checkmate on the board",
            )
    return GameRecordRaw(dict(tags), tuple(moves), result, mate, source, index)


def parse_pgn(text, source: str = "<pgn>") -> Iterator[Union[GameRecordRaw, PgnGameError]]:
    """Parse a PGN string or text stream, yielding games in file order.

    Yields GameRecordRaw for clean games and PgnGameError for games with
    structural or SAN failures, so callers can account for every input game.
    """
    if hasattr(text, "read"):
        text = text.read()
    for index, (tags, tokens, result) in enumerate(_split_games(text)):
        yield _build_game(tags, tokens, result, source, index)
