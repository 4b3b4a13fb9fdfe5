"""Engine access: UCI client, deterministic material oracle, move labeling.

Scores are centipawns from the side-to-move perspective, clamped to
|value| <= 10000; "score mate k" maps onto the same scale as
sign(k) * (10000 - |k|).  Terminal positions never reach the engine:
checkmate is -10000 (the side to move is mated) and stalemate is 0.

A move's label compares the evaluation before it with the mover's
evaluation after it; a drop of BLUNDER_THRESHOLD_CP or more is a blunder.
"""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional, Tuple

from .board import BoardState, Move, _apply_unchecked, is_in_check, legal_moves, to_fen
from .errors import IllegalMoveError, OracleError, OracleTimeoutError

log = logging.getLogger(__name__)

SCORE_CAP = 10000
BLUNDER_THRESHOLD_CP = 100
GOOD_MOVE_THRESHOLD_CP = 50

# Mock-oracle piece values, pawn through king.
PIECE_VALUES = (100, 300, 300, 500, 900, 0)


@dataclass(frozen=True)
class CentipawnScore:
    value: int
    is_mate_mapped: bool = False

    def __post_init__(self):
        if abs(self.value) > SCORE_CAP:
            raise ValueError(f"score {self.value} outside +/-{SCORE_CAP}")


@dataclass(frozen=True)
class OracleLimits:
    """Search limit: exactly one of depth (plies) or movetime (ms)."""

    depth: Optional[int] = None
    movetime_ms: Optional[int] = None

    def __post_init__(self):
        if (self.depth is None) == (self.movetime_ms is None):
            raise ValueError("set exactly one of depth or movetime_ms")
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.movetime_ms is not None and self.movetime_ms < 10:
            raise ValueError("movetime_ms must be >= 10")

    @classmethod
    def by_depth(cls, depth: int) -> "OracleLimits":
        return cls(depth=depth)

    @classmethod
    def by_movetime(cls, ms: int) -> "OracleLimits":
        return cls(movetime_ms=ms)


@dataclass(frozen=True)
class BlunderLabel:
    eval_before: CentipawnScore
    eval_after: CentipawnScore  # mover's perspective, after the move
    drop: int
    is_blunder: bool
    correction: Optional[Move]


def mapped_mate_score(k: int) -> CentipawnScore:
    """Map "score mate k" onto the centipawn scale.  mate 0 means the side
    to move is already mated, matching the terminal convention."""
    if k == 0:
        return CentipawnScore(-SCORE_CAP, True)
    magnitude = max(0, SCORE_CAP - abs(k))
    return CentipawnScore(magnitude if k > 0 else -magnitude, True)


def parse_info_score(line: str) -> Optional[CentipawnScore]:
    """Extract the score from one "info" line; None if it carries none.

    Handles "score cp N" and "score mate N", tolerating lowerbound /
    upperbound markers and any other interleaved tokens.
    """
    tokens = line.split()
    if not tokens or tokens[0] != "info":
        return None
    try:
        at = tokens.index("score")
    except ValueError:
        return None
    if at + 2 >= len(tokens):
        return None
    kind = tokens[at + 1]
    try:
        number = int(tokens[at + 2])
    except ValueError:
        return None
    if kind == "cp":
        return CentipawnScore(max(-SCORE_CAP, min(SCORE_CAP, number)))
    if kind == "mate":
        return mapped_mate_score(number)
    return None


def _terminal_score(state: BoardState) -> CentipawnScore:
    return CentipawnScore(-SCORE_CAP if is_in_check(state) else 0)


class _OracleBase:
    """Shared evaluate/best_move wrappers over analyze()."""

    def analyze(self, state: BoardState, limits: Optional[OracleLimits] = None):
        raise NotImplementedError

    def evaluate(self, state: BoardState, limits: Optional[OracleLimits] = None) -> CentipawnScore:
        return self.analyze(state, limits)[0]

    def best_move(self, state: BoardState, limits: Optional[OracleLimits] = None) -> Move:
        move = self.analyze(state, limits)[1]
        if move is None:
            raise OracleError("no best move: position is terminal", where="oracle.best_move")
        return move

    def restart(self) -> None:
        pass

    def close(self) -> None:
        pass


_EOF = object()


class UciEngine(_OracleBase):
    """One UCI engine subprocess.

    Not thread-safe; parallel games must each own their own instance.  A
    search that produces no "bestmove" within the timeout (or an engine
    crash) triggers one automatic restart of the session before giving up.
    """

    def __init__(self, command, options=None, handshake_timeout_ms: int = 5000,
                 go_timeout_ms: int = 60000):
        if isinstance(command, str):
            command = shlex.split(command)
        self._command = list(command)
        self._options = dict(options or {})
        self._handshake_timeout = handshake_timeout_ms / 1000.0
        self._go_timeout = go_timeout_ms / 1000.0
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue" = queue.Queue()
        self.id_name = ""
        self._start()

    # -- session plumbing ---------------------------------------------------

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleError(f"cannot spawn engine {self._command!r}: {exc}",
                              where="oracle.session") from exc
        self._lines = queue.Queue()
        thread = threading.Thread(target=self._pump, args=(self._proc, self._lines), daemon=True)
        thread.start()
        self._handshake()

    @staticmethod
    def _pump(proc, lines) -> None:
        for line in proc.stdout:
            lines.put(line.rstrip("\r\n"))
        lines.put(_EOF)

    def _send(self, text: str) -> None:
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise OracleTimeoutError(f"engine pipe closed while sending {text!r}",
                                     where="oracle.session") from exc

    def _read_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise OracleTimeoutError(f"no engine output within {timeout:.1f}s",
                                     where="oracle.session") from None
        if line is _EOF:
            raise OracleTimeoutError("engine stream ended", where="oracle.session")
        return line

    def _handshake(self) -> None:
        self._send("uci")
        while True:
            line = self._read_line(self._handshake_timeout)
            if line.startswith("id name "):
                self.id_name = line[len("id name "):]
            elif line.strip() == "uciok":
                break
        for name, value in sorted(self._options.items()):
            self._send(f"setoption name {name} value {value}")
        self._sync()
        self._send("ucinewgame")
        self._sync()

    def _sync(self) -> None:
        self._send("isready")
        while self._read_line(self._handshake_timeout).strip() != "readyok":
            pass

    def new_game(self) -> None:
        self._send("ucinewgame")
        self._sync()

    def restart(self) -> None:
        self.close()
        self._start()

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.poll() is None:
                try:
                    self._send("quit")
                except OracleTimeoutError:
                    pass
                try:
                    self._proc.wait(timeout=1.0)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait()
        finally:
            self._proc = None

    # -- search -------------------------------------------------------------

    def analyze(self, state: BoardState, limits: Optional[OracleLimits] = None
                ) -> Tuple[CentipawnScore, Optional[Move]]:
        """Evaluate `state`; returns (score, best move).  Terminal positions
        short-circuit to (mate/stalemate score, None) without engine I/O."""
        if limits is None:
            raise OracleError("OracleLimits required for engine search", where="oracle.analyze")
        moves = legal_moves(state)
        if not moves:
            return _terminal_score(state), None
        try:
            return self._go(state, limits, moves)
        except OracleTimeoutError as first:
            log.warning("engine desync (%s); restarting session once", first)
            self.restart()
            try:
                return self._go(state, limits, moves)
            except OracleTimeoutError as second:
                raise OracleError(
                    f"engine desync persisted after restart: {second}",
                    where="oracle.analyze",
                ) from second

    def _go(self, state: BoardState, limits: OracleLimits, moves) -> Tuple[CentipawnScore, Optional[Move]]:
        self._send(f"position fen {to_fen(state)}")
        if limits.depth is not None:
            self._send(f"go depth {limits.depth}")
            timeout = self._go_timeout
        else:
            self._send(f"go movetime {limits.movetime_ms}")
            timeout = max(self._go_timeout, limits.movetime_ms / 1000.0 * 4 + 1.0)
        score: Optional[CentipawnScore] = None
        while True:
            line = self._read_line(timeout)
            if line.startswith("info"):
                parsed = parse_info_score(line)
                if parsed is not None:
                    score = parsed
            elif line.startswith("bestmove"):
                parts = line.split()
                token = parts[1] if len(parts) > 1 else ""
                break
            # anything else (id lines, blank chatter) is ignored
        if score is None:
            raise OracleError("engine sent bestmove without any score", where="oracle.analyze")
        if token in ("(none)", "0000", ""):
            raise OracleError("engine returned no move for a position with legal moves",
                              where="oracle.analyze")
        try:
            move = Move.from_uci(token)
        except ValueError as exc:
            raise OracleError(f"unparseable bestmove {token!r}", where="oracle.analyze") from exc
        if move not in moves:
            raise OracleError(f"engine suggested illegal move {token}", where="oracle.analyze")
        return score, move


def _material(bbs, white_perspective: bool) -> int:
    total = 0
    for i, value in enumerate(PIECE_VALUES):
        if value:
            total += value * (bbs[i].bit_count() - bbs[i + 6].bit_count())
    return total if white_perspective else -total


class MaterialOracle(_OracleBase):
    """Deterministic stand-in engine: a 1-ply search over material.

    evaluate() is the best material balance the side to move can reach in
    one move; best_move() is the move reaching it, ties broken by canonical
    move order.  Limits are accepted and ignored."""

    id_name = "mock-material-v1"

    def analyze(self, state: BoardState, limits: Optional[OracleLimits] = None
                ) -> Tuple[CentipawnScore, Optional[Move]]:
        moves = legal_moves(state)
        if not moves:
            return _terminal_score(state), None
        mover_white = state.white_to_move
        best_score = None
        best_move = None
        for mv in moves:
            after = _apply_unchecked(state, mv)
            score = _material(after.bitboards, mover_white)
            if best_score is None or score > best_score:
                best_score, best_move = score, mv
        return CentipawnScore(max(-SCORE_CAP, min(SCORE_CAP, best_score))), best_move


def label_move(oracle, state: BoardState, move: Move,
               limits: Optional[OracleLimits] = None) -> BlunderLabel:
    """Label one played move against the oracle.

    drop = eval(before) - eval(after from the mover's perspective); the
    engine reports the after-position for the opponent, so its sign flips.

    Raises:
        IllegalMoveError: `move` is not legal in `state`.
    """
    if move not in legal_moves(state):
        raise IllegalMoveError(f"cannot label illegal move {move.uci()} in {to_fen(state)}")
    eval_before, correction = oracle.analyze(state, limits)
    after_state = _apply_unchecked(state, move)
    opponent_view = oracle.evaluate(after_state, limits)
    eval_after = CentipawnScore(-opponent_view.value, opponent_view.is_mate_mapped)
    drop = eval_before.value - eval_after.value
    return BlunderLabel(eval_before, eval_after, drop, drop >= BLUNDER_THRESHOLD_CP, correction)


@dataclass
class OracleLabeler:
    """Binds an oracle and limits into the label/evaluate interface the
    game loop consumes."""

    oracle: object
    limits: Optional[OracleLimits] = None

    def label(self, state: BoardState, move: Move) -> BlunderLabel:
        return label_move(self.oracle, state, move, self.limits)

    def evaluate(self, state: BoardState) -> CentipawnScore:
        return self.oracle.evaluate(state, self.limits)

    def best_move(self, state: BoardState) -> Move:
        return self.oracle.best_move(state, self.limits)
