"""Scripted UCI engine for exercising the client protocol layer.

Run as: python fake_uci.py MODE [SENTINEL]

The engine answers any position with a deterministic score and the
canonically first legal move, so tests can predict every reply.  MODE
selects one scripted misbehavior; SENTINEL is a file path used by the
"desync" mode to count process spawns, so the first session can go mute
on "go" while the restarted session answers normally.

Modes:
    cp               normal engine; final line "score cp <material+7>"
                     preceded by chatter, bound markers, and stale scores
    mate             late "score mate 3" overrides an earlier cp score
    mate-neg         final "score mate -2"
    mate-zero        final "score mate 0"
    no-score         bestmove without any score line
    bestmove-none    valid score, then "bestmove (none)"
    bestmove-garbage valid score, then an unparseable move token
    bestmove-illegal valid score, then a well-formed but illegal move
    desync           first spawn never answers "go"; later spawns act as cp
    no-uciok         prints "id name" but never "uciok"
"""

import sys
from pathlib import Path

from blundershield.board import BoardState, legal_moves

PIECE_VALUES = (100, 300, 300, 500, 900, 0)


def material(state):
    total = 0
    for i, value in enumerate(PIECE_VALUES):
        total += value * (state.bitboards[i].bit_count() - state.bitboards[i + 6].bit_count())
    return total if state.white_to_move else -total


def send(line):
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def answer_go(mode, state, mute):
    moves = sorted(legal_moves(state))
    best = moves[0].uci() if moves else "(none)"
    score = material(state) + 7
    if mute:
        send("info string thinking very hard")
        send("info depth 1 nodes 17")
        return  # never a bestmove: the client must time out and restart
    if mode == "mate":
        send(f"info depth 5 score cp 500 pv {best}")
        send("info depth 6 score mate 3")
    elif mode == "mate-neg":
        send("info depth 6 score mate -2")
    elif mode == "mate-zero":
        send("info depth 6 score mate 0")
    elif mode == "no-score":
        send("info string no evaluation today")
        send(f"bestmove {best}")
        return
    elif mode == "bestmove-none":
        send("info depth 3 score cp 10")
        send("bestmove (none)")
        return
    elif mode == "bestmove-garbage":
        send("info depth 3 score cp 10")
        send("bestmove zz99x")
        return
    elif mode == "bestmove-illegal":
        send("info depth 3 score cp 10")
        send("bestmove a1a1")
        return
    else:
        send("info string warming up")
        send("info depth 1 nodes 40")
        send(f"info depth 2 score cp 13 lowerbound nodes 80 pv {best}")
        send("info depth 3 score cp -8 upperbound")
        send(f"info depth 8 seldepth 12 nodes 5000 score cp {score} pv {best}")
    send(f"bestmove {best}")


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "cp"
    mute = False
    if mode == "desync":
        sentinel = Path(sys.argv[2])
        spawns = int(sentinel.read_text()) if sentinel.exists() else 0
        sentinel.write_text(str(spawns + 1))
        mute = spawns == 0

    state = BoardState.startpos()
    for raw in sys.stdin:
        line = raw.strip()
        if line == "uci":
            send(f"id name fake-uci {mode}")
            send("id author scripted")
            if mode != "no-uciok":
                send("uciok")
        elif line == "isready":
            send("readyok")
        elif line.startswith("position fen "):
            state = BoardState.from_fen(line[len("position fen "):])
        elif line.startswith("go"):
            answer_go(mode, state, mute)
        elif line == "quit":
            return


if __name__ == "__main__":
    main()
