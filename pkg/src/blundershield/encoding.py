"""Model input encodings for positions and moves."""

from __future__ import annotations

import numpy as np

from .board import BoardState, Move

# Plane order: white P N B R Q K, then black p n b r q k — the same order
# as BoardState.bitboards, so plane i is just bitboard i spread on the grid.
N_PLANES = 12


def encode_board(state: BoardState) -> np.ndarray:
    """Binary (8, 8, 12) tensor; row 0 is rank 1, column 0 is file a."""
    planes = np.zeros((8, 8, N_PLANES), dtype=np.float32)
    for i, bb in enumerate(state.bitboards):
        if not bb:
            continue
        bits = np.unpackbits(
            np.frombuffer(bb.to_bytes(8, "little"), dtype=np.uint8), bitorder="little"
        )
        planes[:, :, i] = bits.reshape(8, 8)
    return planes


def encode_metadata(state: BoardState) -> np.ndarray:
    """[white-kingside, white-queenside, black-kingside, black-queenside,
    side-to-move] with 1 meaning available / White to move."""
    c = state.castling
    return np.array(
        [c & 1, (c >> 1) & 1, (c >> 2) & 1, (c >> 3) & 1, 1 if state.white_to_move else 0],
        dtype=np.float32,
    )


def encode_move(move: Move) -> np.ndarray:
    """[from/63, to/63, promotion/4], each scaled into [0, 1]."""
    return np.array(
        [move.from_sq / 63.0, move.to_sq / 63.0, move.promotion / 4.0], dtype=np.float32
    )
