"""Chess rules: board state, FEN round-trip, legal move generation, perft.

Squares are indexed a1=0 .. h8=63, file-major within each rank
(``index = rank * 8 + file``).  Piece occupancy is kept as twelve
bitboards (Python ints), one per piece kind and color.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import FenError, IllegalMoveError

FILES = "abcdefgh"
RANKS = "12345678"

STARTPOS_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

# Piece indices into BoardState.bitboards.
WP, WN, WB, WR, WQ, WK, BP, BN, BB, BR, BQ, BK = range(12)

PIECE_CHARS = "PNBRQKpnbrqk"
CHAR_TO_PIECE = {c: i for i, c in enumerate(PIECE_CHARS)}

# Promotion codes.  The nonzero values line up with the piece-kind offsets
# (N=1, B=2, R=3, Q=4), which apply_move relies on.
PROMO_NONE, PROMO_KNIGHT, PROMO_BISHOP, PROMO_ROOK, PROMO_QUEEN = range(5)
PROMO_CHARS = {PROMO_KNIGHT: "n", PROMO_BISHOP: "b", PROMO_ROOK: "r", PROMO_QUEEN: "q"}
CHAR_TO_PROMO = {c: p for p, c in PROMO_CHARS.items()}

CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8
_CASTLE_CHARS = (("K", CASTLE_WK), ("Q", CASTLE_WQ), ("k", CASTLE_BK), ("q", CASTLE_BQ))


def square_index(name: str) -> int:
    """Map a square name like "e4" to its 0..63 index."""
    if len(name) != 2 or name[0] not in FILES or name[1] not in RANKS:
        raise ValueError(f"bad square name {name!r}")
    return RANKS.index(name[1]) * 8 + FILES.index(name[0])


def square_name(index: int) -> str:
    return FILES[index & 7] + RANKS[index >> 3]


@dataclass(frozen=True, order=True)
class Move:
    """A move as (from, to, promotion).  Ordering is the canonical move
    order used for deterministic tie-breaking everywhere."""

    from_sq: int
    to_sq: int
    promotion: int = PROMO_NONE

    def uci(self) -> str:
        suffix = PROMO_CHARS.get(self.promotion, "")
        return square_name(self.from_sq) + square_name(self.to_sq) + suffix

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise ValueError(f"bad UCI move {text!r}")
        frm = square_index(text[0:2])
        to = square_index(text[2:4])
        promo = PROMO_NONE
        if len(text) == 5:
            if text[4] not in CHAR_TO_PROMO:
                raise ValueError(f"bad promotion in {text!r}")
            promo = CHAR_TO_PROMO[text[4]]
        return cls(frm, to, promo)


# ---------------------------------------------------------------------------
# Precomputed attack tables.

def _build_leaper(deltas):
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        mask = 0
        for df, dr in deltas:
            nf, nr = f + df, r + dr
            if 0 <= nf < 8 and 0 <= nr < 8:
                mask |= 1 << (nr * 8 + nf)
        table.append(mask)
    return table


KNIGHT_ATTACKS = _build_leaper(((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)))
KING_ATTACKS = _build_leaper(((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)))
WHITE_PAWN_ATTACKS = _build_leaper(((-1, 1), (1, 1)))
BLACK_PAWN_ATTACKS = _build_leaper(((-1, -1), (1, -1)))


def _build_ray(df, dr):
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        mask = 0
        nf, nr = f + df, r + dr
        while 0 <= nf < 8 and 0 <= nr < 8:
            mask |= 1 << (nr * 8 + nf)
            nf += df
            nr += dr
        table.append(mask)
    return table


_RAY_N = _build_ray(0, 1)
_RAY_S = _build_ray(0, -1)
_RAY_E = _build_ray(1, 0)
_RAY_W = _build_ray(-1, 0)
_RAY_NE = _build_ray(1, 1)
_RAY_NW = _build_ray(-1, 1)
_RAY_SE = _build_ray(1, -1)
_RAY_SW = _build_ray(-1, -1)

# (ray table, scan direction): True rays grow toward higher indices, so the
# nearest blocker is the lowest set bit; False rays use the highest.
_ROOK_RAYS = ((_RAY_N, True), (_RAY_E, True), (_RAY_S, False), (_RAY_W, False))
_BISHOP_RAYS = ((_RAY_NE, True), (_RAY_NW, True), (_RAY_SE, False), (_RAY_SW, False))


def _build_between():
    table = [[0] * 64 for _ in range(64)]
    for a in range(64):
        for ray, _ in _ROOK_RAYS + _BISHOP_RAYS:
            mask = 0
            rest = ray[a]
            order = []
            while rest:
                lo = rest & -rest
                order.append(lo.bit_length() - 1)
                rest ^= lo
            if not (ray is _RAY_N or ray is _RAY_E or ray is _RAY_NE or ray is _RAY_NW):
                order.reverse()
            for b in order:
                table[a][b] = mask
                mask |= 1 << b
    return table


BETWEEN = _build_between()


def _slider_attacks(sq: int, occ: int, rays) -> int:
    att = 0
    for table, positive in rays:
        ray = table[sq]
        blockers = ray & occ
        if blockers:
            if positive:
                first = (blockers & -blockers).bit_length() - 1
            else:
                first = blockers.bit_length() - 1
            ray ^= table[first]
        att |= ray
    return att


def _bits(bb: int) -> Iterator[int]:
    while bb:
        lo = bb & -bb
        yield lo.bit_length() - 1
        bb ^= lo


# ---------------------------------------------------------------------------
# State.

@dataclass(frozen=True)
class BoardState:
    """Immutable position.  ``castling`` is a CASTLE_* bitmask; ``ep_square``
    is the capture target square of a legal-looking en-passant, or None."""

    bitboards: tuple
    white_to_move: bool
    castling: int
    ep_square: Optional[int]
    halfmove_clock: int
    fullmove_number: int

    @classmethod
    def startpos(cls) -> "BoardState":
        return parse_fen(STARTPOS_FEN)

    @classmethod
    def from_fen(cls, text: str) -> "BoardState":
        return parse_fen(text)

    def fen(self) -> str:
        return to_fen(self)

    def piece_at(self, sq: int) -> Optional[int]:
        bit = 1 << sq
        for i in range(12):
            if self.bitboards[i] & bit:
                return i
        return None

    def position_key(self) -> str:
        """Placement/side/castling/ep part of the FEN; repetition identity."""
        return " ".join(to_fen(self).split()[:4])


def _is_attacked(bbs, occ: int, sq: int, by_white: bool) -> bool:
    base = 0 if by_white else 6
    # A white pawn attacks sq from the squares a black pawn on sq would hit.
    pawn_from = BLACK_PAWN_ATTACKS[sq] if by_white else WHITE_PAWN_ATTACKS[sq]
    if pawn_from & bbs[base + 0]:
        return True
    if KNIGHT_ATTACKS[sq] & bbs[base + 1]:
        return True
    if KING_ATTACKS[sq] & bbs[base + 5]:
        return True
    if _slider_attacks(sq, occ, _ROOK_RAYS) & (bbs[base + 3] | bbs[base + 4]):
        return True
    if _slider_attacks(sq, occ, _BISHOP_RAYS) & (bbs[base + 2] | bbs[base + 4]):
        return True
    return False


def is_in_check(state: BoardState) -> bool:
    bbs = state.bitboards
    base = 0 if state.white_to_move else 6
    occ = 0
    for b in bbs:
        occ |= b
    king_sq = bbs[base + 5].bit_length() - 1
    return _is_attacked(bbs, occ, king_sq, not state.white_to_move)


# ---------------------------------------------------------------------------
# FEN.

def parse_fen(text: str) -> BoardState:
    """Parse a FEN string into a BoardState.

    Validation: exactly 6 fields, 8 ranks summing to 8 files each, only the
    twelve piece letters, exactly one king per side, no pawns on ranks 1/8,
    the side not to move may not be in check, and the en-passant field must
    be consistent with the side to move (correct rank, double-pushed pawn
    present).  Castling flags whose king or rook is off its home square are
    dropped; to_fen re-emits the surviving flags in KQkq order, so
    ``to_fen(parse_fen(f))`` is the normalized form of ``f``.

    Raises:
        FenError: naming the offending field.
    """
    fields = text.split()
    if len(fields) != 6:
        raise FenError(f"expected 6 fields, got {len(fields)}", field="fields")
    placement, side, castling_text, ep_text, halfmove_text, fullmove_text = fields

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError(f"expected 8 ranks, got {len(ranks)}", field="placement")
    bbs = [0] * 12
    for i, rank_text in enumerate(ranks):
        rank = 7 - i
        file = 0
        for c in rank_text:
            if c.isdigit():
                if c == "0" or c == "9":
                    raise FenError(f"bad skip count {c!r}", field="placement")
                file += int(c)
            elif c in CHAR_TO_PIECE:
                if file > 7:
                    raise FenError(f"rank {rank + 1} overflows 8 files", field="placement")
                bbs[CHAR_TO_PIECE[c]] |= 1 << (rank * 8 + file)
                file += 1
            else:
                raise FenError(f"illegal piece character {c!r}", field="placement")
        if file != 8:
            raise FenError(f"rank {rank + 1} sums to {file} files, expected 8", field="placement")

    if side == "w":
        white = True
    elif side == "b":
        white = False
    else:
        raise FenError(f"expected 'w' or 'b', got {side!r}", field="side")

    castling = 0
    if castling_text != "-":
        seen = set()
        for c in castling_text:
            match = [bit for ch, bit in _CASTLE_CHARS if ch == c]
            if not match or c in seen:
                raise FenError(f"bad castling field {castling_text!r}", field="castling")
            seen.add(c)
            castling |= match[0]
    # Drop flags that the piece placement cannot support.
    if castling & CASTLE_WK and not (bbs[WK] & (1 << 4) and bbs[WR] & (1 << 7)):
        castling &= ~CASTLE_WK
    if castling & CASTLE_WQ and not (bbs[WK] & (1 << 4) and bbs[WR] & (1 << 0)):
        castling &= ~CASTLE_WQ
    if castling & CASTLE_BK and not (bbs[BK] & (1 << 60) and bbs[BR] & (1 << 63)):
        castling &= ~CASTLE_BK
    if castling & CASTLE_BQ and not (bbs[BK] & (1 << 60) and bbs[BR] & (1 << 56)):
        castling &= ~CASTLE_BQ

    ep_square: Optional[int] = None
    if ep_text != "-":
        try:
            ep_square = square_index(ep_text)
        except ValueError:
            raise FenError(f"bad square {ep_text!r}", field="en_passant") from None
        rank = ep_square >> 3
        if white:
            # Black just double-pushed: target on rank 6, black pawn below it.
            if rank != 5 or not bbs[BP] & (1 << (ep_square - 8)):
                raise FenError(f"square {ep_text} inconsistent with side to move", field="en_passant")
        else:
            if rank != 2 or not bbs[WP] & (1 << (ep_square + 8)):
                raise FenError(f"square {ep_text} inconsistent with side to move", field="en_passant")

    try:
        halfmove = int(halfmove_text)
    except ValueError:
        raise FenError(f"not an integer: {halfmove_text!r}", field="halfmove") from None
    if halfmove < 0:
        raise FenError("halfmove clock must be >= 0", field="halfmove")
    try:
        fullmove = int(fullmove_text)
    except ValueError:
        raise FenError(f"not an integer: {fullmove_text!r}", field="fullmove") from None
    if fullmove < 1:
        raise FenError("fullmove number must be >= 1", field="fullmove")

    for king, label in ((WK, "white"), (BK, "black")):
        n = bbs[king].bit_count()
        if n != 1:
            raise FenError(f"impossible position: {n} {label} kings", field="placement")
    edge_ranks = 0xFF | (0xFF << 56)
    if (bbs[WP] | bbs[BP]) & edge_ranks:
        raise FenError("impossible position: pawn on rank 1 or 8", field="placement")

    state = BoardState(tuple(bbs), white, castling, ep_square, halfmove, fullmove)
    occ = 0
    for b in bbs:
        occ |= b
    idle_king = bbs[BK if white else WK].bit_length() - 1
    if _is_attacked(bbs, occ, idle_king, white):
        raise FenError("impossible position: side not to move is in check", field="placement")
    return state


def to_fen(state: BoardState) -> str:
    rows = []
    for rank in range(7, -1, -1):
        row = ""
        run = 0
        for file in range(8):
            piece = state.piece_at(rank * 8 + file)
            if piece is None:
                run += 1
            else:
                if run:
                    row += str(run)
                    run = 0
                row += PIECE_CHARS[piece]
        if run:
            row += str(run)
        rows.append(row)
    castling = "".join(ch for ch, bit in _CASTLE_CHARS if state.castling & bit) or "-"
    ep = square_name(state.ep_square) if state.ep_square is not None else "-"
    return " ".join((
        "/".join(rows),
        "w" if state.white_to_move else "b",
        castling,
        ep,
        str(state.halfmove_clock),
        str(state.fullmove_number),
    ))


# ---------------------------------------------------------------------------
# Move generation.

def _pseudo_moves(state: BoardState, occ: int, occ_own: int, occ_enemy: int, in_check: bool):
    bbs = state.bitboards
    white = state.white_to_move
    base = 0 if white else 6
    moves = []
    add = moves.append

    pawns = bbs[base + 0]
    pawn_att = WHITE_PAWN_ATTACKS if white else BLACK_PAWN_ATTACKS
    push = 8 if white else -8
    start_rank = 1 if white else 6
    promo_rank = 7 if white else 0
    ep = state.ep_square
    for f in _bits(pawns):
        rank = f >> 3
        one = f + push
        if not occ & (1 << one):
            if one >> 3 == promo_rank:
                for p in (PROMO_KNIGHT, PROMO_BISHOP, PROMO_ROOK, PROMO_QUEEN):
                    add(Move(f, one, p))
            else:
                add(Move(f, one))
                if rank == start_rank and not occ & (1 << (one + push)):
                    add(Move(f, one + push))
        targets = pawn_att[f]
        for t in _bits(targets & occ_enemy):
            if t >> 3 == promo_rank:
                for p in (PROMO_KNIGHT, PROMO_BISHOP, PROMO_ROOK, PROMO_QUEEN):
                    add(Move(f, t, p))
            else:
                add(Move(f, t))
        if ep is not None and targets & (1 << ep):
            add(Move(f, ep))

    for f in _bits(bbs[base + 1]):
        for t in _bits(KNIGHT_ATTACKS[f] & ~occ_own):
            add(Move(f, t))
    for f in _bits(bbs[base + 2]):
        for t in _bits(_slider_attacks(f, occ, _BISHOP_RAYS) & ~occ_own):
            add(Move(f, t))
    for f in _bits(bbs[base + 3]):
        for t in _bits(_slider_attacks(f, occ, _ROOK_RAYS) & ~occ_own):
            add(Move(f, t))
    for f in _bits(bbs[base + 4]):
        att = _slider_attacks(f, occ, _ROOK_RAYS) | _slider_attacks(f, occ, _BISHOP_RAYS)
        for t in _bits(att & ~occ_own):
            add(Move(f, t))

    king_sq = bbs[base + 5].bit_length() - 1
    for t in _bits(KING_ATTACKS[king_sq] & ~occ_own):
        add(Move(king_sq, t))

    # Castling: rights imply king and rook are home.  Not available in check;
    # the king may not cross or land on an attacked square.
    if not in_check:
        enemy = not white
        if white:
            if (state.castling & CASTLE_WK and not occ & 0x60
                    and not _is_attacked(bbs, occ, 5, enemy) and not _is_attacked(bbs, occ, 6, enemy)):
                add(Move(4, 6))
            if (state.castling & CASTLE_WQ and not occ & 0x0E
                    and not _is_attacked(bbs, occ, 3, enemy) and not _is_attacked(bbs, occ, 2, enemy)):
                add(Move(4, 2))
        else:
            if (state.castling & CASTLE_BK and not occ & (0x60 << 56)
                    and not _is_attacked(bbs, occ, 61, enemy) and not _is_attacked(bbs, occ, 62, enemy)):
                add(Move(60, 62))
            if (state.castling & CASTLE_BQ and not occ & (0x0E << 56)
                    and not _is_attacked(bbs, occ, 59, enemy) and not _is_attacked(bbs, occ, 58, enemy)):
                add(Move(60, 58))
    return moves


def _leaves_king_in_check(bbs, white: bool, ep_square: Optional[int], move: Move) -> bool:
    """Simulate `move` on copies of the bitboards and test the mover's king."""
    base = 0 if white else 6
    ebase = 6 - base
    f, t = move.from_sq, move.to_sq
    fb, tb = 1 << f, 1 << t
    bb = list(bbs)
    mover = base
    while not bb[mover] & fb:
        mover += 1
    bb[mover] ^= fb
    if move.promotion:
        bb[base + move.promotion] |= tb
    else:
        bb[mover] |= tb
    captured = False
    for i in range(ebase, ebase + 6):
        if bb[i] & tb:
            bb[i] ^= tb
            captured = True
            break
    if not captured and mover == base and ep_square is not None and t == ep_square:
        bb[ebase] ^= 1 << (t - 8 if white else t + 8)
    if mover == base + 5 and abs((t & 7) - (f & 7)) == 2:
        if t > f:
            bb[base + 3] ^= (1 << (f + 3)) | (1 << (f + 1))
        else:
            bb[base + 3] ^= (1 << (f - 4)) | (1 << (f - 1))
    occ = 0
    for x in bb:
        occ |= x
    king_sq = bb[base + 5].bit_length() - 1
    return _is_attacked(bb, occ, king_sq, not white)


def _pinned_masks(bbs, occ: int, occ_own: int, king_sq: int, white: bool):
    """Map from pinned own-piece square to the mask it may move within."""
    ebase = 6 if white else 0
    pins = {}
    kf, kr = king_sq & 7, king_sq >> 3
    for s in _bits(bbs[ebase + 3] | bbs[ebase + 4]):
        if (s >> 3) != kr and (s & 7) != kf:
            continue
        between = BETWEEN[king_sq][s]
        blockers = between & occ
        if blockers and not blockers & (blockers - 1) and blockers & occ_own:
            pins[blockers.bit_length() - 1] = between | (1 << s)
    for s in _bits(bbs[ebase + 2] | bbs[ebase + 4]):
        if abs((s & 7) - kf) != abs((s >> 3) - kr) or s == king_sq:
            continue
        between = BETWEEN[king_sq][s]
        blockers = between & occ
        if blockers and not blockers & (blockers - 1) and blockers & occ_own:
            pins[blockers.bit_length() - 1] = between | (1 << s)
    return pins


def legal_moves(state: BoardState) -> list:
    """All legal moves in canonical (from, to, promotion) order.

    Castling is encoded as the king's two-square move (e1g1 etc); promotions
    appear as four distinct moves per target square.
    """
    bbs = state.bitboards
    white = state.white_to_move
    base = 0 if white else 6
    occ_own = bbs[base] | bbs[base + 1] | bbs[base + 2] | bbs[base + 3] | bbs[base + 4] | bbs[base + 5]
    ebase = 6 - base
    occ_enemy = bbs[ebase] | bbs[ebase + 1] | bbs[ebase + 2] | bbs[ebase + 3] | bbs[ebase + 4] | bbs[ebase + 5]
    occ = occ_own | occ_enemy
    king_sq = bbs[base + 5].bit_length() - 1
    in_check = _is_attacked(bbs, occ, king_sq, not white)

    pseudo = _pseudo_moves(state, occ, occ_own, occ_enemy, in_check)
    legal = []
    keep = legal.append
    if in_check:
        for m in pseudo:
            if not _leaves_king_in_check(bbs, white, state.ep_square, m):
                keep(m)
    else:
        pins = _pinned_masks(bbs, occ, occ_own, king_sq, white)
        pawns = bbs[base]
        ep = state.ep_square
        for m in pseudo:
            f = m.from_sq
            if f == king_sq:
                if abs((m.to_sq & 7) - (f & 7)) == 2:
                    keep(m)  # castling was fully validated at generation
                elif not _is_attacked(bbs, occ ^ (1 << f), m.to_sq, not white):
                    keep(m)
            elif ep is not None and m.to_sq == ep and pawns & (1 << f):
                # En passant can expose the king along the cleared rank.
                if not _leaves_king_in_check(bbs, white, ep, m):
                    keep(m)
            else:
                mask = pins.get(f)
                if mask is None or mask & (1 << m.to_sq):
                    keep(m)
    legal.sort()
    return legal


def _apply_unchecked(state: BoardState, move: Move) -> BoardState:
    bbs = list(state.bitboards)
    white = state.white_to_move
    base = 0 if white else 6
    ebase = 6 - base
    f, t = move.from_sq, move.to_sq
    fb, tb = 1 << f, 1 << t

    mover = base
    while not bbs[mover] & fb:
        mover += 1
    capture = False
    for i in range(ebase, ebase + 6):
        if bbs[i] & tb:
            bbs[i] ^= tb
            capture = True
            break
    is_pawn = mover == base
    if is_pawn and not capture and state.ep_square is not None and t == state.ep_square:
        bbs[ebase] ^= 1 << (t - 8 if white else t + 8)
        capture = True

    bbs[mover] ^= fb
    if move.promotion:
        bbs[base + move.promotion] |= tb
    else:
        bbs[mover] |= tb
    if mover == base + 5 and abs((t & 7) - (f & 7)) == 2:
        if t > f:
            bbs[base + 3] ^= (1 << (f + 3)) | (1 << (f + 1))
        else:
            bbs[base + 3] ^= (1 << (f - 4)) | (1 << (f - 1))

    castling = state.castling
    if castling:
        if f == 4:
            castling &= ~(CASTLE_WK | CASTLE_WQ)
        elif f == 60:
            castling &= ~(CASTLE_BK | CASTLE_BQ)
        if f == 0 or t == 0:
            castling &= ~CASTLE_WQ
        if f == 7 or t == 7:
            castling &= ~CASTLE_WK
        if f == 56 or t == 56:
            castling &= ~CASTLE_BQ
        if f == 63 or t == 63:
            castling &= ~CASTLE_BK

    ep = (f + t) >> 1 if is_pawn and abs(t - f) == 16 else None
    halfmove = 0 if (is_pawn or capture) else state.halfmove_clock + 1
    fullmove = state.fullmove_number + (0 if white else 1)
    return BoardState(tuple(bbs), not white, castling, ep, halfmove, fullmove)


def apply_move(state: BoardState, move: Move) -> BoardState:
    """Apply a legal move, with full bookkeeping (castling rights, en
    passant, halfmove clock, move number).

    Raises:
        IllegalMoveError: if `move` is not legal in `state`.
    """
    if move not in legal_moves(state):
        raise IllegalMoveError(f"{move.uci()} is not legal in {to_fen(state)}")
    return _apply_unchecked(state, move)


def perft(state: BoardState, depth: int) -> int:
    """Count leaf nodes of the legal-move tree to `depth`."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return 1
    moves = legal_moves(state)
    if depth == 1:
        return len(moves)
    return sum(perft(_apply_unchecked(state, m), depth - 1) for m in moves)
