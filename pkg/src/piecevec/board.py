"""Mailbox chess rules with per-piece identity tracking.

Squares are numbered ``file + 8 * rank`` (a1=0, h1=7, a8=56, h8=63).  Every
occupied square carries a plane code ``color * 6 + kind`` (the 12 bitboard
planes) and a piece id.  White pieces get ids 1..16 from their starting
square; black pieces always have id 0.  Ids survive promotion and are never
reused after a capture.

Positions are immutable; ``apply_move`` returns a new position.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Optional

WHITE, BLACK = 0, 1
PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING = range(6)
EMPTY = -1

KIND_CHARS = "pnbrqk"
KIND_NAMES = ("pawn", "knight", "bishop", "rook", "queen", "king")
FILES = "abcdefgh"

# Move flags
QUIET = 0
CAPTURE = 1
CASTLE = 2
EN_PASSANT = 4
DOUBLE_PUSH = 8

# Castling right bits
WK, WQ, BK, BQ = 1, 2, 4, 8

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

# Fixed id per white starting square: 1=Ra1 ... 8=Rh1, 9..16 = pawns a2..h2.
INITIAL_IDS = {sq: sq + 1 for sq in range(16)}
HOME_KIND = {sq: k for sq, k in enumerate((ROOK, KNIGHT, BISHOP, QUEEN, KING, BISHOP, KNIGHT, ROOK))}
HOME_KIND.update({sq: PAWN for sq in range(8, 16)})
PIECE_LABELS = {
    i + 1: "RNBQKBNR"[i] + FILES[i] + "1" if i < 8 else "P" + FILES[i - 8] + "2"
    for i in range(16)
}


class IllegalMove(ValueError):
    pass


class InvalidPosition(ValueError):
    pass


class Status(str, enum.Enum):
    ONGOING = "ongoing"
    CHECKMATE = "checkmate"
    STALEMATE = "stalemate"
    REPETITION = "draw-repetition"
    FIFTY_MOVE = "draw-50move"
    PLY_CAP = "ply-cap"


class Move(NamedTuple):
    source: int
    target: int
    promotion: Optional[int] = None
    flags: int = QUIET

    def uci(self) -> str:
        s = square_name(self.source) + square_name(self.target)
        if self.promotion is not None:
            s += KIND_CHARS[self.promotion]
        return s

    @property
    def index(self) -> int:
        return move_index(self.source, self.target)

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        """Parse long algebraic notation such as ``e2e4`` or ``e7e8q``.

        The result carries no flags; ``apply_move`` resolves them against the
        legal move list.
        """
        text = text.strip()
        if len(text) not in (4, 5):
            raise ValueError(f"bad UCI move {text!r}")
        promo = None
        if len(text) == 5:
            if text[4] not in "nbrq":
                raise ValueError(f"bad promotion in {text!r}")
            promo = KIND_CHARS.index(text[4])
        return cls(parse_square(text[:2]), parse_square(text[2:4]), promo)


class Occupant(NamedTuple):
    kind: int
    color: int
    piece_id: int


def square_name(sq: int) -> str:
    return FILES[sq & 7] + str((sq >> 3) + 1)


def parse_square(name: str) -> int:
    if len(name) != 2 or name[0] not in FILES or name[1] not in "12345678":
        raise ValueError(f"bad square {name!r}")
    return FILES.index(name[0]) + 8 * (int(name[1]) - 1)


def move_index(source: int, target: int) -> int:
    return 64 * source + target


def decode_move_index(index: int) -> tuple[int, int]:
    if not 0 <= index < 4096:
        raise ValueError(f"move index out of range: {index}")
    return index >> 6, index & 63


def move_index_name(index: int) -> str:
    s, t = decode_move_index(index)
    return square_name(s) + square_name(t)


# --- precomputed geometry -------------------------------------------------

def _steps(deltas):
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        out = []
        for df, dr in deltas:
            nf, nr = f + df, r + dr
            if 0 <= nf < 8 and 0 <= nr < 8:
                out.append(nf + 8 * nr)
        table.append(tuple(out))
    return tuple(table)


def _rays(deltas):
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        rays = []
        for df, dr in deltas:
            ray = []
            nf, nr = f + df, r + dr
            while 0 <= nf < 8 and 0 <= nr < 8:
                ray.append(nf + 8 * nr)
                nf += df
                nr += dr
            if ray:
                rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


KNIGHT_STEPS = _steps([(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)])
KING_STEPS = _steps([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)])
ORTHO_RAYS = _rays([(1, 0), (-1, 0), (0, 1), (0, -1)])
DIAG_RAYS = _rays([(1, 1), (-1, 1), (1, -1), (-1, -1)])
# PAWN_ATTACKERS[color][sq]: squares from which a pawn of `color` attacks sq.
PAWN_ATTACKERS = (_steps([(-1, -1), (1, -1)]), _steps([(-1, 1), (1, 1)]))
PAWN_CAPTURES = (_steps([(-1, 1), (1, 1)]), _steps([(-1, -1), (1, -1)]))

# Castling rights cleared when a move touches these squares.
_RIGHTS_MASK = [0] * 64
_RIGHTS_MASK[0] = WQ
_RIGHTS_MASK[7] = WK
_RIGHTS_MASK[4] = WK | WQ
_RIGHTS_MASK[56] = BQ
_RIGHTS_MASK[63] = BK
_RIGHTS_MASK[60] = BK | BQ


def castling_after(rights: int, source: int, target: int) -> int:
    return rights & ~(_RIGHTS_MASK[source] | _RIGHTS_MASK[target])


def is_attacked(board, sq: int, by: int) -> bool:
    """True if any piece of color ``by`` attacks ``sq``."""
    base = by * 6
    knight = base + KNIGHT
    for t in KNIGHT_STEPS[sq]:
        if board[t] == knight:
            return True
    pawn = base + PAWN
    for t in PAWN_ATTACKERS[by][sq]:
        if board[t] == pawn:
            return True
    king = base + KING
    for t in KING_STEPS[sq]:
        if board[t] == king:
            return True
    rook, queen, bishop = base + ROOK, base + QUEEN, base + BISHOP
    for ray in ORTHO_RAYS[sq]:
        for t in ray:
            p = board[t]
            if p != EMPTY:
                if p == rook or p == queen:
                    return True
                break
    for ray in DIAG_RAYS[sq]:
        for t in ray:
            p = board[t]
            if p != EMPTY:
                if p == bishop or p == queen:
                    return True
                break
    return False


# --- position --------------------------------------------------------------

class Position:
    """Immutable game state.

    ``board`` and ``ids`` are 64-tuples.  ``history`` holds the repetition
    keys seen since the last irreversible move, current position included.
    """

    __slots__ = ("board", "ids", "turn", "castling", "ep", "halfmove", "fullmove", "history", "_key")

    def __init__(self, board, ids, turn=WHITE, castling=0, ep=None, halfmove=0, fullmove=1, history=None):
        self.board = tuple(board)
        self.ids = tuple(ids)
        self.turn = turn
        self.castling = castling
        self.ep = ep
        self.halfmove = halfmove
        self.fullmove = fullmove
        self._key = (self.board, turn, castling, ep)
        self.history = (self._key,) if history is None else history

    @property
    def key(self):
        """Repetition key: occupancy, side to move, castling rights, en passant."""
        return self._key

    def __eq__(self, other):
        return isinstance(other, Position) and self._key == other._key and self.ids == other.ids

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Position({self.fen()!r})"

    def piece_at(self, sq: int) -> Optional[Occupant]:
        p = self.board[sq]
        if p == EMPTY:
            return None
        return Occupant(p % 6, p // 6, self.ids[sq])

    def king_square(self, color: int) -> int:
        return self.board.index(color * 6 + KING)

    def in_check(self) -> bool:
        return is_attacked(self.board, self.king_square(self.turn), 1 - self.turn)

    def white_ids(self) -> list[int]:
        return [i for i in self.ids if i]

    def bitboards(self) -> list[int]:
        """The 12 occupancy planes as 64-bit masks, indexed by ``color * 6 + kind``."""
        planes = [0] * 12
        for sq, p in enumerate(self.board):
            if p != EMPTY:
                planes[p] |= 1 << sq
        return planes

    def fen(self) -> str:
        rows = []
        for rank in range(7, -1, -1):
            row, gap = "", 0
            for f in range(8):
                p = self.board[f + 8 * rank]
                if p == EMPTY:
                    gap += 1
                    continue
                if gap:
                    row += str(gap)
                    gap = 0
                c = KIND_CHARS[p % 6]
                row += c.upper() if p < 6 else c
            if gap:
                row += str(gap)
            rows.append(row)
        rights = "".join(ch for bit, ch in ((WK, "K"), (WQ, "Q"), (BK, "k"), (BQ, "q")) if self.castling & bit) or "-"
        ep = square_name(self.ep) if self.ep is not None else "-"
        return f"{'/'.join(rows)} {'wb'[self.turn]} {rights} {ep} {self.halfmove} {self.fullmove}"

    @classmethod
    def from_fen(cls, fen: str, ids=None, validate: bool = True) -> "Position":
        """Build a position from FEN.

        White pieces standing on their home square with the home kind get the
        fixed starting id; the rest receive the unused ids in square order.
        Pass ``ids`` (a 64-sequence) to override.
        """
        parts = fen.split()
        if len(parts) < 4:
            raise InvalidPosition(f"FEN needs at least 4 fields: {fen!r}")
        board = [EMPTY] * 64
        rows = parts[0].split("/")
        if len(rows) != 8:
            raise InvalidPosition(f"FEN board needs 8 ranks: {fen!r}")
        for i, row in enumerate(rows):
            rank, f = 7 - i, 0
            for ch in row:
                if ch.isdigit():
                    f += int(ch)
                    continue
                if ch.lower() not in KIND_CHARS or f > 7:
                    raise InvalidPosition(f"bad FEN rank {row!r}")
                kind = KIND_CHARS.index(ch.lower())
                board[f + 8 * rank] = kind + (0 if ch.isupper() else 6)
                f += 1
            if f != 8:
                raise InvalidPosition(f"bad FEN rank {row!r}")
        if parts[1] not in ("w", "b"):
            raise InvalidPosition(f"bad side to move {parts[1]!r}")
        turn = WHITE if parts[1] == "w" else BLACK
        castling = 0
        if parts[2] != "-":
            for ch in parts[2]:
                bit = {"K": WK, "Q": WQ, "k": BK, "q": BQ}.get(ch)
                if bit is None:
                    raise InvalidPosition(f"bad castling field {parts[2]!r}")
                castling |= bit
        ep = None if parts[3] == "-" else parse_square(parts[3])
        halfmove = int(parts[4]) if len(parts) > 4 else 0
        fullmove = int(parts[5]) if len(parts) > 5 else 1
        if ids is None:
            ids = assign_ids(board)
        pos = cls(board, ids, turn, castling, ep, halfmove, fullmove)
        if validate:
            validate_position(pos)
        return pos


def assign_ids(board) -> list[int]:
    ids = [0] * 64
    used = set()
    for sq, home in HOME_KIND.items():
        if board[sq] == home:  # white plane codes equal kinds
            ids[sq] = INITIAL_IDS[sq]
            used.add(ids[sq])
    spare = iter(i for i in range(1, 17) if i not in used)
    for sq, p in enumerate(board):
        if 0 <= p < 6 and not ids[sq]:
            ids[sq] = next(spare, 0)
            if not ids[sq]:
                raise InvalidPosition("more than 16 white pieces")
    return ids


def validate_position(pos: Position) -> None:
    if pos.board.count(KING) != 1 or pos.board.count(6 + KING) != 1:
        raise InvalidPosition("each side needs exactly one king")
    for sq in list(range(8)) + list(range(56, 64)):
        if pos.board[sq] in (PAWN, 6 + PAWN):
            raise InvalidPosition(f"pawn on back rank at {square_name(sq)}")
    if is_attacked(pos.board, pos.king_square(1 - pos.turn), pos.turn):
        raise InvalidPosition("side not to move is in check")


def initial_position() -> Position:
    return Position.from_fen(STARTING_FEN)


def occupant_piece(pos: Position, sq: int) -> int:
    """White piece id on ``sq``; 0 when empty or black."""
    return pos.ids[sq]


# --- move generation ---------------------------------------------------------

def pseudo_legal_moves(pos: Position) -> list[Move]:
    board, us = pos.board, pos.turn
    them = 1 - us
    moves = []
    add = moves.append
    lo, hi = us * 6, us * 6 + 6
    forward = 8 if us == WHITE else -8
    start_rank = 1 if us == WHITE else 6
    promo_rank = 7 if us == WHITE else 0
    for sq in range(64):
        p = board[sq]
        if not lo <= p < hi:
            continue
        kind = p - lo
        if kind == PAWN:
            t = sq + forward
            if board[t] == EMPTY:
                if t >> 3 == promo_rank:
                    for k in (QUEEN, ROOK, BISHOP, KNIGHT):
                        add(Move(sq, t, k, QUIET))
                else:
                    add(Move(sq, t, None, QUIET))
                    if sq >> 3 == start_rank and board[t + forward] == EMPTY:
                        add(Move(sq, t + forward, None, DOUBLE_PUSH))
            for t in PAWN_CAPTURES[us][sq]:
                q = board[t]
                if q != EMPTY and q // 6 == them:
                    if t >> 3 == promo_rank:
                        for k in (QUEEN, ROOK, BISHOP, KNIGHT):
                            add(Move(sq, t, k, CAPTURE))
                    else:
                        add(Move(sq, t, None, CAPTURE))
                elif t == pos.ep:
                    add(Move(sq, t, None, EN_PASSANT | CAPTURE))
        elif kind == KNIGHT or kind == KING:
            for t in (KNIGHT_STEPS if kind == KNIGHT else KING_STEPS)[sq]:
                q = board[t]
                if q == EMPTY:
                    add(Move(sq, t, None, QUIET))
                elif q // 6 == them:
                    add(Move(sq, t, None, CAPTURE))
        else:
            rays = ()
            if kind != BISHOP:
                rays = ORTHO_RAYS[sq]
            if kind != ROOK:
                rays = rays + DIAG_RAYS[sq]
            for ray in rays:
                for t in ray:
                    q = board[t]
                    if q == EMPTY:
                        add(Move(sq, t, None, QUIET))
                    else:
                        if q // 6 == them:
                            add(Move(sq, t, None, CAPTURE))
                        break
    # Castling: path empty, king not in check, transit squares not attacked.
    rights = pos.castling
    if us == WHITE:
        if rights & WK and board[4] == KING and board[7] == ROOK and board[5] == EMPTY and board[6] == EMPTY:
            if not (is_attacked(board, 4, them) or is_attacked(board, 5, them) or is_attacked(board, 6, them)):
                add(Move(4, 6, None, CASTLE))
        if rights & WQ and board[4] == KING and board[0] == ROOK and board[1] == board[2] == board[3] == EMPTY:
            if not (is_attacked(board, 4, them) or is_attacked(board, 3, them) or is_attacked(board, 2, them)):
                add(Move(4, 2, None, CASTLE))
    else:
        bk, br = 6 + KING, 6 + ROOK
        if rights & BK and board[60] == bk and board[63] == br and board[61] == EMPTY and board[62] == EMPTY:
            if not (is_attacked(board, 60, them) or is_attacked(board, 61, them) or is_attacked(board, 62, them)):
                add(Move(60, 62, None, CASTLE))
        if rights & BQ and board[60] == bk and board[56] == br and board[57] == board[58] == board[59] == EMPTY:
            if not (is_attacked(board, 60, them) or is_attacked(board, 59, them) or is_attacked(board, 58, them)):
                add(Move(60, 58, None, CASTLE))
    return moves


def legal_moves(pos: Position) -> list[Move]:
    board, us = pos.board, pos.turn
    them = 1 - us
    king = us * 6 + KING
    ksq = board.index(king)
    checked = is_attacked(board, ksq, them)
    out = []
    scratch = list(board)
    for m in pseudo_legal_moves(pos):
        s, t, flags = m.source, m.target, m.flags
        if flags & CASTLE:
            out.append(m)  # transit squares already verified
            continue
        # A non-king move that starts off every line through the king cannot
        # expose it, unless we are in check or it is en passant.
        if not checked and s != ksq and not flags & EN_PASSANT and not _aligned(s, ksq):
            out.append(m)
            continue
        moved = scratch[s]
        captured = scratch[t]
        scratch[t] = moved
        scratch[s] = EMPTY
        ep_sq = None
        if flags & EN_PASSANT:
            ep_sq = t - 8 if us == WHITE else t + 8
            ep_piece = scratch[ep_sq]
            scratch[ep_sq] = EMPTY
        if not is_attacked(scratch, t if s == ksq else ksq, them):
            out.append(m)
        scratch[s] = moved
        scratch[t] = captured
        if ep_sq is not None:
            scratch[ep_sq] = ep_piece
    return out


def _build_aligned():
    table = [[False] * 64 for _ in range(64)]
    for sq in range(64):
        for ray in ORTHO_RAYS[sq] + DIAG_RAYS[sq]:
            for t in ray:
                table[sq][t] = True
    return table


_ALIGNED = _build_aligned()


def _aligned(a: int, b: int) -> bool:
    return _ALIGNED[a][b]


def resolve_move(pos: Position, m: Move) -> Move:
    """Return the legal move matching ``m`` by source, target and promotion."""
    for legal in legal_moves(pos):
        if legal.source == m.source and legal.target == m.target and legal.promotion == m.promotion:
            return legal
    raise IllegalMove(f"{m.uci()} is not legal in {pos.fen()}")


def infer_move(pos: Position, m: Move) -> Move:
    """Fill in flags from board geometry without checking legality.

    Used to replay trusted move logs quickly.
    """
    board = pos.board
    p = board[m.source]
    if p == EMPTY:
        raise IllegalMove(f"no piece on {square_name(m.source)} for {m.uci()}")
    kind = p % 6
    flags = CAPTURE if board[m.target] != EMPTY else QUIET
    if kind == KING and abs(m.target - m.source) == 2:
        flags = CASTLE
    elif kind == PAWN:
        if abs(m.target - m.source) == 16:
            flags = DOUBLE_PUSH
        elif (m.target - m.source) % 8 and board[m.target] == EMPTY:
            flags = EN_PASSANT | CAPTURE
    return Move(m.source, m.target, m.promotion, flags)


def ep_capturable(board, target: int, us: int) -> bool:
    """Whether an enemy pawn stands beside a pawn that just double-pushed to ``target``.

    En passant is only recorded in that case, so repetition keys and hashes
    do not depend on captures that cannot happen.
    """
    enemy_pawn = (1 - us) * 6 + PAWN
    f = target & 7
    return (f > 0 and board[target - 1] == enemy_pawn) or (f < 7 and board[target + 1] == enemy_pawn)


def apply_move(pos: Position, m: Move) -> Position:
    """Play a legal move; raises IllegalMove otherwise."""
    return make_move(pos, resolve_move(pos, m))


def make_move(pos: Position, m: Move) -> Position:
    """Play ``m`` without a legality check.  ``m`` must carry correct flags."""
    board = list(pos.board)
    ids = list(pos.ids)
    us = pos.turn
    s, t, flags = m.source, m.target, m.flags
    moved = board[s]
    irreversible = moved % 6 == PAWN or board[t] != EMPTY
    board[t] = moved if m.promotion is None else us * 6 + m.promotion
    ids[t] = ids[s]
    board[s] = EMPTY
    ids[s] = 0
    if flags & EN_PASSANT:
        cap = t - 8 if us == WHITE else t + 8
        board[cap] = EMPTY
        ids[cap] = 0
    elif flags & CASTLE:
        rs, rt = (t + 1, t - 1) if t > s else (t - 2, t + 1)
        board[rt] = board[rs]
        ids[rt] = ids[rs]
        board[rs] = EMPTY
        ids[rs] = 0
    ep = (s + t) // 2 if flags & DOUBLE_PUSH and ep_capturable(board, t, us) else None
    castling = castling_after(pos.castling, s, t)
    halfmove = 0 if irreversible else pos.halfmove + 1
    fullmove = pos.fullmove + (us == BLACK)
    new = Position(board, ids, 1 - us, castling, ep, halfmove, fullmove, ())
    new.history = (new._key,) if irreversible else pos.history + (new._key,)
    return new


def game_status(pos: Position, moves: Optional[list[Move]] = None) -> Status:
    """Terminal classification.  Pass ``moves`` to reuse a legal move list."""
    if moves is None:
        moves = legal_moves(pos)
    if not moves:
        return Status.CHECKMATE if pos.in_check() else Status.STALEMATE
    if pos.halfmove >= 100:
        return Status.FIFTY_MOVE
    if pos.history.count(pos._key) >= 3:
        return Status.REPETITION
    return Status.ONGOING


def perft(pos: Position, depth: int) -> int:
    if depth == 0:
        return 1
    moves = legal_moves(pos)
    if depth == 1:
        return len(moves)
    return sum(perft(make_move(pos, m), depth - 1) for m in moves)
