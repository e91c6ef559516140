"""Zobrist hashing of positions and reduction of hashes to bucket ids.

Tables come from ``numpy.random.Generator(PCG64(seed))``: 781 unsigned 64-bit
draws taken in one call and laid out in this order:

    piece_square  768  plane-major (plane = color * 6 + kind), then square
    side_to_move    1  XOR-ed in when white is to move
    castling        4  K, Q, k, q
    en_passant      8  files a..h

Keys depend on piece kind and color only, never on piece id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .board import CASTLE, DOUBLE_PUSH, EMPTY, EN_PASSANT, PAWN, WHITE, Move, Position, castling_after, ep_capturable

DEFAULT_SEED = 20180801
MAX_BUCKETS = 32768
NUM_ENTRIES = 12 * 64 + 1 + 4 + 8


class InvalidBucketCount(ValueError):
    pass


@dataclass(frozen=True)
class ZobristTables:
    piece_square: tuple  # 12 tuples of 64 ints
    side_to_move: int
    castling: tuple  # 4 ints
    en_passant_file: tuple  # 8 ints
    seed: int

    def entries(self) -> list[int]:
        flat = [v for plane in self.piece_square for v in plane]
        return flat + [self.side_to_move, *self.castling, *self.en_passant_file]


def init_tables(seed: int = DEFAULT_SEED) -> ZobristTables:
    rng = np.random.Generator(np.random.PCG64(seed))
    raw = rng.integers(0, 2**64, size=NUM_ENTRIES, dtype=np.uint64, endpoint=False)
    vals = [int(v) for v in raw]
    piece_square = tuple(tuple(vals[p * 64:(p + 1) * 64]) for p in range(12))
    return ZobristTables(
        piece_square=piece_square,
        side_to_move=vals[768],
        castling=tuple(vals[769:773]),
        en_passant_file=tuple(vals[773:781]),
        seed=seed,
    )


def _castling_term(t: ZobristTables, rights: int) -> int:
    h = 0
    for bit in range(4):
        if rights >> bit & 1:
            h ^= t.castling[bit]
    return h


def full_hash(pos: Position, t: ZobristTables) -> int:
    h = 0
    ps = t.piece_square
    for sq, p in enumerate(pos.board):
        if p != EMPTY:
            h ^= ps[p][sq]
    if pos.turn == WHITE:
        h ^= t.side_to_move
    h ^= _castling_term(t, pos.castling)
    if pos.ep is not None:
        h ^= t.en_passant_file[pos.ep & 7]
    return h


def incremental_update(h: int, before: Position, m: Move, t: ZobristTables) -> int:
    """Hash of the position after ``m`` from the hash before it.

    ``m`` must carry its flags (as produced by ``legal_moves``).
    """
    ps = t.piece_square
    board = before.board
    s, tg = m.source, m.target
    moved = board[s]
    us = before.turn
    h ^= ps[moved][s]
    if m.promotion is not None:
        h ^= ps[us * 6 + m.promotion][tg]
    else:
        h ^= ps[moved][tg]
    captured = board[tg]
    if captured != EMPTY:
        h ^= ps[captured][tg]
    if m.flags & EN_PASSANT:
        cap = tg - 8 if us == WHITE else tg + 8
        h ^= ps[(1 - us) * 6 + PAWN][cap]
    elif m.flags & CASTLE:
        rs, rt = (tg + 1, tg - 1) if tg > s else (tg - 2, tg + 1)
        rook = board[rs]
        h ^= ps[rook][rs] ^ ps[rook][rt]
    h ^= t.side_to_move
    new_rights = castling_after(before.castling, s, tg)
    h ^= _castling_term(t, before.castling ^ new_rights)
    if before.ep is not None:
        h ^= t.en_passant_file[before.ep & 7]
    if m.flags & DOUBLE_PUSH and ep_capturable(board, tg, us):
        h ^= t.en_passant_file[s & 7]
    return h


def check_bucket_count(num_buckets: int) -> int:
    if (
        not isinstance(num_buckets, (int, np.integer))
        or isinstance(num_buckets, bool)
        or not 1 <= num_buckets <= MAX_BUCKETS
        or num_buckets & (num_buckets - 1)
    ):
        raise InvalidBucketCount(f"bucket count must be a power of two in [1, {MAX_BUCKETS}], got {num_buckets!r}")
    return int(num_buckets)


def bucket(h: int, num_buckets: int) -> int:
    """Low bits of the hash; always 0 with a single bucket."""
    return h & (check_bucket_count(num_buckets) - 1)
