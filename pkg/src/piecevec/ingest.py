"""Game ingestion: PGN parsing, white-win filtering, bucket annotation."""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .board import (
    CASTLE,
    KIND_CHARS,
    KING,
    PAWN,
    Move,
    Position,
    Status,
    apply_move,
    game_status,
    infer_move,
    initial_position,
    legal_moves,
    make_move,
    parse_square,
)
from .records import GameRecord, MoveRecord, Result, make_record, with_bucket
from .zobrist import DEFAULT_SEED, ZobristTables, check_bucket_count, full_hash, incremental_update, init_tables

log = logging.getLogger(__name__)

RESULT_TAGS = {"1-0": Result.WHITE_WIN, "0-1": Result.BLACK_WIN, "1/2-1/2": Result.DRAW}


class PgnSyntaxError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class IllegalSanMove(ValueError):
    def __init__(self, msg: str, game: int, ply: int):
        super().__init__(f"game {game} ply {ply}: {msg}")
        self.game = game
        self.ply = ply


# --- SAN -------------------------------------------------------------------

_SAN_RE = re.compile(
    r"^(?P<piece>[NBRQK])?(?P<ff>[a-h])?(?P<fr>[1-8])?(?P<cap>x)?(?P<to>[a-h][1-8])(?:=?(?P<promo>[NBRQ]))?$"
)


def parse_san(pos: Position, san: str) -> Move:
    """Resolve a SAN token to the unique legal move it denotes."""
    token = san.rstrip("+#!?")
    moves = legal_moves(pos)
    if token in ("O-O", "0-0", "O-O-O", "0-0-0"):
        long = token.count("-") == 2
        for m in moves:
            if m.flags & CASTLE and (m.target & 7) == (2 if long else 6):
                return m
        raise ValueError(f"castling {san!r} not legal")
    match = _SAN_RE.match(token)
    if not match:
        raise ValueError(f"unparseable SAN {san!r}")
    kind = KIND_CHARS.index(match["piece"].lower()) if match["piece"] else PAWN
    target = parse_square(match["to"])
    promo = KIND_CHARS.index(match["promo"].lower()) if match["promo"] else None
    ff = "abcdefgh".index(match["ff"]) if match["ff"] else None
    fr = int(match["fr"]) - 1 if match["fr"] else None
    found = []
    for m in moves:
        if m.target != target or pos.board[m.source] % 6 != kind or m.promotion != promo:
            continue
        if kind == KING and m.flags & CASTLE:
            continue
        if ff is not None and m.source & 7 != ff:
            continue
        if fr is not None and m.source >> 3 != fr:
            continue
        found.append(m)
    if not found:
        raise ValueError(f"no legal move matches {san!r}")
    if len(found) > 1:
        raise ValueError(f"ambiguous SAN {san!r}")
    return found[0]


def to_san(pos: Position, m: Move) -> str:
    """Render a legal move in SAN (used for reports and round-trip tests)."""
    if m.flags & CASTLE:
        s = "O-O" if m.target & 7 == 6 else "O-O-O"
    else:
        kind = pos.board[m.source] % 6
        capture = pos.board[m.target] != -1 or (kind == PAWN and m.source & 7 != m.target & 7)
        to = "abcdefgh"[m.target & 7] + str((m.target >> 3) + 1)
        if kind == PAWN:
            s = ("abcdefgh"[m.source & 7] + "x" if capture else "") + to
            if m.promotion is not None:
                s += "=" + KIND_CHARS[m.promotion].upper()
        else:
            rivals = [
                o for o in legal_moves(pos)
                if o.target == m.target and o.source != m.source and pos.board[o.source] == pos.board[m.source]
            ]
            dis = ""
            if rivals:
                if all(o.source & 7 != m.source & 7 for o in rivals):
                    dis = "abcdefgh"[m.source & 7]
                elif all(o.source >> 3 != m.source >> 3 for o in rivals):
                    dis = str((m.source >> 3) + 1)
                else:
                    dis = "abcdefgh"[m.source & 7] + str((m.source >> 3) + 1)
            s = KIND_CHARS[kind].upper() + dis + ("x" if capture else "") + to
    after = make_move(pos, m)
    if after.in_check():
        s += "#" if not legal_moves(after) else "+"
    return s


# --- PGN -------------------------------------------------------------------

_TAG_RE = re.compile(r'^\[(\w+)\s+"((?:[^"\\]|\\.)*)"\]\s*$')
_TOKEN_RE = re.compile(
    r"""(?P<comment>\{[^}]*\})|(?P<line_comment>;[^\n]*)|(?P<open>\()|(?P<close>\))|(?P<nag>\$\d+)"""
    r"""|(?P<result>1-0|0-1|1/2-1/2|\*)|(?P<number>\d+\.+)|(?P<san>[^\s(){};]+)|(?P<bad>\S)"""
)


def _split_games(text: str):
    """Yield (first_line_number, tags, movetext_lines) per game."""
    tags, body, start = {}, [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if stripped.startswith("["):
            if body:
                yield start, tags, body
                tags, body, start = {}, [], None
            m = _TAG_RE.match(stripped)
            if not m:
                raise PgnSyntaxError(f"malformed tag {stripped!r}", lineno)
            tags[m.group(1)] = m.group(2).replace('\\"', '"')
        else:
            body.append((lineno, line))
        if start is None:
            start = lineno
    if tags or body:
        yield start, tags, body


def parse_pgn(
    data,
    tables: Optional[ZobristTables] = None,
    errors: str = "raise",
    rejected: Optional[list] = None,
    first_game_id: int = 1,
) -> list[GameRecord]:
    """Parse PGN text (or bytes) into game records, mainline only.

    Comments, NAGs and variations are skipped.  Record hashes use ``tables``
    (default seed when omitted).  With ``errors="skip"``, games with illegal
    or unparseable SAN are logged, appended to ``rejected`` as
    ``(game_id, message)`` and left out; the default raises.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    if tables is None:
        tables = init_tables(DEFAULT_SEED)
    games = []
    gid = first_game_id
    for start, tags, body in _split_games(data):
        try:
            games.append(_parse_game(gid, tags, body, tables))
        except IllegalSanMove as e:
            if errors == "raise":
                raise
            log.warning("rejected PGN game starting at line %d: %s", start, e)
            if rejected is not None:
                rejected.append((gid, str(e)))
        gid += 1
    return games


def _parse_game(gid: int, tags: dict, body, tables: ZobristTables) -> GameRecord:
    start_fen = tags.get("FEN") if tags.get("SetUp", "1") == "1" else None
    pos = Position.from_fen(start_fen) if start_fen else initial_position()
    h = full_hash(pos, tables)
    records = []
    depth = 0
    result_token = None
    text = "\n".join(line for _, line in body)
    first_line = body[0][0] if body else 0

    def line_of(offset):
        return first_line + text.count("\n", 0, offset)

    for tok in _TOKEN_RE.finditer(text):
        kind = tok.lastgroup
        if kind == "bad":
            raise PgnSyntaxError(f"unexpected {tok.group()!r}", line_of(tok.start()))
        if kind == "open":
            depth += 1
        elif kind == "close":
            depth -= 1
            if depth < 0:
                raise PgnSyntaxError("unbalanced ')'", line_of(tok.start()))
        elif depth or kind in ("comment", "line_comment", "nag", "number"):
            continue
        elif kind == "result":
            result_token = tok.group()
        elif kind == "san":
            ply = len(records) + 1
            try:
                m = parse_san(pos, tok.group())
            except ValueError as e:
                raise IllegalSanMove(str(e), gid, ply) from e
            records.append(make_record(gid, ply, pos, m, h))
            h = incremental_update(h, pos, m, tables)
            pos = make_move(pos, m)
    if depth:
        raise PgnSyntaxError("unbalanced '('", line_of(len(text)))
    result_str = tags.get("Result", result_token or "*")
    result = RESULT_TAGS.get(result_str)
    if result is None:
        result = RESULT_TAGS.get(result_token or "*", Result.DRAW)
    status = game_status(pos)
    return GameRecord(
        game_id=gid,
        moves=records,
        result=result,
        termination=status.value,
        start_fen=start_fen,
        tags={k: tags[k] for k in ("Event", "White", "Black", "Result") if k in tags},
    )


def rehash(game: GameRecord, tables: ZobristTables) -> GameRecord:
    """Recompute every record's pre-move hash under ``tables``."""
    out = []
    h = None
    prev = None
    for rec, pos in game.replay():
        if prev is None:
            h = full_hash(pos, tables)
        else:
            h = incremental_update(h, prev[1], prev[0], tables)
        out.append(dataclasses.replace(rec, hash=h))
        prev = (infer_move(pos, Move.from_uci(rec.uci)), pos)
    return dataclasses.replace(game, moves=out)


# --- filtering and annotation --------------------------------------------------

@dataclass
class FilteredDataset:
    """White moves from white-won games.

    ``games`` keeps the full move lists so positions can be replayed;
    ``records`` are the white-move records (optionally bucket-annotated).
    """

    games: list[GameRecord]
    records: list[MoveRecord]
    zobrist_seed: Optional[int] = None
    num_buckets: Optional[int] = None
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)


def filter_white_wins(games: Iterable[GameRecord], zobrist_seed: Optional[int] = None) -> FilteredDataset:
    games = list(games)
    kept = [g for g in games if Result(g.result) is Result.WHITE_WIN]
    records = [r for g in kept for r in g.moves if r.color == "w"]
    summary = {
        "games_in": len(games),
        "games_kept": len(kept),
        "games_dropped": len(games) - len(kept),
        "records_kept": len(records),
    }
    return FilteredDataset(kept, records, zobrist_seed, None, summary)


def dataset_from_games(games: Iterable[GameRecord], zobrist_seed: Optional[int] = None, num_buckets: Optional[int] = None) -> FilteredDataset:
    """Wrap already-filtered games (e.g. read back from a filtered move log)."""
    ds = filter_white_wins(games, zobrist_seed)
    ds.num_buckets = num_buckets
    return ds


def annotate_buckets(ds: FilteredDataset, tables: ZobristTables, num_buckets: int) -> FilteredDataset:
    """Attach a bucket id to every record from the hash of its pre-move position.

    Stored hashes are used when they were computed with the same table seed;
    otherwise the games are replayed and rehashed.
    """
    num_buckets = check_bucket_count(num_buckets)
    mask = num_buckets - 1
    if ds.zobrist_seed == tables.seed:
        games = ds.games
    else:
        games = [rehash(g, tables) for g in ds.games]
    new_games = [dataclasses.replace(g, moves=[with_bucket(r, r.hash & mask) for r in g.moves]) for g in games]
    records = [r for g in new_games for r in g.moves if r.color == "w"]
    return FilteredDataset(new_games, records, tables.seed, num_buckets, dict(ds.summary))


def replay_game(game: GameRecord) -> Status:
    """Validating replay: every move must be legal; returns the final status."""
    pos = game.start_position()
    for rec in game.moves:
        pos = apply_move(pos, Move.from_uci(rec.uci))
    return game_status(pos)

