"""Move and game records, and the line-oriented ``.mlog`` file format.

An ``.mlog`` file is UTF-8 text with one JSON object per line.  The first
line is the header::

    {"format": "piecevec-mlog", "version": 1, "zobrist_seed": 20180801,
     "num_buckets": null, "filtered": false}

Each game follows as its move lines in ply order and then one result line::

    {"type": "move", "game": 1, "ply": 1, "color": "w", "piece": 13,
     "kind": "P", "uci": "e2e4", "source": 12, "target": 28,
     "move_index": 796, "hash": "1234...", "bucket": 5}
    {"type": "result", "game": 1, "result": "white-win",
     "termination": "checkmate", "plies": 57}

``hash`` is the Zobrist hash (unsigned 64-bit, decimal string) of the
position the move was played from, under ``zobrist_seed``.  ``bucket`` is
present only once the file has been annotated; ``start_fen`` appears on the
result line for games that did not start from the standard position.
"""

from __future__ import annotations

import dataclasses
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .board import (
    KIND_CHARS,
    WHITE,
    IllegalMove,
    Move,
    Position,
    infer_move,
    initial_position,
    make_move,
)

FORMAT_NAME = "piecevec-mlog"
FORMAT_VERSION = 1


class MoveLogError(ValueError):
    pass


class Result(str, enum.Enum):
    WHITE_WIN = "white-win"
    BLACK_WIN = "black-win"
    DRAW = "draw"


@dataclass(frozen=True)
class MoveRecord:
    game_id: int
    ply: int
    color: str  # "w" or "b"
    piece: int  # white piece id, 0 for black movers
    kind: str  # moving piece kind before the move, upper case
    uci: str
    source: int
    target: int
    move_index: int
    hash: int
    bucket: Optional[int] = None

    def to_json(self) -> dict:
        d = {
            "type": "move",
            "game": self.game_id,
            "ply": self.ply,
            "color": self.color,
            "piece": self.piece,
            "kind": self.kind,
            "uci": self.uci,
            "source": self.source,
            "target": self.target,
            "move_index": self.move_index,
            "hash": str(self.hash),
        }
        if self.bucket is not None:
            d["bucket"] = self.bucket
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MoveRecord":
        return cls(
            game_id=d["game"],
            ply=d["ply"],
            color=d["color"],
            piece=d["piece"],
            kind=d["kind"],
            uci=d["uci"],
            source=d["source"],
            target=d["target"],
            move_index=d["move_index"],
            hash=int(d["hash"]),
            bucket=d.get("bucket"),
        )


@dataclass
class GameRecord:
    game_id: int
    moves: list[MoveRecord]
    result: Result
    termination: str
    start_fen: Optional[str] = None
    tags: dict = field(default_factory=dict)

    def white_moves(self) -> list[MoveRecord]:
        return [m for m in self.moves if m.color == "w"]

    def start_position(self) -> Position:
        return initial_position() if self.start_fen is None else Position.from_fen(self.start_fen)

    def replay(self) -> Iterator[tuple[MoveRecord, Position]]:
        """Yield each record with the position it was played from.

        Flags are inferred from geometry, so this trusts the log; use
        ``board.apply_move`` for a validating replay.
        """
        pos = self.start_position()
        for rec in self.moves:
            yield rec, pos
            m = Move.from_uci(rec.uci)
            if m.source != rec.source or m.target != rec.target:
                raise MoveLogError(f"game {self.game_id} ply {rec.ply}: uci does not match squares")
            try:
                pos = make_move(pos, infer_move(pos, m))
            except IllegalMove as e:
                raise MoveLogError(f"game {self.game_id} ply {rec.ply}: {e}") from e

    def final_position(self) -> Position:
        pos = self.start_position()
        for rec in self.moves:
            pos = make_move(pos, infer_move(pos, Move.from_uci(rec.uci)))
        return pos


def make_record(game_id: int, ply: int, pos: Position, m: Move, h: int) -> MoveRecord:
    p = pos.board[m.source]
    return MoveRecord(
        game_id=game_id,
        ply=ply,
        color="w" if pos.turn == WHITE else "b",
        piece=pos.ids[m.source],
        kind=KIND_CHARS[p % 6].upper(),
        uci=m.uci(),
        source=m.source,
        target=m.target,
        move_index=64 * m.source + m.target,
        hash=h,
    )


def header(zobrist_seed: int, num_buckets: Optional[int] = None, filtered: bool = False, **extra) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "zobrist_seed": zobrist_seed,
        "num_buckets": num_buckets,
        "filtered": filtered,
        **extra,
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


class MoveLogWriter:
    """Streams games to an ``.mlog`` file; usable as a context manager."""

    def __init__(self, path_or_file, head: dict):
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            self._fh = open(path_or_file, "w", encoding="utf-8", newline="\n")
            self._owned = True
        else:
            self._fh = path_or_file
            self._owned = False
        self._fh.write(_dumps(head) + "\n")

    def write_game(self, game: GameRecord) -> None:
        lines = [_dumps(m.to_json()) for m in game.moves]
        trailer = {
            "type": "result",
            "game": game.game_id,
            "result": Result(game.result).value,
            "termination": str(getattr(game.termination, "value", game.termination)),
            "plies": len(game.moves),
        }
        if game.start_fen is not None:
            trailer["start_fen"] = game.start_fen
        if game.tags:
            trailer["tags"] = game.tags
        lines.append(_dumps(trailer))
        self._fh.write("\n".join(lines) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._owned:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_mlog(path, games: Iterable[GameRecord], head: dict) -> None:
    with MoveLogWriter(path, head) as w:
        for g in games:
            w.write_game(g)


def read_mlog(path) -> tuple[dict, list[GameRecord]]:
    with open(path, encoding="utf-8") as fh:
        return _parse(fh)


def loads_mlog(text: str) -> tuple[dict, list[GameRecord]]:
    return _parse(io.StringIO(text))


def _parse(fh) -> tuple[dict, list[GameRecord]]:
    first = fh.readline()
    try:
        head = json.loads(first)
    except json.JSONDecodeError as e:
        raise MoveLogError(f"line 1: bad header: {e}") from e
    if head.get("format") != FORMAT_NAME:
        raise MoveLogError(f"not a move log (format={head.get('format')!r})")
    if head.get("version") != FORMAT_VERSION:
        raise MoveLogError(f"unsupported move log version {head.get('version')!r}")
    games, pending = [], []
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MoveLogError(f"line {lineno}: {e}") from e
        kind = obj.get("type")
        if kind == "move":
            rec = MoveRecord.from_json(obj)
            if pending and (rec.game_id != pending[-1].game_id or rec.ply <= pending[-1].ply):
                raise MoveLogError(f"line {lineno}: moves must be grouped by game with increasing ply")
            pending.append(rec)
        elif kind == "result":
            gid = obj["game"]
            if pending and pending[0].game_id != gid:
                raise MoveLogError(f"line {lineno}: result for game {gid} follows moves of game {pending[0].game_id}")
            games.append(
                GameRecord(
                    game_id=gid,
                    moves=pending,
                    result=Result(obj["result"]),
                    termination=obj["termination"],
                    start_fen=obj.get("start_fen"),
                    tags=obj.get("tags", {}),
                )
            )
            pending = []
        else:
            raise MoveLogError(f"line {lineno}: unknown record type {kind!r}")
    if pending:
        raise MoveLogError(f"game {pending[0].game_id} has no result line")
    return head, games


def with_bucket(rec: MoveRecord, b: Optional[int]) -> MoveRecord:
    return dataclasses.replace(rec, bucket=b)
