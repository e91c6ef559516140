"""Engine-versus-engine data generation over the UCI protocol."""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import sys
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .board import WHITE, Move, Status, game_status, initial_position, legal_moves, make_move
from .engines import BUILTIN
from .records import GameRecord, Result, make_record
from .zobrist import DEFAULT_SEED, ZobristTables, full_hash, incremental_update, init_tables

log = logging.getLogger(__name__)

DEFAULT_MOVETIME_MS = 10
DEFAULT_MAX_PLIES = 600
STUB_COMMAND = f"{shlex.quote(sys.executable)} -m piecevec.engines"


class EngineError(RuntimeError):
    pass


class EngineProtocolError(EngineError):
    pass


class EngineTimeout(EngineError):
    pass


class IllegalEngineMove(EngineError):
    def __init__(self, uci: str, fen: str):
        super().__init__(f"engine proposed illegal move {uci} in {fen}")
        self.uci = uci
        self.fen = fen


@dataclass(frozen=True)
class EngineConfig:
    """How to launch one engine.

    ``path`` is a command line (split with shlex) or ``builtin:<mode>`` for
    an in-process stub mover.
    """

    path: str
    movetime: Optional[int] = None
    depth: Optional[int] = None
    options: dict = field(default_factory=dict)
    timeout: float = 30.0

    def __post_init__(self):
        if (self.movetime is None) == (self.depth is None):
            raise ValueError("exactly one of movetime/depth must be set")

    @classmethod
    def builtin(cls, mode: str = "random", movetime: int = DEFAULT_MOVETIME_MS, **options) -> "EngineConfig":
        return cls(f"builtin:{mode}", movetime=movetime, options=options)

    def to_dict(self) -> dict:
        return {"path": self.path, "movetime": self.movetime, "depth": self.depth, "options": dict(self.options)}


def parse_bestmove(line: str) -> Move:
    parts = line.split()
    if not parts or parts[0] != "bestmove" or len(parts) < 2:
        raise EngineProtocolError(f"expected bestmove, got {line!r}")
    token = parts[1]
    if token in ("(none)", "0000"):
        raise EngineProtocolError("engine reports no legal move")
    try:
        return Move.from_uci(token)
    except ValueError as e:
        raise EngineProtocolError(f"malformed move in {line!r}") from e


class UciSession:
    """A UCI engine child process.

    Lines from the engine are read on a background thread so every wait can
    time out.
    """

    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg
        self.options: dict[str, str] = {}
        self.name: Optional[str] = None
        try:
            self._proc = subprocess.Popen(
                shlex.split(cfg.path),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise EngineProtocolError(f"cannot start engine {cfg.path!r}: {e}") from e
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\r\n"))
        self._lines.put(None)

    def send(self, line: str) -> None:
        log.debug("> %s", line)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise EngineProtocolError(f"engine pipe closed while sending {line!r}") from e

    def read_until(self, prefix: str) -> list[str]:
        """Read lines up to and including the first starting with ``prefix``."""
        seen = []
        while True:
            try:
                line = self._lines.get(timeout=self.cfg.timeout)
            except queue.Empty:
                raise EngineTimeout(f"no {prefix!r} within {self.cfg.timeout}s") from None
            if line is None:
                raise EngineProtocolError(f"engine exited while waiting for {prefix!r}")
            log.debug("< %s", line)
            seen.append(line)
            if line.split(" ", 1)[0] == prefix:
                return seen

    def _handshake(self):
        self.send("uci")
        for line in self.read_until("uciok"):
            if line.startswith("id name "):
                self.name = line[8:]
            elif line.startswith("option name "):
                rest = line[12:]
                name = rest.split(" type ", 1)[0]
                self.options[name.lower()] = name
        for k, v in self.cfg.options.items():
            self.send(f"setoption name {k} value {v}")
        self.ready()

    def ready(self):
        self.send("isready")
        self.read_until("readyok")

    def new_game(self, seed: Optional[int] = None) -> None:
        self.send("ucinewgame")
        if seed is not None and "seed" in self.options:
            self.send(f"setoption name {self.options['seed']} value {seed}")
        self.ready()

    def set_position(self, fen: Optional[str] = None, moves=()) -> None:
        head = "position startpos" if fen is None else f"position fen {fen}"
        moves = list(moves)
        self.send(head + (" moves " + " ".join(moves) if moves else ""))

    def best_move(self) -> Move:
        if self.cfg.movetime is not None:
            self.send(f"go movetime {self.cfg.movetime}")
        else:
            self.send(f"go depth {self.cfg.depth}")
        return parse_bestmove(self.read_until("bestmove")[-1])

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self.send("quit")
                self._proc.wait(timeout=5)
            except (EngineError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()
        for fh in (self._proc.stdin, self._proc.stdout):
            try:
                fh.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BuiltinSession:
    """In-process stand-in for ``UciSession`` around a stub mover."""

    def __init__(self, cfg: EngineConfig):
        mode = cfg.path.split(":", 1)[1]
        if mode not in BUILTIN:
            raise EngineProtocolError(f"unknown builtin engine {mode!r}")
        self.cfg = cfg
        self.name = f"piecevec-{mode}"
        self.engine = BUILTIN[mode](int(cfg.options.get("Seed", 0)), float(cfg.options.get("Variety", 1.0)))

    def new_game(self, seed: Optional[int] = None) -> None:
        self.engine.new_game(seed)

    def set_position(self, fen=None, moves=()) -> None:
        self.engine.set_position(fen, moves)

    def best_move(self) -> Move:
        m = self.engine.best_move()
        if m is None:
            raise EngineProtocolError("engine reports no legal move")
        return Move(m.source, m.target, m.promotion)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def uci_session(cfg: EngineConfig):
    if cfg.path.startswith("builtin:"):
        return BuiltinSession(cfg)
    return UciSession(cfg)


def game_seed(seed: int, game_id: int, color: int) -> int:
    return int(np.random.SeedSequence([seed, game_id, color]).generate_state(1)[0])


def play_game(white, black, game_id: int, tables: ZobristTables, max_plies: int = DEFAULT_MAX_PLIES, seed: int = 0) -> GameRecord:
    """Play one game between two sessions.

    Raises IllegalEngineMove when an engine proposes a move not in the legal
    list.  A game reaching ``max_plies`` is recorded as a ply-cap draw.
    """
    white.new_game(game_seed(seed, game_id, 0))
    black.new_game(game_seed(seed, game_id, 1))
    pos = initial_position()
    h = full_hash(pos, tables)
    played: list[str] = []
    records = []
    while True:
        moves = legal_moves(pos)
        status = game_status(pos, moves)
        if status is not Status.ONGOING:
            break
        if len(played) >= max_plies:
            status = Status.PLY_CAP
            break
        side = white if pos.turn == WHITE else black
        side.set_position(None, played)
        proposal = side.best_move()
        chosen = next(
            (m for m in moves if m.source == proposal.source and m.target == proposal.target and m.promotion == proposal.promotion),
            None,
        )
        if chosen is None:
            raise IllegalEngineMove(proposal.uci(), pos.fen())
        records.append(make_record(game_id, len(played) + 1, pos, chosen, h))
        h = incremental_update(h, pos, chosen, tables)
        pos = make_move(pos, chosen)
        played.append(chosen.uci())
    if status is Status.CHECKMATE:
        result = Result.BLACK_WIN if pos.turn == WHITE else Result.WHITE_WIN
    else:
        result = Result.DRAW
    return GameRecord(game_id=game_id, moves=records, result=result, termination=status.value)


def _play_chunk(white_cfg, black_cfg, game_ids, max_plies, seed, zobrist_seed):
    tables = init_tables(zobrist_seed)
    out = []
    with uci_session(white_cfg) as white, uci_session(black_cfg) as black:
        for gid in game_ids:
            try:
                out.append(play_game(white, black, gid, tables, max_plies, seed))
            except IllegalEngineMove as e:
                log.warning("game %d aborted: %s", gid, e)
    return out


def run_selfplay(
    white: EngineConfig,
    black: EngineConfig,
    max_games: int,
    max_plies_per_game: int = DEFAULT_MAX_PLIES,
    seed: int = 0,
    zobrist_seed: int = DEFAULT_SEED,
    jobs: int = 1,
    chunk_size: int = 16,
) -> Iterator[GameRecord]:
    """Yield finished games in game-id order (ids start at 1).

    Games aborted for an illegal engine move are logged and skipped.  Each
    game's engine seeds derive from ``(seed, game_id)``, so output does not
    depend on ``jobs``.
    """
    ids = list(range(1, max_games + 1))
    chunks = [ids[i:i + chunk_size] for i in range(0, len(ids), chunk_size)]
    if jobs <= 1:
        for chunk in chunks:
            yield from _play_chunk(white, black, chunk, max_plies_per_game, seed, zobrist_seed)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_play_chunk, white, black, chunk, max_plies_per_game, seed, zobrist_seed)
            for chunk in chunks
        ]
        for fut in futures:
            yield from fut.result()
