"""Built-in stub movers and a minimal UCI front end for them.

Run ``python -m piecevec.engines --mode random`` to get a UCI engine on
stdin/stdout.  The same classes are used in-process by the self-play driver
when an engine path is ``builtin:<mode>``.
"""

from __future__ import annotations

import argparse
import random
import sys
import zlib
from typing import Optional

from .board import (
    CAPTURE,
    KING,
    STARTING_FEN,
    Move,
    Position,
    infer_move,
    is_attacked,
    legal_moves,
    make_move,
)

PIECE_VALUES = (1, 3, 3, 5, 9, 0)


class StubEngine:
    """Base for in-process movers.  Tracks the game incrementally.

    ``variety`` is the probability that a choice among equally good moves
    uses the per-game RNG; otherwise the pick is keyed on the position
    alone, so the engine replays the same move whenever a position recurs.
    """

    name = "stub"

    def __init__(self, seed: int = 0, variety: float = 1.0):
        self.seed = seed
        self.variety = variety
        self.rng = random.Random(seed)
        self._fen: Optional[str] = None
        self._moves: list[str] = []
        self._pos = Position.from_fen(STARTING_FEN)

    def new_game(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self.rng = random.Random(self.seed)
        self._fen, self._moves = None, []
        self._pos = Position.from_fen(STARTING_FEN)

    def set_position(self, fen: Optional[str] = None, moves=()) -> None:
        moves = list(moves)
        if fen != self._fen or moves[: len(self._moves)] != self._moves:
            self._fen, self._moves = fen, []
            self._pos = Position.from_fen(fen or STARTING_FEN)
        for uci in moves[len(self._moves):]:
            self._pos = make_move(self._pos, infer_move(self._pos, Move.from_uci(uci)))
            self._moves.append(uci)

    @property
    def position(self) -> Position:
        return self._pos

    def best_move(self) -> Optional[Move]:
        moves = legal_moves(self._pos)
        if not moves:
            return None
        return self.choose(self._pos, moves)

    def choose(self, pos: Position, moves: list[Move]) -> Move:
        raise NotImplementedError

    def pick(self, pos: Position, options: list[Move]) -> Move:
        if len(options) == 1:
            return options[0]
        if self.variety >= 1.0 or self.rng.random() < self.variety:
            return options[self.rng.randrange(len(options))]
        key = zlib.crc32(bytes(p + 1 for p in pos.board) + bytes((pos.turn, pos.castling)))
        return options[key % len(options)]

    def close(self) -> None:
        pass


class RandomMover(StubEngine):
    """Uniform choice among legal moves."""

    name = "random"

    def choose(self, pos, moves):
        return self.pick(pos, moves)


class FirstMover(StubEngine):
    """Always the first move in generation order."""

    name = "first"

    def choose(self, pos, moves):
        return moves[0]


class GreedyMover(StubEngine):
    """One-ply greedy: mate if available, else the best capture, else random.

    Captures are scored by victim value minus attacker value when the target
    square is defended.  Ties are broken by the seeded RNG.
    """

    name = "greedy"

    def choose(self, pos, moves):
        board = pos.board
        them = 1 - pos.turn
        best, best_score = [], None
        for m in moves:
            after = make_move(pos, m)
            if after.in_check() and not legal_moves(after):
                return m
            score = 0
            if m.flags & CAPTURE:
                victim = board[m.target]
                score = PIECE_VALUES[victim % 6] if victim >= 0 else 1
            if m.promotion is not None:
                score += PIECE_VALUES[m.promotion] - 1
            if is_attacked(after.board, m.target, them):
                score -= PIECE_VALUES[board[m.source] % 6] if board[m.source] % 6 != KING else 100
            if best_score is None or score > best_score:
                best, best_score = [m], score
            elif score == best_score:
                best.append(m)
        return self.pick(pos, best)


BUILTIN = {cls.name: cls for cls in (RandomMover, FirstMover, GreedyMover)}


def uci_loop(engine: StubEngine, stdin=sys.stdin, stdout=sys.stdout) -> None:
    """Serve the UCI protocol for a stub engine until ``quit``."""

    def send(line):
        stdout.write(line + "\n")
        stdout.flush()

    for raw in stdin:
        tokens = raw.split()
        if not tokens:
            continue
        cmd = tokens[0]
        if cmd == "uci":
            send(f"id name piecevec-{engine.name}")
            send("id author piecevec")
            send("option name Seed type spin default 0 min 0 max 4294967295")
            send(f"option name Variety type string default {engine.variety}")
            send("uciok")
        elif cmd == "isready":
            send("readyok")
        elif cmd == "ucinewgame":
            engine.new_game()
        elif cmd == "setoption":
            # setoption name Seed value N
            if len(tokens) >= 5 and tokens[3] == "value":
                if tokens[2].lower() == "seed":
                    engine.new_game(int(tokens[4]))
                elif tokens[2].lower() == "variety":
                    engine.variety = float(tokens[4])
        elif cmd == "position":
            fen, moves = None, []
            rest = tokens[1:]
            if rest and rest[0] == "fen":
                end = rest.index("moves") if "moves" in rest else len(rest)
                fen = " ".join(rest[1:end])
                rest = rest[end:]
            elif rest and rest[0] == "startpos":
                rest = rest[1:]
            if rest and rest[0] == "moves":
                moves = rest[1:]
            engine.set_position(fen, moves)
        elif cmd == "go":
            m = engine.best_move()
            send(f"bestmove {m.uci() if m is not None else '(none)'}")
        elif cmd == "quit":
            break


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="Stub UCI engine")
    ap.add_argument("--mode", choices=sorted(BUILTIN), default="random")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variety", type=float, default=1.0)
    args = ap.parse_args(argv)
    uci_loop(BUILTIN[args.mode](args.seed, args.variety))


if __name__ == "__main__":
    main()
