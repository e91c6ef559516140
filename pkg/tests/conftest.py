import random

import numpy as np
import pytest

from piecevec.board import Status, game_status, initial_position, legal_moves, make_move
from piecevec.counts import build_count_matrix
from piecevec.factor import nmf_fit
from piecevec.ingest import annotate_buckets, filter_white_wins
from piecevec.selfplay import EngineConfig, run_selfplay
from piecevec.zobrist import DEFAULT_SEED, full_hash, init_tables


@pytest.fixture(scope="session")
def tables():
    return init_tables(DEFAULT_SEED)


def random_walk(seed: int, plies: int):
    """Positions and moves of a random legal game (stops early at game end)."""
    rng = random.Random(seed)
    pos = initial_position()
    out = []
    for _ in range(plies):
        moves = legal_moves(pos)
        if game_status(pos, moves) is not Status.ONGOING:
            break
        m = rng.choice(moves)
        out.append((pos, m))
        pos = make_move(pos, m)
    return out, pos


def small_corpus(seed: int = 1, games: int = 8, max_plies: int = 30, variety: float = 1.0):
    """A few greedy-vs-random games, filtered to white wins."""
    white = EngineConfig.builtin("greedy", Variety=variety)
    played = run_selfplay(white, EngineConfig.builtin("random"), games, max_plies_per_game=max_plies, seed=seed)
    return filter_white_wins(played, DEFAULT_SEED)


def exact_model(ds, tables, num_buckets: int, max_iters: int = 30000):
    """Fit NMF with d = n on the raw piece-bucket counts of ``ds``."""
    ann = annotate_buckets(ds, tables, num_buckets)
    cm = build_count_matrix(ann, "piece-bucket", num_buckets)
    model = nmf_fit(cm.matrix, cm.n, max_iters=max_iters, rel_tol=0)
    model.meta.update(scheme="piece-bucket", num_buckets=num_buckets, zobrist_seed=tables.seed)
    model.row_mass = np.asarray(cm.matrix.sum(axis=1)).ravel()
    return model, cm


def summed_counts_argmax(pos, cm, tables) -> int:
    """Brute-force oracle: argmax over the summed count rows of the pieces on the board."""
    b = full_hash(pos, tables) & (cm.num_buckets - 1)
    total = np.zeros(cm.p)
    for piece in pos.ids:
        if piece:
            total += cm.matrix.getrow((piece - 1) * cm.num_buckets + b).toarray().ravel()
    best = total.max()
    return min(i for i in range(cm.p) if total[i] == best)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
