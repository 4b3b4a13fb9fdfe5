"""Session fixtures: the mock oracle, a trained policy, and a trained
risk model shared by the heavier tests.

Everything is seeded; rebuilding the fixtures reproduces byte-identical
models, so tests may assert exact values computed from them.
"""

import logging

import numpy as np
import pytest

import acceptance_report
from blundershield.board import BoardState, apply_move, legal_moves
from blundershield.dataset import PolicyDataset, PolicyPair
from blundershield.gameplay import candidate_blunder_dataset
from blundershield.metrics import evaluate_strategy
from blundershield.models import TrainingConfig, train_blunder, train_policy
from blundershield.oracle import MaterialOracle, OracleLabeler
from blundershield.selection import StrategyConfig, StrategyKind

# The dataset builders log one warning per contradictory correction; the
# mock oracle's one-ply horizon makes those routine, not noteworthy.
logging.getLogger("blundershield.gameplay").setLevel(logging.ERROR)

WALK_SEED = 12345
WALK_COUNT = 120
WALK_PLIES = 40
LABELED_GAMES = 300
LABELED_GAMES_SEED = 2024
LABELED_GAMES_MAX_PLIES = 60


def imitation_walks(labeler, n_walks, plies, seed, p_best=0.5):
    """(position, oracle best move) pairs from seeded random walks.

    Half the time the walk follows the oracle, half a uniform legal move,
    so the positions mix sensible play with the weirdness a learner will
    meet in its own games.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = []
    for walk in range(n_walks):
        state = BoardState.startpos()
        for _ in range(plies):
            legal = legal_moves(state)
            if not legal or state.halfmove_clock >= 100:
                break
            best = labeler.best_move(state)
            pairs.append(PolicyPair(state=state, move=best,
                                    source="imitation", game_index=walk))
            move = best if rng.random() < p_best else legal[rng.integers(len(legal))]
            state = apply_move(state, move)
    return pairs


@pytest.fixture(scope="session")
def mock_labeler():
    return OracleLabeler(MaterialOracle())


@pytest.fixture(scope="session")
def imitation_dataset(mock_labeler):
    pairs = imitation_walks(mock_labeler, WALK_COUNT, WALK_PLIES, WALK_SEED)
    return PolicyDataset(pairs=pairs)


@pytest.fixture(scope="session")
def trained_policy(imitation_dataset):
    cfg = TrainingConfig(epochs=25, batch_size=64, lr=1e-3, seed=7,
                         optimizer="adam", loss="cross-entropy", val_fraction=0.0)
    model, _ = train_policy(imitation_dataset, cfg)
    return model


@pytest.fixture(scope="session")
def labeled_records(trained_policy, mock_labeler):
    """Mock-labeled games of the policy exploring via top-5 sampling."""
    records, _ = evaluate_strategy(
        trained_policy, StrategyConfig(kind=StrategyKind.TOP_K, k=5),
        mock_labeler, mock_labeler, n_games=LABELED_GAMES,
        base_seed=LABELED_GAMES_SEED, max_plies=LABELED_GAMES_MAX_PLIES)
    return records


@pytest.fixture(scope="session")
def blunder_model(labeled_records, trained_policy, mock_labeler):
    dataset = candidate_blunder_dataset(
        labeled_records, trained_policy, mock_labeler, k=5)
    cfg = TrainingConfig(epochs=40, batch_size=64, lr=2e-3, seed=11,
                         optimizer="adam", loss="cross-entropy", val_fraction=0.15)
    model, _, _ = train_blunder(dataset, cfg)
    return model


def pytest_terminal_summary(terminalreporter):
    if not acceptance_report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_report.lines():
        terminalreporter.write_line(line)
