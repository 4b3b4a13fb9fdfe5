"""Command-line pipeline: ingest, train, explore, evaluate, sweep, and the
two diagnostics (perft, engine-check).

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every run that plays games writes a manifest (config values, fingerprint,
engine identity, limits) into the run directory before the games start,
and all randomness flows from the configured seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .board import BoardState, perft
from .checkpoint import load_blunder, load_policy, save_model
from .config import ENGINE_ENV_VAR, RunConfig, parse_config_file, resolve_config
from .dataset import (
    build_policy_dataset,
    load_blunder_dataset,
    load_policy_dataset,
    save_blunder_dataset,
    save_policy_dataset,
)
from .errors import BlunderShieldError, ConfigError, FenError
from .gameplay import (
    export_pgn,
    model_risk,
    oracle_truth_risk,
    play_many,
    safedagger_round,
    save_archive,
)
from .metrics import (
    alpha_sweep,
    build_report,
    emit_report,
    emit_sweep,
    metrics_for_record,
)
from .models import train_blunder, train_policy
from .oracle import MaterialOracle, OracleLabeler, UciEngine
from .pgn import PgnGameError, parse_pgn
from .selection import StrategyConfig

log = logging.getLogger(__name__)

MATE_IN_ONE_FEN = "6k1/5ppp/8/8/8/8/5PPP/R5K1 w - - 0 1"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--run-dir", dest="run_dir", help="artifact directory")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--engine", dest="engine_path",
                        help=f"UCI engine command (or ${ENGINE_ENV_VAR})")
    parser.add_argument("--mock-oracle", dest="mock_oracle",
                        action="store_const", const=True,
                        help="use the built-in material oracle")
    parser.add_argument("--jobs", type=int, help="max concurrent games")
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--optimizer", choices=["sgd", "sgd-momentum", "adam"])
    parser.add_argument("--loss", choices=["cross-entropy", "mse"])
    parser.add_argument("--clip-norm", dest="clip_norm", type=float)
    parser.add_argument("--val-fraction", dest="val_fraction", type=float)


def _add_strategy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", help="selection strategy kind")
    parser.add_argument("--k", type=int)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--surprisal-bits", dest="surprisal_bits", type=float)
    parser.add_argument("--risk-cutoff", dest="risk_cutoff", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--alpha", type=float)


def _add_game_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--games", type=int)
    parser.add_argument("--max-plies", dest="max_plies", type=int)


def _add_risk_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--blunder", help="blunder-model checkpoint for risk")
    parser.add_argument("--oracle-risk", action="store_true",
                        help="ground-truth risk straight from the labeling oracle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blundershield",
        description="Safe chess move selection with a learned blunder shield.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a policy dataset from PGN games")
    _add_common(p)
    p.add_argument("--pgn", required=True, help="PGN file of source games")
    p.add_argument("--limit", type=int, help="cap on qualifying games")
    p.add_argument("--all-moves", action="store_true",
                   help="keep both sides' moves (default: winner only)")
    p.add_argument("--out", help="dataset path (default <run-dir>/policy-dataset.tsv)")

    p = sub.add_parser("train-policy", help="train the move model")
    _add_common(p)
    _add_training_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--warm-start", dest="warm_start", help="checkpoint to continue from")
    p.add_argument("--out", help="checkpoint path (default <run-dir>/policy.ckpt)")

    p = sub.add_parser("explore", help="exploration rounds with oracle feedback")
    _add_common(p)
    _add_training_flags(p)
    _add_strategy_flags(p)
    _add_game_flags(p)
    _add_risk_source(p)
    p.add_argument("--policy", required=True, help="policy checkpoint to start from")
    p.add_argument("--aggregate", help="imitation dataset the corrections extend")
    p.add_argument("--rounds", type=int)

    p = sub.add_parser("train-blunder", help="train the risk model")
    _add_common(p)
    _add_training_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="checkpoint path (default <run-dir>/blunder.ckpt)")

    p = sub.add_parser("evaluate", help="play evaluation games and report metrics")
    _add_common(p)
    _add_strategy_flags(p)
    _add_game_flags(p)
    _add_risk_source(p)
    p.add_argument("--policy", required=True)

    p = sub.add_parser("sweep-alpha", help="utility-strategy sweep over alpha")
    _add_common(p)
    _add_game_flags(p)
    _add_risk_source(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1.0",
                   help="comma-separated ascending alphas")

    p = sub.add_parser("perft", help="count move-generation nodes")
    _add_common(p)
    p.add_argument("--fen", default="startpos")
    p.add_argument("--depth", type=int, default=1)

    p = sub.add_parser("engine-check", help="probe the oracle end to end")
    _add_common(p)
    p.add_argument("--fen", help="extra position to evaluate")

    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else None
    flag_values = {
        key: getattr(args, key)
        for key in ("run_dir", "seed", "engine_path", "mock_oracle", "jobs",
                    "games", "max_plies", "rounds", "epochs", "batch_size",
                    "lr", "optimizer", "loss", "clip_norm", "val_fraction",
                    "strategy", "k", "tau", "surprisal_bits", "risk_cutoff",
                    "delta", "alpha")
        if hasattr(args, key)
    }
    return resolve_config(file_values, flag_values)


class _OracleContext:
    """Owns oracle construction for one command: a factory for per-game
    instances, engine identity, and cleanup of shared handles."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.mock = cfg["mock_oracle"]
        self._shared = None
        if self.mock:
            self._shared = OracleLabeler(MaterialOracle(), cfg.oracle_limits())
            self.engine_id = MaterialOracle.id_name
            self.per_game = False
        else:
            command = cfg.require_engine()
            limits = cfg.oracle_limits()
            self.per_game = cfg["jobs"] > 1
            if self.per_game:
                probe = UciEngine(command)
                self.engine_id = probe.id_name
                probe.close()
                self._factory = lambda: OracleLabeler(UciEngine(command), limits)
            else:
                self._shared = OracleLabeler(UciEngine(command), limits)
                self.engine_id = self._shared.oracle.id_name

    def factory(self):
        if self.per_game:
            return self._factory
        shared = self._shared
        return lambda: shared

    @property
    def close_after(self) -> bool:
        return self.per_game

    @property
    def labeler(self) -> OracleLabeler:
        if self._shared is None:
            raise ConfigError("per-game oracles have no shared handle")
        return self._shared

    def close(self) -> None:
        if self._shared is not None and not self.mock:
            self._shared.oracle.close()


def _risk_provider_factory(args, cfg, ctx):
    """None when the strategy needs no risk; otherwise model-based risk
    from --blunder or ground truth from --oracle-risk."""
    strategy = cfg.strategy_config()
    if not strategy.uses_risk():
        return None
    if getattr(args, "blunder", None):
        model = load_blunder(args.blunder)
        return lambda labeler: model_risk(model)
    if getattr(args, "oracle_risk", False):
        return lambda labeler: oracle_truth_risk(labeler)
    raise ConfigError(
        f"{strategy.kind.value} needs a risk source: pass --blunder CKPT "
        "or --oracle-risk"
    )


def _run_dir(cfg: RunConfig) -> Path:
    path = Path(cfg["run_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(run_dir: Path, cfg: RunConfig, command: str,
                    engine_id: str, extra: dict | None = None) -> None:
    limits = cfg.oracle_limits()
    payload = {
        "command": command,
        "config": cfg.values,
        "fingerprint": cfg.fingerprint(),
        "engine_id": engine_id,
        "limits": {"depth": limits.depth, "movetime_ms": limits.movetime_ms},
        "version": __version__,
    }
    if extra:
        payload.update(extra)
    (run_dir / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_ingest(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    out = Path(args.out) if args.out else run_dir / "policy-dataset.tsv"
    with open(args.pgn, encoding="utf-8") as fh:
        games = list(parse_pgn(fh.read(), source=args.pgn))
    bad = sum(1 for g in games if isinstance(g, PgnGameError))
    dataset = build_policy_dataset(
        games, winner_only=not args.all_moves, limit=args.limit,
    )
    save_policy_dataset(dataset, out)
    print(f"ingested {len(dataset.pairs)} pairs from {len(games) - bad} games "
          f"({bad} unparseable) -> {out}")
    return 0


def cmd_train_policy(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    out = Path(args.out) if args.out else run_dir / "policy.ckpt"
    dataset = load_policy_dataset(args.dataset)
    warm = load_policy(args.warm_start) if args.warm_start else None
    model, curve = train_policy(dataset, cfg.training_config(), model=warm)
    save_model(model, out)
    (run_dir / "policy-loss.json").write_text(
        json.dumps({"loss_curve": curve}, sort_keys=True) + "\n", encoding="utf-8",
    )
    print(f"trained on {len(dataset.pairs)} pairs, "
          f"final loss {curve[-1]:.4f} -> {out}")
    return 0


def cmd_train_blunder(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    out = Path(args.out) if args.out else run_dir / "blunder.ckpt"
    dataset = load_blunder_dataset(args.dataset)
    model, acc, auc_value = train_blunder(dataset, cfg.training_config())
    save_model(model, out)
    print(f"trained on {len(dataset.examples)} examples, "
          f"held-out accuracy {acc:.3f}, auc {auc_value:.3f} -> {out}")
    return 0


def cmd_explore(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    policy = load_policy(args.policy)
    if args.aggregate:
        aggregate = load_policy_dataset(args.aggregate)
    else:
        from .dataset import PolicyDataset
        aggregate = PolicyDataset(pairs=[])
    strategy = cfg.strategy_config()
    ctx = _OracleContext(cfg)
    try:
        risk_factory = _risk_provider_factory(args, cfg, ctx)
        _write_manifest(run_dir, cfg, "explore", ctx.engine_id)
        train_cfg = cfg.training_config()
        for round_index in range(cfg["rounds"]):
            result = safedagger_round(
                policy, aggregate, cfg["games"], strategy,
                ctx.labeler if not ctx.per_game else None,
                ctx.labeler if not ctx.per_game else None,
                train_cfg, base_seed=cfg["seed"] + round_index,
                round_index=round_index, max_plies=cfg["max_plies"],
                oracle_factory=ctx.factory() if ctx.per_game else None,
                risk_provider_factory=risk_factory if ctx.per_game else None,
                risk_provider=(risk_factory(ctx.labeler)
                               if risk_factory and not ctx.per_game else None),
                jobs=cfg["jobs"],
            )
            policy, aggregate = result.policy, result.aggregate
            round_dir = run_dir / f"round{round_index}"
            round_dir.mkdir(exist_ok=True)
            save_model(result.policy, round_dir / "policy.ckpt")
            save_policy_dataset(result.aggregate, round_dir / "aggregate.tsv")
            save_blunder_dataset(result.blunder_dataset, round_dir / "blunder.tsv")
            save_archive(result.records, round_dir / "games.jsonl")
            export_pgn(result.records, round_dir / "games.pgn",
                       opponent_name=ctx.engine_id)
            print(f"round {round_index}: {result.n_flagged} blunders flagged, "
                  f"aggregate {len(result.aggregate.pairs)} pairs, "
                  f"blunder dataset {len(result.blunder_dataset.examples)} examples")
    finally:
        ctx.close()
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    policy = load_policy(args.policy)
    strategy = cfg.strategy_config()
    ctx = _OracleContext(cfg)
    try:
        risk_factory = _risk_provider_factory(args, cfg, ctx)
        _write_manifest(run_dir, cfg, "evaluate", ctx.engine_id,
                        extra={"strategy": strategy.label()})
        records = play_many(
            policy, strategy, ctx.factory(), cfg["games"],
            base_seed=cfg["seed"], max_plies=cfg["max_plies"],
            risk_provider_factory=risk_factory, jobs=cfg["jobs"],
            close_after=ctx.close_after,
        )
    finally:
        ctx.close()
    per_game = [metrics_for_record(r) for r in records]
    save_archive(records, run_dir / "games.jsonl")
    export_pgn(records, run_dir / "games.pgn", opponent_name=ctx.engine_id)
    report = build_report({strategy.label(): per_game},
                          fingerprint=cfg.fingerprint())
    emit_report(report, run_dir)
    summary = report.methods[strategy.label()]
    print(f"{strategy.label()}: blunder_rate "
          f"{summary['blunder_rate'].mean:.4f} "
          f"[{summary['blunder_rate'].lo:.4f}, {summary['blunder_rate'].hi:.4f}], "
          f"exploration {summary['exploration_ratio'].mean:.4f} "
          f"over {len(per_game)} games -> {run_dir}")
    return 0


def cmd_sweep_alpha(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(cfg)
    policy = load_policy(args.policy)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --alphas: {exc}") from exc
    ctx = _OracleContext(cfg)
    try:
        if args.blunder:
            model = load_blunder(args.blunder)
            provider = model_risk(model)
        elif args.oracle_risk:
            provider = oracle_truth_risk(ctx.labeler)
        else:
            raise ConfigError("sweep-alpha needs --blunder CKPT or --oracle-risk")
        _write_manifest(run_dir, cfg, "sweep-alpha", ctx.engine_id,
                        extra={"alphas": alphas})
        sweep = alpha_sweep(
            alphas, policy, ctx.labeler, ctx.labeler, provider,
            cfg["games"], base_seed=cfg["seed"], max_plies=cfg["max_plies"],
        )
    finally:
        ctx.close()
    emit_sweep(sweep, run_dir)
    for row in sweep.rows:
        print(f"alpha {row.alpha:.2f}: blunder_rate {row.blunder.mean:.4f}, "
              f"median_drop {row.drop.mean:.1f}")
    print(f"spearman blunder_rate vs alpha: {sweep.spearman_blunder}; "
          f"median_drop vs alpha: {sweep.spearman_drop}")
    return 0


def _fen_arg(text: str) -> BoardState:
    if text == "startpos":
        return BoardState.startpos()
    try:
        return BoardState.from_fen(text)
    except FenError as exc:
        raise ConfigError(f"--fen: {exc}") from exc


def cmd_perft(args, cfg: RunConfig) -> int:
    state = _fen_arg(args.fen)
    if args.depth < 0:
        raise ConfigError(f"depth must be >= 0, got {args.depth}")
    print(perft(state, args.depth))
    return 0


def cmd_engine_check(args, cfg: RunConfig) -> int:
    ctx = _OracleContext(cfg)
    try:
        labeler = ctx.labeler
        print(f"engine: {ctx.engine_id}")
        start = BoardState.startpos()
        score = labeler.evaluate(start)
        move = labeler.best_move(start)
        print(f"startpos eval: {score.value} cp, best move {move.uci()}")
        mate = labeler.evaluate(BoardState.from_fen(MATE_IN_ONE_FEN))
        print(f"mate-in-one eval: {mate.value} cp"
              + (" (mapped mate score)" if mate.is_mate_mapped else ""))
        if args.fen:
            extra = labeler.evaluate(_fen_arg(args.fen))
            print(f"fen eval: {extra.value} cp")
    finally:
        ctx.close()
    print("ok")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train-policy": cmd_train_policy,
    "train-blunder": cmd_train_blunder,
    "explore": cmd_explore,
    "evaluate": cmd_evaluate,
    "sweep-alpha": cmd_sweep_alpha,
    "perft": cmd_perft,
    "engine-check": cmd_engine_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error [{exc.where}]: {exc}", file=sys.stderr)
        return 2
    except BlunderShieldError as exc:
        print(f"error [{exc.where}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
