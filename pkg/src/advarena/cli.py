"""Command-line front end: dataset, training, rounds, scoring, reports.

Subcommands: gen-dataset, train-models, train-denoiser, train-attack-net,
run-round, score, report.  Every subcommand accepts --config FILE (JSON);
explicit flags override config values.  All outputs land under
--output-dir.  Exit codes: 0 success, 1 usage error (unknown flag,
unresolved name, malformed config; the message names the offending
field), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import arena, attacks, data, denoiser, models, submission
from .rng import derive_seed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # argparse defaults to exit code 2
        raise UsageError(message)


def _load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise UsageError(f"--config: {path} does not exist")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise UsageError(f"--config: {path} must hold a JSON object")
    return doc


def _setting(args, config, name, default=None):
    """Flag wins over config key (dashes become underscores), then default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(name, default)


def _require_dir(path, flag):
    if path is None:
        raise UsageError(f"{flag} is required")
    if not os.path.isdir(path):
        raise UsageError(f"{flag}: {path} is not a directory")
    return path


def _out_dir(args, config):
    out = _setting(args, config, "output-dir")
    if out is None:
        raise UsageError("--output-dir is required")
    os.makedirs(out, exist_ok=True)
    return out


def _load_records(args, config, need_targets, seed):
    dataset = _require_dir(_setting(args, config, "dataset"), "--dataset")
    split = data.load_split(dataset)
    if need_targets and any(r.target_label is None for r in split.records):
        split = data.assign_targets(split, seed=derive_seed(seed, "targets"))
    return split


def _model_names(text):
    names = [n for n in (text or "").split("+") if n]
    if not names:
        raise UsageError("expected model names like cnn_a+mlp2")
    return names


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_gen_dataset(args, config):
    out = _out_dir(args, config)
    seed = int(_setting(args, config, "seed", 0))
    name = _setting(args, config, "name", "dev")
    split = data.generate(
        n_classes=int(_setting(args, config, "n-classes", 10)),
        n_per_class=int(_setting(args, config, "n-per-class", 10)),
        size=int(_setting(args, config, "size", 32)),
        seed=seed, name=name)
    if _setting(args, config, "with-targets", False):
        split = data.assign_targets(split, seed=derive_seed(seed, "targets"))
    directory = os.path.join(out, name)
    data.write_split(split, directory)
    print(f"wrote {len(split.records)} images to {directory}")
    return 0


def _cmd_train_models(args, config):
    out = _out_dir(args, config)
    seed = int(_setting(args, config, "seed", 0))
    split = _load_records(args, config, need_targets=False, seed=seed)
    settings = config.get("train-settings")
    zoo = models.train_zoo(split.records, seed=seed, settings=settings)
    for name, model in zoo.items():
        path = os.path.join(out, f"{name}.advw")
        models.save(model, path)
        print(f"{name}: accuracy {models.accuracy(model, split.records):.3f} -> {path}")
    return 0


def _cmd_train_denoiser(args, config):
    out = _out_dir(args, config)
    seed = int(_setting(args, config, "seed", 0))
    split = _load_records(args, config, need_targets=False, seed=seed)
    store = submission.ArtifactStore(
        _require_dir(_setting(args, config, "artifacts"), "--artifacts"))
    guide_name = _setting(args, config, "guide", "cnn_a")
    pair_names = _model_names(_setting(args, config, "pair-models", "cnn_a+mlp2"))
    guide = store.model(guide_name)
    pair_models = {n: store.model(n) for n in pair_names}
    pairs = denoiser.generate_trainset(
        pair_models, split.records,
        per_class_count=int(_setting(args, config, "per-class", 20)),
        seed=derive_seed(seed, "pairs"))
    cfg = denoiser.DenoiserTrainConfig(
        epochs=int(_setting(args, config, "epochs", 8)),
        lr=float(_setting(args, config, "lr", 0.02)),
        seed=derive_seed(seed, "denoiser"))
    guidance = denoiser.GuidanceLoss(_setting(args, config, "guidance", "lgd"), guide)
    net = denoiser.build_denoiser(seed=derive_seed(seed, "init"))
    net = denoiser.train_denoiser(net, pairs, guidance, cfg)
    path = os.path.join(out, _setting(args, config, "name", "denoiser") + ".advw")
    denoiser.save_denoiser(net, path)
    print(f"trained on {len(pairs)} pairs -> {path}")
    return 0


def _cmd_train_attack_net(args, config):
    out = _out_dir(args, config)
    seed = int(_setting(args, config, "seed", 0))
    split = _load_records(args, config, need_targets=False, seed=seed)
    store = submission.ArtifactStore(
        _require_dir(_setting(args, config, "artifacts"), "--artifacts"))
    target_names = _model_names(_setting(args, config, "targets", "cnn_a+mlp2"))
    targets = [store.model(n) for n in target_names]
    hint_name = _setting(args, config, "hint-model")
    hint = store.model(hint_name) if hint_name else None
    eps_text = _setting(args, config, "epsilons", "4,8,12,16")
    try:
        levels = [int(v) / 255.0 for v in str(eps_text).split(",") if v]
    except ValueError:
        raise UsageError(f"--epsilons: {eps_text!r} is not a comma list of integers")
    cfg = attacks.FcnTrainConfig(
        epochs=int(_setting(args, config, "epochs", 16)),
        lr=float(_setting(args, config, "lr", 0.003)),
        seed=derive_seed(seed, "fcn"))
    net = attacks.train_attack_fcn(targets, split.records, levels, cfg,
                                   hints=hint is not None, hint_model=hint)
    path = os.path.join(out, _setting(args, config, "name", "attack_fcn") + ".advw")
    attacks.save_attack_fcn(net, path)
    print(f"trained {len(levels)}-head attack net -> {path}")
    return 0


def _build_roster(config, store):
    roster = config.get("submissions")
    if not isinstance(roster, dict):
        raise UsageError("config field 'submissions' must be an object with "
                         "'attacks' and 'defenses'")
    atk, dfn = [], []
    for sub_id, spec in sorted(roster.get("attacks", {}).items()):
        try:
            atk.append(submission.build_attack_submission(sub_id, spec, store))
        except (ValueError, FileNotFoundError) as exc:
            raise UsageError(f"submissions.attacks.{sub_id}: {exc}")
    for sub_id, spec in sorted(roster.get("defenses", {}).items()):
        try:
            dfn.append(submission.build_defense_submission(sub_id, spec, store))
        except (ValueError, FileNotFoundError) as exc:
            raise UsageError(f"submissions.defenses.{sub_id}: {exc}")
    if not atk or not dfn:
        raise UsageError("config field 'submissions' needs at least one attack "
                         "and one defense")
    return atk, dfn


def _cmd_run_round(args, config):
    out = _out_dir(args, config)
    seed = int(_setting(args, config, "seed", 0))
    split = _load_records(args, config, need_targets=True, seed=seed)
    store = submission.ArtifactStore(
        _require_dir(_setting(args, config, "artifacts"), "--artifacts"))
    atk, dfn = _build_roster(config, store)
    cfg = arena.RoundConfig(
        records=split.records, attacks=atk, defenses=dfn,
        n_classes=int(_setting(args, config, "n-classes", 10)),
        batch_size=int(_setting(args, config, "batch-size", 100)),
        budget_seconds=float(_setting(args, config, "budget", 10.0)),
        seed=seed,
        workers=int(_setting(args, config, "workers", 1)),
        record_walltime=bool(_setting(args, config, "record-walltime", False)))
    report = arena.run_round(cfg, out)
    print(f"wrote {report.outcomes_path}")
    print(f"wrote {report.scoreboard_path}")
    return 0


def _cmd_score(args, config):
    out = _out_dir(args, config)
    outcomes_path = _setting(args, config, "outcomes")
    if outcomes_path is None:
        raise UsageError("--outcomes is required")
    if not os.path.exists(outcomes_path):
        raise UsageError(f"--outcomes: {outcomes_path} does not exist")
    outcomes = arena.OutcomeMatrix.read(outcomes_path)
    path = os.path.join(out, "scoreboard.csv")
    arena.write_scoreboard(path, outcomes)
    print(f"wrote {path}")
    return 0


def _cmd_report(args, config):
    out = _out_dir(args, config)
    outcomes_path = _setting(args, config, "outcomes")
    if outcomes_path is None:
        raise UsageError("--outcomes is required")
    if not os.path.exists(outcomes_path):
        raise UsageError(f"--outcomes: {outcomes_path} does not exist")
    outcomes = arena.OutcomeMatrix.read(outcomes_path)
    scores = arena.compute_scores(outcomes)
    for kind in arena.SUBMISSION_KINDS:
        rows = sorted(((s["normalized"], sub_id) for sub_id, s in scores.items()
                       if s["kind"] == kind), reverse=True)
        if not rows:
            continue
        path = os.path.join(out, f"report_{kind}.csv")
        with open(path, "w") as fh:
            fh.write("rank,id,normalized\n")
            for rank, (norm, sub_id) in enumerate(rows, start=1):
                fh.write(f"{rank},{sub_id},{norm:.6f}\n")
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "gen-dataset": _cmd_gen_dataset,
    "train-models": _cmd_train_models,
    "train-denoiser": _cmd_train_denoiser,
    "train-attack-net": _cmd_train_attack_net,
    "run-round": _cmd_run_round,
    "score": _cmd_score,
    "report": _cmd_report,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="advarena",
                     description="Adversarial attack/defense tournament engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--output-dir", help="directory for all outputs")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-dataset", help="render a seeded dataset split")
    common(p)
    p.add_argument("--name")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--with-targets", action="store_true", default=None)

    p = sub.add_parser("train-models", help="train the classifier zoo")
    common(p)
    p.add_argument("--dataset")

    p = sub.add_parser("train-denoiser", help="train the guided denoiser")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--artifacts")
    p.add_argument("--guide")
    p.add_argument("--guidance", choices=denoiser.GUIDANCE_KINDS)
    p.add_argument("--pair-models")
    p.add_argument("--per-class", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--name")

    p = sub.add_parser("train-attack-net", help="train the attack FCN")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--artifacts")
    p.add_argument("--targets")
    p.add_argument("--hint-model")
    p.add_argument("--epsilons", help="comma list in 0..255 units")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--name")

    p = sub.add_parser("run-round", help="run a full tournament round")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--artifacts")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--record-walltime", action="store_true", default=None)

    p = sub.add_parser("score", help="recompute a scoreboard from outcomes.csv")
    common(p)
    p.add_argument("--outcomes")

    p = sub.add_parser("report", help="write score-vs-rank tables per kind")
    common(p)
    p.add_argument("--outcomes")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except arena.UnscoreableRoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"diagnostics: {json.dumps(exc.diagnostics, default=str)}",
              file=sys.stderr)
        return 2
    except Exception as exc:   # runtime failure, not a usage problem
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
