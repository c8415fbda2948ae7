"""Command-line entry point.

Subcommands: pretest, scratch, incremental, protocol, ablate. Options can
come from a JSON config file (--config) and are overridden by flags; every
run writes its fully resolved config beside its outputs so re-running that
file reproduces them. Exit codes: 0 success, 1 runtime failure, 2 invalid
config, 3 data error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .bench import (
    DEFAULT_BLOCK_CANDIDATES,
    OnlineAccuracyTracker,
    ProtocolConfig,
    evaluate,
    pretest_block_size,
    run_protocol,
)
from .datasets import gaussian_blobs
from .learner import (
    IncrementalLearner,
    RetrainConfig,
    ScratchLearner,
    load_phase_checkpoint,
    offline_retrain,
    save_phase_checkpoint,
)
from .losses import LossConfig
from .nn import MLP
from .stream import (
    DataFormatError,
    DriftSpec,
    ScenarioSpec,
    iter_blocks,
    load_dataset,
    make_scenario,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

OUT_ROOT_ENV = "ONLINECL_OUT"

DEFAULTS = {
    "dataset": None,
    "format": "csv",
    "out": None,
    "class_splits": [5, 5],
    "block_size": 8,
    "new_fraction": 0.6,
    "old_fraction": 0.2,
    "test_fraction": 0.2,
    "hidden_dims": [64, 64],
    "learning_rate": 0.1,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "loss": "mcd",
    "beta": 0.5,
    "temperature": 2.0,
    "alpha": None,
    "exemplars_per_class": 10,
    "update_exemplars": True,
    "rehearsal": True,
    "replace_farthest": False,
    "switch_threshold": 5,
    "scratch_classifier": "auto",
    "retrain_epochs": 20,
    "retrain_batch_size": 32,
    "seed": 0,
    "seeds": 1,
    "drift_classes": None,
    "drift_shift": None,
    "drift_onset_block": 0,
    "checkpoint": None,
    # synthetic fallback when no dataset is given
    "synth_classes": 10,
    "synth_dim": 10,
    "synth_samples_per_class": 100,
    "synth_std": 1.0,
    "synth_spread": 4.0,
}


class ConfigError(ValueError):
    pass


def _on_off(value):
    if value in ("on", "off"):
        return value == "on"
    raise argparse.ArgumentTypeError("expected 'on' or 'off'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="onlinecl",
        description="Online class-incremental learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in [
        ("pretest", "choose a block size by prequential probe accuracy"),
        ("scratch", "run the cold-start phase and save a phase checkpoint"),
        ("incremental", "resume from a checkpoint and run incremental phases"),
        ("protocol", "run the full benchmark protocol"),
        ("ablate", "loss-variant x exemplar-update ablation grid"),
    ]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--dataset", help="dataset path (synthetic blobs if omitted)")
        p.add_argument("--format", choices=["csv", "idx"])
        p.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV} or ./runs)")
        p.add_argument("--block-size", dest="block_size", help="block size p or 'pretest'")
        p.add_argument("--loss", choices=["ce", "cd", "mcd"])
        p.add_argument("--beta", type=float)
        p.add_argument("--temperature", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--exemplars-per-class", dest="exemplars_per_class", type=int)
        p.add_argument("--update-exemplars", dest="update_exemplars", type=_on_off)
        p.add_argument("--rehearsal", type=_on_off)
        p.add_argument("--replace-farthest", dest="replace_farthest", action="store_const", const=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", type=int)
        p.add_argument("--class-splits", dest="class_splits", help="comma list, e.g. 5,5")
        p.add_argument("--hidden-dims", dest="hidden_dims", help="comma list, e.g. 64,64")
        p.add_argument("--checkpoint", help="phase checkpoint prefix (incremental)")
    return parser


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key in ("class_splits", "hidden_dims"):
        if isinstance(cfg[key], str):
            try:
                cfg[key] = [int(v) for v in cfg[key].split(",") if v]
            except ValueError:
                raise ConfigError(f"{key}: expected a comma list of integers")
    _validate(cfg)
    return cfg


def _validate(cfg):
    if not 0 <= cfg["beta"] <= 1:
        raise ConfigError(f"beta: must be in [0, 1], got {cfg['beta']}")
    if cfg["temperature"] <= 0:
        raise ConfigError(f"temperature: must be > 0, got {cfg['temperature']}")
    if cfg["alpha"] is not None and not 0 <= cfg["alpha"] <= 1:
        raise ConfigError(f"alpha: must be in [0, 1] or null, got {cfg['alpha']}")
    if cfg["exemplars_per_class"] < 1:
        raise ConfigError("exemplars_per_class: must be >= 1")
    if cfg["loss"] not in ("ce", "cd", "mcd"):
        raise ConfigError(f"loss: must be ce, cd or mcd, got {cfg['loss']}")
    if cfg["seeds"] < 1:
        raise ConfigError("seeds: must be >= 1")
    if cfg["switch_threshold"] < 1:
        raise ConfigError("switch_threshold: must be >= 1")
    block = cfg["block_size"]
    if block != "pretest":
        try:
            block = int(block)
        except (TypeError, ValueError):
            raise ConfigError(f"block_size: expected an integer or 'pretest', got {block!r}")
        if block not in DEFAULT_BLOCK_CANDIDATES:
            raise ConfigError(
                f"block_size: must be one of {list(DEFAULT_BLOCK_CANDIDATES)} or 'pretest'"
            )
        cfg["block_size"] = block
    fractions = cfg["new_fraction"] + cfg["old_fraction"] + cfg["test_fraction"]
    if abs(fractions - 1.0) > 1e-9:
        raise ConfigError("new/old/test fractions must sum to 1")


def _load_data(cfg):
    if cfg["dataset"]:
        return load_dataset(cfg["dataset"], cfg["format"])
    return gaussian_blobs(
        n_classes=cfg["synth_classes"],
        dim=cfg["synth_dim"],
        samples_per_class=cfg["synth_samples_per_class"],
        std=cfg["synth_std"],
        spread=cfg["synth_spread"],
        seed=cfg["seed"],
    )


def _out_dir(cfg, command):
    root = cfg["out"] or os.environ.get(OUT_ROOT_ENV) or "runs"
    path = os.path.join(root, command)
    os.makedirs(path, exist_ok=True)
    return path


def _write_resolved(cfg, out):
    with open(os.path.join(out, "config.resolved.json"), "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)


def _scenario_spec(cfg, dataset):
    drift = None
    if cfg["drift_classes"] is not None and cfg["drift_shift"] is not None:
        drift = DriftSpec(
            class_ids=list(cfg["drift_classes"]),
            shift=np.asarray(cfg["drift_shift"], dtype=float),
            onset_block=int(cfg["drift_onset_block"]),
        )
    return ScenarioSpec(
        class_splits=list(cfg["class_splits"]),
        block_size=int(cfg["block_size"]),
        seed=cfg["seed"],
        new_fraction=cfg["new_fraction"],
        old_fraction=cfg["old_fraction"],
        test_fraction=cfg["test_fraction"],
        drift=drift,
    )


def _protocol_config(cfg, seed):
    return ProtocolConfig(
        hidden_dims=tuple(cfg["hidden_dims"]),
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        loss=cfg["loss"],
        beta=cfg["beta"],
        temperature=cfg["temperature"],
        alpha=cfg["alpha"],
        exemplars_per_class=cfg["exemplars_per_class"],
        update_exemplars=cfg["update_exemplars"],
        rehearsal=cfg["rehearsal"],
        replace_farthest=cfg["replace_farthest"],
        switch_threshold=cfg["switch_threshold"],
        scratch_classifier=cfg["scratch_classifier"],
        retrain_epochs=cfg["retrain_epochs"],
        retrain_batch_size=cfg["retrain_batch_size"],
        seed=seed,
    )


def _resolve_block_size(cfg, dataset):
    if cfg["block_size"] != "pretest":
        return cfg["block_size"], None
    rng = np.random.default_rng(cfg["seed"])
    perm = rng.permutation(dataset.X.shape[0])
    n_classes = dataset.n_classes

    def factory():
        return MLP([dataset.X.shape[1], *cfg["hidden_dims"], n_classes], seed=cfg["seed"])

    result = pretest_block_size(factory, dataset.X[perm], dataset.y[perm])
    return result.chosen, result


def _write_pretest_csv(result, path):
    with open(path, "w") as fh:
        fh.write("block_size,accuracy,chosen\n")
        for p in sorted(result.scores):
            fh.write(f"{p},{result.scores[p]!r},{int(p == result.chosen)}\n")


def cmd_pretest(cfg):
    out = _out_dir(cfg, "pretest")
    dataset = _load_data(cfg)
    cfg["block_size"] = "pretest"
    _write_resolved(cfg, out)
    chosen, result = _resolve_block_size(cfg, dataset)
    _write_pretest_csv(result, os.path.join(out, "pretest.csv"))
    print(f"chosen block size: {chosen}")
    return EXIT_OK


def cmd_scratch(cfg):
    out = _out_dir(cfg, "scratch")
    dataset = _load_data(cfg)
    cfg["block_size"], pre = _resolve_block_size(cfg, dataset)
    _write_resolved(cfg, out)
    if pre is not None:
        _write_pretest_csv(pre, os.path.join(out, "pretest.csv"))
    spec = _scenario_spec(cfg, dataset)
    scenario = make_scenario(dataset, spec)
    learner = ScratchLearner(
        hidden_dims=tuple(cfg["hidden_dims"]),
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        switch_threshold=cfg["switch_threshold"],
        classifier=cfg["scratch_classifier"],
        seed=cfg["seed"],
    )
    tracker = OnlineAccuracyTracker()
    rows = []
    for block in iter_blocks(scenario.phases[0], spec.block_size):
        preds = learner.process_block(block.X, block.y)
        for pred, actual, role in zip(preds, block.y, block.roles):
            tracker.record(int(pred), int(actual), int(role))
        rows.append((block.index, float((preds == block.y).mean())))
    retrain = RetrainConfig(
        epochs=cfg["retrain_epochs"],
        batch_size=cfg["retrain_batch_size"],
        sgd=_protocol_config(cfg, cfg["seed"]).sgd(),
        exemplars_per_class=cfg["exemplars_per_class"],
        seed=cfg["seed"],
    )
    model, exemplars = offline_retrain(
        learner.model_, scenario.phases[0].X, scenario.phases[0].y, retrain
    )
    n_old = model.n_out
    m_next = len(scenario.classes_per_phase[1]) if len(scenario.classes_per_phase) > 1 else 1
    save_phase_checkpoint(
        os.path.join(out, "phase0"),
        model,
        exemplars,
        LossConfig(n_old=n_old, m_new=m_next, temperature=cfg["temperature"], beta=cfg["beta"], alpha=cfg["alpha"]),
    )
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write("phase,step,block_index,metric,value\n")
        for idx, acc in rows:
            fh.write(f"0,0,{idx},block_acc,{acc!r}\n")
        fh.write(f"0,0,,online_acc_overall,{tracker.accuracy()!r}\n")
    print(f"scratch online accuracy: {tracker.accuracy():.4f}")
    print(f"checkpoint written to {os.path.join(out, 'phase0')}.*")
    return EXIT_OK


def cmd_incremental(cfg):
    if not cfg["checkpoint"]:
        raise ConfigError("incremental requires --checkpoint from a scratch run")
    out = _out_dir(cfg, "incremental")
    dataset = _load_data(cfg)
    if cfg["block_size"] == "pretest":
        cfg["block_size"], _ = _resolve_block_size(cfg, dataset)
    _write_resolved(cfg, out)
    model, exemplars, _ = load_phase_checkpoint(cfg["checkpoint"])
    exemplars.replace_farthest = cfg["replace_farthest"]
    spec = _scenario_spec(cfg, dataset)
    scenario = make_scenario(dataset, spec)
    if model.n_out != len(scenario.classes_per_phase[0]):
        raise ConfigError(
            "checkpoint head width does not match the scenario's first class split"
        )
    classes_seen = list(scenario.classes_per_phase[0])
    rows = []
    tracker = OnlineAccuracyTracker()
    for phase in range(1, len(scenario.phases)):
        old_classes = list(classes_seen)
        learner = IncrementalLearner(
            loss=cfg["loss"],
            beta=cfg["beta"],
            temperature=cfg["temperature"],
            alpha=cfg["alpha"],
            learning_rate=cfg["learning_rate"],
            momentum=cfg["momentum"],
            weight_decay=cfg["weight_decay"],
            rehearsal=cfg["rehearsal"],
            update_exemplars=cfg["update_exemplars"],
            seed=cfg["seed"] + phase,
        )
        learner.start_phase(model, exemplars, m_new=len(scenario.classes_per_phase[phase]))
        for block in iter_blocks(scenario.phases[phase], spec.block_size):
            preds = learner.process_block(block)
            for pred, actual, role in zip(preds, block.y, block.roles):
                tracker.record(int(pred), int(actual), int(role))
            rows.append((phase, block.index, float((preds == block.y).mean())))
        classes_seen.extend(scenario.classes_per_phase[phase])
        model = learner.model_
        exemplars = learner.exemplars_
    test_mask = np.isin(scenario.test_y, classes_seen)
    metrics = evaluate(model, scenario.test_X[test_mask], scenario.test_y[test_mask],
                       scenario.classes_per_phase[0])
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write("phase,step,block_index,metric,value\n")
        for phase, idx, acc in rows:
            fh.write(f"{phase},{phase},{idx},block_acc,{acc!r}\n")
        for kind in ("overall", "new", "old"):
            fh.write(f"{phase},{phase},,online_acc_{kind},"
                     f"{'' if tracker.accuracy(kind) is None else repr(tracker.accuracy(kind))}\n")
        for kind in ("overall", "new", "old"):
            val = metrics[kind]
            fh.write(f"{phase},{phase},,test_acc_{kind},{'' if val is None else repr(val)}\n")
    print(f"incremental online accuracy: {tracker.accuracy():.4f}")
    return EXIT_OK


def _run_protocol_seeds(cfg, out):
    dataset = _load_data(cfg)
    if cfg["block_size"] == "pretest":
        cfg["block_size"], pre = _resolve_block_size(cfg, dataset)
        if pre is not None:
            _write_pretest_csv(pre, os.path.join(out, "pretest.csv"))
    spec = _scenario_spec(cfg, dataset)
    summaries = []
    for i in range(cfg["seeds"]):
        seed = cfg["seed"] + i
        spec_i = ScenarioSpec(
            class_splits=spec.class_splits,
            block_size=spec.block_size,
            seed=seed,
            new_fraction=spec.new_fraction,
            old_fraction=spec.old_fraction,
            test_fraction=spec.test_fraction,
            drift=spec.drift,
        )
        report = run_protocol(dataset, spec_i, _protocol_config(cfg, seed))
        report.to_csv(os.path.join(out, f"report_seed{seed}.csv"))
        report.timings_to_csv(os.path.join(out, f"timings_seed{seed}.csv"))
        summaries.append({"seed": seed, **report.summary})
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
    return summaries


def cmd_protocol(cfg):
    out = _out_dir(cfg, "protocol")
    _write_resolved(cfg, out)
    summaries = _run_protocol_seeds(cfg, out)
    accs = [s["online_acc_overall"] for s in summaries]
    print(f"online accuracy over {len(accs)} seed(s): mean {np.mean(accs):.4f}")
    return EXIT_OK


def cmd_ablate(cfg):
    out = _out_dir(cfg, "ablate")
    _write_resolved(cfg, out)
    rows = []
    for loss in ("ce", "cd", "mcd"):
        for update in (True, False):
            sub = dict(cfg)
            sub["loss"] = loss
            sub["update_exemplars"] = update
            variant_dir = os.path.join(out, f"{loss}_update-{'on' if update else 'off'}")
            os.makedirs(variant_dir, exist_ok=True)
            summaries = _run_protocol_seeds(sub, variant_dir)
            for s in summaries:
                rows.append(
                    {
                        "loss": loss,
                        "update_exemplars": update,
                        "seed": s["seed"],
                        "online_acc_overall": s["online_acc_overall"],
                        "online_acc_old": s["online_acc_old"],
                        "online_acc_new": s["online_acc_new"],
                    }
                )
    with open(os.path.join(out, "ablation.csv"), "w") as fh:
        fh.write("loss,update_exemplars,seed,online_acc_overall,online_acc_old,online_acc_new\n")
        for r in rows:
            vals = [
                r["loss"],
                "on" if r["update_exemplars"] else "off",
                str(r["seed"]),
            ] + [
                "" if r[k] is None else repr(r[k])
                for k in ("online_acc_overall", "online_acc_old", "online_acc_new")
            ]
            fh.write(",".join(vals) + "\n")
    print(f"ablation grid written to {os.path.join(out, 'ablation.csv')}")
    return EXIT_OK


COMMANDS = {
    "pretest": cmd_pretest,
    "scratch": cmd_scratch,
    "incremental": cmd_incremental,
    "protocol": cmd_protocol,
    "ablate": cmd_ablate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
