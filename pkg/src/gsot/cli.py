"""Command-line driver: ``gsot <command> --config PATH [--seed N] [--out DIR]``.

Commands
--------
train            fit a model (GSAT, ERM or a PGD/FGSM baseline)
eval             accuracy under every configured attack ladder
attack           like eval, and also writes the attacked test sets
select-features  rank features by structured perturbation mass
select-basis     principal subspace of structured perturbations
verify           run the oracle suite

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure (1 for any other package error).
"""

import argparse
import os
import sys
import warnings

import numpy as np

from gsot.attacks import AttackConfig, attack_in_groups, average_norm
from gsot.config import load_config, load_data, planted_support
from gsot.data import Dataset, mean_feature_norm, save_csv
from gsot.errors import ConfigError, GsotError, VerificationFailure
from gsot.fileio import write_csv_atomic, write_text_atomic
from gsot.gdadmm import adversarial_train, erm_train, gsat_train
from gsot.models import LabeledBatch, accuracy, load_model, save_model
from gsot.selection import select_basis, select_features
from gsot.verify import run_suite

METRICS_COLUMNS = ("model", "attack", "param", "accuracy", "mean_norm")


def _out_dir(cfg):
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    return out


def _model_path(cfg):
    if cfg.model_path:
        return cfg.path("model.path")
    return os.path.join(cfg.out, "model.txt")


def _load_trained(cfg):
    path = _model_path(cfg)
    if not os.path.isfile(path):
        raise ConfigError(f"model file {path!r} does not exist")
    return load_model(path)


def _baseline_attack(cfg, mean_norm):
    if cfg.train_budget > 0:
        steps = 20 if cfg.train_method == "pgd" else 1
        return AttackConfig(cfg.train_method, steps, 0.05 * mean_norm, cfg.train_budget,
                            seed=cfg.seed)
    spec = next(a for a in cfg.attacks if a.index == cfg.train_attack)
    base = spec.resolve(mean_norm, seed=cfg.seed)
    return AttackConfig(cfg.train_method, base.steps, base.step_size, base.max_norm,
                        seed=cfg.seed)


def run_train(cfg):
    """Train per config; writes model.txt, summary.txt and (GSAT) trace.csv."""
    train, test = load_data(cfg)
    out = _out_dir(cfg)
    mean_norm = mean_feature_norm(train)
    K = max(train.num_classes, test.num_classes)
    summary = {"method": cfg.train_method, "mean_feature_norm": mean_norm}
    if cfg.train_method == "gsat":
        spec = cfg.cost_spec(train.x)
        params, trace = gsat_train(train, cfg.arch, spec, cfg.solver, cfg.hidden, K)
        trace.to_csv(os.path.join(out, "trace.csv"))
        summary.update(cost=spec.kind.value, alpha=spec.alpha, **{"lambda": spec.lam},
                       mean_perturbation_norm=trace.mean_perturbation_norm())
    elif cfg.train_method == "erm":
        params = erm_train(train, cfg.arch, cfg.solver, cfg.hidden, K)
    else:
        acfg = _baseline_attack(cfg, mean_norm)
        params = adversarial_train(train, cfg.arch, cfg.solver, acfg, cfg.hidden, K)
        summary.update(attack_budget=acfg.max_norm, attack_step=acfg.step_size)
    summary["train_accuracy"] = accuracy(params, train.batch())
    summary["test_accuracy"] = accuracy(params, test.batch())
    save_model(params, os.path.join(out, "model.txt"))
    write_text_atomic(os.path.join(out, "summary.txt"),
                      "".join(f"{k} = {_fmt(v)}\n" for k, v in summary.items()))
    return params, summary


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def read_summary(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                out[k] = v
    return out


def evaluate(params, test, attacks, mean_norm, tag, seed=0, keep=False):
    """Metrics rows (and optionally the perturbed sets) for every ladder entry."""
    rows, perturbed = [], []
    batch = test.batch()
    for spec in attacks:
        for param in spec.ladder:
            if param == 0:
                delta = np.zeros_like(test.x)
            else:
                acfg = spec.resolve(mean_norm, param, seed)
                delta = attack_in_groups(params, batch, acfg, spec.group_size)
            acc = accuracy(params, LabeledBatch(test.x + delta, test.y))
            rows.append([tag, spec.kind, "" if param is None else int(param), acc,
                         average_norm(delta)])
            if keep:
                perturbed.append((spec, param, delta))
    return rows, perturbed


def run_eval(cfg, keep=False):
    train, test = load_data(cfg)
    params = _load_trained(cfg)
    if not cfg.attacks:
        raise ConfigError("eval needs at least one attack.N section")
    out = _out_dir(cfg)
    tag = cfg.get("model.tag") or os.path.splitext(os.path.basename(_model_path(cfg)))[0]
    # budgets and step sizes are relative to the training-set mean norm
    rows, perturbed = evaluate(params, test, cfg.attacks, mean_feature_norm(train), tag,
                               cfg.seed, keep)
    write_csv_atomic(os.path.join(out, "metrics.csv"), METRICS_COLUMNS, rows)
    for spec, param, delta in perturbed:
        name = f"attacked_{spec.index}_{spec.kind}_{'na' if param is None else param}.csv"
        save_csv(Dataset(test.x + delta, test.y, "test", "attacked"), os.path.join(out, name))
    return rows


def run_select(cfg, what):
    train, _ = load_data(cfg)
    params = _load_trained(cfg)
    out = _out_dir(cfg)
    spec = cfg.cost_spec(train.x)
    R = cfg.num("select.R", int)
    attack_cfg = None
    if cfg.get("select.method") == "attack":
        idx = cfg.num("select.attack", int)
        aspec = next((a for a in cfg.attacks if a.index == idx), None)
        if aspec is None:
            raise ConfigError(f"select.attack refers to missing attack.{idx}")
        size = cfg.num("select.k", int) if what == "features" else cfg.num("select.r", int)
        attack_cfg = aspec.resolve(mean_feature_norm(train), size, cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if what == "features":
            report = select_features(params, train, spec, cfg.solver,
                                     cfg.num("select.k", int), R, attack_cfg)
            path = os.path.join(out, "features.csv")
        else:
            report = select_basis(params, train, spec, cfg.solver,
                                  cfg.num("select.r", int), R, attack_cfg)
            path = os.path.join(out, "basis.csv")
    lines = [f"# warning: {w.message}" for w in caught if what == "features"]
    lines += report.lines()
    truth = planted_support(cfg)
    if truth is not None:
        lines.insert(0, f"# planted support: {np.asarray(truth).round(6).tolist()}")
    write_text_atomic(path, "\n".join(lines) + "\n")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return report


def run_verify(cfg):
    results = run_suite(
        seed=cfg.seed,
        prox_instances=cfg.num("verify.prox_instances", int),
        grad_instances=cfg.num("verify.grad_instances", int),
        bracket_instances=cfg.num("verify.bracket_instances", int),
        duality_trials=cfg.num("verify.duality_trials", int),
        prox_threshold_scale=cfg.num("verify.prox_threshold_scale"),
    )
    out = _out_dir(cfg)
    for r in results:
        print(r.line())
    write_csv_atomic(os.path.join(out, "verify.csv"),
                     ("check", "passed", "cases", "worst"),
                     [[r.name, int(r.passed), r.cases, float(r.worst)] for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailure(f"failed checks: {', '.join(failed)}")
    return results


COMMANDS = ("train", "eval", "attack", "select-features", "select-basis", "verify")


def build_parser():
    parser = argparse.ArgumentParser(prog="gsot", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "verify"),
                       help="experiment config (key = value lines)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            from gsot.config import build_config
            raw = {"seed": str(args.seed or 0), "out": args.out or "runs/verify"}
            cfg = build_config(raw)
        else:
            cfg = load_config(args.config, seed=args.seed, out=args.out)
        if args.command == "train":
            _, summary = run_train(cfg)
            print(f"trained {summary['method']}: test accuracy {summary['test_accuracy']:.4f}")
        elif args.command in ("eval", "attack"):
            for row in run_eval(cfg, keep=args.command == "attack"):
                print(",".join(_fmt(v) for v in row))
        elif args.command == "select-features":
            report = run_select(cfg, "features")
            print("selected features:", " ".join(str(int(j)) for j in report.selected))
        elif args.command == "select-basis":
            report = run_select(cfg, "basis")
            print("singular values:", " ".join(f"{s:.6g}" for s in report.singular_values))
        else:
            run_verify(cfg)
    except GsotError as exc:
        print(f"gsot {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"gsot {args.command}: invalid input: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except ArithmeticError as exc:
        print(f"gsot {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
