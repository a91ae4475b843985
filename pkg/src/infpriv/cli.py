"""Command-line entry point: ``infpriv <subcommand> ...``.

Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from infpriv.auditor import (DEFAULT_TRIALS, audit_additive_mc, audit_calibration,
                             audit_end_to_end, worst_case_pair)
from infpriv.budget import PrivacyBudget, parse_norm
from infpriv.data import accuracy, gen_blobs, gen_fine_coarse_blobs, load_dataset, save_dataset
from infpriv.lipschitz import model_lipschitz
from infpriv.mechanisms import NoiseSpec, apply_mechanism, calibrate, calibrate_gauss_input
from infpriv.model import LayeredModel, load_model, predict, save_model
from infpriv.rng import RandomSource
from infpriv.sweep import SweepConfig, run_sweep, scaling_law_violations, write_sweep
from infpriv.training import TrainConfig, finetune_noisy, fit, init_model, mlp_arch


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(payload: Any, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _mechanism_for(placement: str, p: Any) -> str:
    p = parse_norm(p)
    if placement == "input":
        if p != 2:
            raise CliError("input placement is only defined for p = 2 (Gauss-Input)")
        return "gauss-input"
    return "lap-output" if p == 1 else "gauss-output"


def _budget(args) -> PrivacyBudget:
    if args.epsilon is None or args.alpha is None:
        raise CliError("a budget needs --epsilon and --alpha")
    return PrivacyBudget(args.epsilon, args.delta, args.alpha, parse_norm(args.p))


def _spec(args, model=None) -> NoiseSpec:
    mechanism = _mechanism_for(args.placement, args.p)
    budget = _budget(args)
    if mechanism == "gauss-input":
        dim = model.input_dim if model is not None else (args.dim or 1)
        return calibrate_gauss_input(budget, dim)
    dim = model.output_dim if model is not None else (args.dim or 1)
    return calibrate(mechanism, budget, model, mu=args.mu, dim=dim)


def cmd_gen_data(args) -> int:
    if args.kind == "fine-coarse":
        ds = gen_fine_coarse_blobs(args.n, seed=args.seed)
    else:
        ds = gen_blobs(args.n, args.classes, args.dim, args.spread, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {ds.features.shape[0]} rows to {args.out}")
    return 0


def _train_config(args, sigma_grid=(0.0,)) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                       seed=args.seed, noise_sigma=getattr(args, "noise_sigma", 0.0),
                       sigma_grid=tuple(sigma_grid))


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    config = _train_config(args)
    x, y = ds.split("train")
    widths, acts = mlp_arch(args.hidden, ds.classes)
    model = init_model(ds.dim, widths, acts, config.seed)
    model, history = fit(model, x, y, config)
    if args.declare_l2 is not None:
        model = LayeredModel(model.layers, model.input_dim, {2: args.declare_l2})
    save_model(model, args.out)
    xv, yv = ds.split("val")
    report = {"config": config.to_dict(), "hidden": args.hidden, "loss_history": history,
              "val_accuracy": accuracy(predict(model, xv), yv)}
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps({"model": args.out, "val_accuracy": report["val_accuracy"]}))
    return 0


def cmd_finetune(args) -> int:
    ds = load_dataset(args.data)
    model = load_model(args.model)
    if args.target_sigma is not None:
        target = args.target_sigma
    else:
        if args.alpha is None:
            raise CliError("give --target-sigma or a budget (--epsilon, --delta, --alpha)")
        budget = PrivacyBudget(args.epsilon, args.delta, args.alpha, 2)
        target = calibrate_gauss_input(budget, ds.dim).scale
    config = _train_config(args, args.sigma_grid)
    tuned, report = finetune_noisy(model, ds, config, target)
    save_model(tuned, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps({"model": args.out, "selected_sigma": report["selected_sigma"],
                      "selected_mean_acc": report["selected_mean_acc"], "target_sigma": target}))
    return 0


def cmd_lipschitz(args) -> int:
    bound = model_lipschitz(load_model(args.model), args.p)
    _emit(bound.to_dict(), args.out)
    return 0


def cmd_calibrate(args) -> int:
    model = load_model(args.model) if args.model else None
    spec = _spec(args, model)
    payload = spec.to_dict()
    if spec.warning:
        payload["audit"] = audit_calibration(spec).to_dict()
    _emit(payload, args.out)
    return 0


def cmd_infer(args) -> int:
    model = load_model(args.model)
    if args.spec:
        spec = NoiseSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = _spec(args, model)
    if args.x is not None:
        x = np.asarray(args.x, dtype=float)
    elif args.data:
        x, _ = load_dataset(args.data).split(args.split)
    else:
        raise CliError("give an input with --x or a dataset with --data")
    rng = RandomSource.for_trial(args.seed, 0, "infer")
    outputs = apply_mechanism(model, x, spec, rng)
    labels = np.argmax(outputs, axis=-1)
    payload = {"mechanism": spec.mechanism, "scale": spec.scale,
               "outputs": outputs.tolist(), "predictions": labels.tolist()}
    _emit(payload, args.out)
    return 0


def cmd_audit(args) -> int:
    model = load_model(args.model) if args.model else None
    spec = _spec(args, model)
    budget = spec.budget
    rng = RandomSource.for_trial(args.seed, 0, "audit")
    pair = worst_case_pair(budget, spec.placement, spec.dim, spec.mu)
    eps = args.audit_epsilon if args.audit_epsilon is not None else budget.epsilon
    result = {"spec": spec.to_dict()}
    report = audit_additive_mc(spec, pair.shift, eps, args.trials, rng,
                               pair_description=pair.description)
    result["mc"] = report.to_dict()
    if spec.family == "gaussian":
        result["analytic"] = audit_calibration(spec, epsilon=eps).to_dict()
    if args.end_to_end:
        if model is None:
            raise CliError("--end-to-end needs --model")
        e2e_pair = worst_case_pair(budget, "input", model.input_dim)
        e2e = audit_end_to_end(model, spec, budget, e2e_pair.x_a, e2e_pair.x_b, eps,
                               args.trials, args.bins, rng.child(7, "e2e"))
        result["end_to_end"] = e2e.to_dict()
    _emit(result, args.out)
    return 0 if report.verdict != "fail" else 1


def cmd_sweep(args) -> int:
    path = Path(args.config)
    config = SweepConfig.from_dict(json.loads(path.read_text()))
    if args.seed is not None:
        config = SweepConfig.from_dict({**config.to_dict(), "seed": args.seed})
    models: dict = {}
    rows = run_sweep(config, models=models, base_dir=path.parent)
    manifest_path = write_sweep(rows, config, args.out)
    failed = [r for r in rows if r.failed]
    print(f"wrote {len(rows)} rows to {args.out} (manifest {manifest_path}); {len(failed)} failed")
    if args.self_test:
        loaded = {m: load_model(path.parent / config.models.get(m, config.model)) for m in config.mechanisms}
        problems = scaling_law_violations(rows, loaded)
        for p in problems:
            print(f"self-test: {p}", file=sys.stderr)
        if problems:
            return 1
        print("self-test: scaling laws hold for every calibrated row")
    return 0


def _add_budget(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--epsilon", type=float, required=required)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--alpha", type=float, required=required)
    p.add_argument("--p", default="2", help="norm: 1, 2 or inf")
    p.add_argument("--placement", choices=("input", "output"), default="output")
    p.add_argument("--mu", type=float, default=None, help="Lipschitz constant (defaults to the model's bound)")
    p.add_argument("--dim", type=int, default=None, help="noise dimension when no model is given")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infpriv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a Gaussian-blobs dataset CSV")
    p.add_argument("--kind", choices=("blobs", "fine-coarse"), default="blobs")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--n", type=int, default=500, help="rows per class")
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an MLP classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=_ints, default=[16])
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--declare-l2", type=float, default=None,
                   help="record an externally certified l2 Lipschitz constant")
    _add_training(p)
    p.add_argument("--report", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="grid-search noisy fine-tuning for a target input noise")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sigma-grid", type=_floats, required=True)
    p.add_argument("--target-sigma", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--alpha", type=float, default=None)
    _add_training(p)
    p.add_argument("--report", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("lipschitz", help="certified global Lipschitz bound of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--p", type=int, choices=(1, 2), default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("calibrate", help="calibrate mechanism noise for a budget")
    _add_budget(p)
    p.add_argument("--model", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("infer", help="private inference on inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--spec", default=None, help="NoiseSpec JSON from `calibrate`")
    _add_budget(p, required=False)
    p.add_argument("--x", type=_floats, default=None, help="one comma-separated input")
    p.add_argument("--data", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("audit", help="audit a calibrated mechanism on its worst-case pair")
    _add_budget(p)
    p.add_argument("--model", default=None)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audit-epsilon", type=float, default=None,
                   help="audit at this epsilon instead of the calibrated one")
    p.add_argument("--end-to-end", action="store_true")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="accuracy sweep over alpha or epsilon")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--self-test", action="store_true",
                   help="check calibration scaling laws on every row")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
