"""Command line front end.

    privsweep synth  --n 2000 --input-dim 10 --classes 2 --separation 3 --out data.csv
    privsweep sweep  config.json [--out DIR] [--seed S ...] [--save-models]
    privsweep attack model.json config.json [--seed S]
    privsweep report RESULTS_DIR [--out DIR]

Exit codes: 0 success, 1 runtime failure (diagnostic on stderr), 2 usage.
The default output directory is $PRIVSWEEP_OUT, falling back to
./privsweep-out.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .attack import build_attack_set, evaluate_attack, fit_attack_forest, train_shadows
from .dataset import SyntheticSpec, make_split, save_csv, synthesize
from .errors import PrivsweepError
from .harness import (
    ExperimentConfig,
    default_output_dir,
    load_config,
    read_results,
    run_sweep,
    write_results,
)
from .mechanisms import PrivateModel
from .metrics import privacy_leakage, true_revealed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privsweep",
        description="Train privacy-preserving classifiers, attack them, report the trade-off.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="emit a synthetic dataset CSV")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--input-dim", type=int, required=True)
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--separation", type=float, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output CSV path")

    p_sweep = sub.add_parser("sweep", help="run a full mechanism/epsilon sweep")
    p_sweep.add_argument("config", help="JSON experiment config")
    p_sweep.add_argument("--out", default=None, help="results directory")
    p_sweep.add_argument(
        "--seed", type=int, nargs="+", default=None,
        help="override the config's seed list",
    )
    p_sweep.add_argument(
        "--save-models", action="store_true",
        help="persist every private model for later `attack` runs",
    )
    p_sweep.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p_attack = sub.add_parser("attack", help="attack one saved private model")
    p_attack.add_argument("model", help="saved private-model JSON")
    p_attack.add_argument("config", help="JSON experiment config (dataset + training)")
    p_attack.add_argument(
        "--seed", type=int, default=None,
        help="split/shadow seed (default: first seed in the config)",
    )

    p_report = sub.add_parser("report", help="plots and summary from a results directory")
    p_report.add_argument("results_dir")
    p_report.add_argument("--out", default=None, help="plot directory (default: results dir)")

    return parser


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        input_dim=args.input_dim,
        class_count=args.classes,
        class_separation=args.separation,
        seed=args.seed,
    )
    ds = synthesize(spec)
    save_csv(ds, args.out)
    print(f"wrote {ds.n} rows ({ds.input_dim} features, {ds.class_count} classes) to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seeds=tuple(args.seed))
    out_dir = args.out or default_output_dir()

    sink = None
    if args.save_models:
        model_dir = os.path.join(out_dir, "models")
        os.makedirs(model_dir, exist_ok=True)

        def sink(model: PrivateModel, mech: str, eps: float, seed: int) -> None:
            model.save(os.path.join(model_dir, f"{mech}_eps{eps:g}_seed{seed}.json"))

    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    result = run_sweep(config, progress=progress, model_sink=sink)
    csv_path = write_results(result, out_dir)
    ok = sum(1 for r in result.rows if r.status == "ok")
    print(f"wrote {len(result.rows)} rows ({ok} ok) to {csv_path}")
    return 0


def _cmd_attack(args) -> int:
    model = PrivateModel.load(args.model)
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]

    from .harness import load_dataset  # local import keeps CLI startup light

    ds = load_dataset(config)
    split = make_split(ds, seed)
    Xtr, ytr = ds.features[split.target_train], ds.labels[split.target_train]
    Xte, yte = ds.features[split.target_test], ds.labels[split.target_test]
    Xpool, ypool = ds.features[split.shadow_pool], ds.labels[split.shadow_pool]

    shadows = train_shadows(model.arch, Xpool, ypool, config.train, seed)
    records, member = build_attack_set(shadows, Xpool, ypool, seed)
    forest = fit_attack_forest(records, member, seed)
    outcome = evaluate_attack(
        forest, model.predict_proba, Xtr, ytr, Xte, yte, ds.class_count
    )
    acc = float(np.mean(model.predict_proba(Xte).argmax(axis=1) == yte))
    print(f"model: {args.model}")
    print(f"mechanism={model.kind} epsilon={model.spec.budget.epsilon:g} seed={seed}")
    print(f"test accuracy      {acc:.4f}")
    print(f"tp={outcome.true_positives} fp={outcome.false_positives} "
          f"tn={outcome.true_negatives} fn={outcome.false_negatives}")
    print(f"tpr                {outcome.tpr:.4f}")
    print(f"fpr                {outcome.fpr:.4f}")
    print(f"privacy leakage    {privacy_leakage(outcome):.4f}")
    print(f"members revealed   {true_revealed(outcome)} of {outcome.n_members}")
    return 0


def _cmd_report(args) -> int:
    result = read_results(args.results_dir)
    out_dir = args.out or args.results_dir

    from .plots import emit_plots, summary_table  # defer matplotlib import

    written = emit_plots(result, out_dir)
    print(summary_table(result))
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "sweep": _cmd_sweep,
    "attack": _cmd_attack,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PrivsweepError as err:
        print(f"privsweep: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"privsweep: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
