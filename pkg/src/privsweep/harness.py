"""Experiment driver: parse a JSON config, sweep every requested mechanism
over an epsilon grid and a seed list, attack each private model, and
persist the metric rows.

Per seed the driver trains one non-private baseline and one shadow
ensemble plus attack forest; both are reused across all mechanisms and
epsilon values (the shadows are non-private, so nothing about them
depends on the mechanism under test). Output is a results.csv with a
fixed header plus a run_meta.json sidecar carrying wall time and version
stamps, kept out of the CSV so identical configs give identical CSV
bytes.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import learners
from .attack import build_attack_set, evaluate_attack, fit_attack_forest, train_shadows
from .dataset import Dataset, SyntheticSpec, load_csv, make_split, normalize_rows_to_unit_ball, synthesize
from .errors import ConfigurationError, FormatError, PrivsweepError
from .learners import MLP_HIDDEN, TrainConfig, lr_arch, mlp_arch
from .mechanisms import (
    MECHANISM_KINDS,
    MechanismSpec,
    PrivacyBudget,
    PrivateModel,
    build_private_model,
    default_delta,
)
from .metrics import privacy_leakage, true_revealed, utility_loss
from .numkit import GENERATOR_NAME, derive_seed

VERSION = "0.1.0"

EPSILON_FLOOR = 1e-2
EPSILON_CEIL = 1e4
DEFAULT_EPSILON_GRID = (1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3, 1e4)

OUTPUT_DIR_ENV = "PRIVSWEEP_OUT"

RESULTS_HEADER = (
    "dataset,arch,mechanism,epsilon,seed,acc_nonprivate,acc_private,utility_loss,"
    "tpr,fpr,privacy_leakage,true_revealed,n_members,status"
)

_TRAIN_KEYS = ("epochs", "learning_rate", "batch_size", "l2_lambda")
_CONFIG_KEYS = (
    "name",
    "dataset",
    "arch",
    "hidden",
    "mechanisms",
    "epsilons",
    "seeds",
    "train",
    "delta",
    "clip_norm",
    "c2",
    "teachers",
    "lipschitz",
    "normalize",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs. Constructed directly or from JSON."""

    arch: str
    mechanisms: tuple[str, ...]
    synthetic: SyntheticSpec | None = None
    csv_path: str | None = None
    label_column: str = "label"
    csv_class_count: int | None = None
    name: str | None = None
    hidden: tuple[int, ...] = MLP_HIDDEN
    epsilons: tuple[float, ...] = DEFAULT_EPSILON_GRID
    seeds: tuple[int, ...] = (0,)
    train: TrainConfig = field(default_factory=TrainConfig)
    delta: float | None = None
    clip_norm: float = 1.0
    c2: float = 1.0
    teachers: int | None = None
    lipschitz: float = 1.0
    normalize: bool = True

    def __post_init__(self):
        if self.arch not in ("lr", "mlp"):
            raise ConfigurationError(f"arch must be 'lr' or 'mlp', got {self.arch!r}")
        if not self.mechanisms:
            raise ConfigurationError("need at least one mechanism")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        if len(set(self.mechanisms)) != len(self.mechanisms):
            raise ConfigurationError("mechanism list contains duplicates")
        for mech in self.mechanisms:
            if mech not in MECHANISM_KINDS:
                raise ConfigurationError(
                    f"unknown mechanism {mech!r}; expected one of {MECHANISM_KINDS}"
                )
            if mech in ("objective", "output") and self.arch != "lr":
                raise ConfigurationError(
                    f"{mech} perturbation is defined for the linear model only "
                    f"and cannot run with arch={self.arch!r}"
                )
        if not self.epsilons:
            raise ConfigurationError("epsilon grid is empty")
        for eps in self.epsilons:
            if not EPSILON_FLOOR <= eps <= EPSILON_CEIL:
                raise ConfigurationError(
                    f"epsilon {eps} outside the supported grid "
                    f"[{EPSILON_FLOOR}, {EPSILON_CEIL}]"
                )
        if (self.synthetic is None) == (self.csv_path is None):
            raise ConfigurationError(
                "config must name exactly one dataset source (synthetic or csv)"
            )
        if self.csv_path is not None and self.csv_class_count is None:
            raise ConfigurationError("csv datasets must state class_count")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")


def config_from_json(text: str) -> ExperimentConfig:
    """Parse the documented JSON schema; unknown keys are rejected so a typo
    never silently falls back to a default."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(f"config is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise FormatError("config must be a JSON object")
    for key in raw:
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
    if "dataset" not in raw or "arch" not in raw or "mechanisms" not in raw:
        raise ConfigurationError("config needs 'dataset', 'arch' and 'mechanisms'")

    src = raw["dataset"]
    if not isinstance(src, dict) or "kind" not in src:
        raise ConfigurationError("dataset must be an object with a 'kind'")
    synthetic = None
    csv_path = None
    label_column = "label"
    csv_class_count = None
    if src["kind"] == "synthetic":
        wanted = {"kind", "n", "input_dim", "class_count", "class_separation", "seed"}
        extra = set(src) - wanted
        if extra:
            raise ConfigurationError(f"unknown synthetic dataset keys {sorted(extra)}")
        synthetic = SyntheticSpec(
            n=int(src["n"]),
            input_dim=int(src["input_dim"]),
            class_count=int(src["class_count"]),
            class_separation=float(src["class_separation"]),
            seed=int(src.get("seed", 0)),
        )
    elif src["kind"] == "csv":
        wanted = {"kind", "path", "label_column", "class_count"}
        extra = set(src) - wanted
        if extra:
            raise ConfigurationError(f"unknown csv dataset keys {sorted(extra)}")
        if "path" not in src:
            raise ConfigurationError("csv dataset needs a 'path'")
        csv_path = str(src["path"])
        label_column = str(src.get("label_column", "label"))
        if src.get("class_count") is not None:
            csv_class_count = int(src["class_count"])
    else:
        raise ConfigurationError(f"dataset kind must be 'synthetic' or 'csv', got {src['kind']!r}")

    train_raw = raw.get("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigurationError("'train' must be an object")
    for key in train_raw:
        if key not in _TRAIN_KEYS:
            raise ConfigurationError(
                f"unknown train key {key!r}; allowed: {_TRAIN_KEYS}"
            )
    train = TrainConfig(
        epochs=int(train_raw.get("epochs", 100)),
        learning_rate=float(train_raw.get("learning_rate", 0.01)),
        batch_size=int(train_raw.get("batch_size", 250)),
        l2_lambda=float(train_raw.get("l2_lambda", 1e-4)),
    )

    return ExperimentConfig(
        arch=str(raw["arch"]),
        mechanisms=tuple(str(m) for m in raw["mechanisms"]),
        synthetic=synthetic,
        csv_path=csv_path,
        label_column=label_column,
        csv_class_count=csv_class_count,
        name=raw.get("name"),
        hidden=tuple(int(h) for h in raw.get("hidden", MLP_HIDDEN)),
        epsilons=tuple(float(e) for e in raw.get("epsilons", DEFAULT_EPSILON_GRID)),
        seeds=tuple(int(s) for s in raw.get("seeds", (0,))),
        train=train,
        delta=None if raw.get("delta") is None else float(raw["delta"]),
        clip_norm=float(raw.get("clip_norm", 1.0)),
        c2=float(raw.get("c2", 1.0)),
        teachers=None if raw.get("teachers") is None else int(raw["teachers"]),
        lipschitz=float(raw.get("lipschitz", 1.0)),
        normalize=bool(raw.get("normalize", True)),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_json(fh.read())


@dataclass(frozen=True)
class MetricRow:
    """One (mechanism, epsilon, seed) cell of the sweep. Failed cells carry
    status='failed' and None in every metric field."""

    dataset: str
    arch: str
    mechanism: str
    epsilon: float
    seed: int
    acc_nonprivate: float | None
    acc_private: float | None
    utility_loss: float | None
    tpr: float | None
    fpr: float | None
    privacy_leakage: float | None
    true_revealed: int | None
    n_members: int | None
    status: str = "ok"


@dataclass(frozen=True)
class RunMeta:
    dataset: str
    arch: str
    wall_time_s: float
    generator: str = GENERATOR_NAME
    version: str = VERSION


@dataclass
class SweepResult:
    rows: list[MetricRow]
    meta: RunMeta


ModelSink = Callable[[PrivateModel, str, float, int], None]


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.synthetic is not None:
        ds = synthesize(config.synthetic)
    else:
        ds = load_csv(
            config.csv_path,
            label_column=config.label_column,
            class_count=config.csv_class_count,
            name=config.name,
        )
    if config.normalize:
        ds = normalize_rows_to_unit_ball(ds)
    return ds


def _teacher_count(config: ExperimentConfig, class_count: int) -> int:
    if config.teachers is not None:
        return config.teachers
    return 30 if class_count == 2 else 40


def _check_split_hygiene(split) -> None:
    """The attack is never evaluated on shadow data, and accuracy is never
    measured on records the attack model trained on. Both reduce to the
    three index sets being pairwise disjoint, re-checked here at run time."""
    pairs = (
        (split.target_train, split.shadow_pool),
        (split.target_test, split.shadow_pool),
        (split.target_train, split.target_test),
    )
    for a, b in pairs:
        if np.intersect1d(a, b).size:
            raise ConfigurationError("split hygiene violated: index sets overlap")


def run_sweep(
    config: ExperimentConfig,
    progress: Callable[[str], None] | None = None,
    model_sink: ModelSink | None = None,
) -> SweepResult:
    """Execute the full sweep. Deterministic in the config: the same config
    always returns the same rows. Per-cell failures (infeasible noise
    parameters, diverged training) become status='failed' rows; anything
    wrong with the config itself raises before any training starts."""

    def say(msg: str) -> None:
        if progress is not None:
            progress(msg)

    started = time.monotonic()
    ds = load_dataset(config)
    c = ds.class_count
    if config.arch == "lr":
        arch = lr_arch(ds.input_dim, c)
    else:
        arch = mlp_arch(ds.input_dim, c, config.hidden)

    rows: list[MetricRow] = []
    for seed in config.seeds:
        split = make_split(ds, seed)
        _check_split_hygiene(split)
        Xtr, ytr = ds.features[split.target_train], ds.labels[split.target_train]
        Xte, yte = ds.features[split.target_test], ds.labels[split.target_test]
        Xpool, ypool = ds.features[split.shadow_pool], ds.labels[split.shadow_pool]
        n_train = Xtr.shape[0]
        delta = config.delta if config.delta is not None else default_delta(n_train)

        base_cfg = replace(
            learners.cap_batch(config.train, n_train),
            seed=derive_seed(seed, "harness.baseline"),
        )
        baseline = learners.train(arch, Xtr, ytr, base_cfg)
        acc_np = learners.evaluate(baseline, Xte, yte)
        say(f"seed {seed}: baseline accuracy {acc_np:.4f}")

        shadows = train_shadows(arch, Xpool, ypool, config.train, seed)
        records, member = build_attack_set(shadows, Xpool, ypool, seed)
        forest = fit_attack_forest(records, member, seed)
        say(f"seed {seed}: attack forest fitted on {records.shape[0]} records")

        for mech in config.mechanisms:
            for eps in config.epsilons:
                rows.append(
                    _run_cell(
                        config, ds, arch, mech, eps, seed, delta,
                        Xtr, ytr, Xte, yte, acc_np, forest, c,
                        say, model_sink,
                    )
                )

    meta = RunMeta(
        dataset=ds.name,
        arch=config.arch,
        wall_time_s=time.monotonic() - started,
    )
    return SweepResult(rows=rows, meta=meta)


def _run_cell(
    config, ds, arch, mech, eps, seed, delta,
    Xtr, ytr, Xte, yte, acc_np, forest, class_count,
    say, model_sink,
) -> MetricRow:
    failed = MetricRow(
        dataset=ds.name, arch=config.arch, mechanism=mech, epsilon=eps, seed=seed,
        acc_nonprivate=None, acc_private=None, utility_loss=None,
        tpr=None, fpr=None, privacy_leakage=None,
        true_revealed=None, n_members=None, status="failed",
    )
    try:
        spec = MechanismSpec(
            kind=mech,
            budget=PrivacyBudget(eps, delta),
            clip_norm=config.clip_norm,
            c2=config.c2,
            teachers=_teacher_count(config, class_count),
            lipschitz=config.lipschitz,
        )
        cell_cfg = replace(
            config.train,
            seed=derive_seed(seed, f"harness.private/{mech}/eps={eps:.17g}"),
        )
        model = build_private_model(arch, Xtr, ytr, class_count, spec, cell_cfg)
        acc_p = model.accuracy(Xte, yte)
        outcome = evaluate_attack(
            forest, model.predict_proba, Xtr, ytr, Xte, yte, class_count
        )
        if model_sink is not None:
            model_sink(model, mech, eps, seed)
        return MetricRow(
            dataset=ds.name,
            arch=config.arch,
            mechanism=mech,
            epsilon=eps,
            seed=seed,
            acc_nonprivate=acc_np,
            acc_private=acc_p,
            utility_loss=utility_loss(acc_p, acc_np),
            tpr=outcome.tpr,
            fpr=outcome.fpr,
            privacy_leakage=privacy_leakage(outcome),
            true_revealed=true_revealed(outcome),
            n_members=outcome.n_members,
            status="ok",
        )
    except PrivsweepError as err:
        say(f"seed {seed}: {mech} at eps={eps:g} failed: {err}")
        return failed


# ----------------------------------------------------------------------
# persistence

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_results(result: SweepResult, out_dir: str) -> str:
    """Write results.csv (deterministic bytes) and run_meta.json; returns the
    CSV path."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [RESULTS_HEADER]
    for r in result.rows:
        lines.append(
            ",".join(
                [
                    r.dataset,
                    r.arch,
                    r.mechanism,
                    _fmt(r.epsilon),
                    str(r.seed),
                    _fmt(r.acc_nonprivate),
                    _fmt(r.acc_private),
                    _fmt(r.utility_loss),
                    _fmt(r.tpr),
                    _fmt(r.fpr),
                    _fmt(r.privacy_leakage),
                    _fmt(r.true_revealed),
                    _fmt(r.n_members),
                    r.status,
                ]
            )
        )
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta_path = os.path.join(out_dir, "run_meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "dataset": result.meta.dataset,
                "arch": result.meta.arch,
                "wall_time_s": result.meta.wall_time_s,
                "generator": result.meta.generator,
                "version": result.meta.version,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return csv_path


def _parse_opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def _parse_opt_int(text: str) -> int | None:
    return None if text == "" else int(text)


def read_results(out_dir: str) -> SweepResult:
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise FormatError(
            f"results header mismatch in {csv_path}; "
            "expected the versioned sweep schema"
        )
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 14:
            raise FormatError(f"malformed results row at line {ln} of {csv_path}")
        rows.append(
            MetricRow(
                dataset=parts[0],
                arch=parts[1],
                mechanism=parts[2],
                epsilon=float(parts[3]),
                seed=int(parts[4]),
                acc_nonprivate=_parse_opt_float(parts[5]),
                acc_private=_parse_opt_float(parts[6]),
                utility_loss=_parse_opt_float(parts[7]),
                tpr=_parse_opt_float(parts[8]),
                fpr=_parse_opt_float(parts[9]),
                privacy_leakage=_parse_opt_float(parts[10]),
                true_revealed=_parse_opt_int(parts[11]),
                n_members=_parse_opt_int(parts[12]),
                status=parts[13],
            )
        )
    meta_path = os.path.join(out_dir, "run_meta.json")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            m = json.load(fh)
        meta = RunMeta(
            dataset=m["dataset"],
            arch=m["arch"],
            wall_time_s=m["wall_time_s"],
            generator=m["generator"],
            version=m["version"],
        )
    except FileNotFoundError:
        dataset = rows[0].dataset if rows else ""
        arch = rows[0].arch if rows else ""
        meta = RunMeta(dataset=dataset, arch=arch, wall_time_s=0.0)
    return SweepResult(rows=rows, meta=meta)


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "privsweep-out")
