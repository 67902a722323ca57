"""The five noise-perturbation mechanisms, each turning a training slice into
a PrivateModel that answers probability-vector queries.

  input       noise added to the training features before fitting
  objective   a random linear term added to the convex training objective
  gradient    per-step noise on gradients (full-batch Laplace for the convex
              model, clipped-and-noised per-example sums otherwise)
  output      noise added to the fitted parameter vector
  prediction  noisy vote aggregation over an ensemble of disjoint teachers

Budgets follow the usual (epsilon, delta) convention: lower epsilon means
more noise. Every mechanism is deterministic given (config.seed, spec, data);
noise streams are derived per mechanism so runs never share draws.

The objective and output mechanisms apply to the linear model only and use a
bias-free binary formulation (labels remapped to -1/+1, features required
inside the unit ball); multi-class inputs are reduced one-vs-rest with a
fresh noise draw per class at the full budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import learners
from .dataset import observed_bounds
from .errors import (
    ConfigurationError,
    FormatError,
    InfeasibleParametersError,
    ParameterError,
)
from .learners import Model, ModelArch, TrainConfig, cap_batch
from .numkit import clip_rows_to_norm, derive_rng, derive_seed, sample_gaussian, sample_laplace

MECHANISM_KINDS = ("input", "objective", "gradient", "output", "prediction")

ROW_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class PrivacyBudget:
    """(epsilon, delta) privacy budget.

    epsilon is the sweep knob (the stock grid spans 1e-2 to 1e4); delta is
    the slack term used only by the Gaussian-noise mechanisms and should stay
    below 1/n_train (default_delta implements the stock rule).
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")


def default_delta(n_train: int) -> float:
    """1/(10 * n_train) rounded down to a power of ten (always < 1/n_train)."""
    if n_train < 1:
        raise ParameterError("n_train must be positive")
    return 10.0 ** math.floor(math.log10(1.0 / (10.0 * n_train)))


@dataclass(frozen=True)
class MechanismSpec:
    kind: str
    budget: PrivacyBudget
    clip_norm: float = 1.0
    c2: float = 1.0
    teachers: int = 30
    lipschitz: float = 1.0

    def __post_init__(self):
        if self.kind not in MECHANISM_KINDS:
            raise ParameterError(
                f"unknown mechanism {self.kind!r}; expected one of {MECHANISM_KINDS}"
            )
        if self.clip_norm <= 0 or self.c2 <= 0 or self.lipschitz <= 0:
            raise ParameterError("clip_norm, c2 and lipschitz must be positive")
        if self.teachers < 2:
            raise ParameterError("teachers must be at least 2")


# ----------------------------------------------------------------------
# noise-scale arithmetic (kept as standalone functions so the numbers can
# be checked independently of any training run)

def input_lr_feasibility(n: int, delta: float) -> float:
    """The dimensionless ratio sqrt((4/delta)/n) gating the linear-model
    input-noise formula; the closed form below only exists while it is
    under 1/2 (equivalently delta > 16/n)."""
    if delta <= 0:
        return math.inf
    return math.sqrt((4.0 / delta) / n)


def input_lr_sigma(n: int, d: int, l2_lambda: float, epsilon: float, delta: float) -> float:
    """Per-feature noise sigma for input perturbation of the linear model.

    sigma = (sqrt(2d)*a*lam + sqrt(2d*a^2*lam^2 + 2*lam*(1-2a)/eps)) / (1-2a)
    with a = sqrt((4/delta)/n); the variance actually applied per feature is
    sigma^2 / n.
    """
    a = input_lr_feasibility(n, delta)
    if not a < 0.5:
        raise InfeasibleParametersError(
            "input noise formula needs sqrt((4/delta)/n) < 1/2, i.e. delta > 16/n",
            n=n,
            delta=delta,
        )
    lam = l2_lambda
    root = math.sqrt(2 * d * a * a * lam * lam + 2 * lam * (1 - 2 * a) / epsilon)
    return (math.sqrt(2 * d) * a * lam + root) / (1 - 2 * a)


def input_mlp_sigma_sq(
    n: int,
    total_steps: int,
    epsilon: float,
    delta: float,
    lipschitz: float = 1.0,
    noise_const: float = 1.0,
) -> float:
    """Per-feature noise variance for input perturbation of the network:
    c * G^2 * T * ln(1/delta) / (n * (n-1) * eps^2)."""
    if n < 2:
        raise ParameterError(f"need at least 2 records, got n={n}")
    if delta <= 0:
        raise ParameterError("delta must be positive for the Gaussian input bound")
    return (
        noise_const
        * lipschitz**2
        * total_steps
        * math.log(1.0 / delta)
        / (n * (n - 1) * epsilon**2)
    )


def objective_noise_scale(n: int, epsilon: float) -> float:
    """Effective scale of the random linear term in the objective: 2/(n*eps)."""
    return 2.0 / (n * epsilon)


def gradient_noise_scale(n: int, epsilon: float) -> float:
    """Per-coordinate Laplace scale for each full-batch gradient step: 2/(n*eps)."""
    return 2.0 / (n * epsilon)


def output_noise_scale(n: int, l2_lambda: float, epsilon: float) -> float:
    """Magnitude scale of the noise added to the fitted parameters: 2/(n*lam*eps)."""
    if l2_lambda <= 0:
        raise ParameterError("output perturbation needs l2_lambda > 0")
    return 2.0 / (n * l2_lambda * epsilon)


def dpsgd_sigma(
    sample_rate: float, total_steps: int, epsilon: float, delta: float, c2: float = 1.0
) -> float:
    """Gaussian multiplier for clipped-gradient noising:
    c2 * q * sqrt(T * ln(1/delta)) / eps with q the batch sampling rate."""
    if delta <= 0:
        raise ParameterError("delta must be positive for the Gaussian gradient bound")
    return c2 * sample_rate * math.sqrt(total_steps * math.log(1.0 / delta)) / epsilon


# ----------------------------------------------------------------------
# shared pieces

def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sample_sphere_noise(rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    """A noise vector with density proportional to exp(-||b|| / scale):
    uniform direction on the sphere, Gamma(dim, scale) magnitude."""
    if scale <= 0:
        raise ParameterError("noise scale must be positive")
    direction = rng.standard_normal(dim)
    norm = np.sqrt(direction @ direction)
    while norm < 1e-12:  # essentially impossible, but keeps the contract total
        direction = rng.standard_normal(dim)
        norm = np.sqrt(direction @ direction)
    magnitude = rng.gamma(shape=dim, scale=scale)
    return (magnitude / norm) * direction


def _require_unit_rows(X: np.ndarray, who: str) -> None:
    max_norm = float(np.sqrt((X * X).sum(axis=1)).max())
    if max_norm > 1.0 + ROW_NORM_SLACK:
        raise ParameterError(
            f"{who} requires rows inside the unit ball; max row norm is {max_norm:.6g}"
        )


ERM_LEARNING_RATE = 0.05
ERM_TOL = 1e-6
ERM_MAX_STEPS = 5000


def solve_regularized_logistic(
    X: np.ndarray,
    y_pm: np.ndarray,
    l2_lambda: float,
    linear_term: np.ndarray | None,
    learning_rate: float = ERM_LEARNING_RATE,
    tol: float = ERM_TOL,
    max_steps: int = ERM_MAX_STEPS,
) -> tuple[np.ndarray, float]:
    """Minimize (1/n) sum log(1+exp(-y x.theta)) + (lam/2)||theta||^2
    + linear_term.theta / n over bias-free theta, by full-batch Adam.

    Stops at gradient norm <= tol or after max_steps. The rate default is
    deliberately larger than the minibatch trainer's: this is a full-batch
    strongly convex solve, and 0.05 covers the distance to optima a couple
    hundred units out while still settling below tolerance. A heavy linear
    term can push the optimum further than the step budget reaches; the
    solver then returns the cut-off point, which is the crushed-model
    regime anyway. Returns (theta, final gradient norm).
    """
    n, d = X.shape
    lin = np.zeros(d) if linear_term is None else linear_term / n
    theta = np.zeros(d)
    m = np.zeros(d)
    v = np.zeros(d)
    grad_norm = math.inf
    for step in range(1, max_steps + 1):
        margins = y_pm * (X @ theta)
        slack = _sigmoid(-margins)
        grad = -(X.T @ (y_pm * slack)) / n + l2_lambda * theta + lin
        grad_norm = float(np.sqrt(grad @ grad))
        if grad_norm <= tol:
            break
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        m_hat = m / (1.0 - 0.9**step)
        v_hat = v / (1.0 - 0.999**step)
        theta = theta - learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
    return theta, grad_norm


@dataclass(frozen=True)
class OvrLinearModel:
    """Bias-free logistic separators, one per class (or a single one for the
    binary case), as produced by the objective/output mechanisms."""

    thetas: np.ndarray  # (k, d); k == 1 for binary, k == class_count otherwise
    class_count: int

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if self.thetas.shape[0] == 1:
            p1 = _sigmoid(X @ self.thetas[0])
            return np.stack([1.0 - p1, p1], axis=1)
        margins = X @ self.thetas.T
        scores = _sigmoid(margins)
        totals = scores.sum(axis=1, keepdims=True)
        # extreme separators can underflow every per-class sigmoid to zero;
        # fall back to a one-hot row at the largest raw margin
        dead = totals[:, 0] == 0.0
        if np.any(dead):
            scores[dead] = 0.0
            scores[dead, margins[dead].argmax(axis=1)] = 1.0
            totals = scores.sum(axis=1, keepdims=True)
        return scores / totals


def _binary_targets(labels: np.ndarray, positive_class: int) -> np.ndarray:
    """Remap integer labels to -1/+1 with the given class as +1."""
    return np.where(labels == positive_class, 1.0, -1.0)


def _erm_class_list(class_count: int) -> list[int]:
    # binary needs a single separator (class 1 against class 0);
    # anything larger gets one-vs-rest with a separator per class
    return [1] if class_count == 2 else list(range(class_count))


class TeacherEnsemble:
    """Disjoint-shard teachers plus the noisy vote aggregator.

    Prediction draws fresh Laplace noise per query from the ensemble's own
    derived stream, so a fixed query sequence is reproducible. Sum of raw
    votes per query always equals the teacher count.
    """

    def __init__(
        self,
        teachers: list[Model],
        class_count: int,
        epsilon: float,
        noise_seed: int,
    ):
        if len(teachers) < 2:
            raise ParameterError("an ensemble needs at least 2 teachers")
        self.teachers = teachers
        self.class_count = class_count
        self.epsilon = float(epsilon)
        self.noise_seed = int(noise_seed)
        self._rng = derive_rng(noise_seed, "mechanisms.prediction.noise")

    def votes(self, features: np.ndarray) -> np.ndarray:
        """Raw vote counts, shape (n_queries, class_count)."""
        X = np.asarray(features, dtype=np.float64)
        counts = np.zeros((X.shape[0], self.class_count))
        rows = np.arange(X.shape[0])
        for teacher in self.teachers:
            counts[rows, learners.predict_proba(teacher, X).argmax(axis=1)] += 1.0
        return counts

    def predict_proba(self, features: np.ndarray, with_noise: bool = True) -> np.ndarray:
        counts = self.votes(features)
        if with_noise:
            counts = counts + sample_laplace(self._rng, 1.0 / self.epsilon, counts.shape)
        return aggregate_noisy_votes(counts)


def aggregate_noisy_votes(noisy_counts: np.ndarray) -> np.ndarray:
    """Turn (possibly noisy) vote counts into probability rows.

    Negative counts are floored at zero and rows renormalized; a row whose
    counts are all non-positive collapses to one-hot at the argmax of the
    raw counts (ties resolve to the lowest class index, same as argmax).
    """
    floored = np.maximum(noisy_counts, 0.0)
    totals = floored.sum(axis=1, keepdims=True)
    winners = noisy_counts.argmax(axis=1)
    empty = totals[:, 0] <= 0.0
    if np.any(empty):
        floored[empty] = 0.0
        floored[empty, winners[empty]] = 1.0
        totals = floored.sum(axis=1, keepdims=True)
    return floored / totals


class PrivateModel:
    """A trained predictor plus the mechanism spec that produced it."""

    def __init__(self, spec: MechanismSpec, arch: ModelArch, inner):
        self.spec = spec
        self.arch = arch
        self.inner = inner

    @property
    def kind(self) -> str:
        return self.spec.kind

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        if isinstance(self.inner, Model):
            return learners.predict_proba(self.inner, features)
        return self.inner.predict_proba(features)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        probs = self.predict_proba(features)
        return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))

    # -- persistence ----------------------------------------------------

    def save(self, path: str) -> None:
        record = {
            "format": "privsweep-private-model/1",
            "mechanism": {
                "kind": self.spec.kind,
                "epsilon": self.spec.budget.epsilon,
                "delta": self.spec.budget.delta,
                "clip_norm": self.spec.clip_norm,
                "c2": self.spec.c2,
                "teachers": self.spec.teachers,
                "lipschitz": self.spec.lipschitz,
            },
            "arch": {
                "kind": self.arch.kind,
                "input_dim": self.arch.input_dim,
                "class_count": self.arch.class_count,
                "hidden": list(self.arch.hidden),
            },
            "payload": self._payload(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(record, fh)

    def _payload(self) -> dict:
        if isinstance(self.inner, Model):
            return {"type": "model", "params": self.inner.params.tolist()}
        if isinstance(self.inner, OvrLinearModel):
            return {
                "type": "ovr",
                "thetas": self.inner.thetas.tolist(),
                "class_count": self.inner.class_count,
            }
        if isinstance(self.inner, TeacherEnsemble):
            return {
                "type": "ensemble",
                "teachers": [t.params.tolist() for t in self.inner.teachers],
                "class_count": self.inner.class_count,
                "epsilon": self.inner.epsilon,
                "noise_seed": self.inner.noise_seed,
            }
        raise FormatError(f"cannot persist payload of type {type(self.inner)!r}")

    @classmethod
    def load(cls, path: str) -> "PrivateModel":
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        if record.get("format") != "privsweep-private-model/1":
            raise FormatError(f"unrecognized private-model format in {path}")
        mech = record["mechanism"]
        spec = MechanismSpec(
            kind=mech["kind"],
            budget=PrivacyBudget(mech["epsilon"], mech["delta"]),
            clip_norm=mech["clip_norm"],
            c2=mech["c2"],
            teachers=mech["teachers"],
            lipschitz=mech["lipschitz"],
        )
        a = record["arch"]
        arch = ModelArch(a["kind"], a["input_dim"], a["class_count"], tuple(a["hidden"]))
        payload = record["payload"]
        if payload["type"] == "model":
            inner = Model(arch=arch, params=np.asarray(payload["params"], dtype=np.float64))
        elif payload["type"] == "ovr":
            inner = OvrLinearModel(
                thetas=np.asarray(payload["thetas"], dtype=np.float64),
                class_count=payload["class_count"],
            )
        elif payload["type"] == "ensemble":
            teachers = [
                Model(arch=arch, params=np.asarray(p, dtype=np.float64))
                for p in payload["teachers"]
            ]
            inner = TeacherEnsemble(
                teachers=teachers,
                class_count=payload["class_count"],
                epsilon=payload["epsilon"],
                noise_seed=payload["noise_seed"],
            )
        else:
            raise FormatError(f"unknown payload type {payload['type']!r}")
        return cls(spec=spec, arch=arch, inner=inner)


# ----------------------------------------------------------------------
# the mechanisms

def perturb_features(
    X: np.ndarray, per_feature_std: float, rng: np.random.Generator
) -> np.ndarray:
    """Add i.i.d. Gaussian noise, then clip every feature back into the
    bounds observed on the incoming slice (never emits out-of-range values)."""
    bounds = observed_bounds(X)
    noisy = X + sample_gaussian(rng, per_feature_std, X.shape)
    return np.clip(noisy, bounds[:, 0], bounds[:, 1])


def input_perturb_lr(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Feature noising for the linear model, then ordinary training."""
    X = np.asarray(features, dtype=np.float64)
    n, d = X.shape
    sigma = input_lr_sigma(
        n, d, config.l2_lambda, spec.budget.epsilon, spec.budget.delta
    )
    rng = derive_rng(config.seed, "mechanisms.input_lr")
    noisy = perturb_features(X, sigma / math.sqrt(n), rng)
    arch = learners.lr_arch(d, class_count)
    model = learners.train(arch, noisy, labels, cap_batch(config, n))
    return PrivateModel(spec=spec, arch=arch, inner=model)


def input_perturb_mlp(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Feature noising for the network, variance from the smooth-loss bound."""
    X = np.asarray(features, dtype=np.float64)
    n, d = X.shape
    cfg = cap_batch(config, n)
    total_steps = cfg.epochs * math.ceil(n / cfg.batch_size)
    sigma_sq = input_mlp_sigma_sq(
        n,
        total_steps,
        spec.budget.epsilon,
        spec.budget.delta,
        lipschitz=spec.lipschitz,
        noise_const=spec.c2,
    )
    rng = derive_rng(config.seed, "mechanisms.input_mlp")
    noisy = perturb_features(X, math.sqrt(sigma_sq), rng)
    arch = learners.mlp_arch(d, class_count)
    model = learners.train(arch, noisy, labels, cfg)
    return PrivateModel(spec=spec, arch=arch, inner=model)


def objective_perturb(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Random linear term added to the regularized logistic objective.

    The noise vector b has density proportional to exp(-(eps/2)||b||) and
    enters the objective as b.theta/n, giving the documented 2/(n*eps)
    effective scale.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _require_unit_rows(X, "objective perturbation")
    n, d = X.shape
    eps = spec.budget.epsilon
    thetas = []
    for positive in _erm_class_list(class_count):
        rng = derive_rng(config.seed, f"mechanisms.objective/{positive}")
        b = sample_sphere_noise(rng, d, 2.0 / eps)
        theta, _ = solve_regularized_logistic(
            X,
            _binary_targets(y, positive),
            config.l2_lambda,
            b,
        )
        thetas.append(theta)
    inner = OvrLinearModel(thetas=np.asarray(thetas), class_count=class_count)
    return PrivateModel(spec=spec, arch=learners.lr_arch(d, class_count), inner=inner)


def output_perturb(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Fit to the regularized optimum, then noise the parameter vector with
    magnitude scale 2/(n*lambda*eps)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _require_unit_rows(X, "output perturbation")
    n, d = X.shape
    scale = output_noise_scale(n, config.l2_lambda, spec.budget.epsilon)
    thetas = []
    for positive in _erm_class_list(class_count):
        rng = derive_rng(config.seed, f"mechanisms.output/{positive}")
        theta, _ = solve_regularized_logistic(
            X,
            _binary_targets(y, positive),
            config.l2_lambda,
            None,
        )
        thetas.append(theta + sample_sphere_noise(rng, d, scale))
    inner = OvrLinearModel(thetas=np.asarray(thetas), class_count=class_count)
    return PrivateModel(spec=spec, arch=learners.lr_arch(d, class_count), inner=inner)


def gradient_perturb_lr(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Full-batch training with Laplace(0, 2/(n*eps)) noise added to every
    data-term gradient coordinate before the regularizer and the Adam step."""
    X = np.asarray(features, dtype=np.float64)
    _require_unit_rows(X, "gradient perturbation")
    n, d = X.shape
    scale = gradient_noise_scale(n, spec.budget.epsilon)
    rng = derive_rng(config.seed, "mechanisms.gradient_lr")

    def noisy_mean(rows, batch, step):
        return rows.mean(axis=0) + sample_laplace(rng, scale, rows.shape[1])

    arch = learners.lr_arch(d, class_count)
    full_batch = replace(config, batch_size=n)
    model = learners.train(arch, X, labels, full_batch, grad_transform=noisy_mean)
    return PrivateModel(spec=spec, arch=arch, inner=model)


def gradient_perturb_dpsgd(
    arch: ModelArch,
    features: np.ndarray,
    labels: np.ndarray,
    spec: MechanismSpec,
    config: TrainConfig,
    norm_log: list | None = None,
) -> PrivateModel:
    """Clipped per-example gradients, summed, Gaussian-noised, divided by the
    nominal batch size. Pass norm_log to record the max clipped row norm of
    every step (used to audit the clipping contract)."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    cfg = cap_batch(config, n)
    nominal = cfg.batch_size
    sample_rate = nominal / n
    total_steps = cfg.epochs * math.ceil(n / nominal)
    sigma = dpsgd_sigma(
        sample_rate, total_steps, spec.budget.epsilon, spec.budget.delta, spec.c2
    )
    clip = spec.clip_norm
    rng = derive_rng(config.seed, "mechanisms.dpsgd")

    def clipped_noisy_sum(rows, batch, step):
        clipped = clip_rows_to_norm(rows, clip)
        if norm_log is not None:
            norm_log.append(float(np.sqrt((clipped * clipped).sum(axis=1)).max()))
        noised = clipped.sum(axis=0) + sample_gaussian(rng, sigma * clip, rows.shape[1])
        return noised / nominal

    model = learners.train(arch, X, labels, cfg, grad_transform=clipped_noisy_sum)
    return PrivateModel(spec=spec, arch=arch, inner=model)


def _stratified_shards(
    labels: np.ndarray, shard_count: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Partition indices into shard_count disjoint shards, dealing each
    class round-robin so every shard sees every class when counts allow."""
    shards: list[list[int]] = [[] for _ in range(shard_count)]
    cursor = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        for i in idx:
            shards[cursor % shard_count].append(int(i))
            cursor += 1
    return [np.asarray(s, dtype=np.int64) for s in shards]


def prediction_perturb(
    arch: ModelArch,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Teacher ensemble over disjoint shards with noisy vote aggregation."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    shard_count = spec.teachers
    if shard_count > n:
        raise ConfigurationError(
            f"cannot cut {n} records into {shard_count} non-empty teacher shards"
        )
    rng = derive_rng(config.seed, "mechanisms.prediction.shards")
    shards = _stratified_shards(y, shard_count, rng)
    if any(len(s) == 0 for s in shards):
        raise ConfigurationError("a teacher shard came out empty; lower the teacher count")
    teachers = []
    for k, shard in enumerate(shards):
        cfg = replace(
            cap_batch(config, len(shard)),
            seed=derive_seed(config.seed, f"mechanisms.prediction.teacher/{k}"),
        )
        teachers.append(learners.train(arch, X[shard], y[shard], cfg))
    ensemble = TeacherEnsemble(
        teachers=teachers,
        class_count=class_count,
        epsilon=spec.budget.epsilon,
        noise_seed=derive_seed(config.seed, "mechanisms.prediction"),
    )
    return PrivateModel(spec=spec, arch=arch, inner=ensemble)


# ----------------------------------------------------------------------

def build_private_model(
    arch: ModelArch,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: MechanismSpec,
    config: TrainConfig,
) -> PrivateModel:
    """Dispatch a mechanism spec to its builder for the given architecture.

    The gradient mechanism picks its variant by architecture: the convex
    model gets the full-batch Laplace scheme, the network gets clipped and
    noised per-example sums.
    """
    if spec.kind in ("objective", "output") and arch.kind != "lr":
        raise ConfigurationError(
            f"{spec.kind} perturbation is defined for the linear model only, got {arch.kind}"
        )
    if spec.kind == "input":
        if arch.kind == "lr":
            return input_perturb_lr(features, labels, class_count, spec, config)
        return input_perturb_mlp(features, labels, class_count, spec, config)
    if spec.kind == "objective":
        return objective_perturb(features, labels, class_count, spec, config)
    if spec.kind == "gradient":
        if arch.kind == "lr":
            return gradient_perturb_lr(features, labels, class_count, spec, config)
        return gradient_perturb_dpsgd(arch, features, labels, spec, config)
    if spec.kind == "output":
        return output_perturb(features, labels, class_count, spec, config)
    return prediction_perturb(arch, features, labels, class_count, spec, config)
