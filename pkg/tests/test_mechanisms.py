"""Mechanism-level tests: noise calibration formulas against independent
arithmetic, the convex solver against scipy, and the behavioural contracts
of each perturbation builder."""

import math

import numpy as np
import pytest
import scipy.optimize

from privsweep.dataset import SyntheticSpec, make_split, normalize_rows_to_unit_ball, synthesize
from privsweep.errors import (
    ConfigurationError,
    InfeasibleParametersError,
    ParameterError,
)
from privsweep.learners import TrainConfig, evaluate, lr_arch, mlp_arch, predict_proba
from privsweep import mechanisms as mech
from privsweep.mechanisms import (
    MechanismSpec,
    OvrLinearModel,
    PrivacyBudget,
    PrivateModel,
    TeacherEnsemble,
    aggregate_noisy_votes,
    build_private_model,
    default_delta,
    dpsgd_sigma,
    gradient_noise_scale,
    gradient_perturb_dpsgd,
    input_lr_feasibility,
    input_lr_sigma,
    input_mlp_sigma_sq,
    objective_noise_scale,
    objective_perturb,
    output_noise_scale,
    output_perturb,
    perturb_features,
    prediction_perturb,
    sample_sphere_noise,
    solve_regularized_logistic,
)
from privsweep.numkit import derive_rng


# ----------------------------------------------------------------------
# calibration formulas, each against arithmetic done right here

def test_output_scale_value():
    # 2 / (25000 * 1e-4 * 1)
    assert abs(output_noise_scale(25000, 1e-4, 1.0) - 0.8) < 1e-9


def test_objective_scale_value():
    # 2 / (5000 * 0.1)
    assert abs(objective_noise_scale(5000, 0.1) - 0.004) < 1e-9


def test_gradient_scale_matches_objective():
    assert gradient_noise_scale(5000, 0.1) == objective_noise_scale(5000, 0.1)


def test_dpsgd_sigma_value():
    got = dpsgd_sigma(0.01, 10000, 1.0, 1e-5, 1.0)
    want = 0.01 * math.sqrt(10000 * math.log(1e5))
    assert abs(got - want) < 1e-9
    assert abs(got - 3.3930702) < 1e-6


def test_dpsgd_sigma_scales_linearly_in_c2():
    one = dpsgd_sigma(0.02, 500, 2.0, 1e-5, 1.0)
    two = dpsgd_sigma(0.02, 500, 2.0, 1e-5, 2.0)
    assert abs(two - 2.0 * one) < 1e-12


def test_input_mlp_variance_value():
    got = input_mlp_sigma_sq(1000, 400, 1.0, 1e-3, lipschitz=1.0, noise_const=1.0)
    want = 400 * math.log(1e3) / (1000 * 999)
    assert abs(got - want) < 1e-15
    got2 = input_mlp_sigma_sq(1000, 400, 1.0, 1e-3, lipschitz=2.0, noise_const=3.0)
    assert abs(got2 - 12.0 * want) < 1e-12


def test_input_lr_sigma_value():
    n, d, lam, eps, delta = 1000, 20, 1e-3, 1.0, 0.1
    a = math.sqrt((4.0 / delta) / n)
    root = math.sqrt(2 * d * a * a * lam * lam + 2 * lam * (1 - 2 * a) / eps)
    want = (math.sqrt(2 * d) * a * lam + root) / (1 - 2 * a)
    assert abs(input_lr_sigma(n, d, lam, eps, delta) - want) < 1e-12


def test_input_lr_feasibility_gate():
    # delta must exceed 16/n for the closed form to exist
    assert input_lr_feasibility(1600, 0.01) == 0.5
    with pytest.raises(InfeasibleParametersError) as err:
        input_lr_sigma(1600, 10, 1e-3, 1.0, 0.01)
    assert err.value.n == 1600
    assert err.value.delta == 0.01
    # just above the gate it works
    assert input_lr_sigma(1600, 10, 1e-3, 1.0, 0.0101) > 0


def test_output_scale_rejects_zero_lambda():
    with pytest.raises(ParameterError):
        output_noise_scale(1000, 0.0, 1.0)


def test_default_delta_decade():
    # 1/(10n) rounded down to a power of ten
    assert default_delta(1000) == 1e-4
    assert default_delta(25000) == 1e-6
    assert default_delta(30) == 1e-3


def test_budget_and_spec_validation():
    with pytest.raises(ParameterError):
        PrivacyBudget(epsilon=0.0)
    with pytest.raises(ParameterError):
        PrivacyBudget(epsilon=1.0, delta=1.0)
    with pytest.raises(ParameterError):
        MechanismSpec(kind="banana", budget=PrivacyBudget(1.0))
    with pytest.raises(ParameterError):
        MechanismSpec(kind="prediction", budget=PrivacyBudget(1.0), teachers=1)
    ok = MechanismSpec(kind="gradient", budget=PrivacyBudget(1.0, 1e-5))
    assert ok.clip_norm == 1.0


# ----------------------------------------------------------------------
# sphere noise and the convex solver

def test_sphere_noise_magnitude_moments():
    rng = derive_rng(3, "test.sphere")
    dim, scale = 8, 0.5
    mags = np.array(
        [np.linalg.norm(sample_sphere_noise(rng, dim, scale)) for _ in range(20000)]
    )
    # Gamma(dim, scale): mean dim*scale, variance dim*scale^2
    assert abs(mags.mean() - dim * scale) < 0.05 * dim * scale
    assert abs(mags.var() - dim * scale**2) < 0.08 * dim * scale**2


def test_sphere_noise_direction_is_unbiased():
    rng = derive_rng(4, "test.sphere.dir")
    draws = np.stack([sample_sphere_noise(rng, 3, 1.0) for _ in range(20000)])
    units = draws / np.linalg.norm(draws, axis=1, keepdims=True)
    assert np.all(np.abs(units.mean(axis=0)) < 0.02)


def test_sphere_noise_rejects_bad_scale():
    rng = derive_rng(0, "test")
    with pytest.raises(ParameterError):
        sample_sphere_noise(rng, 4, 0.0)


def _unit_rows(X):
    return X / max(1.0, float(np.linalg.norm(X, axis=1).max()))


def test_solver_matches_scipy_no_linear_term():
    rng = derive_rng(7, "test.solver")
    X = _unit_rows(rng.standard_normal((80, 5)))
    y_pm = np.where(rng.random(80) < 0.5, -1.0, 1.0)
    lam = 0.05

    def objective(theta):
        margins = y_pm * (X @ theta)
        return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * lam * theta @ theta)

    ours, grad_norm = solve_regularized_logistic(X, y_pm, lam, None)
    ref = scipy.optimize.minimize(objective, np.zeros(5), method="BFGS").x
    assert grad_norm <= mech.ERM_TOL
    assert np.linalg.norm(ours - ref) < 1e-4


def test_solver_matches_scipy_with_linear_term():
    rng = derive_rng(8, "test.solver.lin")
    n, d = 60, 4
    X = _unit_rows(rng.standard_normal((n, d)))
    y_pm = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    lam = 0.1
    b = rng.standard_normal(d)

    def objective(theta):
        margins = y_pm * (X @ theta)
        data = float(np.mean(np.logaddexp(0.0, -margins)))
        return data + 0.5 * lam * theta @ theta + float(b @ theta) / n

    ours, _ = solve_regularized_logistic(X, y_pm, lam, b)
    ref = scipy.optimize.minimize(objective, np.zeros(d), method="BFGS").x
    assert np.linalg.norm(ours - ref) < 1e-4


# ----------------------------------------------------------------------
# OvrLinearModel

def test_ovr_binary_rows():
    model = OvrLinearModel(thetas=np.array([[1.0, -2.0]]), class_count=2)
    X = np.array([[0.3, 0.1], [-0.5, 0.4]])
    probs = model.predict_proba(X)
    assert probs.shape == (2, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    margin = X @ np.array([1.0, -2.0])
    assert np.allclose(probs[:, 1], 1.0 / (1.0 + np.exp(-margin)))


def test_ovr_dead_row_falls_back_to_one_hot():
    # margins so negative every sigmoid underflows to exactly zero
    thetas = np.array([[-3000.0, 0.0], [-4000.0, 0.0], [-5000.0, 0.0]])
    model = OvrLinearModel(thetas=thetas, class_count=3)
    probs = model.predict_proba(np.array([[1.0, 0.0]]))
    assert np.isfinite(probs).all()
    # least-negative margin wins
    assert probs[0].tolist() == [1.0, 0.0, 0.0]


# ----------------------------------------------------------------------
# feature perturbation

def test_perturb_features_respects_observed_bounds():
    rng_data = derive_rng(11, "test.perturb.data")
    X = rng_data.uniform(-2.0, 3.0, size=(50, 4))
    lo, hi = X.min(axis=0), X.max(axis=0)
    noisy = perturb_features(X, 5.0, derive_rng(11, "test.perturb.noise"))
    assert noisy.shape == X.shape
    assert np.all(noisy >= lo - 1e-12)
    assert np.all(noisy <= hi + 1e-12)
    assert not np.allclose(noisy, X)


def test_perturb_features_deterministic():
    X = derive_rng(12, "d").standard_normal((20, 3))
    a = perturb_features(X, 0.5, derive_rng(5, "noise"))
    b = perturb_features(X, 0.5, derive_rng(5, "noise"))
    assert np.array_equal(a, b)


# ----------------------------------------------------------------------
# builders on a small separable problem

def _small_problem(class_count=2, n=120, d=6, sep=4.0, seed=21):
    data = synthesize(SyntheticSpec(n, d, class_count, sep, seed))
    data = normalize_rows_to_unit_ball(data)
    return data


def test_objective_rejects_rows_outside_unit_ball():
    data = synthesize(SyntheticSpec(64, 4, 2, 6.0, 3))  # raw scale, norms > 1
    spec = MechanismSpec(kind="objective", budget=PrivacyBudget(1e6, 0.1))
    with pytest.raises(ParameterError):
        objective_perturb(data.features, data.labels, 2, spec, TrainConfig(seed=0))


def test_objective_binary_uses_single_separator():
    data = _small_problem()
    spec = MechanismSpec(kind="objective", budget=PrivacyBudget(1e6, 0.1))
    model = objective_perturb(data.features, data.labels, 2, spec, TrainConfig(seed=0))
    assert isinstance(model.inner, OvrLinearModel)
    assert model.inner.thetas.shape == (1, 6)
    assert model.accuracy(data.features, data.labels) > 0.9


def test_objective_multiclass_one_theta_per_class():
    data = _small_problem(class_count=3, sep=6.0)
    spec = MechanismSpec(kind="objective", budget=PrivacyBudget(1e6, 0.1))
    model = objective_perturb(data.features, data.labels, 3, spec, TrainConfig(seed=0))
    assert model.inner.thetas.shape == (3, 6)


def test_output_noise_moves_away_from_erm_optimum():
    data = _small_problem()
    cfg = TrainConfig(seed=0)
    tight = MechanismSpec(kind="output", budget=PrivacyBudget(0.5, 0.1))
    loose = MechanismSpec(kind="output", budget=PrivacyBudget(1e8, 0.1))
    noisy = output_perturb(data.features, data.labels, 2, tight, cfg)
    clean = output_perturb(data.features, data.labels, 2, loose, cfg)
    gap_noisy = np.linalg.norm(noisy.inner.thetas - clean.inner.thetas)
    assert gap_noisy > 0.1  # 0.5-epsilon noise is macroscopic
    # at enormous epsilon the noise is negligible, so two different seeds agree
    clean2 = output_perturb(data.features, data.labels, 2, loose, TrainConfig(seed=9))
    assert np.linalg.norm(clean.inner.thetas - clean2.inner.thetas) < 1e-3


def test_dispatch_rejects_objective_and_output_on_mlp():
    data = _small_problem()
    arch = mlp_arch(6, 2)
    cfg = TrainConfig(seed=0, epochs=1)
    for kind in ("objective", "output"):
        spec = MechanismSpec(kind=kind, budget=PrivacyBudget(1.0, 0.1))
        with pytest.raises(ConfigurationError):
            build_private_model(arch, data.features, data.labels, 2, spec, cfg)


def test_dpsgd_norm_log_respects_clip():
    data = _small_problem(n=64)
    spec = MechanismSpec(
        kind="gradient", budget=PrivacyBudget(2.0, 1e-3), clip_norm=0.05
    )
    log: list = []
    gradient_perturb_dpsgd(
        mlp_arch(6, 2, hidden=(8,)),
        data.features,
        data.labels,
        spec,
        TrainConfig(seed=0, epochs=3, batch_size=32),
        norm_log=log,
    )
    assert len(log) == 3 * 2  # epochs * ceil(n / batch)
    assert all(v <= 0.05 + 1e-12 for v in log)


def test_dpsgd_noise_grows_with_multiplier():
    # same seed and budget, one run with the noise constant blown up: the
    # louder run must land further from the data
    data = _small_problem(n=200)
    arch = lr_arch(6, 2)
    cfg = TrainConfig(seed=0, epochs=20, batch_size=50)
    base = gradient_perturb_dpsgd(
        arch, data.features, data.labels,
        MechanismSpec(kind="gradient", budget=PrivacyBudget(1e7, 1e-3)), cfg,
    )
    loud = gradient_perturb_dpsgd(
        arch, data.features, data.labels,
        MechanismSpec(kind="gradient", budget=PrivacyBudget(1e7, 1e-3), c2=5e9), cfg,
    )
    acc_base = base.accuracy(data.features, data.labels)
    acc_loud = loud.accuracy(data.features, data.labels)
    assert acc_base > acc_loud


# ----------------------------------------------------------------------
# teacher ensemble

def test_stratified_shards_partition_and_balance():
    labels = np.repeat(np.arange(3), 30)
    shards = mech._stratified_shards(labels, 5, derive_rng(0, "t"))
    assert len(shards) == 5
    joined = np.concatenate(shards)
    assert sorted(joined.tolist()) == list(range(90))
    for s in shards:
        counts = np.bincount(labels[s], minlength=3)
        assert counts.min() >= 5  # 30 of each class over 5 shards, dealt evenly


def test_ensemble_votes_sum_to_teacher_count():
    data = _small_problem(class_count=3, n=150, sep=6.0)
    spec = MechanismSpec(kind="prediction", budget=PrivacyBudget(1.0, 0.1), teachers=5)
    model = prediction_perturb(
        lr_arch(6, 3), data.features, data.labels, 3, spec, TrainConfig(seed=0, epochs=40)
    )
    ens = model.inner
    assert isinstance(ens, TeacherEnsemble)
    votes = ens.votes(data.features[:17])
    assert votes.shape == (17, 3)
    assert np.all(votes.sum(axis=1) == 5)


def test_ensemble_noise_free_is_deterministic():
    data = _small_problem(class_count=3, n=150, sep=6.0)
    spec = MechanismSpec(kind="prediction", budget=PrivacyBudget(1.0, 0.1), teachers=5)
    model = prediction_perturb(
        lr_arch(6, 3), data.features, data.labels, 3, spec, TrainConfig(seed=0, epochs=40)
    )
    a = model.inner.predict_proba(data.features[:9], with_noise=False)
    b = model.inner.predict_proba(data.features[:9], with_noise=False)
    assert np.array_equal(a, b)
    # noisy calls advance the stream, so consecutive answers differ
    c = model.inner.predict_proba(data.features[:9], with_noise=True)
    d = model.inner.predict_proba(data.features[:9], with_noise=True)
    assert not np.array_equal(c, d)


def test_prediction_rejects_more_teachers_than_records():
    data = _small_problem(n=120)
    spec = MechanismSpec(kind="prediction", budget=PrivacyBudget(1.0, 0.1), teachers=121)
    with pytest.raises(ConfigurationError):
        prediction_perturb(
            lr_arch(6, 2), data.features, data.labels, 2, spec, TrainConfig(seed=0)
        )


def test_aggregate_noisy_votes_floor_and_renormalize():
    counts = np.array([[3.0, -1.0, 2.0]])
    probs = aggregate_noisy_votes(counts)
    assert np.allclose(probs, [[0.6, 0.0, 0.4]])


def test_aggregate_noisy_votes_all_nonpositive_row():
    counts = np.array([[-2.0, -0.5, -3.0]])
    probs = aggregate_noisy_votes(counts)
    assert probs[0].tolist() == [0.0, 1.0, 0.0]  # argmax of the raw counts


def test_ensemble_needs_two_teachers():
    with pytest.raises(ParameterError):
        TeacherEnsemble(teachers=[object()], class_count=2, epsilon=1.0, noise_seed=0)


# ----------------------------------------------------------------------
# save / load round trips for every payload type

def _roundtrip(model: PrivateModel, tmp_path, X) -> None:
    path = str(tmp_path / f"{model.kind}.json")
    model.save(path)
    loaded = PrivateModel.load(path)
    assert loaded.kind == model.kind
    assert np.array_equal(loaded.predict_proba(X), model.predict_proba(X))


def test_save_load_gradient_model(tmp_path):
    data = _small_problem()
    spec = MechanismSpec(kind="gradient", budget=PrivacyBudget(10.0, 0.1))
    model = build_private_model(
        lr_arch(6, 2), data.features, data.labels, 2, spec,
        TrainConfig(seed=0, epochs=10),
    )
    _roundtrip(model, tmp_path, data.features[:7])


def test_save_load_ovr_model(tmp_path):
    data = _small_problem()
    spec = MechanismSpec(kind="output", budget=PrivacyBudget(10.0, 0.1))
    model = output_perturb(data.features, data.labels, 2, spec, TrainConfig(seed=0))
    _roundtrip(model, tmp_path, data.features[:7])


def test_save_load_ensemble_model(tmp_path):
    data = _small_problem(class_count=3, n=150, sep=6.0)
    spec = MechanismSpec(kind="prediction", budget=PrivacyBudget(1.0, 0.1), teachers=4)
    model = prediction_perturb(
        lr_arch(6, 3), data.features, data.labels, 3, spec, TrainConfig(seed=0, epochs=30)
    )
    path = str(tmp_path / "ens.json")
    model.save(path)
    loaded = PrivateModel.load(path)
    # vote counts are noise-free and must survive the round trip exactly
    assert np.array_equal(
        loaded.inner.votes(data.features[:9]), model.inner.votes(data.features[:9])
    )


# ----------------------------------------------------------------------
# end-to-end sanity: a huge budget behaves like no privacy at all

def test_every_builder_learns_at_huge_epsilon():
    data = _small_problem(n=240, sep=5.0)
    split = make_split(data, seed=0)
    Xtr, ytr = data.features[split.target_train], data.labels[split.target_train]
    Xte, yte = data.features[split.target_test], data.labels[split.target_test]
    cfg = TrainConfig(seed=0, epochs=60, batch_size=60)
    # the train quarter is 60 rows, and the linear-model input-noise formula
    # only exists for delta > 16/60
    budget = PrivacyBudget(1e6, 0.3)
    for kind in ("input", "objective", "gradient", "output", "prediction"):
        spec = MechanismSpec(kind=kind, budget=budget, teachers=3)
        model = build_private_model(lr_arch(6, 2), Xtr, ytr, 2, spec, cfg)
        assert model.accuracy(Xte, yte) > 0.9, kind
