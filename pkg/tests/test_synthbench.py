import json
import math

import numpy as np
import pytest

from smoothgen.errors import SchemaError
from smoothgen.synthbench import (
    ArcSpec,
    DomainSpec,
    NeighborhoodSpec,
    TrainConfig,
    apply_label_noise,
    cross_entropy,
    default_experiment,
    derive_seed,
    experiment_from_dict,
    experiment_to_dict,
    generate_domain,
    init_model,
    load_experiment,
    loss_and_grads,
    nearest_arc,
    run_pool,
    sample_neighborhood,
    sgd_step,
    train_model,
)
from smoothgen.synthbench.pool import _noise_floor_ce, default_arcs


def make_domain(rotation=0.0, noise_std=0.05, **kwargs):
    return DomainSpec(
        domain_id="d0",
        rotation=rotation,
        translation=(0.0, 0.0),
        noise_std=noise_std,
        class_arcs=default_arcs(),
        **kwargs,
    )


def tiny_config(seed=0):
    from smoothgen.synthbench import ExperimentConfig

    domains = [
        DomainSpec("rotA", 0.0, (0.0, 0.0), 0.05, default_arcs()),
        DomainSpec("rotB", math.radians(40), (0.0, 0.0), 0.05, default_arcs()),
    ]
    grid = [
        TrainConfig(depth=1, width=8, weight_decay=0.0, label_noise=0.0,
                    batch_size=16, learning_rate=0.1, ce_stop=0.3,
                    max_epochs=80, seed=seed),
        TrainConfig(depth=2, width=8, weight_decay=1e-4, label_noise=0.0,
                    batch_size=16, learning_rate=0.1, ce_stop=0.3,
                    max_epochs=80, seed=seed),
    ]
    return ExperimentConfig(
        domains=domains,
        grid=grid,
        neighborhoods=[NeighborhoodSpec("manifold", 0.5, n_samples=4, seed=seed)],
        m_train=80,
        m_val=20,
        m_test=25,
        seed=seed,
    )


class TestDomains:
    def test_generation_is_deterministic(self):
        d = make_domain()
        a = generate_domain(d, 50, seed=3)
        b = generate_domain(d, 50, seed=3)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)

    def test_labels_in_range(self):
        ds = generate_domain(make_domain(), 200, seed=0)
        assert ds.labels.min() >= 0 and ds.labels.max() < 3
        assert ds.points.shape == (200, 2)

    def test_noiseless_points_sit_on_unit_circle(self):
        ds = generate_domain(make_domain(noise_std=0.0), 100, seed=1)
        radii = np.linalg.norm(ds.points, axis=1)
        assert np.allclose(radii, 1.0)

    def test_rotation_moves_the_whole_configuration(self):
        plain = generate_domain(make_domain(noise_std=0.0), 50, seed=2)
        quarter = DomainSpec("d1", math.pi / 2, (0.0, 0.0), 0.0, default_arcs())
        rotated = generate_domain(quarter, 50, seed=2)
        c, s = 0.0, 1.0
        rot = np.array([[c, -s], [s, c]])
        assert np.allclose(rotated.points, plain.points @ rot.T)

    def test_arcs_too_close_for_noise_rejected(self):
        with pytest.raises(SchemaError, match="too close"):
            make_domain(noise_std=0.5)

    def test_arc_validation(self):
        with pytest.raises(SchemaError):
            ArcSpec((0.0, 0.0), -1.0, 0.0, 1.0)
        with pytest.raises(SchemaError):
            ArcSpec((0.0, 0.0), 1.0, 0.0, 7.0)


class TestLabelNoise:
    def test_zero_fraction_is_identity(self):
        ds = generate_domain(make_domain(), 100, seed=0)
        assert apply_label_noise(ds, 0.0, seed=1) is ds

    def test_resampled_count_is_rounded_fraction(self):
        ds = generate_domain(make_domain(), 200, seed=0)
        noisy = apply_label_noise(ds, 0.25, seed=1)
        changed = int((noisy.labels != ds.labels).sum())
        assert changed <= round(0.25 * 200)
        assert changed > 0

    def test_flip_probability_matches_uniform_resampling(self):
        # a resampled label keeps its old value with probability 1/k, so the
        # expected changed fraction is f * (k - 1) / k
        ds = generate_domain(make_domain(), 3000, seed=0)
        flips = []
        for seed in range(40):
            noisy = apply_label_noise(ds, 0.4, seed=seed)
            flips.append((noisy.labels != ds.labels).mean())
        assert np.mean(flips) == pytest.approx(0.4 * 2 / 3, abs=0.01)

    def test_points_untouched(self):
        ds = generate_domain(make_domain(), 50, seed=0)
        noisy = apply_label_noise(ds, 0.5, seed=2)
        assert noisy.points is ds.points

    def test_fraction_validated(self):
        ds = generate_domain(make_domain(), 10, seed=0)
        with pytest.raises(ValueError):
            apply_label_noise(ds, 1.0, seed=0)


class TestNeighborhoodSampling:
    def test_nearest_arc_recovers_generating_class(self):
        d = make_domain(noise_std=0.0)
        ds = generate_domain(d, 150, seed=4)
        got = [nearest_arc(d, p) for p in ds.points]
        assert got == ds.labels.tolist()

    def test_manifold_samples_keep_radial_offset(self):
        d = make_domain()
        spec = NeighborhoodSpec("manifold", 0.3, n_samples=50, seed=0)
        point = np.array([1.07, 0.4])  # offset 0.07-ish from the unit circle
        samples = sample_neighborhood(point, d, spec)
        radii = np.linalg.norm(samples, axis=1)
        assert np.allclose(radii, np.linalg.norm(point))

    def test_manifold_small_jitter_stays_in_class_sector(self):
        d = make_domain(noise_std=0.0)
        ds = generate_domain(d, 50, seed=5)
        spec = NeighborhoodSpec("manifold", 0.05, n_samples=20, seed=0)
        for p, label in zip(ds.points, ds.labels):
            samples = sample_neighborhood(p, d, spec)
            assert all(nearest_arc(d, s) == label for s in samples)

    def test_manifold_large_jitter_can_leave_the_sector(self):
        d = make_domain(noise_std=0.0)
        spec = NeighborhoodSpec("manifold", 2.0, n_samples=200, seed=0)
        point = generate_domain(d, 1, seed=6).points[0]
        samples = sample_neighborhood(point, d, spec)
        classes = {nearest_arc(d, s) for s in samples}
        assert len(classes) > 1

    def test_isotropic_spread(self):
        d = make_domain()
        spec = NeighborhoodSpec("isotropic", 0.2, n_samples=4000, seed=0)
        samples = sample_neighborhood(np.zeros(2), d, spec)
        assert samples.std(axis=0) == pytest.approx([0.2, 0.2], rel=0.1)

    def test_sampling_respects_domain_rotation(self):
        base = make_domain(noise_std=0.0)
        rotated = DomainSpec("dr", math.radians(90), (0.0, 0.0), 0.0, default_arcs())
        spec = NeighborhoodSpec("manifold", 0.3, n_samples=25, seed=0)
        p = generate_domain(base, 1, seed=7).points[0]
        rot = rotated.rotation_matrix()
        a = sample_neighborhood(p, base, spec, rng=np.random.default_rng(9))
        b = sample_neighborhood(rot @ p, rotated, spec, rng=np.random.default_rng(9))
        assert np.allclose(b, a @ rot.T)

    def test_spec_validation(self):
        with pytest.raises(SchemaError):
            NeighborhoodSpec("spiral", 0.1)
        with pytest.raises(SchemaError):
            NeighborhoodSpec("manifold", 0.0)
        with pytest.raises(SchemaError):
            NeighborhoodSpec("manifold", 0.1, n_samples=0)

    def test_tag(self):
        assert NeighborhoodSpec("manifold", 0.5, 10).tag == "manifold-r0.5-n10"


class TestMlp:
    def test_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        cfg = TrainConfig(depth=2, width=5, weight_decay=0.0, label_noise=0.0,
                          batch_size=8, learning_rate=0.1, ce_stop=0.1,
                          max_epochs=1, seed=0)
        model = init_model(3, cfg)
        x = rng.normal(size=(12, 2))
        y = rng.integers(0, 3, size=12)
        _, gw, gb = loss_and_grads(model, x, y)
        eps = 1e-6

        def loss_at():
            return loss_and_grads(model, x, y)[0]

        for params, grads in ((model.weights, gw), (model.biases, gb)):
            for p, g in zip(params, grads):
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = p[idx]
                    p[idx] = orig + eps
                    up = loss_at()
                    p[idx] = orig - eps
                    down = loss_at()
                    p[idx] = orig
                    fd = (up - down) / (2 * eps)
                    denom = max(abs(fd), abs(g[idx]), 1e-8)
                    assert abs(fd - g[idx]) / denom < 1e-5

    def test_weight_decay_only_shrinks_geometrically(self):
        cfg = TrainConfig(depth=1, width=4, weight_decay=0.5, label_noise=0.0,
                          batch_size=4, learning_rate=0.1, ce_stop=0.1,
                          max_epochs=1, seed=1)
        model = init_model(2, cfg)
        zero_w = [np.zeros_like(w) for w in model.weights]
        zero_b = [np.zeros_like(b) for b in model.biases]
        norms = [[np.linalg.norm(w) for w in model.weights]]
        for _ in range(5):
            sgd_step(model, zero_w, zero_b, cfg.learning_rate, cfg.weight_decay)
            norms.append([np.linalg.norm(w) for w in model.weights])
        decay = 1.0 - cfg.learning_rate * cfg.weight_decay
        for step in range(1, 6):
            for before, after in zip(norms[step - 1], norms[step]):
                assert after == pytest.approx(decay * before, rel=1e-12)

    def test_training_reaches_ce_stop_on_separable_data(self):
        ds = generate_domain(make_domain(noise_std=0.0), 120, seed=3)
        cfg = TrainConfig(depth=1, width=16, weight_decay=0.0, label_noise=0.0,
                          batch_size=16, learning_rate=0.1, ce_stop=0.2,
                          max_epochs=200, seed=2)
        model = train_model(ds, cfg)
        assert model.converged
        assert model.final_ce <= 0.2
        assert cross_entropy(model, ds.points, ds.labels) == model.final_ce

    def test_zero_epoch_budget_does_not_converge(self):
        ds = generate_domain(make_domain(), 30, seed=0)
        cfg = TrainConfig(depth=1, width=4, weight_decay=0.0, label_noise=0.0,
                          batch_size=8, learning_rate=0.1, ce_stop=0.01,
                          max_epochs=0, seed=0)
        model = train_model(ds, cfg)
        assert not model.converged
        assert model.epochs_run == 0

    def test_training_is_deterministic(self):
        ds = generate_domain(make_domain(), 60, seed=1)
        cfg = TrainConfig(depth=2, width=8, weight_decay=1e-4, label_noise=0.0,
                          batch_size=16, learning_rate=0.1, ce_stop=0.15,
                          max_epochs=50, seed=5)
        a = train_model(ds, cfg)
        b = train_model(ds, cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(depth=0, width=4, weight_decay=0.0, label_noise=0.0,
                        batch_size=4, learning_rate=0.1, ce_stop=0.1,
                        max_epochs=1, seed=0)
        with pytest.raises(ValueError):
            TrainConfig(depth=1, width=4, weight_decay=0.0, label_noise=1.0,
                        batch_size=4, learning_rate=0.1, ce_stop=0.1,
                        max_epochs=1, seed=0)


class TestNoiseFloor:
    def test_clean_labels_have_zero_floor(self):
        assert _noise_floor_ce(0.0, 3) == 0.0

    def test_matches_direct_entropy_computation(self):
        # observed label = true with prob 1 - f(k-1)/k, each other with f/k
        f, k = 0.4, 3
        q = 1 - f * (k - 1) / k
        other = f / k
        direct = -(q * math.log(q) + (k - 1) * other * math.log(other))
        assert _noise_floor_ce(f, k) == pytest.approx(direct)
        assert q + (k - 1) * other == pytest.approx(1.0)

    def test_monotone_in_noise(self):
        floors = [_noise_floor_ce(f, 3) for f in (0.0, 0.1, 0.2, 0.4)]
        assert floors == sorted(floors)


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed("a", 1) == derive_seed("a", 1)

    def test_distinct_for_distinct_parts(self):
        seeds = {derive_seed("x", i) for i in range(100)}
        assert len(seeds) == 100

    def test_fits_in_63_bits(self):
        for i in range(50):
            assert 0 <= derive_seed("s", i) < 2**63


class TestExperimentConfig:
    def test_dict_round_trip(self):
        config = default_experiment(seed=3)
        back = experiment_from_dict(experiment_to_dict(config))
        assert experiment_to_dict(back) == experiment_to_dict(config)
        assert back.config_hash() == config.config_hash()

    def test_load_json(self, tmp_path):
        config = tiny_config()
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(experiment_to_dict(config)))
        loaded = load_experiment(path)
        assert experiment_to_dict(loaded) == experiment_to_dict(config)

    def test_training_domains_exclude_far_shift(self):
        config = default_experiment()
        ids = [d.domain_id for d in config.training_domains()]
        assert "far140" not in ids
        assert len(ids) == 5

    def test_default_grid_size(self):
        config = default_experiment()
        assert len(config.grid) == 36

    def test_hash_changes_with_seed(self):
        assert (default_experiment(seed=0).config_hash()
                != default_experiment(seed=1).config_hash())


class TestRunPool:
    def test_two_runs_are_byte_identical(self, tmp_path):
        config = tiny_config()
        a, b = tmp_path / "a", tmp_path / "b"
        run_pool(config, a)
        run_pool(tiny_config(), b)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_artifact_layout(self, tmp_path):
        config = tiny_config()
        result = run_pool(config, tmp_path / "out")
        out = tmp_path / "out"
        assert (out / "manifest.jsonl").exists()
        assert (out / "experiment.json").exists()
        assert len(result.manifest) == 4  # 2 domains x 2 configs
        n_pred = len(list((out / "predictions").glob("*.jsonl")))
        # one log per converged model, domain and neighborhood spec
        assert n_pred == result.num_converged * len(config.domains)

    def test_needs_two_training_domains(self, tmp_path):
        config = tiny_config()
        config.domains = config.domains[:1]
        with pytest.raises(SchemaError):
            run_pool(config, tmp_path / "out")
