"""Experiment runner: trains a model pool over domain-shifted synthetic data
and emits the manifest, prediction logs, score logs and weight dumps consumed
by the rest of the pipeline.

Neighborhood samples are generated once per (domain, neighborhood spec) and
shared across models. All outputs are written atomically and deterministically
for a fixed experiment seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import __version__
from ..errors import DivergenceError, SchemaError
from ..ingest import (
    ExampleEntry,
    ModelRecord,
    NeighborhoodPredictionLog,
    ScoreEntry,
    ScoreLog,
    WeightDump,
    write_manifest,
    write_prediction_log,
    write_score_log,
    write_weight_dump,
)
from .domains import (
    ArcSpec,
    Dataset,
    DomainSpec,
    NeighborhoodSpec,
    apply_label_noise,
    generate_domain,
    sample_neighborhood,
)
from .mlp import MlpModel, TrainConfig, model_predict, train_model


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a sequence of labels."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass(frozen=True)
class AblationSpec:
    """Extra logs for the sweep analyses, produced on a single test domain."""

    domain_id: str
    base_size_r: float
    m_test: int = 2000
    n_samples_max: int = 100
    size_r_values: tuple[float, ...] = ()


@dataclass
class ExperimentConfig:
    domains: list
    grid: list
    neighborhoods: list
    m_train: int = 500
    m_val: int = 250
    m_test: int = 500
    seed: int = 0
    ablation: Optional[AblationSpec] = None

    def training_domains(self) -> list:
        return [d for d in self.domains if not d.far_shift]

    def config_hash(self) -> str:
        blob = json.dumps(experiment_to_dict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def experiment_to_dict(config: ExperimentConfig) -> dict:
    def arc(a):
        return {
            "center": list(a.center),
            "radius": a.radius,
            "theta_start": a.theta_start,
            "theta_extent": a.theta_extent,
        }

    out = {
        "seed": config.seed,
        "m_train": config.m_train,
        "m_val": config.m_val,
        "m_test": config.m_test,
        "domains": [
            {
                "domain_id": d.domain_id,
                "rotation": d.rotation,
                "translation": list(d.translation),
                "noise_std": d.noise_std,
                "far_shift": d.far_shift,
                "class_arcs": [arc(a) for a in d.class_arcs],
            }
            for d in config.domains
        ],
        "grid": [c.hyperparams() for c in config.grid],
        "neighborhoods": [
            {
                "kind": n.kind,
                "size_r": n.size_r,
                "n_samples": n.n_samples,
                "seed": n.seed,
            }
            for n in config.neighborhoods
        ],
    }
    if config.ablation is not None:
        out["ablation"] = {
            "domain_id": config.ablation.domain_id,
            "base_size_r": config.ablation.base_size_r,
            "m_test": config.ablation.m_test,
            "n_samples_max": config.ablation.n_samples_max,
            "size_r_values": list(config.ablation.size_r_values),
        }
    return out


def experiment_from_dict(obj: dict) -> ExperimentConfig:
    domains = [
        DomainSpec(
            domain_id=d["domain_id"],
            rotation=d["rotation"],
            translation=tuple(d["translation"]),
            noise_std=d["noise_std"],
            far_shift=d.get("far_shift", False),
            class_arcs=tuple(
                ArcSpec(
                    center=tuple(a["center"]),
                    radius=a["radius"],
                    theta_start=a["theta_start"],
                    theta_extent=a["theta_extent"],
                )
                for a in d["class_arcs"]
            ),
        )
        for d in obj["domains"]
    ]
    grid = [TrainConfig(**c) for c in obj["grid"]]
    neighborhoods = [NeighborhoodSpec(**n) for n in obj["neighborhoods"]]
    ablation = None
    if "ablation" in obj and obj["ablation"] is not None:
        ab = dict(obj["ablation"])
        ab["size_r_values"] = tuple(ab.get("size_r_values", ()))
        ablation = AblationSpec(**ab)
    return ExperimentConfig(
        domains=domains,
        grid=grid,
        neighborhoods=neighborhoods,
        m_train=obj.get("m_train", 500),
        m_val=obj.get("m_val", 250),
        m_test=obj.get("m_test", 500),
        seed=obj.get("seed", 0),
        ablation=ablation,
    )


def load_experiment(path) -> ExperimentConfig:
    path = os.fspath(path)
    with open(path, "rb") as f:
        if path.endswith(".toml"):
            import tomllib

            obj = tomllib.load(f)
        else:
            obj = json.load(f)
    return experiment_from_dict(obj)


def _noise_floor_ce(label_noise: float, k: int) -> float:
    """Cross entropy of the best non-memorizing predictor under label noise."""
    if label_noise == 0.0:
        return 0.0
    q = 1.0 - label_noise * (k - 1) / k
    other = label_noise / k
    return -(q * math.log(q) + (k - 1) * other * math.log(other))


def default_grid(
    seed: int = 0,
    k: int = 3,
    depths=(1, 2, 3),
    widths=(8, 32),
    weight_decays=(0.0, 1e-4),
    label_noises=(0.0, 0.2, 0.4),
    ce_margin: float = 0.05,
    max_epochs: int = 300,
) -> list:
    """Hyperparameter grid; ce_stop tracks the noise floor of each setting so
    label-noise runs can converge without memorizing every corrupted label."""
    grid = []
    for depth in depths:
        for width in widths:
            for wd in weight_decays:
                for noise in label_noises:
                    grid.append(
                        TrainConfig(
                            depth=depth,
                            width=width,
                            weight_decay=wd,
                            label_noise=noise,
                            batch_size=32,
                            learning_rate=0.1,
                            ce_stop=ce_margin + _noise_floor_ce(noise, k),
                            max_epochs=max_epochs,
                            seed=seed,
                        )
                    )
    return grid


def default_arcs(k: int = 3, gap: float = math.radians(20)) -> tuple:
    sector = 2.0 * math.pi / k
    return tuple(
        ArcSpec(
            center=(0.0, 0.0),
            radius=1.0,
            theta_start=j * sector + gap / 2.0,
            theta_extent=sector - gap,
        )
        for j in range(k)
    )


def default_experiment(seed: int = 0, with_ablation: bool = True) -> ExperimentConfig:
    """Five training domains on a rotation sweep plus a far-shift test domain."""
    arcs = default_arcs()
    domains = [
        DomainSpec(
            domain_id=f"rot{deg:03d}",
            rotation=math.radians(deg),
            translation=(0.0, 0.0),
            noise_std=0.05,
            class_arcs=arcs,
        )
        for deg in (0, 20, 40, 60, 80)
    ]
    domains.append(
        DomainSpec(
            domain_id="far140",
            rotation=math.radians(140),
            translation=(0.0, 0.0),
            noise_std=0.05,
            class_arcs=arcs,
            far_shift=True,
        )
    )
    neighborhoods = [
        NeighborhoodSpec(kind="manifold", size_r=0.5, n_samples=10, seed=seed),
        NeighborhoodSpec(kind="isotropic", size_r=0.3, n_samples=10, seed=seed),
    ]
    ablation = None
    if with_ablation:
        ablation = AblationSpec(
            domain_id="rot040",
            base_size_r=0.5,
            m_test=2000,
            n_samples_max=100,
            size_r_values=(0.05, 0.1, 0.2, 0.35, 0.5, 0.8, 1.2, 1.8, 2.6),
        )
    return ExperimentConfig(
        domains=domains,
        grid=default_grid(seed=seed),
        neighborhoods=neighborhoods,
        seed=seed,
        ablation=ablation,
    )


def _train_job(args):
    domain_id, model_id, dataset, config = args
    try:
        model = train_model(dataset, config)
    except DivergenceError:
        model = None
    return domain_id, model_id, model


@dataclass
class PoolResult:
    out_dir: str
    manifest: list
    num_converged: int
    prediction_log_paths: list = field(default_factory=list)
    score_log_paths: list = field(default_factory=list)


def _neighborhood_points(test_set: Dataset, domain: DomainSpec, spec: NeighborhoodSpec,
                         base_seed: int) -> np.ndarray:
    rng = np.random.default_rng(
        derive_seed(base_seed, "nbr", domain.domain_id, spec.tag, spec.seed)
    )
    return np.stack(
        [sample_neighborhood(p, domain, spec, rng=rng) for p in test_set.points]
    )


def _score_entries(model: MlpModel, points: np.ndarray, labels=None):
    classes, conf, negent = model_predict(model, points)
    entries = []
    for idx in range(len(classes)):
        entries.append(
            ScoreEntry(
                example_id=f"ex{idx:05d}",
                predicted_label=int(classes[idx]),
                max_confidence=float(conf[idx]),
                neg_entropy=min(float(negent[idx]), 0.0),
                true_label=int(labels[idx]) if labels is not None else None,
            )
        )
    return entries, classes


def run_pool(config: ExperimentConfig, out_dir, threads: int = 1) -> PoolResult:
    """Train the grid on every training domain and emit all pipeline inputs."""
    training = config.training_domains()
    if len(training) < 2:
        raise SchemaError("need at least 2 training domains")
    out_dir = os.fspath(out_dir)
    for sub in ("predictions", "scores", "weights", "ablation"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    meta_common = {
        "tool_version": __version__,
        "config_hash": config.config_hash(),
        "seed": config.seed,
    }

    # Training jobs, one per (training domain, grid config).
    jobs = []
    for domain in training:
        train_set = generate_domain(
            domain, config.m_train, derive_seed(config.seed, "train", domain.domain_id)
        )
        for idx, base_cfg in enumerate(config.grid):
            cfg = dataclasses.replace(
                base_cfg, seed=derive_seed(config.seed, "model", domain.domain_id, idx)
            )
            noisy = apply_label_noise(
                train_set,
                cfg.label_noise,
                derive_seed(config.seed, "label_noise", domain.domain_id, idx),
            )
            jobs.append((domain.domain_id, f"{domain.domain_id}-c{idx:03d}", noisy, cfg))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            trained = list(pool.map(_train_job, jobs, chunksize=4))
    else:
        trained = [_train_job(j) for j in jobs]

    by_id = {}
    manifest = []
    for (domain_id, model_id, dataset, cfg), (_, _, model) in zip(jobs, trained):
        converged = model is not None and model.converged
        manifest.append(
            ModelRecord(
                model_id=model_id,
                arch="mlp",
                train_domain=domain_id,
                hyperparams=cfg.hyperparams(),
                converged=converged,
            )
        )
        if converged:
            by_id[model_id] = (domain_id, model)
    write_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))

    # Shared evaluation data: test/validation sets and neighborhood samples.
    test_sets = {
        d.domain_id: generate_domain(
            d, config.m_test, derive_seed(config.seed, "test", d.domain_id)
        )
        for d in config.domains
    }
    val_sets = {
        d.domain_id: generate_domain(
            d, config.m_val, derive_seed(config.seed, "val", d.domain_id)
        )
        for d in training
    }
    neighborhoods = {}
    for d in config.domains:
        for spec in config.neighborhoods:
            neighborhoods[(d.domain_id, spec.tag)] = _neighborhood_points(
                test_sets[d.domain_id], d, spec, config.seed
            )

    # Ablation inputs: a large test set, a deep-sample neighborhood and a
    # size_r sweep, all on one designated domain.
    ab = config.ablation
    ab_sets = {}
    if ab is not None:
        domain = next(d for d in config.domains if d.domain_id == ab.domain_id)
        big = generate_domain(
            domain, ab.m_test, derive_seed(config.seed, "ablation_test", ab.domain_id)
        )
        base_spec = NeighborhoodSpec(
            kind="manifold", size_r=ab.base_size_r, n_samples=10, seed=config.seed
        )
        deep_spec = NeighborhoodSpec(
            kind="manifold",
            size_r=ab.base_size_r,
            n_samples=ab.n_samples_max,
            seed=config.seed,
        )
        ab_sets["dataset_size"] = (
            big, base_spec, _neighborhood_points(big, domain, base_spec, config.seed)
        )
        small = test_sets[ab.domain_id]
        ab_sets["n_samples"] = (
            small, deep_spec, _neighborhood_points(small, domain, deep_spec, config.seed)
        )
        for r in ab.size_r_values:
            spec = NeighborhoodSpec(
                kind="manifold", size_r=r, n_samples=10, seed=config.seed
            )
            ab_sets[f"size_r__{r:g}"] = (
                small, spec, _neighborhood_points(small, domain, spec, config.seed)
            )

    result = PoolResult(out_dir=out_dir, manifest=manifest, num_converged=len(by_id))

    def emit_prediction_log(path, model_id, domain_id, model, dataset, spec, samples,
                            base_classes):
        k = dataset.num_classes
        m, n, _ = samples.shape
        classes, _, _ = model_predict(model, samples.reshape(m * n, 2))
        classes = classes.reshape(m, n)
        examples = tuple(
            ExampleEntry(
                example_id=f"ex{idx:05d}",
                neighborhood_predictions=tuple(int(c) for c in classes[idx]),
                true_label=int(dataset.labels[idx]),
                base_prediction=int(base_classes[idx]),
            )
            for idx in range(m)
        )
        log = NeighborhoodPredictionLog(
            model_id=model_id,
            test_domain=domain_id,
            num_classes=k,
            examples=examples,
            meta={**meta_common, "neighborhood": spec.tag},
        )
        write_prediction_log(log, path)
        result.prediction_log_paths.append(path)

    for model_id, (train_domain, model) in sorted(by_id.items()):
        # Validation scores on the model's own domain (threshold fitting).
        val = val_sets[train_domain]
        entries, _ = _score_entries(model, val.points, val.labels)
        path = os.path.join(out_dir, "scores", f"{model_id}__{train_domain}__validation.jsonl")
        write_score_log(
            ScoreLog(
                model_id=model_id,
                domain=train_domain,
                split="validation",
                entries=tuple(entries),
                num_classes=val.num_classes,
                meta=meta_common,
            ),
            path,
        )
        result.score_log_paths.append(path)

        for d in config.domains:
            test = test_sets[d.domain_id]
            entries, base_classes = _score_entries(model, test.points, test.labels)
            path = os.path.join(
                out_dir, "scores", f"{model_id}__{d.domain_id}__test.jsonl"
            )
            write_score_log(
                ScoreLog(
                    model_id=model_id,
                    domain=d.domain_id,
                    split="test",
                    entries=tuple(entries),
                    num_classes=test.num_classes,
                    meta=meta_common,
                ),
                path,
            )
            result.score_log_paths.append(path)
            for spec in config.neighborhoods:
                emit_prediction_log(
                    os.path.join(
                        out_dir,
                        "predictions",
                        f"{model_id}__{d.domain_id}__{spec.tag}.jsonl",
                    ),
                    model_id,
                    d.domain_id,
                    model,
                    test,
                    spec,
                    neighborhoods[(d.domain_id, spec.tag)],
                    base_classes,
                )

        for name, (dataset, spec, samples) in ab_sets.items():
            base_classes, _, _ = model_predict(model, dataset.points)
            emit_prediction_log(
                os.path.join(out_dir, "ablation", f"{model_id}__{name}.jsonl"),
                model_id,
                ab.domain_id,
                model,
                dataset,
                spec,
                samples,
                base_classes,
            )

        write_weight_dump(
            WeightDump(model_id=model_id, layers=tuple(np.array(w) for w in model.weights)),
            os.path.join(out_dir, "weights", f"{model_id}.bin"),
        )

    with open(os.path.join(out_dir, "experiment.json"), "w", encoding="utf-8") as f:
        json.dump(
            {"meta": meta_common, "experiment": experiment_to_dict(config)},
            f,
            sort_keys=True,
            indent=2,
        )
    return result
