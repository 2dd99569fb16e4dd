"""Experiment orchestration: data, training schedule, embedding, evaluation, comparison."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, clustering, metrics
from .controller import (
    TRACE_HEADER,
    BetaController,
    ControllerHyper,
    Phase,
    TraceRow,
    gamma_schedule,
    phase,
)
from .errors import ConfigError, InputError, NumericalError, TrainingDiverged
from .numerics import AdamState
from .signal import (
    SpectrumBatch,
    atomic_write_text,
    default_profiles,
    fmt,
    generate_dataset,
    load_profiles,
    read_labels_csv,
    read_spectra_csv,
    save_profiles,
    write_labels_csv,
    write_spectra_csv,
)
from .vae import ModelParams, StepLosses, decode, encode, load_model, save_model, train_step

log = logging.getLogger(__name__)

# weight draws tried before giving up on a seed whose network dies in warm-up
MAX_INIT_DRAWS = 10
# reconstructions varying less than this across inputs mark a dead network
DEAD_TOL = 1e-9

METHODS = (
    "dynamic-beta-vae",
    "dynamic-beta-vae-semi",
    "fixed-beta-vae",
    "pca",
    "kernel-pca",
    "hca",
)
VAE_METHODS = METHODS[:3]
DEFAULT_TEST_SPECIES = ("aphid", "blowfly", "weevil", "mosquito")
PAPER_SCALE = {"unlabelled_count": 40000, "labelled_per_species": 500, "test_size": 3000, "epochs": 5000}


@dataclass
class ExperimentConfig:
    seed: int = 0
    data_source: str = "generate"  # or "csv": read from data_dir
    data_dir: str | None = None
    unlabelled_count: int = 8000
    labelled_per_species: int = 100
    profiles_path: str | None = None
    mixture_weights: list | None = None
    train_species: list | None = None  # None: every species not held out
    test_species: list = field(default_factory=lambda: list(DEFAULT_TEST_SPECIES))
    test_size: int = 1500
    epochs: int = 1500
    batch_size: int = 256
    learning_rate: float = 1e-3
    controller: dict = field(default_factory=dict)  # ControllerHyper overrides
    gamma_low: float = 0.01
    gamma_high: float = 0.2
    gamma_period: int = 100
    gamma_shape: str = "sawtooth"
    semi_start: int = 500
    fixed_beta: float = 1.0
    recon_loss: str = "bce"
    recon_reduction: str = "sum"
    cls_epsilon: float = 1e-8
    k_min: int = 5
    k_max: int = 50
    kmeans_restarts: int = 5
    kpca_gain: float | None = None
    kpca_offset: float = 1.0
    n_seeds: int = 5
    out_dir: str = "runs"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def with_paper_scale(self) -> "ExperimentConfig":
        return dataclasses.replace(self, **PAPER_SCALE)

    @property
    def hyper(self) -> ControllerHyper:
        return ControllerHyper(**self.controller)

    def validate(self) -> None:
        if self.train_species is not None and set(self.train_species) & set(self.test_species):
            raise ConfigError("train and test species must be disjoint")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch size and epochs must be positive")
        if self.data_source not in ("generate", "csv"):
            raise ConfigError(f"unknown data source {self.data_source!r}")
        self.hyper.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        raw = self.to_dict()
        raw.pop("out_dir")
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def profiles_for(config: ExperimentConfig):
    return load_profiles(config.profiles_path) if config.profiles_path else default_profiles()


def train_species_for(config: ExperimentConfig, all_species) -> list:
    if config.train_species is not None:
        return list(config.train_species)
    return [s for s in all_species if s not in set(config.test_species)]


# --- data --------------------------------------------------------------------

@dataclass
class Dataset:
    unlabelled: SpectrumBatch  # truth filled in
    labelled: SpectrumBatch


def data_dir(config: ExperimentConfig) -> Path:
    return Path(config.data_dir) if config.data_dir else Path(config.out_dir) / "data"


def cmd_generate(config: ExperimentConfig) -> Path:
    """Write unlabelled.csv, labelled.csv, truth.csv and profiles.json."""
    profiles = profiles_for(config)
    unl, lab = generate_dataset(
        profiles,
        config.unlabelled_count,
        config.labelled_per_species,
        config.seed,
        config.mixture_weights,
    )
    out = data_dir(config)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from exc
    write_spectra_csv(unl, out / "unlabelled.csv")
    write_spectra_csv(lab, out / "labelled.csv")
    write_labels_csv(unl.ids, unl.truth, out / "truth.csv")
    save_profiles(profiles, out / "profiles.json")
    return out


def load_dataset(config: ExperimentConfig) -> Dataset:
    d = data_dir(config)
    if config.data_source == "generate" and not (d / "unlabelled.csv").exists():
        cmd_generate(config)
    for name in ("unlabelled.csv", "labelled.csv"):
        if not (d / name).exists():
            raise InputError(f"missing dataset file {d / name}")
    unl = read_spectra_csv(d / "unlabelled.csv")
    lab = read_spectra_csv(d / "labelled.csv")
    truth_path = d / "truth.csv"
    if truth_path.exists():
        truth = read_labels_csv(truth_path)
        unl.truth = [truth.get(i) for i in unl.ids]
    lab.truth = list(lab.labels)
    return Dataset(unl, lab)


def split_indices(n: int, test_size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random (train, test) row split of the unlabelled pool, sorted index arrays."""
    if not 0 < test_size < n:
        raise ConfigError(f"test size {test_size} must lie in (0, {n})")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    test = np.sort(rng.choice(n, test_size, replace=False))
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def labelled_pool(config: ExperimentConfig, dataset: Dataset) -> SpectrumBatch:
    species = sorted({l for l in dataset.labelled.labels if l is not None})
    train = set(train_species_for(config, species))
    keep = [i for i, l in enumerate(dataset.labelled.labels) if l in train]
    return dataset.labelled.subset(keep)


# --- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    trace: list
    runtime_s: float
    init_draws: int = 1


def _labelled_batches(x, y, batch_size, rng):
    n = x.shape[0]
    while True:
        perm = rng.permutation(n)
        for s in range(0, n, batch_size):
            idx = perm[s : s + batch_size]
            if np.unique(y[idx]).size >= 2:
                yield x[idx], y[idx]


def train_model(
    train_x: np.ndarray,
    config: ExperimentConfig,
    seed: int,
    labelled: SpectrumBatch | None = None,
    adaptive: bool = True,
    progress=None,
) -> TrainResult:
    """Warm-up, then the regularized phase, then (with labels) the semi-supervised phase.

    If the network is dead at the end of warm-up (see :func:`network_is_dead`)
    the weights are redrawn from the same seeded stream and training starts
    over, up to ``MAX_INIT_DRAWS`` times.  ``progress`` is called as
    ``progress(TraceRow)`` after every epoch, abandoned draws included.
    """
    x = np.asarray(train_x, dtype=np.float64)
    if config.batch_size > x.shape[0]:
        raise ConfigError("batch size exceeds the training set size")
    hyper = config.hyper
    ss = np.random.SeedSequence([seed, 1])
    init_seed, shuffle_seed, noise_seed, lab_seed = ss.spawn(4)
    init_rng = np.random.default_rng(init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    noise_rng = np.random.default_rng(noise_seed)

    semi_start = None
    lab_iter = None
    if labelled is not None and len(labelled) > 0:
        semi_start = config.semi_start
        _, y = np.unique(np.asarray(labelled.labels), return_inverse=True)
        lab_iter = _labelled_batches(
            labelled.bins, y, config.batch_size, np.random.default_rng(lab_seed)
        )

    t0 = time.perf_counter()
    probe = x[: min(512, x.shape[0])]
    for draw in range(1, MAX_INIT_DRAWS + 1):
        params = ModelParams.init(init_rng, input_width=x.shape[1])
        adam = AdamState(lr=config.learning_rate)
        ctrl = BetaController(hyper, adaptive=adaptive, fixed_beta=config.fixed_beta)
        params, trace = _run_epochs(
            params, adam, ctrl, x, config, semi_start, lab_iter, shuffle_rng, noise_rng,
            progress, stop_if_dead=(hyper.warmup_epochs, probe),
        )
        if trace is not None:
            return TrainResult(params, trace, time.perf_counter() - t0, draw)
        log.warning("seed %d: network dead after warm-up (draw %d), redrawing weights", seed, draw)
    raise TrainingDiverged(
        f"every one of {MAX_INIT_DRAWS} weight draws left a dead network after warm-up",
        last_state=params,
    )


def network_is_dead(params: ModelParams, probe) -> bool:
    """True when reconstructions of ``probe`` do not depend on the input at all.

    A ReLU layer whose units are all inactive passes a constant forward and a
    zero gradient backward, so such a network never recovers.
    """
    mu, _ = encode(params, probe)
    return float(decode(params, mu).std(axis=0).max()) < DEAD_TOL


def _run_epochs(params, adam, ctrl, x, config, semi_start, lab_iter, shuffle_rng, noise_rng,
                progress, stop_if_dead):
    """The epoch loop; returns ``(params, None)`` if the network is dead after warm-up."""
    hyper = config.hyper
    check_epoch, probe = stop_if_dead
    trace = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        ph = phase(epoch, hyper.warmup_epochs, semi_start)
        beta = 0.0 if ph is Phase.WARMUP else ctrl.beta
        gamma = gamma_schedule(
            epoch, semi_start, config.gamma_low, config.gamma_high,
            config.gamma_period, config.gamma_shape,
        )
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for s in range(0, n, config.batch_size):
            xb = x[perm[s : s + config.batch_size]]
            lab = next(lab_iter) if gamma > 0 else None
            try:
                params, adam, losses = train_step(
                    params, adam, xb, beta, gamma, lab, noise_rng,
                    config.recon_loss, config.recon_reduction, config.cls_epsilon,
                )
            except NumericalError as exc:
                raise TrainingDiverged(
                    f"training diverged at epoch {epoch}: {exc}", last_state=params, epoch=epoch
                ) from exc
            sums += losses.as_tuple
            batches += 1
        mean = StepLosses(*(sums / batches))
        deltas = ctrl.end_epoch(epoch, mean.rec, mean.reg)
        row = TraceRow(epoch, beta, gamma, mean.rec, mean.reg, mean.cls, deltas, ph)
        trace.append(row)
        if progress is not None:
            progress(row)
        if epoch == check_epoch - 1 and network_is_dead(params, probe):
            return params, None
    return params, trace


def trace_csv(trace) -> str:
    lines = [TRACE_HEADER]
    for r in trace:
        d = r.deltas
        dcols = ["", "", ""] if d is None else [fmt(d.rec), fmt(d.reg), str(d.dl_rec)]
        lines.append(
            ",".join(
                [str(r.epoch), fmt(r.beta), fmt(r.gamma), fmt(r.l_rec), fmt(r.l_reg), fmt(r.l_cls)]
                + dcols
                + [r.phase.value]
            )
        )
    return "\n".join(lines) + "\n"


def run_dir(config: ExperimentConfig, method: str, seed: int) -> Path:
    return Path(config.out_dir) / method / f"seed{seed}"


def cmd_train(config: ExperimentConfig, method: str = "dynamic-beta-vae", seed: int | None = None) -> Path:
    """Train one VAE variant; writes model.dbv, trace.csv, test_spectra.csv, report.json."""
    if method not in VAE_METHODS:
        raise ConfigError(f"train supports {VAE_METHODS}, got {method!r}")
    seed = config.seed if seed is None else seed
    dataset = load_dataset(config)
    train_idx, test_idx = split_indices(len(dataset.unlabelled), config.test_size, seed)
    labelled = labelled_pool(config, dataset) if method == "dynamic-beta-vae-semi" else None
    if labelled is not None:
        leaked = set(labelled.labels) & set(config.test_species)
        if leaked:
            raise ConfigError(f"test species {sorted(leaked)} in the clustering-loss set")
    out = run_dir(config, method, seed)
    out.mkdir(parents=True, exist_ok=True)
    result = train_model(
        dataset.unlabelled.bins[train_idx],
        config,
        seed,
        labelled=labelled,
        adaptive=method != "fixed-beta-vae",
        progress=_log_progress,
    )
    meta = {
        "method": method,
        "seed": seed,
        "config_hash": config.hash(),
        "training": {
            "epochs": config.epochs,
            "final_beta": result.trace[-1].beta if result.trace else 0.0,
            "train_rows": int(train_idx.size),
        },
    }
    save_model(result.params, out / "model.dbv", meta)
    atomic_write_text(out / "trace.csv", trace_csv(result.trace))
    write_spectra_csv(dataset.unlabelled.subset(test_idx), out / "test_spectra.csv")
    report = {
        "method": method,
        "seed": seed,
        "final_beta": meta["training"]["final_beta"],
        "wall_clock_s": result.runtime_s,
        "init_draws": result.init_draws,
        "model": str(out / "model.dbv"),
        "trace": str(out / "trace.csv"),
        "config": config.to_dict(),
    }
    atomic_write_text(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return out


def _log_progress(row: TraceRow) -> None:
    if row.epoch % 100 == 0:
        log.info(
            "epoch %d beta=%.4f gamma=%.3f rec=%.3f reg=%.3f cls=%.4f",
            row.epoch, row.beta, row.gamma, row.l_rec, row.l_reg, row.l_cls,
        )


# --- embedding / evaluation --------------------------------------------------

def embedding_csv(ids, Z) -> str:
    lines = ["id,z1,z2"] + [f"{i},{fmt(z[0])},{fmt(z[1])}" for i, z in zip(ids, Z)]
    return "\n".join(lines) + "\n"


def read_embedding_csv(path) -> tuple[list, np.ndarray]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or not rows[0].startswith("id,"):
        raise InputError(f"{path}: bad embedding header")
    ids, data = [], []
    for line in rows[1:]:
        if line:
            parts = line.split(",")
            ids.append(parts[0])
            data.append([float(v) for v in parts[1:]])
    return ids, np.array(data, dtype=np.float64).reshape(len(ids), -1)


def cmd_embed(model_path, spectra_path, output_path) -> Path:
    params, _ = load_model(model_path)
    batch = read_spectra_csv(spectra_path)
    mu, _ = encode(params, batch.bins)
    atomic_write_text(output_path, embedding_csv(batch.ids, mu))
    return Path(output_path)


def evaluate_embedding(
    ids, Z, truth: dict, config: ExperimentConfig, seed: int, method: str
) -> tuple[dict, clustering.KSelection]:
    """Select K on all rows, then score clusters on rows whose truth is a test species."""
    sel = clustering.select_k(Z, config.k_min, config.k_max, seed, config.kmeans_restarts)
    return _score(ids, sel.model.assignments, sel, truth, config, seed, method), sel


def _score(ids, assignments, sel, truth, config, seed, method) -> dict:
    test = set(config.test_species) if config.test_species else None
    keep = [
        i for i, rid in enumerate(ids)
        if truth.get(rid) is not None and (test is None or truth[rid] in test)
    ]
    if not keep:
        raise InputError("no embedded rows carry a test-species truth label")
    y_true = [truth[ids[i]] for i in keep]
    y_pred = np.asarray(assignments)[keep]
    return {
        "method": method,
        "seed": seed,
        "k": int(sel.k),
        "silhouette": float(sel.scores[sel.k]),
        "ari": metrics.ari(y_true, y_pred),
        "ami": metrics.ami(y_true, y_pred),
        "n_eval": len(keep),
        "ami_normalization": metrics.AMI_NORMALIZATION,
        "runtime_s": None,
        "config_hash": config.hash(),
    }


def metrics_json(m: dict) -> str:
    return json.dumps(m, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))


def cmd_evaluate(
    embedding_path, truth_path, config: ExperimentConfig, seed: int | None = None,
    method: str = "dynamic-beta-vae", output_path=None,
) -> dict:
    """Cluster an embedding CSV and score it; writes metrics.json, assignments.csv, silhouette.csv."""
    seed = config.seed if seed is None else seed
    ids, Z = read_embedding_csv(embedding_path)
    truth = read_labels_csv(truth_path)
    if not set(ids) & set(truth):
        raise InputError("embedding and truth files share no ids")
    result, sel = evaluate_embedding(ids, Z, truth, config, seed, method)
    out = Path(output_path) if output_path else Path(embedding_path).with_name("metrics.json")
    atomic_write_text(out, metrics_json(result))
    write_labels_csv(ids, sel.model.assignments, out.with_name("assignments.csv"), ("id", "cluster"))
    atomic_write_text(out.with_name("silhouette.csv"), silhouette_csv(sel.scores))
    return result


def silhouette_csv(scores: dict) -> str:
    return "k,silhouette\n" + "".join(f"{k},{fmt(v)}\n" for k, v in sorted(scores.items()))


def summarize(runs: list) -> dict:
    """Mean, std and median of ARI/AMI and median K across repeated runs."""
    out = {"n_runs": len(runs)}
    if not runs:
        return out
    for key in ("ari", "ami"):
        vals = [r[key] for r in runs]
        out[f"{key}_mean"] = statistics.fmean(vals)
        out[f"{key}_std"] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        out[f"{key}_median"] = statistics.median(vals)
    out["k_median"] = statistics.median([r["k"] for r in runs])
    return out


# --- latent grid / cluster spectra ------------------------------------------

def grid_points(spec: str) -> np.ndarray:
    """Latent points from ``grid:x0,x1,nx,y0,y1,ny`` or ``wheel:radius,spokes,steps``."""
    kind, _, args = spec.partition(":")
    try:
        vals = [float(v) for v in args.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec!r}") from exc
    if kind == "grid" and len(vals) == 6:
        x0, x1, nx, y0, y1, ny = vals
        xs = np.linspace(x0, x1, int(nx))
        ys = np.linspace(y0, y1, int(ny))
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.column_stack([gx.ravel(), gy.ravel()])
    if kind == "wheel" and len(vals) == 3:
        radius, spokes, steps = vals[0], int(vals[1]), int(vals[2])
        pts = []
        for s in range(spokes):
            ang = 2 * np.pi * s / spokes
            for r in np.linspace(0.0, radius, steps):
                pts.append((r * np.cos(ang), r * np.sin(ang)))
        return np.array(pts)
    raise ConfigError(f"bad grid spec {spec!r}; use grid:x0,x1,nx,y0,y1,ny or wheel:r,spokes,steps")


def latent_grid_csv(params: ModelParams, points: np.ndarray) -> str:
    decoded = decode(params, points)
    header = ["z1", "z2"] + [f"f{j:03d}" for j in range(decoded.shape[1])]
    lines = [",".join(header)]
    for z, row in zip(points, decoded):
        lines.append(",".join([fmt(z[0]), fmt(z[1])] + [fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def cmd_latent_grid(model_path, spec: str, output_path) -> Path:
    params, _ = load_model(model_path)
    atomic_write_text(output_path, latent_grid_csv(params, grid_points(spec)))
    return Path(output_path)


def cluster_spectra_csv(summary) -> str:
    n_bins = next((s.mean.shape[0] for s in summary if not s.empty), 0)
    lines = [",".join(["cluster", "count", "stat"] + [f"f{j:03d}" for j in range(n_bins)])]
    for s in summary:
        if s.empty:
            lines.append(f"{s.cluster},0,empty" + "," * n_bins)
            continue
        for stat, vals in (("mean", s.mean), ("q25", s.q25), ("q75", s.q75)):
            lines.append(",".join([str(s.cluster), str(s.count), stat] + [fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"


def cmd_cluster_spectra(
    spectra_path, embedding_path, config: ExperimentConfig, output_path, k: int | None = None,
    seed: int | None = None,
) -> Path:
    """Cluster the embedding (fixed K or silhouette-selected) and export per-cluster spectra."""
    seed = config.seed if seed is None else seed
    batch = read_spectra_csv(spectra_path)
    ids, Z = read_embedding_csv(embedding_path)
    pos = {rid: i for i, rid in enumerate(batch.ids)}
    missing = [rid for rid in ids if rid not in pos]
    if missing:
        raise InputError(f"{len(missing)} embedded ids not found in the spectra file")
    spectra = batch.bins[[pos[rid] for rid in ids]]
    if k is None:
        model = clustering.select_k(Z, config.k_min, config.k_max, seed, config.kmeans_restarts).model
    else:
        model = clustering.kmeans(Z, k, seed, n_init=config.kmeans_restarts)
    summary = clustering.cluster_spectra_summary(spectra, model.assignments, model.k)
    out = Path(output_path)
    atomic_write_text(out, cluster_spectra_csv(summary))
    write_labels_csv(ids, model.assignments, out.with_name(out.stem + "_assignments.csv"), ("id", "cluster"))
    return out


# --- comparison --------------------------------------------------------------

def _hca_select(spectra, config, seed, method):
    dend = baselines.hca_fit(spectra)
    D = clustering.pairwise_distances(spectra)
    n = spectra.shape[0]
    k_max = min(config.k_max, n - 1)
    scores, cuts = {}, {}
    for k in range(config.k_min, k_max + 1):
        cuts[k] = baselines.hca_cut(dend, k)
        scores[k] = clustering.silhouette_precomputed(D, cuts[k])
    best = max(scores, key=lambda k: (scores[k], -k))
    sel = clustering.KSelection(best, scores, {}, None)
    return cuts[best], sel


def run_method(
    method: str, dataset: Dataset, config: ExperimentConfig, seed: int, out_root: Path | None = None
) -> tuple[dict, float]:
    """One repetition of one method on the seed's train/test split.

    Returns ``(metrics, wall-clock seconds)``.  The metrics keep
    ``runtime_s`` null so that they stay byte-reproducible.
    """
    t0 = time.perf_counter()
    train_idx, test_idx = split_indices(len(dataset.unlabelled), config.test_size, seed)
    test = dataset.unlabelled.subset(test_idx)
    truth = {rid: t for rid, t in zip(test.ids, test.truth)}
    out = out_root / method / f"seed{seed}" if out_root is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if method in VAE_METHODS:
        labelled = labelled_pool(config, dataset) if method == "dynamic-beta-vae-semi" else None
        result = train_model(
            dataset.unlabelled.bins[train_idx], config, seed, labelled,
            adaptive=method != "fixed-beta-vae", progress=_log_progress,
        )
        Z, _ = encode(result.params, test.bins)
        if out is not None:
            save_model(result.params, out / "model.dbv", {"method": method, "seed": seed})
            atomic_write_text(out / "trace.csv", trace_csv(result.trace))
    elif method == "pca":
        model = baselines.pca_fit(dataset.unlabelled.bins[train_idx])
        Z = baselines.pca_transform(model, test.bins)
    elif method == "kernel-pca":
        Z = baselines.kernel_pca_fit_transform(test.bins, config.kpca_gain, config.kpca_offset)
    elif method == "hca":
        assignments, sel = _hca_select(test.bins, config, seed, method)
        m = _score(test.ids, assignments, sel, truth, config, seed, method)
        if out is not None:
            write_labels_csv(test.ids, assignments, out / "assignments.csv", ("id", "cluster"))
            atomic_write_text(out / "metrics.json", metrics_json(m))
        return m, time.perf_counter() - t0
    else:
        raise ConfigError(f"unknown method {method!r}")

    m, sel = evaluate_embedding(test.ids, Z, truth, config, seed, method)
    if out is not None:
        atomic_write_text(out / "embedding.csv", embedding_csv(test.ids, Z))
        write_labels_csv(test.ids, sel.model.assignments, out / "assignments.csv", ("id", "cluster"))
        atomic_write_text(out / "silhouette.csv", silhouette_csv(sel.scores))
        atomic_write_text(out / "metrics.json", metrics_json(m))
    return m, time.perf_counter() - t0


def cmd_compare(config: ExperimentConfig, methods=METHODS, seeds=None) -> dict:
    """All methods over the same seeds and splits; writes comparison.json and timings.json."""
    seeds = list(range(config.seed, config.seed + config.n_seeds)) if seeds is None else list(seeds)
    dataset = load_dataset(config)
    out_root = Path(config.out_dir)
    entries, timings = [], {}
    for method in methods:
        runs, failures = [], []
        for seed in seeds:
            log.info("compare: %s seed %d", method, seed)
            try:
                m, seconds = run_method(method, dataset, config, seed, out_root)
            except Exception as exc:  # one failed run must not sink the comparison
                log.exception("method %s seed %d failed", method, seed)
                failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
                continue
            runs.append(m)
            timings.setdefault(method, {})[str(seed)] = seconds
        entries.append({"method": method, "runs": runs, "failures": failures, **summarize(runs)})
    result = {"seeds": seeds, "config_hash": config.hash(), "methods": entries}
    result["ordering"] = ordering_check(result)
    out_root.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_root / "comparison.json", metrics_json(result))
    # wall-clock lives apart from the reproducible outputs
    atomic_write_text(out_root / "timings.json", metrics_json({"runtime_s": timings}))
    return result


def ordering_check(comparison: dict) -> dict:
    """Median-ARI ordering semi >= unsup >= PCA, with semi - PCA >= 0.05."""
    med = {e["method"]: e.get("ari_median") for e in comparison["methods"]}
    semi, unsup, pca = (med.get(m) for m in ("dynamic-beta-vae-semi", "dynamic-beta-vae", "pca"))
    if None in (semi, unsup, pca):
        return {"available": False}
    return {
        "available": True,
        "semi_median_ari": semi,
        "unsup_median_ari": unsup,
        "pca_median_ari": pca,
        "semi_ge_unsup": semi >= unsup,
        "unsup_ge_pca": unsup >= pca,
        "semi_minus_pca": semi - pca,
        "passed": semi >= unsup >= pca and semi - pca >= 0.05,
    }
