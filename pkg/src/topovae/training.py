"""Training loop, checkpoints and evaluation metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from topovae.config import ConfigError, ExperimentConfig
from topovae.data import PointCloud, Table, rng_stream
from topovae.model import LossConfig, TopoVAE, loss_terms, topo_term
from topovae.nn import AdamState, GradientError, MlpParams, adam_step

CHECKPOINT_MAGIC = "TVAE1"
HISTORY_COLUMNS = ("iteration", "total", "recon", "topo", "gpv")

# pass thresholds applied by evaluate()
THRESHOLDS = {
    "gpv_max_abs": 0.05,
    "manifold_residual_mean": 0.05,
    "recon_mse": 1e-2,
    "knn_overlap": 0.6,
}
KNN_K = 10

# self-intersection parameters of the relative orbit
ORBIT_NODES = (math.pi / 6, 5 * math.pi / 6)


class TrainingError(RuntimeError):
    """Training diverged; carries the last finite model."""

    def __init__(self, msg: str, iteration: int, last_good: TopoVAE | None):
        super().__init__(msg)
        self.iteration = iteration
        self.last_good = last_good


class WindingError(ValueError):
    pass


# --------------------------------------------------------------- checkpoints


def model_from_config(cfg: ExperimentConfig) -> TopoVAE:
    rng = rng_stream(cfg.seed, "train/weights")
    loss = LossConfig(cfg.alpha, cfg.beta, cfg.gamma, cfg.recon_mode)
    return TopoVAE.build(cfg.obs_dim, cfg.latent, rng, cfg.hidden, loss,
                         cfg.training.weight_init_scale)


def save_checkpoint(model: TopoVAE, cfg: ExperimentConfig, path: str | Path,
                    iteration: int = 0) -> None:
    doc = {
        "format": CHECKPOINT_MAGIC,
        "iteration": iteration,
        "config": cfg.to_dict(),
        "latent_layout": {
            "tpv": list(range(cfg.latent.n_tpv)),
            "gpv": list(range(cfg.latent.n_tpv, cfg.latent.latent_dim)),
            "term": cfg.latent.term,
        },
        "input_scaling": {"shift": model.shift.tolist(), "scale": model.scale.tolist()},
        "encoder": model.encoder.to_json(),
        "decoder": model.decoder.to_json(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[TopoVAE, ExperimentConfig]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    cfg = ExperimentConfig.from_dict(doc["config"])
    loss = LossConfig(cfg.alpha, cfg.beta, cfg.gamma, cfg.recon_mode)
    scaling = doc.get("input_scaling", {})
    model = TopoVAE(MlpParams.from_json(doc["encoder"]), MlpParams.from_json(doc["decoder"]),
                    cfg.latent, loss, scaling.get("shift"), scaling.get("scale"))
    return model, cfg


# ------------------------------------------------------------------ training


@dataclass
class TrainResult:
    model: TopoVAE
    history: list[tuple[float, ...]] = field(default_factory=list)

    def history_table(self) -> Table:
        return Table(HISTORY_COLUMNS, np.array(self.history, dtype=np.float64),
                     {"columns": "dataset-mean loss terms"})


def _dataset_terms(model: TopoVAE, x: np.ndarray):
    z = model.encode(x)
    return loss_terms(model.loss, model.split, x, model.decode(z), z)


def train(cfg: ExperimentConfig, data: PointCloud, model: TopoVAE | None = None) -> TrainResult:
    """Adam on uniformly drawn minibatches; deterministic given ``cfg.seed``.

    The loss history holds full-dataset loss terms every ``eval_every``
    iterations, plus the initial state at iteration 0.
    """
    x = data.points
    if x.shape[1] != cfg.obs_dim:
        raise ConfigError(f"data has {x.shape[1]} columns, {cfg.system} expects {cfg.obs_dim}")
    sched = cfg.training
    if sched.batch_size > x.shape[0]:
        raise ConfigError(f"batch size {sched.batch_size} exceeds {x.shape[0]} samples")
    if model is None:
        model = model_from_config(cfg)
        model.fit_scaling(x)
    state = AdamState.zeros_like(model.arrays(), lr=sched.learning_rate)
    batches = rng_stream(cfg.seed, "train/batch")
    noise_rng = rng_stream(cfg.seed, "train/noise") if cfg.latent_noise else None

    def record(it: int):
        t = _dataset_terms(model, x)
        result.history.append((float(it), t.total, t.recon, t.topo, t.gpv))
        return t

    result = TrainResult(model)
    record(0)
    last_good = _snapshot(model)
    n = x.shape[0]
    for it in range(1, sched.iterations + 1):
        idx = batches.choice(n, sched.batch_size, replace=False)
        noise = None
        if noise_rng is not None:
            noise = noise_rng.standard_normal((sched.batch_size, cfg.latent.latent_dim))
        terms, grads = model.loss_and_grads(x[idx], noise)
        if not math.isfinite(terms.total):
            raise TrainingError(f"loss became non-finite at iteration {it}", it, last_good)
        try:
            adam_step(model.arrays(), grads, state)
        except GradientError as exc:
            raise TrainingError(f"{exc} (iteration {it})", it, last_good) from exc
        if it % sched.eval_every == 0 or it == sched.iterations:
            t = record(it)
            if not math.isfinite(t.total):
                raise TrainingError(f"dataset loss non-finite at iteration {it}", it, last_good)
            last_good = _snapshot(model)
    return result


def _snapshot(model: TopoVAE) -> TopoVAE:
    return TopoVAE(model.encoder.copy(), model.decoder.copy(), model.split, model.loss,
                   model.shift, model.scale)


# ---------------------------------------------------------------- evaluation


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2 * np.pi) - np.pi


def winding_number(phases, latents, center=(0.0, 0.0), min_radius: float = 0.1) -> int:
    """Times the latent angle wraps around ``center`` over one phase cycle."""
    phases = np.asarray(phases, dtype=np.float64).ravel()
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] != phases.shape[0]:
        raise WindingError("latents must be an (n, 2) array aligned with phases")
    if phases.shape[0] < 10:
        raise WindingError("winding number needs at least 10 samples")
    rel = z - np.asarray(center, dtype=np.float64)
    radius = np.hypot(rel[:, 0], rel[:, 1])
    if radius.min() <= min_radius:
        raise WindingError(
            f"latent radius {radius.min():.3g} <= {min_radius:.3g}: latents collapsed"
        )
    order = np.argsort(phases, kind="stable")
    ang = np.arctan2(rel[order, 1], rel[order, 0])
    steps = _wrap(np.diff(np.append(ang, ang[0])))
    return int(round(steps.sum() / (2 * np.pi)))


def lobe_windings(t, latents) -> list[int]:
    """Winding of each figure-eight lobe around the centroid of its latents.

    The orbit is split at its self-intersection parameters; each lobe is a
    closed loop whose latent image must wind exactly once.
    """
    t = np.mod(np.asarray(t, dtype=np.float64).ravel(), 2 * np.pi)
    z = np.asarray(latents, dtype=np.float64)
    a, b = ORBIT_NODES
    inner = (t > a) & (t < b)
    out = []
    for mask, phase in ((inner, t), (~inner, np.mod(t - b, 2 * np.pi))):
        zl = z[mask]
        center = zl.mean(axis=0)
        scale = np.median(np.hypot(*(zl - center).T))
        out.append(winding_number(phase[mask], zl, center, 0.1 * scale))
    return out


def polar_transform(z_t) -> tuple:
    """Polar and azimuthal angle of a latent point near the unit sphere."""
    z = np.asarray(z_t, dtype=np.float64)
    norm = np.linalg.norm(z, axis=-1)
    if np.any((norm < 0.8) | (norm > 1.2)):
        raise ValueError("latent norm outside [0.8, 1.2]; latents are not spherical")
    theta = np.arccos(np.clip(z[..., 2] / norm, -1.0, 1.0))
    phi = np.mod(np.arctan2(z[..., 1], z[..., 0]), 2 * np.pi)
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    if np.ndim(theta) == 0:
        return float(theta), float(phi)
    return theta, phi


def _knn(x: np.ndarray, k: int) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def knn_overlap(x, z, k: int = KNN_K) -> float:
    """Mean fraction of each point's k nearest neighbours shared by both spaces."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[0] != z.shape[0]:
        raise ValueError("x and z must have the same number of rows")
    if not 1 <= k < x.shape[0]:
        raise ValueError(f"k={k} invalid for {x.shape[0]} samples")
    a, b = _knn(x, k), _knn(z, k)
    hits = sum(len(set(r1).intersection(r2)) for r1, r2 in zip(a.tolist(), b.tolist()))
    return hits / (k * x.shape[0])


@dataclass
class EvalReport:
    gpv_max_abs: float
    gpv_mean_abs: float
    manifold_residual_mean: float
    recon_mse: float
    knn_overlap: float
    winding_number: int | None
    lobe_windings: list[int] | None
    latents: np.ndarray
    checks: dict[str, bool]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "gpv_max_abs": self.gpv_max_abs,
            "gpv_mean_abs": self.gpv_mean_abs,
            "manifold_residual_mean": self.manifold_residual_mean,
            "recon_mse": self.recon_mse,
            "knn_overlap": self.knn_overlap,
            "winding_number": self.winding_number,
            "lobe_windings": self.lobe_windings,
            "checks": self.checks,
            "thresholds": THRESHOLDS,
            "passed": self.passed,
            "notes": self.notes,
        }

    def latent_table(self) -> Table:
        cols = tuple(f"z{i}" for i in range(self.latents.shape[1]))
        return Table(cols, self.latents)


def evaluate(model: TopoVAE, data: PointCloud, labels: Table | None = None) -> EvalReport:
    x = data.points
    if x.shape[1] != model.n_obs:
        raise ConfigError(f"data has {x.shape[1]} columns, model expects {model.n_obs}")
    split = model.split
    z = model.encode(x)
    x_hat = model.decode(z)
    zt, zg = z[:, : split.n_tpv], z[:, split.n_tpv :]
    gabs = np.abs(zg)
    residual, _ = topo_term(split.term, zt)
    report = EvalReport(
        gpv_max_abs=float(gabs.max()) if gabs.size else 0.0,
        gpv_mean_abs=float(gabs.mean()) if gabs.size else 0.0,
        manifold_residual_mean=float(residual.mean()),
        recon_mse=float(((x_hat - x) ** 2).mean()),
        knn_overlap=knn_overlap(x, zt) if x.shape[0] > KNN_K else float("nan"),
        winding_number=None,
        lobe_windings=None,
        latents=z,
        checks={},
    )
    checks = report.checks
    checks["gpv_max_abs"] = report.gpv_max_abs < THRESHOLDS["gpv_max_abs"]
    checks["manifold_residual_mean"] = (
        report.manifold_residual_mean < THRESHOLDS["manifold_residual_mean"]
    )
    checks["recon_mse"] = report.recon_mse < THRESHOLDS["recon_mse"]
    if split.term == "sphere":
        checks["knn_overlap"] = report.knn_overlap >= THRESHOLDS["knn_overlap"]

    if labels is None:
        report.notes.append("no labels: correspondence metrics omitted")
        return report
    try:
        if split.term == "circle":
            report.winding_number = winding_number(labels.values[:, 0], zt)
            checks["winding"] = abs(report.winding_number) == 1
        elif split.term == "lemniscate":
            report.lobe_windings = lobe_windings(labels.values[:, 0], zt)
            checks["winding"] = all(abs(w) == 1 for w in report.lobe_windings)
    except WindingError as exc:
        report.notes.append(f"winding undefined: {exc}")
        checks["winding"] = False
    return report
