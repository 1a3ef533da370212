"""Implementations of the command line subcommands.

Each command writes its artifacts into one directory and records itself in
that directory's ``manifest.json``. A directory shared by several commands
keeps a single manifest with one entry per stage.
"""

from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from topovae import __version__
from topovae.cli import EXIT_METRIC, EXIT_OK, UsageError
from topovae.config import (
    OBS_DIM,
    TERM_ARITY,
    ConfigError,
    LatentSplit,
    TrainSchedule,
    preset,
)
from topovae.data import DataError, PointCloud, Table, load_csv, load_table, save_csv, save_table
from topovae.homology import DEFAULT_LANDMARKS, VR_MAX_SIMPLICES, ComplexTooLarge, HomologyError
from topovae.homology import compute_betti
from topovae.physics import PhysicsError, generate
from topovae.training import (
    TrainingError,
    evaluate,
    load_checkpoint,
    polar_transform,
    save_checkpoint,
    train,
)

MANIFEST = "manifest.json"
MANIFEST_SCHEMA = 1
TERM_SYSTEM = {"circle": "oscillator", "lemniscate": "orbit", "sphere": "qubit"}


class ResourceError(RuntimeError):
    pass


class MetricError(RuntimeError):
    pass


USAGE_ERRORS = (UsageError, ConfigError, DataError, PhysicsError, HomologyError, OSError)


def _out_dir(path: str) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, config: dict, seed: int | None,
                   inputs: dict[str, str], outputs: list[str], started: float) -> None:
    """Add or replace this command's entry in the directory manifest."""
    path = out / MANIFEST
    doc: dict[str, Any] = {}
    if path.exists():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError:
            doc = {}
    if doc.get("schema_version") != MANIFEST_SCHEMA:
        doc = {}
    doc.update(schema_version=MANIFEST_SCHEMA, tool="topovae", version=__version__)
    stages = doc.setdefault("stages", {})
    stages[command] = {
        "config": config,
        "seed": seed,
        "inputs": {k: str(Path(v).resolve()) for k, v in inputs.items()},
        "outputs": sorted(outputs),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(run: Path) -> dict:
    path = run / MANIFEST
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{run} is not a run directory (no readable {MANIFEST}): {exc}") from None
    if doc.get("schema_version") != MANIFEST_SCHEMA:
        raise UsageError(f"{path}: unsupported manifest schema {doc.get('schema_version')!r}")
    return doc


# ------------------------------------------------------------------ generate


def cmd_generate(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    gen = generate(args.system, args.n, args.seed)
    save_csv(gen.cloud, out / "data.csv")
    save_table(gen.labels, out / "data.labels.csv")
    config = {"system": args.system, "n": args.n}
    write_manifest(out, "generate", config, args.seed, {},
                   ["data.csv", "data.labels.csv"], started)
    print(f"wrote {gen.cloud.n}x{gen.cloud.dim} samples to {out / 'data.csv'}")
    return EXIT_OK


# --------------------------------------------------------------------- betti


def cmd_betti(args) -> int:
    started = time.perf_counter()
    cloud = load_csv(args.input)
    landmarks = args.landmarks or DEFAULT_LANDMARKS[args.max_dim]
    landmarks = min(landmarks, cloud.n)
    cap = args.max_simplices or VR_MAX_SIMPLICES
    try:
        betti, bars, cx = compute_betti(cloud, args.max_dim, landmarks, args.lifetime_ratio,
                                        args.max_radius, cap)
    except ComplexTooLarge as exc:
        raise ResourceError(str(exc)) from None
    target = Path(args.out)
    _out_dir(str(target.parent))
    target.write_text(json.dumps(bars.to_json(cx.diameter, betti), sort_keys=True) + "\n")
    config = {"max_dim": args.max_dim, "landmarks": landmarks,
              "lifetime_ratio": args.lifetime_ratio, "max_radius": args.max_radius,
              "max_simplices": cap, "simplices": len(cx)}
    write_manifest(target.parent, "betti", config, None, {"input": args.input},
                   [target.name], started)
    print("[" + ",".join(str(b) for b in betti) + "]")
    return EXIT_OK


# --------------------------------------------------------------------- train


def _infer_system(cloud: PointCloud, args) -> str:
    if args.system:
        return args.system
    system = cloud.meta.get("system")
    if system in OBS_DIM:
        return system
    if args.term:
        return TERM_SYSTEM[args.term]
    # qubit data is the only five-column system
    if cloud.dim == OBS_DIM["qubit"]:
        return "qubit"
    raise UsageError("cannot tell the system from the data; pass --system or --term")


def train_config(cloud: PointCloud, args):
    system = _infer_system(cloud, args)
    base = preset(system, args.seed)
    term = args.term or base.latent.term
    tpv = args.tpv if args.tpv is not None else TERM_ARITY[term]
    if tpv != TERM_ARITY[term]:
        raise UsageError(f"term {term!r} acts on {TERM_ARITY[term]} TPVs, got --tpv {tpv}")
    gpv = args.gpv if args.gpv is not None else base.latent.n_gpv
    if args.iters < 0:
        raise UsageError("--iters must be nonnegative")
    sched = TrainSchedule(args.iters, args.batch_size, args.lr, args.eval_every)
    weights = {k: getattr(args, k) for k in ("alpha", "beta", "gamma") if getattr(args, k) is not None}
    return base.with_(n_samples=cloud.n, latent=LatentSplit(tpv, gpv, term), training=sched,
                      recon_mode=args.recon, **weights)


def cmd_train(args) -> int:
    started = time.perf_counter()
    cloud = load_csv(args.input)
    cfg = train_config(cloud, args)
    if cloud.dim != cfg.obs_dim:
        raise UsageError(f"{args.input} has {cloud.dim} columns, {cfg.system} data has {cfg.obs_dim}")
    out = _out_dir(args.out)
    try:
        result = train(cfg, cloud)
    except TrainingError as exc:
        if exc.last_good is not None:
            save_checkpoint(exc.last_good, cfg, out / "checkpoint.partial.json", exc.iteration)
        raise MetricError(f"training diverged: {exc}") from None
    save_checkpoint(result.model, cfg, out / "checkpoint.json", cfg.training.iterations)
    save_table(result.history_table(), out / "loss.csv")
    write_manifest(out, "train", cfg.to_dict(), cfg.seed, {"input": args.input},
                   ["checkpoint.json", "loss.csv"], started)
    final = result.history[-1]
    print(f"iteration {int(final[0])}: total {final[1]:.6g} recon {final[2]:.6g} "
          f"topo {final[3]:.6g} gpv {final[4]:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    started = time.perf_counter()
    model, cfg = load_checkpoint(args.checkpoint)
    cloud = load_csv(args.input)
    if cloud.dim != model.n_obs:
        raise UsageError(
            f"{args.input} has {cloud.dim} columns but the checkpoint expects {model.n_obs}"
        )
    data_system = cloud.meta.get("system")
    if data_system is not None and data_system != cfg.system:
        raise UsageError(f"data is {data_system!r} but the checkpoint was trained on {cfg.system!r}")
    labels = None
    if args.labels:
        labels = load_table(args.labels)
        if len(labels) != cloud.n:
            raise UsageError(f"{args.labels} has {len(labels)} rows, data has {cloud.n}")
    report = evaluate(model, cloud, labels)
    out = _out_dir(args.out)
    doc = report.to_json()
    doc["system"] = cfg.system
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    save_table(report.latent_table(), out / "latents.csv")
    inputs = {"input": args.input, "checkpoint": args.checkpoint}
    if args.labels:
        inputs["labels"] = args.labels
    write_manifest(out, "eval", {"system": cfg.system, "term": cfg.latent.term},
                   cfg.seed, inputs, ["report.json", "latents.csv"], started)
    for name, ok in report.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if not report.passed:
        failed = ", ".join(k for k, ok in report.checks.items() if not ok)
        print(f"metric failure: {failed}", file=sys.stderr)
        return EXIT_METRIC
    return EXIT_OK


# -------------------------------------------------------------------- export


def _angle(z: np.ndarray) -> np.ndarray:
    return np.mod(np.arctan2(z[:, 1], z[:, 0]), 2 * math.pi)


def export_tables(system: str, x: np.ndarray, labels: Table, z: np.ndarray) -> dict[str, Table]:
    """Joined label, observation and latent columns, one table per plot."""
    zcols = tuple(f"z{i}" for i in range(z.shape[1]))
    tables = {}
    if system == "oscillator":
        angle = _angle(z)[:, None]
        tables["latent_vs_x1.csv"] = Table(("x1", "latent_angle") + zcols,
                                           np.hstack([x[:, :1], angle, z]))
        tables["latent_vs_v.csv"] = Table(("v", "latent_angle") + zcols,
                                          np.hstack([x[:, 2:3], angle, z]))
        tables["latent_scatter.csv"] = Table(zcols + ("phase",),
                                             np.hstack([z, labels.column("phase")[:, None]]))
    elif system == "orbit":
        t = labels.column("t")[:, None]
        tables["latent_vs_t.csv"] = Table(("t",) + zcols, np.hstack([t, z]))
        tables["latent_scatter.csv"] = Table(("x0", "x1", "x2") + zcols, np.hstack([x, z]))
    else:
        try:
            theta1, phi1 = polar_transform(z[:, :3])
        except ValueError as exc:
            raise MetricError(f"cannot read angles off the latents: {exc}") from None
        tables["azimuth_compare.csv"] = Table(
            ("theta0", "phi0", "theta1", "phi1"),
            np.column_stack([labels.column("theta"), labels.column("phi"), theta1, phi1]),
        )
        tables["latent_scatter.csv"] = Table(zcols + ("theta", "phi"), np.column_stack(
            [z, labels.column("theta"), labels.column("phi")]))
    return tables


def cmd_export(args) -> int:
    started = time.perf_counter()
    run = Path(args.run)
    if not run.is_dir():
        raise UsageError(f"{run} is not a directory")
    stage = read_manifest(run).get("stages", {}).get("eval")
    if stage is None:
        raise UsageError(f"{run} has no evaluation results; run `topovae eval` first")
    if "labels" not in stage["inputs"]:
        raise UsageError(f"{run} was evaluated without labels; export needs them")
    latents = load_table(run / "latents.csv")
    x = load_csv(stage["inputs"]["input"]).points
    labels = load_table(stage["inputs"]["labels"])
    if not len(latents) == x.shape[0] == len(labels):
        raise UsageError(f"{run}: latents, data and labels differ in length")
    system = stage["config"]["system"]
    out = _out_dir(args.out)
    tables = export_tables(system, x, labels, latents.values)
    for name, table in tables.items():
        save_table(table, out / name)
    write_manifest(out, "export", {"system": system}, stage.get("seed"),
                   {"run": str(run)}, list(tables), started)
    for name in sorted(tables):
        print(out / name)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "betti": cmd_betti,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
}


def run(args) -> int:
    return COMMANDS[args.command](args)
