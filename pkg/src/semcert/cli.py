"""Command-line orchestration.

Subcommands: bounds, certify, cra, heatmap, train, xi-export.  Every JSON
artifact embeds the config digest and root seed; reruns with the same pair
reproduce outputs byte-identically.  Exit codes: 0 success, 2 config error,
3 missing artifact, 4 numeric/runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .bounds import BoundTable, compute_normed_bounds
from .certify import Certifier, build_xi
from .config import RunConfig, load_config
from .dataio import LabeledDataset, export_grid_csv, load_idx
from .errors import ConfigError, MissingArtifactError, SemcertError
from .model import MLPClassifier, TrainConfig, train_augmented
from .smoothing import per_image_seed, smoothed_predict


def _load_dataset(cfg: RunConfig) -> LabeledDataset:
    if not cfg.dataset_images or not cfg.dataset_labels:
        raise ConfigError("dataset.images and dataset.labels must be configured")
    try:
        ds = load_idx(cfg.dataset_images, cfg.dataset_labels)
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"dataset file not found: {exc.filename}") from exc
    if cfg.dataset_limit is not None:
        ds = ds.take(cfg.dataset_limit)
    return ds


def _load_model(cfg: RunConfig) -> MLPClassifier:
    if not cfg.model_path:
        raise ConfigError("model.path must be configured")
    if not os.path.exists(cfg.model_path):
        raise MissingArtifactError(
            f"model weights {cfg.model_path} not found; run 'semcert train' first")
    return MLPClassifier.load(cfg.model_path)


def _load_certifier(cfg: RunConfig) -> Certifier:
    if not os.path.exists(cfg.bounds_path):
        raise MissingArtifactError(
            f"bound table {cfg.bounds_path} not found; run 'semcert bounds' first")
    return Certifier.from_file(cfg.bounds_path)


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bounds(cfg: RunConfig) -> str:
    ds = _load_dataset(cfg)
    if not 0 <= cfg.bounds_image_index < len(ds):
        raise ConfigError("bounds.image_index is outside the dataset")
    spec = cfg.build_spec()
    grid = cfg.build_grid()
    x = ds.images[cfg.bounds_image_index]
    table = compute_normed_bounds(x, spec, grid, seed=cfg.seed,
                                  batch_size=cfg.bounds_batch_size)
    table = dataclasses.replace(table, spec_digest=cfg.spec_digest(),
                                config_digest=cfg.digest)
    os.makedirs(os.path.dirname(os.path.abspath(cfg.bounds_path)), exist_ok=True)
    table.save(cfg.bounds_path)
    print(f"wrote {cfg.bounds_path} ({len(table.grid.points)} grid points, "
          f"N_s={table.n_samples})")
    return cfg.bounds_path


def cmd_train(cfg: RunConfig) -> str:
    if not cfg.model_path:
        raise ConfigError("model.path must be configured")
    ds = _load_dataset(cfg)
    spec = cfg.build_spec() if cfg.train_augment else None
    train_cfg = TrainConfig(epochs=cfg.train_epochs,
                            learning_rate=cfg.train_learning_rate,
                            momentum=cfg.train_momentum,
                            batch_size=cfg.train_batch_size,
                            hidden=cfg.model_hidden,
                            spec=spec, seed=cfg.seed)
    model = train_augmented(ds, train_cfg)
    os.makedirs(os.path.dirname(os.path.abspath(cfg.model_path)), exist_ok=True)
    model.save(cfg.model_path)
    print(f"wrote {cfg.model_path}")
    return cfg.model_path


def _image_row(index: int, cfg: RunConfig, ds, model, spec, certifier, box) -> dict:
    x = ds.images[index]
    label = int(ds.labels[index])
    est = smoothed_predict(x, model, spec, label, cfg.predict_n_max,
                           cfg.predict_alpha_star, per_image_seed(cfg.seed, index))
    correct = est.h_lower > 0.5
    if correct:
        region = certifier.certify_region(est.h_lower, box, cfg.region_resolution)
        region_certified = region.certified
    else:
        region_certified = False
    return {
        "index": index,
        "label": label,
        "n": est.n,
        "n_max": est.n_max,
        "h_lower": est.h_lower,
        "correct": correct,
        "certified": correct and region_certified,
    }


_WORKER = {}


def _cra_worker_init(cfg, ds, model, spec, table_doc, box):
    _WORKER.update(cfg=cfg, ds=ds, model=model, spec=spec,
                   certifier=Certifier(BoundTable.from_json_dict(table_doc)), box=box)


def _cra_worker(index: int) -> dict:
    w = _WORKER
    return _image_row(index, w["cfg"], w["ds"], w["model"], w["spec"],
                      w["certifier"], w["box"])


def cmd_cra(cfg: RunConfig) -> dict:
    ds = _load_dataset(cfg)
    model = _load_model(cfg)
    certifier = _load_certifier(cfg)
    spec = cfg.build_spec()
    box = cfg.region_box_or_default()
    indices = list(range(len(ds)))
    if cfg.workers > 1:
        import multiprocessing as mp
        with mp.Pool(cfg.workers, initializer=_cra_worker_init,
                     initargs=(cfg, ds, model, spec,
                               certifier.table.to_json_dict(), box)) as pool:
            rows = pool.map(_cra_worker, indices)
    else:
        rows = [_image_row(i, cfg, ds, model, spec, certifier, box) for i in indices]

    cra = float(np.mean([r["certified"] for r in rows]))
    clean = float(np.mean([r["correct"] for r in rows]))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "cra.csv")
    header = "index,label,n,n_max,h_lower,correct,certified"
    lines = [header]
    for r in rows:
        lines.append(f"{r['index']},{r['label']},{r['n']},{r['n_max']},"
                     f"{repr(r['h_lower'])},{int(r['correct'])},{int(r['certified'])}")
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    report = {
        "kind": "cra_report",
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "n_images": len(rows),
        "cra": cra,
        "clean_smoothed_accuracy": clean,
        "region_box": [[float(lo), float(hi)] for lo, hi in box],
        "csv": csv_path,
    }
    _write_json(os.path.join(cfg.out_dir, "cra.json"), report)
    print(f"CRA {cra:.4f} over {len(rows)} images "
          f"(clean smoothed accuracy {clean:.4f})")
    return report


def cmd_heatmap(cfg: RunConfig) -> str:
    chain = cfg.build_chain()
    if chain.d > 2:
        raise ConfigError("heatmap export supports 1-D and 2-D chains only")
    ds = _load_dataset(cfg)
    model = _load_model(cfg)
    certifier = _load_certifier(cfg)
    spec = cfg.build_spec()
    estimates = []
    for i in range(len(ds)):
        est = smoothed_predict(ds.images[i], model, spec, int(ds.labels[i]),
                               cfg.predict_n_max, cfg.predict_alpha_star,
                               per_image_seed(cfg.seed, i))
        estimates.append(est.h_lower)
    axes = [np.linspace(lo, hi, cfg.heatmap_resolution) for lo, hi in cfg.attack_ranges()]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    rows = []
    for pt in points:
        ok = 0
        for h in estimates:
            if h > 0.5 and certifier.certify_point(h, pt).certified:
                ok += 1
        rows.append((tuple(pt), ok / len(estimates)))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "heatmap.csv")
    export_grid_csv(rows, csv_path)
    _write_json(os.path.join(cfg.out_dir, "heatmap.json"),
                {"kind": "heatmap_manifest", "config_digest": cfg.digest,
                 "seed": cfg.seed, "csv": csv_path, "n_points": len(rows)})
    print(f"wrote {csv_path} ({len(rows)} grid points)")
    return csv_path


def cmd_certify(cfg: RunConfig, image_index: int, point: str | None) -> dict:
    ds = _load_dataset(cfg)
    model = _load_model(cfg)
    certifier = _load_certifier(cfg)
    spec = cfg.build_spec()
    if not 0 <= image_index < len(ds):
        raise ConfigError("image index outside the dataset")
    label = int(ds.labels[image_index])
    est = smoothed_predict(ds.images[image_index], model, spec, label,
                           cfg.predict_n_max, cfg.predict_alpha_star,
                           per_image_seed(cfg.seed, image_index))
    payload = {
        "kind": "certification",
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "image_index": image_index,
        "label": label,
        "n": est.n,
        "n_max": est.n_max,
        "h_lower": est.h_lower,
    }
    if est.h_lower <= 0.5:
        payload.update(certified=False, reason="abstain")
    elif point is not None:
        beta = np.array([float(tok) for tok in point.split(",")])
        res = certifier.certify_point(est.h_lower, beta)
        payload.update(res.to_json_dict())
    else:
        box = cfg.region_box_or_default()
        region = certifier.certify_region(est.h_lower, box, cfg.region_resolution)
        payload.update(region.to_json_dict())
        payload["region_box"] = [[float(lo), float(hi)] for lo, hi in box]
    _write_json(os.path.join(cfg.out_dir, f"certify_{image_index}.json"), payload)
    print(json.dumps(payload, sort_keys=True))
    return payload


def cmd_xi_export(cfg: RunConfig, out: str | None) -> str:
    certifier = _load_certifier(cfg)
    table = certifier.table
    h = np.concatenate(([0.0], table.levels))
    p = np.concatenate(([0.0], table.p))
    xi = build_xi(table)
    path = out or os.path.join(cfg.out_dir, "xi.csv")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = ["h,p,xi"]
    for hi, pi, xv in zip(h, p, xi.values):
        lines.append(f"{repr(float(hi))},{repr(float(pi))},{repr(float(xv))}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semcert",
        description="certify smoothed classifiers against semantic transformations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("bounds", "estimate the bound table"),
                       ("train", "train the built-in classifier"),
                       ("cra", "certified robust accuracy over the dataset"),
                       ("heatmap", "per-parameter-point CRA grid"),
                       ("certify", "certify one image"),
                       ("xi-export", "dump the xi and p curves as CSV")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="path to the run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        if name == "certify":
            p.add_argument("--image", type=int, required=True)
            p.add_argument("--point", default=None,
                           help="comma-separated parameter point; default: region box")
        if name == "xi-export":
            p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "bounds":
            cmd_bounds(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "cra":
            cmd_cra(cfg)
        elif args.command == "heatmap":
            cmd_heatmap(cfg)
        elif args.command == "certify":
            cmd_certify(cfg, args.image, args.point)
        elif args.command == "xi-export":
            cmd_xi_export(cfg, args.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except SemcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
