"""Command-line experiment runner.

Exit codes: 0 ok, 2 invalid configuration, 3 training diverged, 4 I/O error.
MNIST IDX files are looked up in ``--data-dir``, then ``$MLDL_DATA_DIR``, then ``data/mnist``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import datasets, metrics, svg
from .losses import MuSchedule, WeightScheme, make_scheme
from .trainer import (
    PRESETS,
    TrainConfig,
    TrainingDiverged,
    config_from_dict,
    config_to_dict,
    encode,
    generate,
    load_model,
    mirror_decoded,
    model_input,
    preset,
    read_config_file,
    reconstruct,
    save_model,
    train,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
DATASETS = ("swiss-roll", "s-curve", "spheres", "spheres10000", "mnist")
MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
# desk-scale training sizes; pass --n for the full sets
DEFAULT_N = {"swiss-roll": 800, "s-curve": 800, "mnist": 2000, "spheres": 2750, "spheres10000": 2750}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# data


def _mnist_paths(data_dir):
    root = Path(data_dir or os.environ.get("MLDL_DATA_DIR", "data/mnist"))
    out = []
    for stem in MNIST_FILES:
        for cand in (root / stem, root / (stem + ".gz"), root / stem.replace("-idx", ".idx")):
            if cand.exists():
                out.append(cand)
                break
        else:
            raise FileNotFoundError(f"MNIST file {stem}[.gz] not found in {root}")
    return out


def load_dataset(name: str, n: int, noise: float, seed: int, data_dir=None) -> datasets.PointCloud:
    if name == "swiss-roll":
        return datasets.make_swiss_roll(n, noise, seed)
    if name == "s-curve":
        return datasets.make_s_curve(n, noise, seed)
    if name in ("spheres", "spheres10000"):
        base = datasets.SpheresSpec.spheres5500() if name == "spheres" else datasets.SpheresSpec.spheres10000()
        # n scales the per-sphere counts, keeping the small/big ratio of the full set
        ratio = n / base.n_points
        spec = replace(base, points_per_small=max(1, round(base.points_per_small * ratio)),
                       points_on_big=max(1, round(base.points_on_big * ratio)))
        return datasets.make_spheres(spec, seed)
    if name == "mnist":
        images, labels = _mnist_paths(data_dir)
        train_set, _ = datasets.load_mnist(images, labels, n, 0, seed)
        return train_set
    raise ConfigError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")


def _preset_name(dataset: str) -> str:
    return "spheres" if dataset == "spheres" else dataset


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunSpec:
    dataset: str
    config: TrainConfig
    kind: str = "enc"
    n: int = 800
    noise: float = 0.0
    seed: int = 0
    out_dir: str | None = None
    data_dir: str | None = None
    tag: str = ""
    extra: dict = field(default_factory=dict)


def evaluate_model(model, data, layer_pair=None, seed=None) -> metrics.MetricReport:
    """Input-vs-latent report; autoencoders also get MRE, and MPE uses the layer before the latent."""
    L = model.config.arch.n_layers
    acts = model.activations
    lp = layer_pair or (0, L)
    X_plane = acts[L - 1] if acts[L - 1].shape[1] == 3 else None
    X_recon = reconstruct(model, data) if model.decoder is not None else None
    if model.decoder is not None and lp[1] > L:
        stack = list(acts.x_by_layer) + mirror_decoded(model)
        X_lat = stack[lp[1]]
    else:
        X_lat = acts[lp[1]]
    return metrics.evaluate(acts[lp[0]], X_lat, model.nbh, layer_pair=lp, X_plane=X_plane,
                            X_recon=X_recon, X_target=acts[0] if X_recon is not None else None, seed=seed)


def run_one(spec: RunSpec) -> dict:
    """Train and evaluate one (config, seed) job; never raises, the status says what happened."""
    t0 = time.time()
    out = Path(spec.out_dir) if spec.out_dir else None
    cfg = spec.config.with_seed(spec.seed)
    result = {"seed": spec.seed, "tag": spec.tag, "status": "ok", "report": None, "seconds": 0.0}
    try:
        data = load_dataset(spec.dataset, spec.n, spec.noise, spec.seed, spec.data_dir)
        model = train(cfg, data, spec.kind)
        report = evaluate_model(model, data, spec.extra.get("layer_pair"), spec.seed)
        result["report"] = report
        if out is not None:
            save_model(model, out)
            metrics.write_reports_csv([report], out / "metrics.csv")
            np.savetxt(out / "embedding.csv", model.embedding, delimiter=",", fmt="%.17g")
            color = data.params[:, 0] if data.params is not None else data.labels
            svg.write_svg(svg.scatter_svg(model.embedding, color, f"{spec.dataset} seed {spec.seed}"),
                          out / "embedding.svg")
            h = model.history
            series = {k: h[k] for k in ("lis", "push", "rec") if any(h[k])}
            svg.write_svg(svg.curves_svg(series, "loss terms (absolute value)", log=True), out / "loss.svg")
    except TrainingDiverged as exc:
        result["status"] = "diverged"
        result["error"] = str(exc)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "DIVERGED.txt").write_text(f"{exc}\nepoch={exc.epoch}\nterms={exc.terms!r}\n")
    except (OSError, FileNotFoundError) as exc:
        result["status"] = "io-error"
        result["error"] = str(exc)
    except ValueError as exc:
        result["status"] = "config-error"
        result["error"] = str(exc)
    result["seconds"] = time.time() - t0
    return result


def run_jobs(specs, jobs: int = 1, progress=None) -> list[dict]:
    """Run specs with at most ``jobs`` worker processes; results come back in input order."""
    specs = list(specs)
    results = []
    if jobs <= 1 or len(specs) <= 1:
        for s in specs:
            results.append(run_one(s))
            if progress:
                progress(results[-1])
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for r in pool.map(run_one, specs):
            results.append(r)
            if progress:
                progress(r)
    return results


def summarize(results) -> metrics.Summary | None:
    reports = [r["report"] for r in results if r["report"] is not None]
    failed = [r for r in results if r["report"] is None]
    if not reports:
        return None
    s = metrics.aggregate(reports)
    if failed:
        s.tainted = True
        s.n_runs += len(failed)
    return s


SUMMARY_COLUMNS = ("tag", "n_runs", "succ", "tainted") + metrics.METRIC_FIELDS


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for tag, s in rows:
            row = {"tag": tag, **s.as_row()}
            w.writerow([metrics.format_value(row.get(c, "")) for c in SUMMARY_COLUMNS])


def read_summary(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# argument handling


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_config(args) -> TrainConfig:
    """Preset, then the config file's [train] section, then ``--set key=value`` overrides."""
    overrides = {}
    if getattr(args, "config", None):
        sections = read_config_file(args.config)
        overrides.update(sections.get("train", {}))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    base = preset(_preset_name(args.dataset))
    return config_from_dict(overrides, base) if overrides else base


def _add_common(p, kind=True):
    p.add_argument("--dataset", default="swiss-roll", choices=DATASETS)
    p.add_argument("--n", type=int, help="number of training points (default depends on the dataset)")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 0,3,5")
    p.add_argument("--config", help="key = value file; keys go in a [train] section")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--data-dir", help="directory with MNIST IDX files")
    if kind:
        p.add_argument("--kind", default="enc", choices=("enc", "ae"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mldl", description="Locally isometric encoder/autoencoder experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a dataset to CSV or binary cache")
    g.add_argument("--dataset", default="swiss-roll", choices=DATASETS)
    g.add_argument("--n", type=int)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="*.csv or *.bin")
    g.add_argument("--data-dir")

    t = sub.add_parser("train", help="train one configuration over several seeds")
    _add_common(t)

    s = sub.add_parser("sweep", help="success counts over sample sizes and noise levels")
    _add_common(s)
    s.add_argument("--sizes", default="700,800,1000,1500,2000")
    s.add_argument("--sigmas", default="0.05,0.10,0.15,0.20,0.25,0.30")

    a = sub.add_parser("ablate", help="loss-term ablation or cross-layer scheme runs")
    _add_common(a, kind=False)
    a.add_argument("--which", default="AB,A,B", help="comma list of AB, A, B, M1..M10")
    a.add_argument("--target", default="enc", choices=("enc", "ae"))

    z = sub.add_parser("generalize", help="embed an excised-shape test set with a trained encoder")
    z.add_argument("--model", required=True)
    z.add_argument("--shape", default="square", choices=datasets.SHAPES)
    z.add_argument("--n", type=int, default=8000)
    z.add_argument("--seed", type=int, default=1000)
    z.add_argument("--center", default="0.5,0.5")
    z.add_argument("--size", type=float, default=0.3)
    z.add_argument("--out", required=True)

    m = sub.add_parser("gen-manifold", help="decode latent samples with a trained autoencoder")
    m.add_argument("--model", required=True)
    m.add_argument("--n", type=int, default=2000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--sampler", default="uniform_bbox", choices=("uniform_bbox", "kde_latent"))
    m.add_argument("--out", required=True)

    r = sub.add_parser("report", help="merge run summaries into one table")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", help="write the merged table here (default: stdout)")
    return ap


# ---------------------------------------------------------------------------
# commands


def _echo_config(cfg: TrainConfig, out: Path, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in config_to_dict(cfg).items()]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    (out / "config.txt").write_text("[train]\n" + "\n".join(lines) + "\n")
    print("\n".join(lines))


def _progress(r):
    rep = r["report"]
    if rep is None:
        print(f"seed {r['seed']} {r['tag']}: {r['status']} {r.get('error', '')}", flush=True)
    else:
        print(f"seed {r['seed']} {r['tag']}: kmax {rep.k_max:.3f} cont {rep.cont:.4f} "
              f"lgd {rep.lgd:.5f} success {int(rep.success)} ({r['seconds']:.0f}s)", flush=True)


def _exit_status(results) -> int:
    statuses = {r["status"] for r in results}
    if "io-error" in statuses:
        return EXIT_IO
    if "config-error" in statuses:
        return EXIT_CONFIG
    if "diverged" in statuses:
        return EXIT_DIVERGED
    return EXIT_OK


def _n(args) -> int:
    n = DEFAULT_N[args.dataset] if args.n is None else args.n
    if n < 2:
        raise ConfigError(f"need at least 2 points, got --n {n}")
    return n


def _run_group(args, cfg, tag, out: Path, kind, n=None, noise=None, layer_pair=None):
    seeds = parse_seeds(args.seeds)
    specs = [RunSpec(args.dataset, cfg, kind, n or _n(args), args.noise if noise is None else noise, s,
                     str(out / f"seed{s}"), args.data_dir, tag, {"layer_pair": layer_pair})
             for s in seeds]
    results = run_jobs(specs, args.jobs, _progress)
    reports = [r["report"] for r in results if r["report"] is not None]
    if reports:
        metrics.write_reports_csv(reports, out / "reports.csv")
    return results, summarize(results)


def cmd_generate(args) -> int:
    if args.noise < 0:
        raise ConfigError("--noise must be non-negative")
    cloud = load_dataset(args.dataset, _n(args), args.noise, args.seed, args.data_dir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".bin":
        datasets.save_cache(cloud, out)
    else:
        datasets.save_csv(cloud, out)
    print(f"wrote {len(cloud)} points to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    _echo_config(cfg, out, {"dataset": args.dataset, "kind": args.kind, "n": _n(args), "noise": args.noise,
                            "seeds": args.seeds})
    results, summary = _run_group(args, cfg, args.kind, out, args.kind)
    if summary is not None:
        write_summary([(args.kind, summary)], out / "summary.csv")
        print(f"succ {summary.n_success}/{summary.n_runs} tainted {int(summary.tainted)}")
    return _exit_status(results)


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    _echo_config(cfg, out, {"dataset": args.dataset, "kind": args.kind, "seeds": args.seeds})
    sizes, sigmas = _ints(args.sizes), _floats(args.sigmas)
    table, rows, all_results = {}, [], []
    for n in sizes:
        for sigma in sigmas:
            tag = f"n{n}_s{sigma:g}"
            results, s = _run_group(args, cfg, tag, out / tag, args.kind, n=n, noise=sigma)
            all_results += results
            table[(n, sigma)] = s.n_success if s else 0
            if s:
                rows.append((tag, s))
    write_summary(rows, out / "summary.csv")
    with open(out / "success_table.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sigma\\n"] + sizes)
        for sigma in sigmas:
            w.writerow([f"{sigma:g}"] + [table[(n, sigma)] for n in sizes])
    print((out / "success_table.csv").read_text())
    return _exit_status(all_results)


def ablation_config(cfg: TrainConfig, which: str) -> TrainConfig:
    """AB = both terms, A = LIS only, B = push-away only, M1..M10 = cross-layer schemes."""
    which = which.upper()
    if which == "AB":
        return cfg
    if which == "A":
        return replace(cfg, mu=MuSchedule(0.0, cfg.mu.start_epoch, cfg.mu.end_epoch))
    if which == "B":
        off = WeightScheme({k: 0.0 for k in cfg.scheme.alpha}, "push-only")
        return replace(cfg, scheme=off)
    return replace(cfg, scheme=make_scheme(which, cfg.arch.n_layers))


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    _echo_config(cfg, out, {"dataset": args.dataset, "target": args.target, "which": args.which})
    rows, all_results = [], []
    for which in [w.strip() for w in args.which.split(",") if w.strip()]:
        try:
            c = ablation_config(cfg, which)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        results, s = _run_group(args, c, which, out / which, args.target)
        all_results += results
        if s:
            rows.append((which, s))
    write_summary(rows, out / "summary.csv")
    print(format_table([{"tag": t, **s.as_row()} for t, s in rows]))
    return _exit_status(all_results)


def _training_cloud(model_dir: Path):
    echo = model_dir.parent / "config.txt"
    info = read_config_file(echo).get("train", {}) if echo.exists() else {}
    return info


def hole_intrusions(model, Z, shape, center, size) -> int:
    """Embedded points falling inside the encoded outline of the removed shape."""
    outline = datasets.swiss_roll_from_normalized(datasets.shape_outline(shape, center, size))
    return int(np.sum(datasets.points_in_polygon(Z, encode(model, outline))))


def cmd_generalize(args) -> int:
    model_dir = Path(args.model)
    model = load_model(model_dir)
    if model.config.arch.input_dim != 3:
        raise ConfigError("generalization test sets are Swiss rolls; model input must be 3-D")
    cx, cy = _floats(args.center)
    full = datasets.make_swiss_roll(args.n, 0.0, args.seed)
    test = datasets.excise_shape(full, args.shape, (cx, cy), args.size)
    Z = encode(model, test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    uv = datasets.normalized_params(test)
    with open(out / "embedding.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["z0", "z1", "u", "v"])
        for z, p in zip(Z, uv):
            w.writerow([repr(float(z[0])), repr(float(z[1])), repr(float(p[0])), repr(float(p[1]))])
    svg.write_svg(svg.scatter_svg(Z, test.params[:, 0], f"{args.shape} removed, {len(test)} points"),
                  out / "embedding.svg")
    checks = {"n_test": len(test), "cont": metrics.continuity(model_input(model, test), Z, 4, 10)}
    if args.shape != "five_ring":
        checks["inside_hole"] = hole_intrusions(model, Z, args.shape, (cx, cy), args.size)
    (out / "checks.txt").write_text("".join(f"{k} = {v}\n" for k, v in checks.items()))
    print(f"encoded {len(test)} of {args.n} points (shape {args.shape} removed) into {out}")
    print(", ".join(f"{k} {v}" for k, v in checks.items()))
    return EXIT_OK


def cmd_gen_manifold(args) -> int:
    model = load_model(Path(args.model))
    if model.decoder is None:
        raise ConfigError("model has no decoder; train with --kind ae")
    # the latent support comes from the training embedding
    info = _training_cloud(Path(args.model))
    dataset = info.get("dataset", "swiss-roll")
    seed = int(Path(args.model).name.replace("seed", "")) if Path(args.model).name.startswith("seed") else 0
    data = load_dataset(dataset, int(info.get("n", 800)), float(info.get("noise", 0.0)), seed)
    model = load_model(Path(args.model), data)
    cloud = generate(model, args.n, args.seed, args.sampler)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "latent.csv", cloud.params, delimiter=",", fmt="%.17g", header="z0,z1", comments="")
    datasets.save_csv(cloud, out / "generated.csv")
    if cloud.dim == 3:
        svg.write_svg(svg.projections_svg(cloud.points, cloud.params[:, 0], f"{args.n} decoded samples"),
                      out / "generated.svg")
    svg.write_svg(svg.scatter_svg(cloud.params, cloud.params[:, 0], "latent samples"), out / "latent.svg")
    print(f"wrote {args.n} generated points to {out}")
    return EXIT_OK


def format_table(rows, columns=("tag", "n_runs", "succ", "tainted", "k_min", "k_max", "cont", "lgd", "mre")) -> str:
    lines = ["  ".join(f"{c:>10}" for c in columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, float) or (isinstance(v, str) and _is_float(v) and c not in ("tag",)):
                v = float(v)
                cells.append(f"{v:>10.4g}")
            else:
                cells.append(f"{str(v):>10}")
        if str(row.get("tainted", "0")) in ("1", "True"):
            cells[0] = ("*" + cells[0].strip()).rjust(10)
        lines.append("  ".join(cells))
    return "\n".join(lines)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_report(args) -> int:
    rows = []
    for run in args.runs:
        path = Path(run) / "summary.csv" if Path(run).is_dir() else Path(run)
        for row in read_summary(path):
            row["tag"] = f"{Path(run).name}/{row['tag']}"
            rows.append(row)
    text = format_table(rows) + "\n(* = tainted: at least one run failed)\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "generalize": cmd_generalize,
    "gen-manifold": cmd_gen_manifold,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:  # pragma: no cover - last resort diagnostics
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
