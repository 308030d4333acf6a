"""Command line front end: ``sas-bayes generate | fit | report``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys

from .analysis import DEFAULT_BINS, fit_report
from .config import FULL_SWEEPS, PRESETS, RunConfig, save_config
from .datagen import generate_dataset, meta_path, read_dataset, write_dataset
from .errors import ChainFileError, ConfigError, DatasetError, SasBayesError
from .sampler import load_samples, run_emc, save_samples

log = logging.getLogger("sas_bayes")

THREADS_ENV = "SAS_BAYES_THREADS"


def _resolve_config(args) -> RunConfig:
    if args.preset is None and args.config is None:
        raise ConfigError("give --preset or --config", field="preset")
    base = RunConfig.from_preset(args.preset) if args.preset else None
    if args.config:
        return RunConfig.load(args.config, base)
    return base


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}", field="threads") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1", field="threads")
        return n
    return 1


class _RunLock:
    def __init__(self, outdir):
        self.path = os.path.join(outdir, ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory in use (lock file {self.path})", field="out") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


def write_manifest(outdir) -> str:
    entries = []
    for root, _, files in os.walk(outdir):
        for name in files:
            if name in ("manifest.json", ".lock"):
                continue
            full = os.path.join(root, name)
            with open(full, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            entries.append({"path": os.path.relpath(full, outdir), "sha256": digest})
    entries.sort(key=lambda e: e["path"])
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump({"files": entries}, fh, indent=2)
        fh.write("\n")
    return path


def cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    seed = args.seed if args.seed is not None else cfg.data_seed
    if seed is None:
        raise ConfigError("no data seed: pass --seed or set seeds.data", field="seeds.data")
    cfg.raw.setdefault("seeds", {})["data"] = int(seed)
    d = generate_dataset(cfg.kind, cfg.true_params(), cfg.constants(), cfg.grid(), int(seed),
                         cfg.quadrature())
    out = args.out
    if os.path.isdir(out) or out.endswith(os.sep):
        name = args.preset or cfg.kind
        out = os.path.join(out, f"{name}.csv")
    for path in write_dataset(d, out):
        print(path)
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    d = read_dataset(args.dataset)
    if args.paper_scale:
        cfg.set_sweeps(FULL_SWEEPS, FULL_SWEEPS)
    cfg.set_sweeps(args.burn_in, args.sweeps)
    if args.seed is not None:
        cfg.raw.setdefault("seeds", {})["sampler"] = int(args.seed)
    threads = _threads(args)
    model = cfg.model()
    prior = cfg.prior()
    scfg = cfg.sampler(threads=threads)
    if d.provenance and d.provenance.get("model") not in (None, cfg.kind):
        raise ConfigError(f"dataset was generated with model {d.provenance['model']!r}, "
                          f"config is {cfg.kind!r}", field="model")

    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    with _RunLock(outdir):
        write_dataset(d, os.path.join(outdir, "dataset.csv"))
        save_config(cfg, os.path.join(outdir, "config.json"))
        log.info("fitting %s: %d points, %d replicas, %d + %d sweeps, %d thread(s)",
                 cfg.kind, len(d), scfg.ladder.L, scfg.burn_in, scfg.samples, threads)
        samples = run_emc(model, d, prior, scfg)
        save_samples(samples, outdir)
        report, _ = fit_report(samples, d, prior, model, outdir, bins=args.bins, svg=args.svg)
        write_manifest(outdir)
    _print_summary(report)
    return 0


def cmd_report(args) -> int:
    outdir = args.samples_dir
    cfg_path = os.path.join(outdir, "config.json")
    data_path = os.path.join(outdir, "dataset.csv")
    for p in (cfg_path, data_path):
        if not os.path.exists(p):
            raise ChainFileError(f"missing {p}")
    cfg = RunConfig.load(cfg_path)
    d = read_dataset(data_path)
    samples, _ = load_samples(outdir)
    with _RunLock(outdir):
        report, _ = fit_report(samples, d, cfg.prior(), cfg.model(), outdir, bins=args.bins, svg=args.svg)
        write_manifest(outdir)
    _print_summary(report)
    return 0


def _print_summary(report):
    for name, est in report["estimates"].items():
        print(f"{name:>6} = {est['map']:.6g} +{est['plus']:.3g} -{est['minus']:.3g}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sas-bayes",
        description="Bayesian estimation of sphere-model parameters from small-angle scattering counts.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--preset", choices=sorted(PRESETS), help="experiment preset")
        sp.add_argument("--config", help="JSON run configuration (overrides the preset)")
        sp.add_argument("--seed", type=int, help="data seed (generate) or sampler seed (fit)")

    g = sub.add_parser("generate", help="write a synthetic dataset (CSV + .meta.json)")
    add_config(g)
    g.add_argument("--out", required=True, help="output CSV path or directory")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="sample the posterior and write the report")
    f.add_argument("dataset", help="dataset CSV with header q,y")
    add_config(f)
    f.add_argument("--out", required=True, help="run directory")
    f.add_argument("--sweeps", type=int, help="retained sweeps S1")
    f.add_argument("--burn-in", type=int, dest="burn_in", help="burn-in sweeps S0")
    f.add_argument("--paper-scale", action="store_true", help="full length: 1e5 burn-in and 1e5 samples")
    f.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    f.add_argument("--bins", type=int, default=DEFAULT_BINS, help="histogram bins")
    f.add_argument("--svg", action="store_true", help="also render SVG figures")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("report", help="regenerate the report from a run directory")
    r.add_argument("samples_dir")
    r.add_argument("--bins", type=int, default=DEFAULT_BINS)
    r.add_argument("--svg", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def _error_payload(exc) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.field:
        payload["field"] = exc.field
    if isinstance(exc, DatasetError) and exc.row is not None:
        payload["row"] = exc.row
    return payload


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    if getattr(args, "bins", DEFAULT_BINS) < 1:
        print(json.dumps({"error": "ConfigError", "message": "--bins must be >= 1", "field": "bins"}),
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SasBayesError as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
