"""Command-line entry point: ``deltamaps <subcommand> ...``.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 no signal (no significant pairs for delta, or no seeds).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import analyze, write_report_tables
from .delta import estimate_delta
from .domains import DomainSet, identify_domains, read_domains, write_cell_table, write_domains
from .errors import ConfigError, DataError, NoSignalError
from .ingest import default_workers, preprocess, read_field, write_field
from .network import (infer_network, read_network, write_correlogram_csv, write_edge_csv,
                      write_network)
from .synth import SyntheticSpec, generate

log = logging.getLogger("deltamaps")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NO_SIGNAL = 0, 2, 3, 4


@dataclass
class RunConfig:
    K: int = 4
    delta: float = None
    alpha: float = 0.01
    n_pairs: int = 10_000
    tau_max: int = 12
    q: float = 0.05
    signal_mode: str = "mean"
    expansion_rule: str = "cell"
    period: int = None
    detrend: bool = True
    rng_seed: int = 0
    parallelism: int = None

    def validate(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.tau_max < 0:
            raise ConfigError("tau_max must be >= 0")
        if not 0 <= self.q < 1:
            raise ConfigError("q must lie in [0, 1)")
        if self.signal_mode not in ("mean", "area_weighted_sum"):
            raise ConfigError("signal_mode must be 'mean' or 'area_weighted_sum'")
        if self.expansion_rule not in ("cell", "set"):
            raise ConfigError("expansion_rule must be 'cell' or 'set'")
        return self

    @property
    def workers(self) -> int:
        return self.parallelism or default_workers()


def _load_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        base = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(base) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cli_delta = getattr(args, "delta", None)
    cli_alpha = getattr(args, "alpha", None)
    if cli_delta is not None and cli_alpha is not None:
        raise ConfigError("--delta and --alpha are mutually exclusive")
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    if cli_alpha is not None:
        base["delta"] = None
    if getattr(args, "no_detrend", False):
        base["detrend"] = False
    return RunConfig(**base).validate()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Output directory bookkeeping and manifest writing."""

    def __init__(self, out, command, force):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.force = force
        self.outputs = []
        self.timings = {}
        self.parameters = {}

    def path(self, name) -> Path:
        p = self.out / name
        if p.exists() and not self.force:
            raise FileExistsError(f"{p} exists; use --force to overwrite")
        self.outputs.append(p)
        return p

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")

    def timed(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = time.perf_counter() - self.t0

        return _Timer()

    def finish(self, status="ok"):
        files = {}
        for p in self.outputs:
            if p.is_file():
                files[str(p.relative_to(self.out))] = _sha256(p)
            elif p.is_dir():
                for q in sorted(p.rglob("*")):
                    if q.is_file():
                        files[str(q.relative_to(self.out))] = _sha256(q)
        manifest = {
            "command": self.command, "status": status, "deltamaps": __version__,
            "python": platform.python_version(), "numpy": np.__version__,
            "kernel_backend": kernels.BACKEND, "parameters": self.parameters,
            "timings_s": self.timings, "outputs": dict(sorted(files.items())),
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(manifest, indent=1, default=str) + "\n", encoding="utf-8")


def _domains_stage(run: Run, f, cfg: RunConfig):
    delta = cfg.delta
    if delta is None:
        with run.timed("estimate_delta"):
            est = estimate_delta(f, alpha=cfg.alpha, n_pairs=cfg.n_pairs, rng_seed=cfg.rng_seed)
        run.write_json("delta.json", est.to_dict())
        delta = est.delta
        log.info("estimated delta=%.4f from %d significant pairs", delta, est.n_significant)
    with run.timed("domains"):
        ds = identify_domains(f, K=cfg.K, delta=delta, expansion_rule=cfg.expansion_rule)
    write_domains(ds, run.path("domains.json"), force=True)
    write_cell_table(ds, f.grid, run.path("homogeneity_field.csv"), force=True)
    return ds


def _network_stage(run: Run, f, ds: DomainSet, cfg: RunConfig, export="edges"):
    with run.timed("network"):
        net = infer_network(f, ds, cfg.tau_max, cfg.q, mode=cfg.signal_mode,
                            workers=cfg.workers, keep_correlograms=export != "none")
    write_network(net, run.path("network.json"), force=True)
    write_edge_csv(net, run.path("edges.csv"), force=True)
    if export != "none" and net.correlograms:
        cdir = run.path("correlograms")
        cdir.mkdir(exist_ok=True)
        wanted = ({tuple(sorted((e.src, e.dst))) for e in net.edges} if export == "edges"
                  else set(net.correlograms))
        for (a, b), c in sorted(net.correlograms.items()):
            if (a, b) in wanted:
                write_correlogram_csv(c, cdir / f"correlogram_{a}_{b}.csv", force=True)
    return net


def _analysis_stage(run: Run, net, ds):
    report = analyze(net, ds)
    run.write_json("report.json", report)
    write_report_tables(report, run.out, force=True)
    run.outputs += [run.out / "nodes.csv", run.out / "triangles.csv"]
    return report


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec.from_json(args.config) if args.config else SyntheticSpec()
    if args.seed is not None:
        spec.rng_seed = args.seed
    run = Run(args.out, "gen-synthetic", args.force)
    run.parameters = spec.to_dict()
    with run.timed("generate"):
        f, truth = generate(spec)
    for name in ("field.json", "field.bin"):
        run.path(name)
    write_field(f, run.out / "field.json", force=True)
    run.write_json("ground_truth.json", truth.to_dict())
    run.finish()
    return EXIT_OK


def cmd_preprocess(args) -> int:
    f = read_field(args.field)
    cfg = _load_config(args)
    run = Run(args.out, "preprocess", args.force)
    run.parameters = {"period": cfg.period, "detrend": cfg.detrend}
    with run.timed("preprocess"):
        f = preprocess(f, period=cfg.period, detrend=cfg.detrend, workers=cfg.workers)
    for name in ("field.json", "field.bin"):
        run.path(name)
    write_field(f, run.out / "field.json", force=True)
    run.finish()
    return EXIT_OK


def cmd_estimate_delta(args) -> int:
    f = read_field(args.field)
    cfg = _load_config(args)
    est = estimate_delta(f, alpha=cfg.alpha, n_pairs=cfg.n_pairs, rng_seed=cfg.rng_seed)
    print(json.dumps(est.to_dict(), indent=1))
    return EXIT_OK


def cmd_domains(args) -> int:
    cfg = _load_config(args)
    f = read_field(args.field)
    run = Run(args.out, "domains", args.force)
    run.parameters = asdict(cfg)
    ds = _domains_stage(run, f, cfg)
    status = "ok" if ds.N else "no-signal"
    run.finish(status)
    print(json.dumps({"domains": ds.N, "seeds": len(ds.seeds), "delta": ds.delta}))
    return EXIT_OK if ds.N else EXIT_NO_SIGNAL


def cmd_network(args) -> int:
    cfg = _load_config(args)
    f = read_field(args.field)
    ds = read_domains(args.domains)
    run = Run(args.out, "network", args.force)
    run.parameters = asdict(cfg)
    net = _network_stage(run, f, ds, cfg, args.correlograms)
    run.finish()
    print(json.dumps({"nodes": len(net.nodes), "edges": len(net.edges), "M": net.M}))
    return EXIT_OK


def cmd_analyze(args) -> int:
    net = read_network(args.network)
    ds = read_domains(args.domains) if args.domains else None
    run = Run(args.out, "analyze", args.force)
    _analysis_stage(run, net, ds)
    run.finish()
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    f = read_field(args.field)
    run = Run(args.out, "pipeline", args.force)
    run.parameters = asdict(cfg)
    if args.preprocess:
        with run.timed("preprocess"):
            f = preprocess(f, period=cfg.period, detrend=cfg.detrend, workers=cfg.workers)
    ds = _domains_stage(run, f, cfg)
    if not ds.N:
        run.finish("no-signal")
        return EXIT_NO_SIGNAL
    net = _network_stage(run, f, ds, cfg, args.correlograms)
    _analysis_stage(run, net, ds)
    run.finish()
    print(json.dumps({"domains": ds.N, "edges": len(net.edges), "delta": ds.delta}))
    return EXIT_OK


def _add_run_flags(p, thresholds=True, network=False):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--K", type=int, help="neighborhood size (default 4)")
    if thresholds:
        p.add_argument("--delta", type=float, help="homogeneity threshold (skips estimation)")
        p.add_argument("--alpha", type=float, help="significance level for delta estimation")
        p.add_argument("--n-pairs", dest="n_pairs", type=int, help="sampled pairs for delta")
        p.add_argument("--expansion-rule", dest="expansion_rule", choices=("cell", "set"))
    if network:
        p.add_argument("--tau-max", dest="tau_max", type=int, help="maximum lag")
        p.add_argument("--q", type=float, help="false discovery rate")
        p.add_argument("--signal-mode", dest="signal_mode",
                       choices=("mean", "area_weighted_sum"))
        p.add_argument("--correlograms", choices=("none", "edges", "all"), default="edges",
                       help="which pair correlograms to export as CSV")
    p.add_argument("--seed", dest="rng_seed", type=int, help="random seed")
    p.add_argument("--parallelism", type=int, help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deltamaps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write the five-domain synthetic scene")
    p.add_argument("--config", help="JSON SyntheticSpec (defaults to the built-in scene)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("preprocess", help="anomalies: deseasonalize, Theil-Sen detrend, center")
    p.add_argument("--field", required=True)
    p.add_argument("--period", type=int, help="seasonal period in time steps (e.g. 12)")
    p.add_argument("--no-detrend", action="store_true")
    p.add_argument("--config")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("estimate-delta", help="print the sampled homogeneity threshold")
    p.add_argument("--field", required=True)
    p.add_argument("--config")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-pairs", dest="n_pairs", type=int)
    p.add_argument("--seed", dest="rng_seed", type=int)
    p.set_defaults(func=cmd_estimate_delta)

    p = sub.add_parser("domains", help="identify domains")
    p.add_argument("--field", required=True)
    _add_run_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_domains)

    p = sub.add_parser("network", help="infer the domain network")
    p.add_argument("--field", required=True)
    p.add_argument("--domains", required=True)
    _add_run_flags(p, thresholds=False, network=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("analyze", help="balance, lag triangles, k-cores, statistics")
    p.add_argument("--network", required=True)
    p.add_argument("--domains")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="preprocess -> delta -> domains -> network -> analyze")
    p.add_argument("--field", required=True)
    p.add_argument("--preprocess", action="store_true", help="build anomalies first")
    p.add_argument("--period", type=int)
    p.add_argument("--no-detrend", action="store_true")
    _add_run_flags(p, network=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileExistsError) as exc:
        print(f"deltamaps: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoSignalError as exc:
        print(f"deltamaps: no signal: {exc}", file=sys.stderr)
        return EXIT_NO_SIGNAL
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"deltamaps: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
