"""``fwis`` command line.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
3 numeric abort. Seed precedence: ``--seed`` > ``FWIS_SEED`` > config file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ContractError, NumericError
from ..fbm import HurstParams, PathBatch, TimeGrid
from ..spde import GeneralVSpec, SixParamSpec, blend_coeffs, eps_fwis_general, knot_continuity
from ..volmodel import ForwardContract, VolModelSpec, price_variance_forward, simulate_assets
from ..wishart import FwisSpec, eps_fwis_paths_int, fwis_paths, mean_factor
from .io import export_paths
from .mc import DEFAULT_SEED, McConfig, env_seed, env_workers
from .rng import block_rng, stream_id
from .suites import SUITES, SuiteConfig, validate_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
PROCESSES = ("fwis", "eps-int", "eps-general", "six", "volmodel")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ContractError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ContractError("config must be a JSON object")
    return cfg


def _seed(args, cfg) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return env_seed(int(cfg.get("master_seed", DEFAULT_SEED)))


def _workers(args, cfg) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    return env_workers(int(cfg.get("workers", 1)))


def _mat(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def _vol_spec(cfg: dict, process: str):
    h = HurstParams(cfg.get("H", 0.7), cfg.get("eps", 0.1))
    S0 = _mat(cfg.get("Sigma0", np.eye(2).tolist()))
    if process == "six" or "Q" in cfg:
        p = S0.shape[0]
        Q = _mat(cfg.get("Q", np.eye(p).tolist()))
        K = _mat(cfg.get("K", np.zeros((p, p)).tolist()))
        if "Omega" in cfg:
            return SixParamSpec(h, S0, _mat(cfg["Omega"]), Q, K)
        return SixParamSpec.from_index(h, cfg.get("v", p + 1.0), S0, Q, K)
    return GeneralVSpec(h, cfg.get("v", 3.5), S0)


def _simulate_block(process: str, cfg: dict, grid: TimeGrid, rng, n: int, start: int) -> list[PathBatch]:
    if process in ("fwis", "eps-int"):
        eps = 0.0 if process == "fwis" else cfg.get("eps", 0.1)
        h = HurstParams(cfg.get("H", 0.7), eps)
        n_idx = int(cfg.get("n", 3))
        C = _mat(cfg["C"]) if "C" in cfg else mean_factor(_mat(cfg.get("Sigma0", np.eye(2).tolist())), n_idx)
        spec = FwisSpec(h, n_idx, C, allow_singular=bool(cfg.get("allow_singular", False)))
        if process == "fwis":
            return [fwis_paths(spec, grid, rng, n, start)]
        return [eps_fwis_paths_int(spec, grid, rng, cfg.get("scheme", "exact"), n, start)]
    if process in ("eps-general", "six"):
        return [eps_fwis_general(_vol_spec(cfg, process), grid, rng, n, first_id=start)]
    vol = _vol_spec(cfg, process)
    p = vol.p
    spec = VolModelSpec(cfg.get("mu", [0.0] * p), cfg.get("rho", [0.0] * p), cfg.get("S0", [1.0] * p), vol,
                        cfg.get("r", 0.0))
    ap = simulate_assets(spec, grid, rng, n, start)
    return [ap.Y, ap.u]


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.n_paths is not None:
        cfg["n_paths"] = args.n_paths
    seed = _seed(args, cfg)
    grid = TimeGrid.uniform(float(cfg.get("T", 1.0)), int(cfg.get("n_steps", 64)))
    mc = McConfig(int(cfg.get("n_paths", 4)), seed, workers=1, block_size=int(cfg.get("block_size", 8192)),
                  stream=stream_id(f"simulate:{args.process}"))
    t0 = time.perf_counter()
    parts = [_simulate_block(args.process, cfg, grid, block_rng(seed, mc.stream, b), n, start)
             for b, start, n in mc.blocks()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ["paths"] if args.process != "volmodel" else ["log_prices", "volatility"]
    ext = "csv" if args.format == "csv" else "jsonl"
    files = []
    for idx, name in enumerate(names):
        paths = [mp for blk in parts for mp in blk[idx]]
        files.append(str(export_paths(paths, args.format, out / f"{name}.{ext}")))
    manifest = {"command": "simulate", "process": args.process, "config": cfg, "seed": seed,
                "code_version": __version__, "files": files, "n_paths": mc.n_paths,
                "wall_time": time.perf_counter() - t0}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(json.dumps({"files": files, "n_paths": mc.n_paths, "seed": seed}))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    cfg["master_seed"] = _seed(args, cfg)
    cfg["workers"] = _workers(args, cfg)
    if args.n_paths is not None:
        cfg["n_paths"] = args.n_paths
    man = validate_suite(args.suite, SuiteConfig.from_dict(cfg), args.out)
    for c in man.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: value={c['value']:.10g} "
              f"ref={c['reference']:.10g} tol={c['tolerance']:.3g}")
    print(f"suite {args.suite}: {'PASS' if man.passed else 'FAIL'} ({man.wall_time:.1f}s)")
    return EXIT_OK if man.passed else EXIT_FAIL


def cmd_blend(args) -> int:
    c = blend_coeffs(args.hurst, args.eps)
    knots = knot_continuity(c)
    print(json.dumps({"H": args.hurst, "eps": args.eps, "a": c.a.tolist(), "b": c.b.tolist(),
                      "residuals": c.residuals().tolist(),
                      "max_knot_gap": max(k.rel_gap for k in knots)}, indent=2))
    return EXIT_OK


def cmd_price(args) -> int:
    cfg = _load_config(args.config)
    h = HurstParams(cfg.get("H", 0.7), cfg.get("eps", 0.1))
    spec = GeneralVSpec(h, cfg.get("v", 3.5), [[cfg.get("Sigma0", 0.04)]])
    contract = ForwardContract(cfg.get("T", 1.0), cfg.get("iota", 1.0), spec)
    r = cfg.get("r", 0.0)
    V0, P0 = price_variance_forward(contract, r=r)
    out = {"V0": V0, "P0": P0, "T": contract.T, "iota": contract.iota, "r": r}
    n_mc = int(cfg.get("mc_paths", 0))
    if n_mc:
        from .mc import collect
        seed = _seed(args, cfg)
        grid = TimeGrid.with_step(contract.T, cfg.get("dt", 2**-8))
        disc = np.exp(-r * contract.T)

        def task(rng, n, start):
            b = eps_fwis_general(spec, grid, rng, n, obs_times=[contract.T], first_id=start)
            return disc * (b.values[:, -1, 0, 0] - contract.iota)

        from ..stats import mean_se
        m, se = mean_se(collect(task, McConfig(n_mc, seed, stream=stream_id("price"))))
        out.update(mc_value=m, mc_std_error=se, seed=seed)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fwis", description="Fractional Wishart simulation and validation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate paths and export them")
    s.add_argument("--process", choices=PROCESSES, required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-paths", type=int)
    s.set_defaults(fn=cmd_simulate)

    v = sub.add_parser("validate", help="run a validation suite")
    v.add_argument("--suite", choices=sorted(SUITES), required=True)
    v.add_argument("--config")
    v.add_argument("--out", help="directory for manifest.json and evidence.csv")
    v.add_argument("--seed", type=int)
    v.add_argument("--workers", type=int)
    v.add_argument("--n-paths", type=int)
    v.set_defaults(fn=cmd_validate)

    b = sub.add_parser("blend", help="print blend coefficients and residuals as JSON")
    b.add_argument("--hurst", type=float, required=True)
    b.add_argument("--eps", type=float, required=True)
    b.set_defaults(fn=cmd_blend)

    p = sub.add_parser("price", help="value a variance forward")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_price)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        return args.fn(args)
    except (ContractError, ValueError, KeyError, TypeError) as exc:
        print(f"fwis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, ArithmeticError) as exc:
        print(f"fwis: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"fwis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
