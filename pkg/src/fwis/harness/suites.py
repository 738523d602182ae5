"""Named validation suites.

Each suite runs its checks through the block-parallel engine, so a rerun with
the same seed reproduces every number bitwise whatever the worker count.
Statistical checks use 3 SE (4 SE for second moments); deterministic checks
state their absolute or relative tolerance in the manifest.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ContractError
from ..fbm import HurstParams, TimeGrid, fbm_cov, rl_l2_distance
from ..spde import (GeneralVSpec, SixParamSpec, blend_coeffs, general_v_laplace, knot_continuity, laplace_paths,
                    riccati_transform, simulate_characteristic)
from ..stats import covariance_se, mean_se
from ..volmodel import (ForwardContract, Innovations, VolModelSpec, cir_mean, correlation_checks,
                        heston_degenerate, price_variance_forward, simulate_assets)
from ..wishart import FwisSpec, eps_fwis_paths_int, fwis_laplace, fwis_paths, laplace_values, mean_factor
from .mc import DEFAULT_BLOCK, DEFAULT_SEED, McConfig, collect
from .rng import stream_id


@dataclass
class SuiteConfig:
    master_seed: int = DEFAULT_SEED
    workers: int = 1
    block_size: int = DEFAULT_BLOCK
    n_paths: int | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        known = {k: d[k] for k in ("master_seed", "workers", "block_size", "n_paths") if k in d}
        params = dict(d.get("params", {}))
        params.update({k: v for k, v in d.items() if k not in known and k != "params"})
        return cls(**known, params=params)


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    reference: float
    tolerance: float
    rule: str
    detail: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    suite: str
    config: dict
    code_version: str
    seed: int
    checks: list
    tolerances: dict
    started: str
    finished: str
    wall_time: float = 0.0
    environment: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def results(self) -> list:
        """Check outcomes without timing, for bitwise rerun comparisons."""
        return [{k: c[k] for k in ("name", "passed", "value", "reference", "tolerance", "detail")}
                for c in self.checks]


class _Ctx:
    def __init__(self, suite: str, cfg: SuiteConfig, defaults: dict):
        unknown = set(cfg.params) - set(defaults)
        if unknown:
            raise ContractError(f"unknown parameter(s) for suite {suite}: {sorted(unknown)}")
        self.suite = suite
        self.cfg = cfg
        self.p = {**defaults, **cfg.params}
        if cfg.n_paths is not None and "n_paths" in defaults:
            self.p["n_paths"] = cfg.n_paths
        self.checks: list[Check] = []

    def mc(self, label: str, n_paths: int | None = None) -> McConfig:
        return McConfig(int(n_paths or self.p["n_paths"]), self.cfg.master_seed, workers=self.cfg.workers,
                        block_size=self.cfg.block_size, stream=stream_id(f"{self.suite}:{label}"))

    def add(self, name, passed, value, reference, tolerance, rule, **detail):
        self.checks.append(Check(name, bool(passed), float(value), float(reference), float(tolerance), rule,
                                 {k: _plain(v) for k, v in detail.items()}))

    def stat(self, name, values_or_mean, reference, n_se=3.0, slack=0.0, se=None, **detail):
        if se is None:
            m, se = mean_se(values_or_mean)
        else:
            m = values_or_mean
        tol = n_se * se + slack
        rule = f"|est - ref| <= {n_se:g} SE" + (f" + {slack:.3g}" if slack else "")
        self.add(name, abs(m - reference) <= tol, m, reference, tol, rule, std_error=se, **detail)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _mat(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------


def _laplace_fwis(ctx: _Ctx):
    p = ctx.p
    Z, S0, t = _mat(p["Z"]), _mat(p["Sigma0"]), p["t"]
    grid = TimeGrid(np.array([0.0, t]))
    for H in p["H"]:
        spec = FwisSpec(HurstParams(H), p["n"], mean_factor(S0, p["n"]))

        def task(rng, n, start, spec=spec):
            return laplace_values(fwis_paths(spec, grid, rng, n, start).values[:, -1], Z)

        vals = collect(task, ctx.mc(f"H={H}"))
        ctx.stat(f"laplace H={H}", vals, fwis_laplace(Z, spec.hurst, t, p["n"], S0))


def _laplace_eps_int(ctx: _Ctx):
    p = ctx.p
    Z, S0, t = _mat(p["Z"]), _mat(p["Sigma0"]), p["t"]
    grid = TimeGrid(np.array([0.0, t]))
    for H in p["H"]:
        for eps in p["eps"]:
            spec = FwisSpec(HurstParams(H, eps), p["n"], mean_factor(S0, p["n"]))

            def task(rng, n, start, spec=spec):
                return laplace_values(eps_fwis_paths_int(spec, grid, rng, "exact", n, start).values[:, -1], Z)

            vals = collect(task, ctx.mc(f"H={H},eps={eps}"))
            ctx.stat(f"laplace H={H} eps={eps}", vals, fwis_laplace(Z, spec.hurst, t, p["n"], S0))


def _laplace_eps_general(ctx: _Ctx):
    p = ctx.p
    Z, t = _mat(p["Z"]), p["t"]
    spec = GeneralVSpec(HurstParams(p["H"], p["eps"]), p["v"], _mat(p["Sigma0"]))
    cf = general_v_laplace(Z, spec, t)
    exact = riccati_transform(Z, t, spec)   # includes the ramp of f beyond x = 1
    finest = min(p["dt_levels"])
    mc = ctx.mc("crn")                      # one stream: common random numbers across levels
    bias, se_c, rates = [], [], []
    for dt in sorted(p["dt_levels"], reverse=True):
        sub = int(round(dt / finest))
        grid = TimeGrid.with_step(t, dt)
        stats = []

        def task(rng, n, start, grid=grid, sub=sub, stats=stats):
            run = laplace_paths(spec, t, Z, grid, rng, n, noise_substeps=sub)
            stats.append((run.stats.projections, run.stats.member_steps))
            return np.column_stack([run.plain, run.controlled])

        vals = collect(task, mc)
        m_c, s_c = mean_se(vals[:, 1])
        bias.append(m_c - exact)
        se_c.append(s_c)
        proj = sum(a for a, _ in stats) / max(1, sum(b for _, b in stats))
        rates.append(proj)
        if dt == finest:
            m, se = mean_se(vals[:, 0])
            tol = max(3 * se, p["rel_tol"] * cf)
            ctx.add(f"laplace dt={dt:g}", abs(m - cf) <= tol, m, cf, tol, "|est - ref| <= max(3 SE, 1% rel)",
                    std_error=se, controlled_mean=m_c, controlled_se=s_c, projection_rate=proj)
    lo, hi = p["ratio_band"]
    for k in range(len(bias) - 1):
        ratio = bias[k + 1] / bias[k]
        ctx.add(f"weak order ratio {k}", lo <= ratio <= hi, ratio, 0.5, 0.5 - lo, f"bias ratio in [{lo}, {hi}]",
                bias_coarse=bias[k], bias_fine=bias[k + 1], se_coarse=se_c[k], se_fine=se_c[k + 1],
                reference_transform=exact, projection_rates=rates)


def _riccati(ctx: _Ctx):
    p = ctx.p
    Z, S0 = _mat(p["Z"]), _mat(p["Sigma0"])
    for v in p["v"]:
        for t in p["t"]:
            spec = GeneralVSpec(HurstParams(p["H"], p["eps"]), v, S0)
            ode = riccati_transform(Z, t, spec, p["rk4_steps"])
            cf = general_v_laplace(Z, spec, t)
            rel = abs(ode - cf) / cf
            ctx.add(f"riccati v={v} t={t}", rel <= p["rel_tol"], ode, cf, p["rel_tol"], "relative error",
                    rel_error=rel)


def _blend(ctx: _Ctx):
    p = ctx.p
    for H in p["H"]:
        for eps in p["eps"]:
            c = blend_coeffs(H, eps)
            res = float(c.residuals().max())
            ctx.add(f"residual H={H} eps={eps}", res < p["residual_tol"], res, 0.0, p["residual_tol"],
                    "max relative residual", a=c.a, b=c.b)
            knots = knot_continuity(c)
            worst = max(knots, key=lambda k: k.rel_gap)
            ctx.add(f"C4 H={H} eps={eps}", worst.rel_gap <= p["fd_tol"], worst.rel_gap, 0.0, p["fd_tol"],
                    "max |dL - dR| / max(1, |dL|, |dR|)", worst_knot=worst.knot, worst_order=worst.order)


def _additivity(ctx: _Ctx):
    p = ctx.p
    h = HurstParams(p["H"])
    Z, t = _mat(p["Z"]), p["t"]
    Sa, Sb = _mat(p["Sigma0"]), _mat(p["S0"])
    spec_a = FwisSpec(h, p["n"], mean_factor(Sa, p["n"]))
    spec_b = FwisSpec(h, p["m"], mean_factor(Sb, p["m"]))
    grid = TimeGrid(np.array([0.0, t]))

    def task(rng, n, start):
        other = np.random.Generator(rng.bit_generator.jumped())  # independent second process
        S = fwis_paths(spec_a, grid, rng, n, start).values[:, -1] + fwis_paths(spec_b, grid, other, n,
                                                                                start).values[:, -1]
        return laplace_values(S, Z)

    vals = collect(task, ctx.mc("sum"))
    ctx.stat(f"additivity n+m={p['n'] + p['m']}", vals, fwis_laplace(Z, h, t, p["n"] + p["m"], Sa + Sb))


def _heston(ctx: _Ctx):
    p = ctx.p
    # (a) with H = 1/2 every characteristic inside [eps, 1] sees f = g = 1
    spec = GeneralVSpec(HurstParams(0.5, p["inv_eps"]), p["inv_v"], _mat(p["inv_Sigma0"]))
    T = p["inv_T"]
    x0 = np.linspace(p["inv_eps"] + T, 1.0, p["inv_members"])
    grid = TimeGrid.with_step(T, p["inv_dt"])

    def task(rng, n, start):
        fam = simulate_characteristic(spec, x0, grid, rng, n)
        return np.max(np.abs(fam.values - fam.values[:, :1]), axis=(1, 2, 3, 4))

    gap = float(np.max(collect(task, ctx.mc("invariance", p["inv_paths"]))))
    ctx.add("x-invariance", gap <= p["inv_tol"], gap, 0.0, p["inv_tol"], "max |eta(x0) - eta(x0')|",
            x0=x0)
    # (b) CIR mean
    kappa, theta, sigma = heston_degenerate(p["v"], p["Q"], p["K"])
    ref = cir_mean(kappa, theta, p["u0"], p["t"])
    vol = SixParamSpec.from_index(HurstParams(0.5, p["eps"]), p["v"], [[p["u0"]]], [[p["Q"]]], [[p["K"]]])
    grid = TimeGrid.with_step(p["t"], p["dt"])
    stats = []

    def task_mean(rng, n, start):
        from ..spde import eps_fwis_general
        b = eps_fwis_general(vol, grid, rng, n, obs_times=[p["t"]], first_id=start)
        stats.append(b.info["stats"].projection_rate)
        return b.values[:, -1, 0, 0]

    vals = collect(task_mean, ctx.mc("cir"))
    ctx.stat("CIR mean", vals, ref, slack=p["dt"] * (1 + abs(ref)), kappa=kappa, theta=theta, sigma=sigma,
             max_projection_rate=max(stats))


def _forward(ctx: _Ctx):
    p = ctx.p
    spec = GeneralVSpec(HurstParams(p["H"], p["eps"]), p["v"], [[p["Sigma0"]]])
    contract = ForwardContract(p["T"], p["iota"], spec)
    V0, P0 = price_variance_forward(contract, r=p["r"])
    grid = TimeGrid.with_step(p["T"], p["dt"])
    disc = math.exp(-p["r"] * p["T"])

    def task(rng, n, start):
        from ..spde import eps_fwis_general
        b = eps_fwis_general(spec, grid, rng, n, obs_times=[p["T"]], first_id=start)
        return disc * (b.values[:, -1, 0, 0] - p["iota"])

    vals = collect(task, ctx.mc("forward"))
    ctx.stat("forward value", vals, V0, slack=p["dt"] * (1 + abs(V0)), fair_price=P0)
    V1, _ = price_variance_forward(ForwardContract(p["T"], p["iota"] + 0.5, spec), r=p["r"])
    parity = (V0 - V1) - disc * 0.5
    ctx.add("parity", abs(parity) <= 1e-12, V0 - V1, disc * 0.5, 1e-12, "V0(i1) - V0(i2) = e^{-rT}(i2 - i1)")


def _correlations(ctx: _Ctx):
    p = ctx.p
    h = HurstParams(p["H"], p["eps"])
    vol = SixParamSpec.from_index(h, p["v"], _mat(p["Sigma0"]), _mat(p["Q"]), np.zeros((2, 2)))
    spec = VolModelSpec(p["mu"], p["rho"], p["S0"], vol)
    dt = p["dt"]
    times = sorted(p["times"])
    steps = [int(round(t / dt)) for t in times]
    grid = TimeGrid.uniform(dt * (steps[-1] + 1), steps[-1] + 1)

    def task(rng, n, start):
        ap = simulate_assets(spec, grid, rng, n, start, record_innovations=steps)
        cols = []
        for k in steps:
            inn = ap.innovations[k]
            cols += [inn.u.reshape(n, -1), inn.eta.reshape(n, -1), inn.dY, inn.du.reshape(n, -1)]
        return np.concatenate(cols, axis=1)

    vals = collect(task, ctx.mc("assets"))
    width = 4 + 4 + 2 + 4
    for idx, (t, k) in enumerate(zip(times, steps)):
        blk = vals[:, idx * width:(idx + 1) * width]
        g = _g_at(h, dt)
        inn = Innovations(grid.times[k], dt, blk[:, :4].reshape(-1, 2, 2), blk[:, 4:8].reshape(-1, 2, 2),
                          blk[:, 8:10], blk[:, 10:14].reshape(-1, 2, 2), g)
        for c in correlation_checks(spec, inn):
            if t == p["t"] or c.name.startswith("leverage"):
                ctx.stat(f"{c.name} t={t:g}", c.estimate, c.reference, n_se=4.0, se=c.std_error)


def _g_at(h: HurstParams, dt: float) -> float:
    from ..spde import blend_g
    return float(blend_g(np.array([h.eps + dt]), blend_coeffs(h.H, h.eps))[0])


def _serial(ctx: _Ctx):
    p = ctx.p
    grid = TimeGrid(np.array([0.0, p["s"], p["t"]]))
    for H in (p["H"], 0.5):
        spec = FwisSpec(HurstParams(H), 1, [[0.0]], allow_singular=True)

        def task(rng, n, start, spec=spec):
            return fwis_paths(spec, grid, rng, n, start).values[:, 1:, 0, 0]

        vals = collect(task, ctx.mc(f"H={H}"))
        s1, s2 = vals[:, 0], vals[:, 1]
        ref_inc = 2 * (fbm_cov(HurstParams(H), p["t"], p["s"]) ** 2 - p["s"] ** (4 * H))
        cov, se = covariance_se(s2 - s1, s1)
        ctx.stat(f"Cov(increment, past) H={H}", cov, ref_inc, n_se=4.0, se=se)
        if H != 0.5:
            ref = 2 * fbm_cov(HurstParams(H), p["t"], p["s"]) ** 2
            cov, se = covariance_se(s2, s1)
            ctx.stat(f"Cov(S_t, S_s) H={H}", cov, ref, n_se=4.0, se=se)


def _eps_convergence(ctx: _Ctx):
    p = ctx.p
    Z, S0, t = _mat(p["Z"]), _mat(p["Sigma0"]), p["t"]
    eps = sorted(p["eps"], reverse=True)
    for H in p["H"]:
        base = fwis_laplace(Z, HurstParams(H), t, p["n"], S0)
        gaps = [abs(fwis_laplace(Z, HurstParams(H, e), t, p["n"], S0) - base) for e in eps]
        dists = [rl_l2_distance(HurstParams(H, e), t) for e in eps]
        for label, seq in (("transform gap", gaps), ("L2 distance", dists)):
            ok = all(b < a for a, b in zip(seq, seq[1:]))
            ctx.add(f"{label} H={H}", ok, seq[-1], 0.0, 0.0, "strictly decreasing as eps shrinks", eps=eps,
                    values=seq)


_I2 = [[1.0, 0.0], [0.0, 1.0]]
_HALF = [[0.5, 0.0], [0.0, 0.5]]

SUITES = {
    "laplace-fwis": (_laplace_fwis, dict(H=[0.3, 0.5, 0.7], n=3, Sigma0=_I2, Z=_HALF, t=1.0, n_paths=100_000)),
    "laplace-eps-int": (_laplace_eps_int, dict(H=[0.3, 0.5, 0.7], eps=[0.1, 0.2], n=3, Sigma0=_I2, Z=_HALF,
                                               t=1.0, n_paths=100_000)),
    "laplace-eps-general": (_laplace_eps_general, dict(H=0.7, eps=0.1, v=3.5, Sigma0=_I2, Z=_HALF, t=1.0,
                                                       dt_levels=[2**-8, 2**-9, 2**-10], rel_tol=0.01,
                                                       ratio_band=[0.35, 0.65], n_paths=100_000)),
    "riccati": (_riccati, dict(H=0.7, eps=0.1, v=[3.0, 3.5, 5.0], t=[0.25, 0.5, 0.9],
                               Sigma0=[[1.0, 0.2], [0.2, 0.5]], Z=[[0.5, 0.1], [0.1, 0.3]], rk4_steps=10_000,
                               rel_tol=1e-6)),
    "blend": (_blend, dict(H=[0.3, 0.5, 0.7], eps=[0.05, 0.1, 0.3], residual_tol=1e-9, fd_tol=1e-5)),
    "additivity": (_additivity, dict(H=0.7, n=2, m=3, Sigma0=[[1.0, 0.3], [0.3, 0.8]],
                                     S0=[[0.5, -0.1], [-0.1, 0.7]], Z=_HALF, t=1.0, n_paths=100_000)),
    "heston": (_heston, dict(inv_eps=0.1, inv_v=3.5, inv_Sigma0=_I2, inv_T=0.5, inv_members=6, inv_dt=2**-7,
                             inv_paths=2_000, inv_tol=1e-12, v=2.0, Q=0.3, K=-1.0, u0=0.04, t=1.0, eps=0.01,
                             dt=2**-10, n_paths=100_000)),
    "forward": (_forward, dict(H=0.7, eps=0.1, v=3.5, Sigma0=0.04, T=1.0, r=0.05, iota=1.0, dt=2**-10,
                               n_paths=100_000)),
    "correlations": (_correlations, dict(H=0.7, eps=0.1, v=3.5, Sigma0=[[0.04, 0.01], [0.01, 0.05]],
                                         Q=[[0.3, 0.1], [0.0, 0.25]], rho=[-0.5, -0.3], mu=[0.03, 0.02],
                                         S0=[100.0, 50.0], dt=2**-7, times=[0.25, 0.5], t=0.5,
                                         n_paths=100_000)),
    "serial": (_serial, dict(H=0.7, s=1.0, t=2.0, n_paths=200_000)),
    "eps-convergence": (_eps_convergence, dict(H=[0.3, 0.7], eps=[0.4, 0.2, 0.1, 0.05], n=3, Sigma0=_I2,
                                               Z=_HALF, t=1.0)),
}


def suite_defaults(name: str) -> dict:
    if name not in SUITES:
        raise ContractError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return dict(SUITES[name][1])


def validate_suite(name: str, cfg: SuiteConfig | dict | None = None, out_dir=None) -> RunManifest:
    """Run one suite; with ``out_dir`` also write ``manifest.json`` and ``evidence.csv``."""
    fn, defaults = SUITES.get(name, (None, None))
    if fn is None:
        raise ContractError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    if cfg is None:
        cfg = SuiteConfig()
    elif isinstance(cfg, dict):
        cfg = SuiteConfig.from_dict(cfg)
    ctx = _Ctx(name, cfg, defaults)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    fn(ctx)
    wall = time.perf_counter() - t0
    resolved = {"master_seed": cfg.master_seed, "workers": cfg.workers, "block_size": cfg.block_size,
                "params": {k: _plain(v) for k, v in ctx.p.items()}}
    man = RunManifest(
        suite=name, config=resolved, code_version=__version__, seed=cfg.master_seed,
        checks=[asdict(c) for c in ctx.checks], tolerances={c.name: c.rule for c in ctx.checks},
        started=started, finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"), wall_time=wall,
        environment={"python": platform.python_version(), "numpy": np.__version__})
    if out_dir is not None:
        write_manifest(man, out_dir)
    return man


def write_manifest(man: RunManifest, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(man.to_json())
    with open(out / "evidence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "passed", "value", "reference", "tolerance", "rule"])
        for c in man.checks:
            w.writerow([c["name"], c["passed"], repr(c["value"]), repr(c["reference"]), repr(c["tolerance"]),
                        c["rule"]])
    return out / "manifest.json"
