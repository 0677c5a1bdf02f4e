"""Command-line front end: one subcommand per experiment, CSV outputs plus a run manifest."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import errors
from .bsm import call_price
from .iv import DirectPricer, implied_vol, mean_iv_by_state
from .model import Contract, Grid, MarketScenario, dump_config, load_config, reference_model
from .pricer import SurfaceSolver, stability_check
from .recover import build_aivp, histogram_cluster, assign_regimes, simulate_market
from .smile import SweepSpec, default_strikes, fit_smile, parameter_sweep, smile_sweep, stratified_subset, \
    ttm_sweep, write_sweep_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CLUSTER = 0, 2, 3, 4

EXPERIMENTS = [
    ("Fig. 1", "price", "call price vs spot per regime, BSM comparison and payoff"),
    ("Fig. 2", "smile", "IV vs strike at fixed spot"),
    ("Fig. 3", "sweep", "smile coefficients over the 96 parameter cases"),
    ("Fig. 4", "ttm", "ATM IV vs time to maturity"),
    ("Fig. 5", "ivtts", "state-conditional mean IV vs spot"),
    ("Fig. 6", "ivtts", "fixed-contract IV series vs simulated volatility"),
    ("Fig. 7", "recover", "traded-contract IV series (--mode rounded)"),
    ("Fig. 8", "recover", "histogram of IV values with cutoffs"),
    ("-", "stability", "step-size bound and error growth report"),
]


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    subcommand: str
    config: str
    seed: int
    version: str
    outputs: list = field(default_factory=list)
    wall_clock: float = 0.0
    argv: list = field(default_factory=list)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def reference_defaults():
    """Scenario, contract and grid of the reference numerical example."""
    return MarketScenario(reference_model()), Contract(strike=1.0, maturity=0.1), Grid(51, 400, 1.5)


def _fmt(x):
    return repr(float(x))


class Run:
    """Output directory bookkeeping shared by the subcommands."""

    def __init__(self, args, name, scenario, contract, grid):
        self.dir = Path(args.out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(name, dump_config(scenario, contract, grid), int(scenario.rng_seed), _version(),
                                    argv=list(args.argv))
        self.start = time.perf_counter()

    def path(self, name):
        p = self.dir / name
        self.manifest.outputs.append(str(p))
        return p

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def finish(self):
        self.manifest.wall_clock = time.perf_counter() - self.start
        self.manifest.outputs.append(str(self.dir / "manifest.json"))
        self.manifest.write(self.dir / "manifest.json")


def _load(args):
    if args.config:
        scenario, contract, grid = load_config(args.config)
    else:
        scenario, contract, grid = reference_defaults()
    if args.seed is not None:
        scenario = MarketScenario(**{**scenario.__dict__, "rng_seed": int(args.seed)})
    n = getattr(args, "grid_N", None)
    m0 = getattr(args, "grid_M0", None)
    bound = getattr(args, "space_bound", None)
    if n is not None or m0 is not None or bound is not None:
        grid = Grid(n if n is not None else grid.n_time, m0 if m0 is not None else grid.n_space,
                    bound if bound is not None else grid.space_bound)
        grid.check_contract(contract)
    return scenario, contract, grid


# ---------------------------------------------------------------------------
# subcommands


def cmd_price(args):
    scenario, contract, grid = _load(args)
    model = scenario.model
    run = Run(args, "price", scenario, contract, grid)
    surface = SurfaceSolver(model, grid, contract.maturity).solve(contract.strike)
    run.csv("surface.csv", ["n", "m", "regime", "s", "phi"],
            ([n, m, i, _fmt(s), _fmt(phi)] for n, m, i, s, phi in surface.to_rows()))
    ttm = contract.maturity - contract.evaluation_time
    level = surface.level(ttm)
    s = grid.spots
    k = model.num_regimes
    header = ["s"] + [f"mmgbm_{i + 1}" for i in range(k)] + [f"bsm_{i + 1}" for i in range(k)] + ["payoff"]
    bsm = [call_price(s, contract.strike, ttm, model.interest_rate, model.volatility[i]) for i in range(k)]
    payoff = np.maximum(s - contract.strike, 0.0)
    rows = ([_fmt(s[m])] + [_fmt(surface.values[level, m, i]) for i in range(k)]
            + [_fmt(bsm[i][m]) for i in range(k)] + [_fmt(payoff[m])] for m in range(len(s)))
    run.csv("fig1.csv", header, rows)
    run.finish()
    return EXIT_OK


def cmd_smile(args):
    scenario, contract, grid = _load(args)
    model = scenario.model
    run = Run(args, "smile", scenario, contract, grid)
    strikes = default_strikes(args.k_min, args.k_max, args.k_step)
    curve = smile_sweep(model, args.spot, contract.maturity, strikes, n_time=grid.n_time, n_space=grid.n_space,
                        space_bound=grid.space_bound)
    run.csv("smile_curve.csv", ["strike", "regime", "iv"],
            ([_fmt(kk), i + 1, _fmt(curve.iv[a, i])] for a, kk in enumerate(curve.strikes)
             for i in range(model.num_regimes)))
    fits = fit_smile(curve)
    run.csv("smile_fit.csv", ["regime", "a2", "a1", "a0", "residual"],
            ([i + 1, _fmt(f.a2), _fmt(f.a1), _fmt(f.a0), _fmt(f.residual)] for i, f in enumerate(fits)))
    run.finish()
    return EXIT_OK


def cmd_ttm(args):
    scenario, contract, grid = _load(args)
    model = scenario.model
    run = Run(args, "ttm", scenario, contract, grid)
    days = np.arange(args.days_min, args.days_max + 1, args.days_step)
    ts = ttm_sweep(model, args.spot, args.p, days * scenario.step, base_step=scenario.step,
                   n_space=grid.n_space, space_bound=grid.space_bound)
    run.csv("ttm.csv", ["regime", "ttm_days", "iv"],
            ([i + 1, int(d), _fmt(ts.iv[a, i])] for i in range(model.num_regimes) for a, d in enumerate(days)))
    run.csv("ttm_slopes.csv", ["regime", "slope_per_year"], ([i + 1, _fmt(x)] for i, x in enumerate(ts.slopes)))
    run.finish()
    return EXIT_OK


def cmd_ivtts(args):
    scenario, contract, grid = _load(args)
    model = scenario.model
    run = Run(args, "ivtts", scenario, contract, grid)
    market = simulate_market(scenario, args.steps)
    series = build_aivp(market, "fixed", args.p, args.tau, price_noise=args.price_noise)
    series.write_csv(run.path("ivtts.csv"))
    run.csv("sigma_path.csv", ["t", "sigma_true"],
            ([_fmt(t), _fmt(model.volatility[x])] for t, x in zip(market.times, market.true_regimes)))

    # conditional means over a spot ladder; each spot gets its own surface
    levels = np.round(np.arange(args.s_min, args.s_max + 1e-9, args.s_step), 12)
    pricer = DirectPricer(model, space_bound=grid.space_bound, n_space=grid.n_space, n_time=grid.n_time)
    iv, reg, sp = [], [], []
    for s in levels:
        for i in range(model.num_regimes):
            iv.append(implied_vol(pricer.price(s, args.p * s, args.tau, i), s, args.p * s, args.tau,
                                  model.interest_rate))
            reg.append(i)
            sp.append(s)
        pricer.clear()
    means = mean_iv_by_state(iv, reg, sp, levels, model.num_regimes)
    run.csv("aivp_means.csv", ["s", "regime", "iv_mean"],
            ([_fmt(s), i + 1, _fmt(means.means[i, a])] for i in range(model.num_regimes) for a, s in enumerate(levels)))
    run.csv("aivp_spread.csv", ["regime", "rel_spread"], ([i + 1, _fmt(e)] for i, e in enumerate(means.rel_spread)))
    run.finish()
    return EXIT_OK


def cmd_recover(args):
    scenario, contract, grid = _load(args)
    model = scenario.model
    run = Run(args, "recover", scenario, contract, grid)
    tau = args.tau if args.tau is not None else (0.1 if args.mode == "fixed" else 0.12)
    market = simulate_market(scenario, args.steps)
    series = build_aivp(market, args.mode, args.p, tau, scenario.strike_step, scenario.expiry_step,
                        price_noise=args.price_noise)
    series.write_csv(run.path("aivp.csv"))
    cutoffs, hist = histogram_cluster(series.iv, model.num_regimes, args.bin_width, return_histogram=True)
    order = np.argsort(model.volatility, kind="stable")
    result = assign_regimes(series.iv, cutoffs, market.true_regimes, regime_order=order)
    run.csv("cutoffs.csv", ["index", "cutoff", "bin_width"],
            ([j + 1, _fmt(c), _fmt(hist.width)] for j, c in enumerate(cutoffs)))
    run.csv("histogram.csv", ["bin_left", "bin_right", "count"],
            ([_fmt(hist.edges[b]), _fmt(hist.edges[b + 1]), int(c)] for b, c in enumerate(hist.counts)))
    run.csv("assignments.csv", ["t", "iv", "sigma_true", "regime_true", "regime_assigned"],
            ([_fmt(t), _fmt(v), _fmt(model.volatility[x]), int(x) + 1, int(a) + 1 if a >= 0 else ""]
             for t, v, x, a in zip(series.times, series.iv, market.true_regimes, result.assigned)))
    k = model.num_regimes
    lines = [
        f"mode: {args.mode}",
        f"steps: {len(market)}",
        f"seed: {scenario.rng_seed}",
        f"bin_width: {hist.width!r} (refinements: {hist.refinements})",
        "cutoffs: " + ", ".join(f"{c:.6f}" for c in cutoffs),
        f"accuracy: {result.accuracy:.6f}",
        "confusion (rows true regime, columns assigned):",
        "     " + " ".join(f"{j + 1:>6d}" for j in range(k)),
    ]
    lines += [f"{i + 1:>4d} " + " ".join(f"{c:>6d}" for c in result.confusion[i]) for i in range(k)]
    run.path("report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    run.finish()
    return EXIT_OK


def cmd_stability(args):
    scenario, contract, grid = _load(args)
    run = Run(args, "stability", scenario, contract, grid)
    report = stability_check(scenario.model, grid, contract.maturity)
    run.path("stability.txt").write_text(report.summary() + "\n")
    print(report.summary())
    run.finish()
    if not report.passed:
        print(json.dumps({"error": "StabilityViolation", "exit_code": EXIT_NUMERIC,
                          "message": "step size exceeds the stability bound"}), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args):
    scenario, contract, grid = _load(args)
    spec = SweepSpec() if not args.full_grid else SweepSpec(n_time=51, n_space=400)
    run = Run(args, "sweep", scenario, contract, Grid(spec.n_time, spec.n_space, spec.space_bound))
    ids = stratified_subset(spec, args.subset) if args.subset else None
    results = parameter_sweep(spec, ids, workers=args.threads)
    write_sweep_csv(results, run.path("smile.csv"))
    run.csv("cases.csv", ["case_id", "sigma", "lambda", "r", "error"],
            ([c.case_id, " ".join(map(str, c.sigma)), " ".join(map(str, c.lambdas)), c.rate, c.error or ""]
             for c in results))
    failed = [c.case_id for c in results if c.error]
    nonpositive = [c.case_id for c in results if any(f.a2 <= 0 for f in c.fits)]
    print(f"cases: {len(results)}  failed: {len(failed)}  nonpositive a2: {len(nonpositive)}")
    run.finish()
    return EXIT_NUMERIC if failed else EXIT_OK


# ---------------------------------------------------------------------------


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="INI config; the reference example when omitted")
    parser.add_argument("--seed", type=int, default=d(None), help="override the scenario seed")
    parser.add_argument("--out-dir", default=d("out"), help="output directory (default: out)")
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes for sweeps")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmgbm", description=__doc__)
    _global_flags(parser, suppress=False)
    parser.add_argument("--list-experiments", action="store_true", help="print figure to subcommand mapping")
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    gridflags = argparse.ArgumentParser(add_help=False)
    gridflags.add_argument("--grid-N", dest="grid_N", type=int, help="time levels")
    gridflags.add_argument("--grid-M0", dest="grid_M0", type=int, help="space intervals (even)")
    gridflags.add_argument("--space-bound", type=float, help="truncation level M")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("price", parents=[common, gridflags], help="price surface and price-vs-spot data")
    p.add_argument("--out", dest="out_dir", default=argparse.SUPPRESS, help="alias for --out-dir")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("smile", parents=[common, gridflags], help="IV vs strike")
    p.add_argument("--spot", type=float, default=1.0)
    p.add_argument("--k-min", type=float, default=0.8)
    p.add_argument("--k-max", type=float, default=1.2)
    p.add_argument("--k-step", type=float, default=0.02)
    p.set_defaults(func=cmd_smile)

    p = sub.add_parser("ttm", parents=[common, gridflags], help="IV vs time to maturity")
    p.add_argument("--spot", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0, help="moneyness K/s")
    p.add_argument("--days-min", type=int, default=10)
    p.add_argument("--days-max", type=int, default=50)
    p.add_argument("--days-step", type=int, default=1)
    p.set_defaults(func=cmd_ttm)

    p = sub.add_parser("ivtts", parents=[common, gridflags], help="fixed-contract IV series and conditional means")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=None, help="observation instants (default: scenario horizon)")
    p.add_argument("--s-min", type=float, default=0.8)
    p.add_argument("--s-max", type=float, default=1.2)
    p.add_argument("--s-step", type=float, default=0.025)
    p.add_argument("--price-noise", type=float, default=0.0, help="std of additive noise on quoted prices")
    p.set_defaults(func=cmd_ivtts)

    p = sub.add_parser("recover", parents=[common], help="simulate, build IV series, cluster, score")
    p.add_argument("--mode", choices=("fixed", "rounded"), default="rounded")
    p.add_argument("--steps", type=int, default=None, help="observation instants (default: scenario horizon)")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=None, help="ttm (default 0.1 fixed, 0.12 rounded)")
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--price-noise", type=float, default=0.0)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("stability", parents=[common, gridflags], help="stability bound report")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", parents=[common], help="smile coefficients over the parameter cases")
    p.add_argument("--subset", type=int, default=0, help="run a stratified subset of this many cases")
    p.add_argument("--full-grid", action="store_true", help="use N=51, M0=400 instead of the reduced grid")
    p.set_defaults(func=cmd_sweep)
    return parser


def _fail(code, exc):
    print(json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    if args.list_experiments:
        for fig, cmd, what in EXPERIMENTS:
            print(f"{fig:<8}{cmd:<11}{what}")
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (errors.ParseError, errors.ValidationError, OSError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except errors.ClusteringAmbiguous as exc:
        return _fail(EXIT_CLUSTER, exc)
    except (errors.MMGBMError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
