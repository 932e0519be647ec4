"""Command-line front end: one subcommand per solver plus ``reproduce``.

Exit codes: 0 success, 2 configuration error, 3 numerical-integrity error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._threads import resolve_threads
from .batchdp import BatchSchedule, QuadratureGrid, batch_initial_stage_losses, solve_batch_risk
from .bernoulli import BernoulliModel, default_n0, mapped_model, solve_bernoulli_dp
from .losses import default_d_grid, eval_with_initial_stage, stable_grid, sweep_losses
from .mcsim import SimConfig, simulate
from .model import (
    REFERENCE_PRIOR,
    ConfigError,
    IntegrityError,
    ModelParams,
    PriorSpec,
    load_config,
)
from .pde import GridSpec, ThresholdStrategy, extract_thresholds, solve_limit_risk, write_risk_csv
from .worstprior import SearchBox, find_worst_prior

log = logging.getLogger("bandit_minimax")

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRITY = 0, 2, 3
PROD_DX, PROD_DT = 0.0143, 1 / 5000
FAST_DX, FAST_DT = 0.025, 1 / 2000


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, subcommand: str, config: dict, outputs: list[Path], wall: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "outputs": {str(p): _digest(p) for p in outputs},
    }
    path.write_text(json.dumps(manifest, indent=2, default=str))


def _read_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return data


def _grid(args, cfg: dict) -> GridSpec:
    g = dict(cfg.get("grid", {}))
    fast = getattr(args, "fast", False)
    dx = args.dx if args.dx is not None else g.get("dx", FAST_DX if fast else PROD_DX)
    dt = args.dt if args.dt is not None else g.get("dt", FAST_DT if fast else PROD_DT)
    half = args.x_max if args.x_max is not None else g.get("half_width", 6.0)
    return GridSpec.symmetric(float(half), float(dx), float(dt))


def _prior_params(args) -> tuple[PriorSpec, ModelParams, dict]:
    if args.config:
        prior, params, extra = load_config(args.config)
    else:
        prior, extra = REFERENCE_PRIOR, {}
        params = ModelParams.for_prior(prior, 1.0)
    if getattr(args, "D", None) is not None:
        params = ModelParams(D=args.D, c=params.c)
    return prior, params, extra


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dx", type=float, help="space step (default 0.0143)")
    p.add_argument("--dt", type=float, help="time step (default 1/5000)")
    p.add_argument("--x-max", type=float, help="half-width of the x domain (default 6)")
    p.add_argument("--fast", action="store_true", help="coarse test grid dx=0.025, dt=1/2000")


def _resolved(args) -> dict:
    """Flags as given plus the values they resolved to (config file merged, defaults filled)."""
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------- subcommands

def cmd_solve_pde(args) -> list[Path]:
    prior, params, extra = _prior_params(args)
    grid = _grid(args, extra)
    args.resolved = {**prior.to_dict(), "D": params.D, "c": params.c, "grid": grid.to_dict()}
    field = solve_limit_risk(prior, params, grid)
    strategy = extract_thresholds(field)
    outs = []
    every = args.risk_every or max(1, grid.nt // 100)
    if args.out_risk:
        write_risk_csv(field, args.out_risk, every)
        outs.append(Path(args.out_risk))
    if args.out_threshold:
        strategy.to_csv(args.out_threshold)
        outs.append(Path(args.out_threshold))
    _emit({"risk": field.origin_value(), "grid": grid.to_dict()}, args)
    return outs


def cmd_batch_dp(args) -> list[Path]:
    prior, params, extra = _prior_params(args)
    schedule = BatchSchedule.parse(args.schedule)
    xgrid = QuadratureGrid(args.half_width, args.quad_dx)
    args.resolved = {**prior.to_dict(), "D": params.D, "c": params.c, "schedule": str(schedule),
                     "quadrature": {"half_width": xgrid.half_width, "dx": xgrid.dx}}
    field = solve_batch_risk(prior, params, schedule, xgrid)
    outs = []
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "t", "x", "r", "action"])
            for k in range(schedule.K + 1):
                acts = field.actions[k] if k < schedule.K else np.zeros(field.x.size, dtype=np.int8)
                t = repr(float(field.t[k]))
                for xv, rv, a in zip(field.x, field.values[k], acts):
                    w.writerow([k, t, repr(float(xv)), repr(float(rv)), int(a)])
        outs.append(Path(args.out))
    if args.out_threshold:
        field.thresholds().to_csv(args.out_threshold)
        outs.append(Path(args.out_threshold))
    _emit({"risk": field.origin_value(), "schedule": str(schedule), "K": schedule.K}, args)
    return outs


def _search_box(args, cfg: dict) -> SearchBox:
    s = dict(cfg.get("search", {}))
    for key in ("d1", "d2", "rho"):
        val = getattr(args, key)
        if val is not None:
            s[key] = tuple(val)
        elif key in s:
            s[key] = tuple(s[key])
    if args.lattice is not None:
        s["lattice"] = args.lattice
    return SearchBox(**s)


def cmd_worst_prior(args) -> list[Path]:
    cfg = _read_json(args.config)
    D = args.D if args.D is not None else float(cfg.get("D", 1.0))
    fine = _grid(args, cfg)
    search_grid = GridSpec.symmetric(fine.x_max, FAST_DX, FAST_DT) if not args.fast else fine
    box = _search_box(args, cfg)
    args.resolved = {"D": D, "search_grid": search_grid.to_dict(), "fine_grid": fine.to_dict(),
                     "search": {"d1": box.d1, "d2": box.d2, "rho": box.rho, "lattice": box.lattice,
                                "sweeps": box.sweeps, "tol": box.tol}}
    res = find_worst_prior(ModelParams(D=D, c=1.0), search_grid, box, fine, threads=args.threads)
    outs = []
    if args.out:
        res.to_json(args.out, include_trace=args.trace)
        outs.append(Path(args.out))
    if args.out_threshold:
        field = solve_limit_risk(res.prior, ModelParams.for_prior(res.prior, D), fine)
        extract_thresholds(field).to_csv(args.out_threshold)
        outs.append(Path(args.out_threshold))
    _emit({"d1": res.d1, "d2": res.d2, "rho": res.rho, "risk": res.risk,
           "at_boundary": res.at_boundary}, args)
    return outs


def cmd_losses(args) -> list[Path]:
    strategy = ThresholdStrategy.from_csv(args.strategy)
    cfg = _read_json(args.config)
    grid = stable_grid(_grid(args, cfg), args.d_true)
    args.resolved = {"grid": grid.to_dict()}
    d_grid = default_d_grid(args.d_min, args.d_max, args.points)
    curve = sweep_losses(strategy, d_grid, args.d_design, args.d_true, grid, threads=args.threads,
                         strategy_id=str(args.strategy))
    curve.to_csv(args.out)
    _emit({"max_loss": float(curve.loss.max()), "points": int(curve.d.size)}, args)
    return [Path(args.out)]


def _bernoulli_model(args) -> BernoulliModel:
    n0 = args.n0 if args.n0 is not None else default_n0(args.N)
    if args.prior:
        data = _read_json(args.prior)
        atoms = data.get("atoms", [])
        if atoms and all("p2" in a for a in atoms):
            return BernoulliModel(args.p, tuple((a["p2"], a["q"]) for a in atoms), args.N, n0)
        prior, _, _ = load_config(args.prior)
    else:
        prior = REFERENCE_PRIOR
    return mapped_model(args.p, prior, args.N, n0)


def cmd_bernoulli_dp(args) -> list[Path]:
    model = _bernoulli_model(args)
    args.resolved = {"p": model.p, "prior": [list(a) for a in model.prior], "N": model.N, "n0": model.n0}
    if model.n0 > model.N / 10:
        log.warning("n0=%d is not small against N=%d", model.n0, model.N)
    risk = solve_bernoulli_dp(model, max_N=args.max_N)
    result = {"risk": risk, "scaled_risk": model.scale(risk), "N": model.N, "n0": model.n0,
              "p": model.p, "prior": [list(a) for a in model.prior]}
    outs = []
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
        outs.append(Path(args.out))
    _emit(result, args)
    return outs


def cmd_simulate(args) -> list[Path]:
    strategy = ThresholdStrategy.from_csv(args.strategy)
    schedule = BatchSchedule.parse(args.schedule)
    d_grid = tuple(default_d_grid(args.d_min, args.d_max, args.points))
    cfg = SimConfig(args.T, schedule, args.p, d_grid, args.reps, args.seed)
    args.resolved = {"schedule": str(schedule), "d_grid": list(d_grid)}
    res = simulate(cfg, strategy, threads=args.threads, estimator=args.estimator)
    res.to_csv(args.out)
    _emit({"points": int(res.d.size), "reps": args.reps}, args)
    return [Path(args.out)]


# ---------------------------------------------------------------- reproduce

class _Reproducer:
    """Shared state for ``reproduce``: the minimax prior and its strategies."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out_dir)
        self.grid = _grid(args, {})
        self.D = 1.0
        self._prior: PriorSpec | None = None
        self._strategy: ThresholdStrategy | None = None
        if args.fast:
            self.d_grid = default_d_grid(-8, 8, 33)
        else:
            self.d_grid = default_d_grid(-8, 8, 81)

    @property
    def prior(self) -> PriorSpec:
        if self._prior is None:
            if self.args.prior_config:
                self._prior = load_config(self.args.prior_config)[0]
            else:
                search_grid = GridSpec.symmetric(self.grid.x_max, FAST_DX, FAST_DT)
                res = find_worst_prior(ModelParams(self.D, 1.0), search_grid, SearchBox(), self.grid,
                                       threads=self.args.threads)
                self._prior = res.prior
                self.worst = res
        return self._prior

    @property
    def params(self) -> ModelParams:
        return ModelParams.for_prior(self.prior, self.D)

    @property
    def strategy(self) -> ThresholdStrategy:
        if self._strategy is None:
            field = solve_limit_risk(self.prior, self.params, self.grid)
            self.risk = field.origin_value()
            self._strategy = extract_thresholds(field)
        return self._strategy

    def dir(self, fig: int) -> Path:
        d = self.out / f"fig{fig}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def fig1(self, d: Path) -> list[Path]:
        s = self.strategy
        s.to_csv(d / "threshold.csv")
        prior = self.prior
        summary = {"atoms": [list(a) for a in prior.atoms], "risk": self.risk, "grid": self.grid.to_dict()}
        (d / "worst.json").write_text(json.dumps(summary, indent=2))
        return [d / "threshold.csv", d / "worst.json"]

    def fig2(self, d: Path) -> list[Path]:
        curve = sweep_losses(self.strategy, self.d_grid, 1.0, 1.0, self.grid, self.args.threads)
        pairs = [eval_with_initial_stage(self.strategy, v, 1.0, self.grid, 0.02) for v in self.d_grid]
        curve.extra["loss_with_initial"] = np.array([a for a, _ in pairs])
        curve.extra["loss_without_initial"] = np.array([b for _, b in pairs])
        curve.to_csv(d / "losses.csv")
        return [d / "losses.csv"]

    def fig3(self, d: Path) -> list[Path]:
        curve = sweep_losses(self.strategy, self.d_grid, 1.0, 1.0, self.grid, self.args.threads)
        pairs = [eval_with_initial_stage(self.strategy, v, 1.0, self.grid, 0.02) for v in self.d_grid]
        curve.extra["limit_with_initial"] = np.array([a for a, _ in pairs])
        curve.extra["limit_without_initial"] = np.array([b for _, b in pairs])
        for K in (30, 50):
            sched = BatchSchedule.uniform(K)
            bstrat = solve_batch_risk(self.prior, self.params, sched).thresholds()
            vals = [batch_initial_stage_losses(bstrat, v, ModelParams(self.D), sched) for v in self.d_grid]
            curve.extra[f"eps{K}_with_initial"] = np.array([a for a, _ in vals])
            curve.extra[f"eps{K}_without_initial"] = np.array([b for _, b in vals])
        curve.to_csv(d / "losses.csv")
        return [d / "losses.csv"]

    def _variance_sweep(self, d: Path, variances) -> list[Path]:
        base = sweep_losses(self.strategy, self.d_grid, 1.0, 1.0, self.grid, self.args.threads)
        for D in variances:
            g = stable_grid(self.grid, D)
            c = sweep_losses(self.strategy, self.d_grid, 1.0, D, g, self.args.threads)
            base.extra[f"loss_D{D:g}"] = c.loss
        base.to_csv(d / "losses.csv")
        return [d / "losses.csv"]

    def fig4(self, d: Path) -> list[Path]:
        return self._variance_sweep(d, (0.95, 1.05))

    def fig5(self, d: Path) -> list[Path]:
        return self._variance_sweep(d, (0.75, 0.5, 0.25))

    def fig6(self, d: Path) -> list[Path]:
        points = 17 if self.args.fast else 33
        d_grid = np.unique(np.concatenate([np.linspace(-12, 4, points), [1.65, -2.52]]))
        reps = self.args.reps or (2000 if self.args.fast else 10_000)
        outs = []
        for name, text in (("sim.csv", "50x100"), ("sim_variable.csv", "8x25,48x100")):
            sched = BatchSchedule.parse(text)
            bstrat = solve_batch_risk(self.prior, self.params, sched).thresholds()
            cfg = SimConfig(5000, sched, 0.5, tuple(d_grid), reps, self.args.seed)
            simulate(cfg, bstrat, threads=self.args.threads).to_csv(d / name)
            outs.append(d / name)
        curve = sweep_losses(self.strategy, d_grid, 1.0, 1.0, self.grid, self.args.threads)
        curve.to_csv(d / "losses.csv")
        outs.append(d / "losses.csv")
        return outs


def cmd_reproduce(args) -> list[Path]:
    rep = _Reproducer(args)
    figures = range(1, 7) if args.figure == "all" else [int(args.figure)]
    outs: list[Path] = []
    for fig in figures:
        t0 = time.perf_counter()
        d = rep.dir(fig)
        files = getattr(rep, f"fig{fig}")(d)
        args.resolved = {**rep.prior.to_dict(), "grid": rep.grid.to_dict(), "d_grid": rep.d_grid.tolist()}
        write_manifest(d / "manifest.json", f"reproduce --figure {fig}", _resolved(args), files,
                       time.perf_counter() - t0)
        log.info("figure %d: %s", fig, ", ".join(str(f) for f in files))
        outs.extend(files)
    return outs


# ---------------------------------------------------------------- plumbing

def _emit(result: dict, args) -> None:
    if not args.quiet:
        print(json.dumps(result, default=float))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (0 = all cores; env BANDIT_MINIMAX_THREADS)")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--manifest", help="manifest path (default: next to the first output)")

    parser = argparse.ArgumentParser(prog="bandit-minimax", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-pde", parents=[common], help="limiting risk field and thresholds")
    p.add_argument("--config", help="prior config JSON (default: two-point prior 1.65/-2.52, 0.38)")
    p.add_argument("--D", type=float)
    _add_grid_flags(p)
    p.add_argument("--out-risk")
    p.add_argument("--out-threshold")
    p.add_argument("--risk-every", type=int, default=0, help="time-row stride in risk.csv (0 = ~100 rows)")
    p.set_defaults(func=cmd_solve_pde)

    p = sub.add_parser("batch-dp", parents=[common], help="exact batch recursion")
    p.add_argument("--config")
    p.add_argument("--D", type=float)
    p.add_argument("--schedule", default="50", help='"50" or "8x1/200,48x1/50" or "8x25,48x100"')
    p.add_argument("--quad-dx", type=float, default=0.005)
    p.add_argument("--half-width", type=float, default=6.0)
    p.add_argument("--out")
    p.add_argument("--out-threshold", help="per-stage thresholds (usable by simulate)")
    p.set_defaults(func=cmd_batch_dp)

    p = sub.add_parser("worst-prior", parents=[common], help="search two-point priors")
    p.add_argument("--config")
    p.add_argument("--D", type=float)
    _add_grid_flags(p)
    p.add_argument("--d1", type=float, nargs=2)
    p.add_argument("--d2", type=float, nargs=2)
    p.add_argument("--rho", type=float, nargs=2)
    p.add_argument("--lattice", type=int)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--out", default="worst.json")
    p.add_argument("--out-threshold")
    p.set_defaults(func=cmd_worst_prior)

    p = sub.add_parser("losses", parents=[common], help="loss curve of a threshold strategy")
    p.add_argument("--strategy", required=True)
    p.add_argument("--config", help="optional JSON with a 'grid' block")
    _add_grid_flags(p)
    p.add_argument("--d-min", type=float, default=-8.0)
    p.add_argument("--d-max", type=float, default=8.0)
    p.add_argument("--points", type=int, default=81)
    p.add_argument("--d-true", type=float, default=1.0)
    p.add_argument("--d-design", type=float, default=1.0)
    p.add_argument("--out", default="losses.csv")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("bernoulli-dp", parents=[common], help="exact Bernoulli Bayesian DP")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--prior", help='JSON with atoms {"p2","q"}, or {"w","p"} mapped to p2')
    p.add_argument("--N", type=int, default=2000)
    p.add_argument("--n0", type=int)
    p.add_argument("--max-N", type=int, default=5000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bernoulli_dp)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo batch processing")
    p.add_argument("--strategy", required=True)
    p.add_argument("--T", type=int, default=5000)
    p.add_argument("--schedule", default="50x100")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--d-min", type=float, default=-12.0)
    p.add_argument("--d-max", type=float, default=4.0)
    p.add_argument("--points", type=int, default=33)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--estimator", choices=("conditional", "incomes"), default="conditional")
    p.add_argument("--out", default="sim.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", parents=[common], help="regenerate figure data")
    p.add_argument("--figure", default="all", choices=[str(i) for i in range(1, 7)] + ["all"])
    p.add_argument("--out-dir", default="figures")
    p.add_argument("--prior-config", help="skip the worst-prior search and use this prior")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=42)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.threads = resolve_threads(args.threads)
        t0 = time.perf_counter()
        outputs = args.func(args)
        wall = time.perf_counter() - t0
        if args.command != "reproduce" and outputs:
            manifest = Path(args.manifest) if args.manifest else outputs[0].parent / "manifest.json"
            write_manifest(manifest, args.command, _resolved(args), outputs, wall)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
