"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure (or a failed selftest), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .config import RunConfig, SystemDims, load_config, validate_config
from .experiments import ExperimentSpec, run
from .selftest import run_selftest


class UsageError(Exception):
    pass


def _grid(text: str) -> tuple:
    """Parse ``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(count)]
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    return tuple(int(v) if float(v).is_integer() else v for v in vals)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo blocks")

    parser = argparse.ArgumentParser(prog="lrsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for fig in ("fig3", "fig4", "fig5", "fig6"):
        p = sub.add_parser(fig, parents=[common], help=f"reproduce {fig} as a dataset")
        p.add_argument("--snr-grid", type=_grid)
        if fig in ("fig4", "fig6"):
            p.add_argument("--n-grid", type=_grid)
        if fig == "fig6":
            p.add_argument("--m-grid", type=_grid)
        if fig == "fig3":
            p.add_argument("--kappas", type=_grid)
            p.add_argument("--cov-model", choices=("exp", "identity", "one-ring-20", "one-ring-10"))
        if fig in ("fig5", "fig6"):
            p.add_argument("--channel-source", choices=("cascade", "effective"))

    p = sub.add_parser("estimate", parents=[common], help="closed-form and Monte Carlo error at one point")
    p.add_argument("--snr", type=float, default=10.0, help="average SNR in dB")
    p.add_argument("--cov-model", default="exp", choices=("exp", "identity", "one-ring-20", "one-ring-10"))

    p = sub.add_parser("rate", parents=[common], help="uplink rate at one point")
    p.add_argument("--snr", type=float, default=10.0, help="p/sigma^2 in dB")
    p.add_argument("--csi", choices=("perfect", "imperfect"), default="perfect")
    p.add_argument("--channel-source", choices=("cascade", "effective"), default="cascade")

    p = sub.add_parser("sweep", parents=[common], help="custom SNR sweep")
    p.add_argument("--kind", choices=("estimation", "rate"), default="estimation")
    p.add_argument("--snr-grid", type=_grid)
    p.add_argument("--kappas", type=_grid)

    sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = load_config(args.config)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except ValueError as exc:
            raise UsageError(f"bad config file {args.config}: {exc}") from None
    cfg = cfg.override(seed=args.seed, trials=args.trials)
    report = validate_config(cfg.dims, cfg.impairments, cfg.signal)
    if not report.ok:
        raise UsageError("invalid configuration: " + "; ".join(report.violations))
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _spec(args, cfg: RunConfig, figure: str) -> ExperimentSpec:
    extra = {}
    for name in ("snr_grid", "n_grid", "m_grid", "kappas", "cov_model", "channel_source", "kind"):
        value = getattr(args, name, None)
        if value is not None:
            key = {"snr_grid": "snr_grid_db"}.get(name, name)
            extra[key] = value
    return ExperimentSpec.defaults(
        figure,
        trials=cfg.trials,
        seed=cfg.seed,
        m=cfg.m,
        n=cfg.n,
        noise_power=cfg.noise_power,
        phase_noise_family=cfg.phase_noise_family,
        phase_noise_spread=cfg.phase_noise_spread,
        workers=args.workers,
        **extra,
    )


def _cmd_figure(args, cfg):
    figure = "custom-sweep" if args.command == "sweep" else args.command
    if args.command == "sweep" and args.kappas is None:
        args.kappas = (cfg.kappa_ue,)
    spec = _spec(args, cfg, figure)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = run(spec)
    _emit(ds.to_csv() if args.format == "csv" else ds.to_json(), args.out)
    return 0


def _cmd_estimate(args, cfg):
    from . import estimation as est
    from .experiments import covariance_for
    from .config import SignalParams

    c = covariance_for(args.cov_model, cfg.m)
    imp = cfg.impairments
    sig = SignalParams(est.snr_to_power(args.snr, c, imp.noise_power))
    trials = cfg.trials or 10_000
    out = {"snr_db": args.snr, "m": cfg.m, "kappa_ue": imp.kappa_ue, "kappa_bs": imp.kappa_bs, "trials": trials}
    for kind, y_cov in (
        ("direct", est.pilot_covariance_direct(c, imp, sig)),
        ("lrs", est.pilot_covariance_lrs(c, c, imp, sig)),
    ):
        closed = est.error_covariance(c, y_cov, sig).trace / c.trace
        mc = est.empirical_mse(kind, c, c, imp, sig, trials, cfg.policy, f"cli/estimate/{kind}", workers=args.workers)
        out[f"err_{kind}"] = closed
        out[f"err_{kind}_empirical"] = mc.mean / c.trace
        out[f"err_{kind}_se"] = mc.std_error / c.trace
    _emit_record(out, args)
    return 0


def _cmd_rate(args, cfg):
    from .rates import CascadeSource, EffectiveGaussianSource, ScalingParams, rate_ceiling
    from .rates import rate_imperfect_csi, rate_perfect_csi

    imp = cfg.impairments
    dims = SystemDims(cfg.m, cfg.n)
    p = 10 ** (args.snr / 10) * imp.noise_power
    trials = cfg.trials or 2_000
    sc = ScalingParams()
    if args.csi == "perfect":
        source = CascadeSource(phase_noise=imp.phase_noise) if args.channel_source == "cascade" else EffectiveGaussianSource(sc)
        r = rate_perfect_csi(dims, imp, p, source, trials, cfg.policy, "cli/rate", workers=args.workers)
    else:
        r = rate_imperfect_csi(dims, imp, p, sc, trials, cfg.policy, "cli/rate", workers=args.workers)
    out = {
        "m": cfg.m, "n": cfg.n, "csi": args.csi, "snr_db": args.snr, "p_ue": p,
        "rate": r.mean_rate, "std_err": r.std_error, "limit": rate_ceiling(imp), "trials": r.trials,
    }
    _emit_record(out, args)
    return 0


def _emit_record(rec: dict, args) -> None:
    if args.format == "json":
        _emit(json.dumps({k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in rec.items()}, sort_keys=True), args.out)
    else:
        keys = list(rec)
        _emit(",".join(keys) + "\n" + ",".join(repr(rec[k]) if isinstance(rec[k], float) else str(rec[k]) for k in keys) + "\n", args.out)


def _cmd_selftest(args, cfg):
    results = run_selftest(cfg.seed)
    lines = [f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.1f}s)" for r in results]
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if all(r.ok for r in results) else 1


COMMANDS = {
    "fig3": _cmd_figure, "fig4": _cmd_figure, "fig5": _cmd_figure, "fig6": _cmd_figure, "sweep": _cmd_figure,
    "estimate": _cmd_estimate, "rate": _cmd_rate, "selftest": _cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2
        return int(exc.code or 0)
    try:
        cfg = _run_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lrsim: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"lrsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
