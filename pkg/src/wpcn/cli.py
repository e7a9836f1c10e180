"""``wpcn`` command line: ``solve``, ``sweep`` and ``verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import allocator as al
from . import oracle
from .config import ConfigError, RunConfig, default_config, load_config, with_seed
from .simulator import (SweepSpec, generate_epochs, default_profiles, preset, run_scheme,
                        run_sweep)

log = logging.getLogger("wpcn")

GRID_TOLERANCE = 1e-3
RESIDUAL_TOLERANCE = 1e-6

SOLVE_COLUMNS = ("scheme", "sum_rate_truth", "sum_rate_design", "consumption", "lambda",
                 "active_fraction", "constraint_active", "budget_met")
SWEEP_COLUMNS = ("sweep_var", "value", "scheme", "sum_rate_truth", "sum_rate_design",
                 "consumption", "lambda", "active_fraction", "k_users")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def header(cfg: RunConfig, command: str) -> list[str]:
    lines = [f"# ; wpcn {__version__} {command}",
             "# ; rates in nats/s/Hz, powers in W"]
    lines += [("# " + line) if line else "#" for line in cfg.to_lines()]
    return lines


def write_csv(lines: Sequence[str], out: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _batch(cfg: RunConfig, workers=None) -> al.ChannelBatch:
    x = generate_epochs(cfg.fading, cfg.network.n0, workers)
    eta = np.array([p.eta for p in cfg.profiles])
    p_sat = np.array([p.p_sat for p in cfg.profiles])
    return al.prepare_batch(x, eta, p_sat, cfg.network.n0)


def cmd_solve(cfg: RunConfig, out: Optional[str] = None) -> int:
    batch = _batch(cfg)
    truth = cfg.truth_curve()
    k = cfg.network.k_users
    lines = header(cfg, "solve")
    lines.append(",".join(SOLVE_COLUMNS + tuple(f"rate_user_{i}" for i in range(1, k + 1))))
    for scheme in cfg.schemes:
        r = run_scheme(batch, cfg.network, scheme, truth)
        row = [scheme, r.avg_sum_rate, r.avg_sum_rate_design, r.consumed_avg_power, r.lam,
               r.epochs_active_fraction, r.constraint_active, r.budget_met, *r.per_user_rate]
        lines.append(",".join(fmt(v) for v in row))
    write_csv(lines, out or cfg.output_path)
    return 0


def sweep_lines(cfg: RunConfig, spec: SweepSpec, profiles, command="sweep"):
    rows = run_sweep(spec, profiles, cfg.fading)
    lines = header(cfg, command)
    lines.append(",".join(SWEEP_COLUMNS))
    for row in rows:
        r = row.result
        lines.append(",".join(fmt(v) for v in (
            row.sweep_var, row.value, row.scheme, r.avg_sum_rate, r.avg_sum_rate_design,
            r.consumed_avg_power, r.lam, r.epochs_active_fraction, row.k_users)))
    return rows, lines


def plot_lines(rows) -> list[str]:
    """Two columns (sweep value, truth sum rate) per scheme and user count."""
    series = {}
    for row in rows:
        series.setdefault(f"{row.scheme}_k{row.k_users}", []).append(
            (row.value, row.result.avg_sum_rate))
    names = list(series)
    var = rows[0].sweep_var
    out = [",".join(f"{var}_{n},sum_rate_{n}" for n in names)]
    depth = max(len(v) for v in series.values())
    for i in range(depth):
        cells = []
        for n in names:
            pts = series[n]
            cells += [fmt(pts[i][0]), fmt(pts[i][1])] if i < len(pts) else ["", ""]
        out.append(",".join(cells))
    return out


def cmd_sweep(cfg: RunConfig, out: Optional[str] = None, preset_name: Optional[str] = None,
              plot_out: Optional[str] = None) -> int:
    if preset_name is not None:
        spec = preset(preset_name, cfg.network.n0, cfg.truth_curve(), cfg.schemes)
        k_max = max(spec.k_values or [spec.fixed.k_users])
        profiles = default_profiles(k_max)
        sweep = {"variable": spec.variable, "values": spec.values,
                 "p_max_ratio": spec.p_max_ratio, "k_values": spec.k_values}
        cfg = replace(cfg, network=replace(spec.fixed, k_users=k_max), profiles=profiles,
                      sweep=sweep)
    else:
        spec = cfg.sweep_spec()
        if spec is None:
            raise ConfigError("sweep needs a [sweep] section or --preset")
        profiles = cfg.profiles
    rows, lines = sweep_lines(cfg, spec, profiles)
    out = out or cfg.output_path
    write_csv(lines, out)
    if plot_out is None and out not in (None, "-"):
        plot_out = str(Path(out).with_suffix("")) + ".plot.csv"
    if plot_out:
        write_csv(plot_lines(rows), plot_out)
    return 0


VERIFY_COLUMNS = ("sample", "k_users", "lambda", "p_max", "best_objective",
                  "theorem_objective", "gap", "p0_points", "tau0_points") + oracle.KKT_KEYS


def _config_instances(cfg: RunConfig, samples: int) -> list:
    """Certification epochs drawn from the configured fading model."""
    rng = np.random.default_rng(cfg.seed)
    x = generate_epochs(replace(cfg.fading, epochs=samples), cfg.network.n0)
    eta = np.array([p.eta for p in cfg.profiles])
    out = []
    for row in x:
        a0 = float(np.sum(cfg.network.n0 * eta * row**2))
        lam = a0 * 10 ** rng.uniform(-2.5, 0.1)
        out.append(oracle.Instance(row, list(cfg.profiles), cfg.network.n0, lam,
                                   cfg.network.p_max))
    return out


def cmd_verify(cfg: Optional[RunConfig], samples: int = 200, grid: int = oracle.DEFAULT_GRID,
               seed: int = 0, out: Optional[str] = None, tamper_tau0: float = 0.0) -> int:
    if samples < 1:
        raise ConfigError("--samples must be >= 1")
    if cfg is None:
        instances = oracle.random_instances(samples, seed)
    else:
        instances = _config_instances(cfg, samples)

    tamper = None
    if tamper_tau0:
        def tamper(a: al.EpochAllocation) -> al.EpochAllocation:
            return replace(a, tau0=a.tau0 * (1.0 + tamper_tau0)) if a.active else a

    reports = oracle.certify(instances, grid, tamper=tamper)
    lines = [f"# ; wpcn {__version__} verify samples={samples} grid={grid} seed={seed}"]
    if cfg is not None:
        lines += [("# " + line) if line else "#" for line in cfg.to_lines()]
    lines.append(",".join(VERIFY_COLUMNS))
    worst_gap, worst_res = -np.inf, 0.0
    for i, (inst, rep) in enumerate(zip(instances, reports)):
        worst_gap = max(worst_gap, rep.relative_gap)
        worst_res = max(worst_res, max(rep.kkt_residuals.values()))
        lines.append(",".join(fmt(v) for v in (
            i, len(inst.profiles), inst.lam, inst.p_max if inst.p_max is not None else "",
            rep.best_objective, rep.theorem_objective, rep.gap, *rep.grid_resolution,
            *(rep.kkt_residuals[k] for k in oracle.KKT_KEYS))))
    write_csv(lines, out)
    ok = worst_gap <= GRID_TOLERANCE and worst_res <= RESIDUAL_TOLERANCE
    print(f"worst relative gap {worst_gap:.3e} (limit {GRID_TOLERANCE:g}), "
          f"worst KKT residual {worst_res:.3e} (limit {RESIDUAL_TOLERANCE:g}): "
          f"{'PASS' if ok else 'FAIL'}", file=sys.stderr)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wpcn", description=(
        "Sum-rate optimal power and time allocation for harvest-then-transmit "
        "networks with saturating energy harvesters."))
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="override fading.seed")
        sp.add_argument("--out", help="output CSV (default: run.output or stdout)")

    sp = sub.add_parser("solve", help="run every configured scheme once")
    common(sp)
    sp = sub.add_parser("sweep", help="sweep p_avg or p_max")
    common(sp)
    sp.add_argument("--preset", choices=("fig1a", "fig1b"))
    sp.add_argument("--plot-out", help="companion plot-data CSV")
    sp = sub.add_parser("verify", help="certify closed-form allocations by grid search")
    common(sp)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--grid", type=int, default=oracle.DEFAULT_GRID)
    sp.add_argument("--tamper-tau0", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else None
        if args.command == "verify":
            seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
            cfg = with_seed(cfg, args.seed) if cfg else None
            return cmd_verify(cfg, args.samples, args.grid, seed, args.out, args.tamper_tau0)
        if cfg is None:
            if args.command == "solve":
                raise ConfigError("solve needs --config")
            if not args.preset:
                raise ConfigError("sweep needs --config or --preset")
            cfg = default_config()
        cfg = with_seed(cfg, args.seed)
        if args.command == "solve":
            if cfg.sweep is not None:
                log.info("ignoring [sweep] section for solve")
            return cmd_solve(cfg, args.out)
        return cmd_sweep(cfg, args.out, args.preset, args.plot_out)
    except (ConfigError, OSError) as exc:
        print(f"wpcn: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"wpcn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
