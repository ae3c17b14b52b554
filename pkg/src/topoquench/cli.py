"""Command-line entry point: ``topoquench <subcommand> [--flags]`` or ``topoquench run <file>``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical or I/O failure,
3 mapping counterexample found.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import analysis, ed, io, quench, statics
from .errors import ConfigError, LatticeMismatchError, NumericalFailure, TopoquenchError
from .lattice import LatticeSpec, verify_mapping

log = logging.getLogger("topoquench")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3

QUENCH_COLUMNS = ["t", "g", "expectation_F", "defect_density"]
MODE_COLUMNS = ["t", "k", "u_re", "u_im", "v_re", "v_im"]
STATICS_COLUMNS = ["g", "n", "psi2", "psi2_asym", "psi1", "psi1_asym", "flag"]
SCALING_COLUMNS = ["side", "slope", "intercept", "r_squared", "n_points"]
SERIES_COLUMNS = ["t", "expectation_F", "abs_dF_dt"]
FIG2_COLUMNS = ["tau_q", "f1", "f2", "rel_diff"]
ED_COLUMNS = ["observable", "value"]
MAPPING_COLUMNS = ["lx", "ly", "convention", "family", "checked", "counterexamples"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topoquench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, schema in io.SCHEMAS.items():
        p = sub.add_parser(name)
        for key, spec in schema.items():
            extra = f" (default {io._render_value(spec.default)})" if spec.default is not None else ""
            if spec.required:
                extra = " (required)"
            choices = f" [{'|'.join(spec.choices)}]" if spec.choices else ""
            p.add_argument("--" + io.flag_name(key), dest=key, default=None,
                           help=(spec.help + choices + extra).strip() or None)
        p.add_argument("-v", "--verbose", action="count", default=0)
    run = sub.add_parser("run", help="execute every run in a key = value config file")
    run.add_argument("config")
    run.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def parse_args(argv) -> list[io.RunConfig]:
    ns = build_parser().parse_args(argv)
    if ns.subcommand == "run":
        runs = io.parse_config_file(ns.config)
        for r in runs:
            r.verbosity = max(r.verbosity, ns.verbose)
        return runs
    raw = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "verbose") and v is not None}
    return [io.validate(ns.subcommand, raw, ns.verbose)]


# ---------------------------------------------------------------- subcommands

def _run_verify_mapping(p) -> int:
    if p["lx"] is not None:
        sizes = [(p["lx"], p["ly"])]
    else:
        sizes = [(a, b) for a in range(2, p["max_size"] + 1) for b in range(2, p["max_size"] + 1)]
    rows, failed = [], 0
    start = time.perf_counter()
    for lx, ly in sizes:
        report = verify_mapping(LatticeSpec(lx, ly), p["convention"])
        print(report.transcript())
        failed += report.n_counterexamples
        for fam in report.families:
            rows.append([lx, ly, p["convention"], fam.name, fam.checked, len(fam.counterexamples)])
    print(f"{len(sizes)} lattices, {failed} counterexamples, {time.perf_counter() - start:.2f} s")
    if p["out"]:
        io.emit_csv(MAPPING_COLUMNS, rows, p["out"])
    return EXIT_COUNTEREXAMPLE if failed else EXIT_OK


def _run_statics(p) -> int:
    rows = statics.sweep(p["g"], p["n"], p["nk"])
    io.emit_csv(STATICS_COLUMNS, rows, p["out"])
    if p["plot_script"]:
        io.emit_plot_script(io.PlotRecipe(p["out"], STATICS_COLUMNS, "g", ["psi2", "psi1", "psi2_asym", "psi1_asym"],
                                          "g", "string order", style="linespoints"), p["plot_script"])
    return EXIT_OK


def _run_quench(p) -> int:
    cfg = quench.QuenchConfig(tau_q=p["tau_q"], g_start=p["g_start"], nk=p["nk"], t_samples=p["samples"],
                              rel_tol=p["rel_tol"], abs_tol=p["abs_tol"])
    method = p["method"]
    if method == "ode":
        traj = quench.integrate(cfg)
        times, F = traj.times, traj.expectation_F
        log.info("max norm drift %.3e", traj.norm_drift)
    elif method == "approx":
        times = cfg.sample_times()
        F = quench.approx_expectation_f(times, cfg.tau_q, nk=cfg.nk, clamp=True)
    else:
        times = np.array([0.0])
        F = np.array([quench.expectation_f(quench.lz_modes(cfg.momenta(), cfg.tau_q))])
    n = (1.0 - F) / 2
    rows = [[t, cfg.coupling(t), f, d] for t, f, d in zip(times, F, n)]
    io.emit_csv(QUENCH_COLUMNS, rows, p["out"])
    if p["dump_modes"]:
        mode_rows = ([t, k, u.real, u.imag, v.real, v.imag]
                     for i, t in enumerate(traj.times)
                     for k, u, v in zip(traj.ks, traj.u[i], traj.v[i]))
        io.emit_csv(MODE_COLUMNS, mode_rows, p["dump_modes"])
    if p["plot_script"]:
        io.emit_plot_script(io.PlotRecipe(p["out"], QUENCH_COLUMNS, "t", ["expectation_F"], "t", "<F>",
                                          title=f"tau_Q = {cfg.tau_q:g}"), p["plot_script"])
    print(f"<F>(t_end) = {F[-1]:.10f}  n = {n[-1]:.10f}")
    return EXIT_OK


def _run_ed(p) -> int:
    rows = []
    if p["model"] == "ising":
        spec = ed.ising_chain(p["n"], p["g"], p["j"])
        if p["tau_q"] is not None:
            res = ed.evolve_quench(spec, p["tau_q"], p["g_start"])
            state = res.state
            rows += [("t_end", 0.0), ("richardson_error", res.richardson_error), ("dt", res.dt)]
        else:
            energy, state = ed.ground_state(spec)
            rows.append(("energy", energy))
        rows += [("sx_avg", ed.measure(state, spec, "sx_avg")), ("parity", ed.measure(state, spec, "parity"))]
        rows += [(f"zz_{r}", ed.measure(state, spec, ("zz", r))) for r in range(1, p["n"] // 2 + 1)]
    else:
        spec = ed.wen_plaquette(p["lx"], p["ly"], p["g"], p["j"])
        energy, state = ed.ground_state(spec)
        rows.append(("energy", energy))
        rows += [("F_avg", ed.measure(state, spec, "F_avg")), ("tau_x_avg", ed.measure(state, spec, "tau_x_avg"))]
        rows += [(f"F_{x}_{y}", ed.measure(state, spec, ("F", (x, y)))) for x, y in spec.lattice.sites()]
    io.emit_csv(ED_COLUMNS, rows, p["out"])
    for name, value in rows:
        print(f"{name:>18} {value:.12g}")
    return EXIT_OK


def _run_scaling(p) -> int:
    res = analysis.scaling_analysis(p["tau_q"], p["window"], p["method"], p["nk"])
    rows = [[f.side, f.slope, f.intercept, f.r_squared, f.n_points] for f in res.fits.values()]
    io.emit_csv(SCALING_COLUMNS, rows, p["out"])
    if p["series_out"]:
        io.emit_csv(SERIES_COLUMNS, zip(res.times, res.expectation, np.abs(res.deriv)), p["series_out"])
        if p["plot_script"]:
            io.emit_plot_script(io.PlotRecipe(p["series_out"], SERIES_COLUMNS, "t", ["abs_dF_dt"], "t",
                                              "|d<F>/dt|", title=f"tau_Q = {p['tau_q']:g}"), p["plot_script"])
    for f in res.fits.values():
        print(f"{f.side:>7}: slope {f.slope:+.6g}  r^2 {f.r_squared:.6f}  ({f.n_points} points)")
    print(f"derivative peak at t = {res.peak_time:g} (t_c = {res.t_c:g})")
    return EXIT_OK


def _run_fig2(p) -> int:
    rows = analysis.asymptote_compare(p["tau_q_list"], p["clip_negative"])
    io.emit_csv(FIG2_COLUMNS, rows, p["out"])
    if p["plot_script"]:
        io.emit_plot_script(io.PlotRecipe(p["out"], FIG2_COLUMNS, "tau_q", ["f1", "f2"], "tau_Q", "<F>(t=0)",
                                          logx=True, style="linespoints"), p["plot_script"])
    for r in rows:
        print(f"tau_q {r['tau_q']:>8g}  f1 {r['f1']:.8f}  f2 {r['f2']:.8f}  rel {r['rel_diff']:.4g}")
    return EXIT_OK


_HANDLERS = {
    "verify-mapping": _run_verify_mapping,
    "statics": _run_statics,
    "quench": _run_quench,
    "ed": _run_ed,
    "scaling": _run_scaling,
    "fig2": _run_fig2,
}


def execute(cfg: io.RunConfig) -> int:
    log.info("running %s", cfg.subcommand)
    return _HANDLERS[cfg.subcommand](cfg.params)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        runs = parse_args(argv)
    except (ConfigError, LatticeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    verbosity = max(r.verbosity for r in runs)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * verbosity),
                        format="%(levelname)s %(name)s: %(message)s")
    for cfg in runs:
        try:
            code = execute(cfg)
        except (ConfigError, LatticeMismatchError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (NumericalFailure, TopoquenchError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        if code:
            return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
