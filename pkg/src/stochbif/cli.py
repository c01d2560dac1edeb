"""Batch command line: pitchfork and channel-flow runs writing CSV/JSON outputs.

Usage::

    stochbif pitchfork --mu-mean 1 --half-width 0.2 --npc 5 --inits 100 --seed 42
    stochbif pitchfork sweep --from -0.5 --to 1.5 --points 500 --half-width 0.01
    stochbif coanda det --mu-from 2.0 --mu-to 0.5 --step 0.01 --mesh coarse-unstructured
    stochbif coanda ssfem --dist uniform --mu-mean 0.9 --half 0.055 --npc 5
    stochbif coanda mc --dist gaussian --mu-mean 0.9 --var 0.001 --n 300 --init zero

Every flag may also be given in a ``key = value`` config file (``--config``)
using the flag name without dashes; flags on the command line win. Exit
codes: 0 success, 1 invalid configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io, uq_stats
from .klexp import scalar_kl, uniform_kl
from .pcbasis import Family, PCBasis

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalFailure(Exception):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    type: type = float
    default: object = None
    required: bool = False
    choices: tuple | None = None
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


_DIST = Param("dist", str, "uniform", choices=("uniform", "gaussian"), help="viscosity law")
_COMMON = (Param("seed", int, 0, help="master RNG seed"),
           Param("out", str, None, help="output directory"),
           Param("jobs", int, 1, help="worker threads for independent solves"))

COMMANDS = {
    "pitchfork": (
        _DIST,
        Param("mu-mean", float, required=True),
        Param("half-width", float, help="uniform half-width"),
        Param("var", float, help="gaussian variance"),
        Param("npc", int, 5),
        Param("inits", int, 100),
        Param("amplitude", float, 3.0, help="initial coefficients uniform in [-a, a]"),
        Param("samples", int, 20000, help="seed draws per density estimate"),
        Param("prominence", float, uq_stats.DEFAULT_PROMINENCE),
        Param("bandwidth", float, help="KDE bandwidth (default Silverman)"),
    ) + _COMMON,
    "pitchfork-sweep": (
        Param("from", float, required=True),
        Param("to", float, required=True),
        Param("points", int, required=True),
        Param("half-width", float, required=True),
        Param("npc", int, 5),
        Param("inits", int, 1, help="initializations per mean"),
        Param("amplitude", float, 3.0),
        Param("samples", int, 20000),
        Param("prominence", float, uq_stats.DEFAULT_PROMINENCE),
    ) + _COMMON,
    "coanda-det": (
        Param("mu-from", float, 2.0),
        Param("mu-to", float, 0.5),
        Param("step", float, 0.01),
        Param("mesh", str, "coarse-unstructured"),
        Param("probe-x", float, 15.0),
        Param("probe-y", float, 3.75),
        Param("tol", float, 1e-9),
    ) + _COMMON,
    "coanda-ssfem": (
        _DIST,
        Param("mu-mean", float, required=True),
        Param("half", float, help="uniform half-width"),
        Param("var", float, help="gaussian variance"),
        Param("npc", int, 3),
        Param("mesh", str, "coarse-unstructured"),
        Param("init", str, "noise", choices=("noise", "branches")),
        Param("noise", float, 1e-2),
        Param("probe-x", float, 15.0),
        Param("probe-y", float, 3.75),
        Param("samples", int, 20000),
        Param("tol", float, 1e-8),
        Param("max-iter", int, 50),
    ) + _COMMON,
    "coanda-mc": (
        _DIST,
        Param("mu-mean", float, required=True),
        Param("half", float),
        Param("var", float),
        Param("n", int, 300),
        Param("init", str, "zero", choices=("zero", "continuation", "cycling")),
        Param("mesh", str, "coarse-unstructured"),
        Param("sweep-from", float, 1.1),
        Param("sweep-to", float, 0.5),
        Param("step", float, 0.01),
        Param("probe-x", float, 15.0),
        Param("probe-y", float, 3.75),
        Param("tol", float, 1e-9),
    ) + _COMMON,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def read_config_file(path) -> dict:
    """``key = value`` pairs; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {n} is not 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(command: str, cli_values: dict, file_values: dict) -> dict:
    """Merge file and flag values, apply defaults, convert and validate types."""
    params = {p.name: p for p in COMMANDS[command]}
    for key in file_values:
        if key not in params:
            raise ConfigError(key, "unknown configuration key")
    cfg = {}
    for name, p in params.items():
        raw = cli_values.get(p.dest)
        if raw is None:
            raw = file_values.get(name)
        if raw is None:
            if p.required:
                raise ConfigError(name, "required value missing")
            cfg[name] = p.default
            continue
        try:
            value = p.type(raw)
        except (TypeError, ValueError):
            raise ConfigError(name, f"cannot parse {raw!r} as {p.type.__name__}") from None
        if p.type is float and not math.isfinite(value):
            raise ConfigError(name, "must be finite")
        if p.choices and value not in p.choices:
            raise ConfigError(name, f"must be one of {', '.join(p.choices)}")
        cfg[name] = value
    _validate(command, cfg)
    return cfg


def _validate(command, cfg):
    for key in ("npc", "inits", "points", "n", "samples", "jobs", "max-iter"):
        if key in cfg and cfg[key] is not None and cfg[key] < (0 if key == "npc" else 1):
            raise ConfigError(key, "out of range")
    for key in ("step", "tol", "half-width", "half", "var", "prominence", "bandwidth"):
        if cfg.get(key) is not None and cfg[key] <= 0:
            raise ConfigError(key, "must be positive")
    if "mesh" in cfg:
        from .mesh import PRESETS
        if cfg["mesh"] not in PRESETS:
            raise ConfigError("mesh", f"unknown preset; choose from {', '.join(sorted(PRESETS))}")
    if command in ("pitchfork", "coanda-ssfem", "coanda-mc"):
        spread_key = {"pitchfork": "half-width"}.get(command, "half")
        need = spread_key if cfg["dist"] == "uniform" else "var"
        if cfg.get(need) is None:
            raise ConfigError(need, f"required for dist={cfg['dist']}")
    if command == "pitchfork-sweep" and cfg["to"] < cfg["from"]:
        raise ConfigError("to", "must not be below 'from'")


def _law(cfg, spread_key):
    if cfg["dist"] == "uniform":
        h = cfg[spread_key]
        return uniform_kl(cfg["mu-mean"] - h, cfg["mu-mean"] + h)
    return scalar_kl(cfg["mu-mean"], math.sqrt(cfg["var"]), Family.HERMITE)


def _pdf_rows(pdf):
    return zip(pdf.grid, pdf.density)


# commands -----------------------------------------------------------------
def cmd_pitchfork(cfg, out: Path) -> tuple:
    from . import pitchfork as pf
    family = Family.LEGENDRE if cfg["dist"] == "uniform" else Family.HERMITE
    basis = PCBasis(family, cfg["npc"])
    mu_kl = _law(cfg, "half-width")
    sols = pf.solve_ensemble(basis, mu_kl, cfg["inits"], cfg["amplitude"], cfg["seed"])
    files, coeff_rows, peak_rows, pdfs = [], [], [], []
    for k, s in enumerate(sols):
        coeff_rows.append([k, s.converged, s.iterations, *s.coeffs])
        if not s.converged:
            continue
        pdf, found = uq_stats.pdf_peaks_of_expansion(s.coeffs, basis, cfg["samples"], cfg["seed"] + k,
                                                     cfg["prominence"], cfg["bandwidth"])
        pdfs.append(pdf)
        peak_rows += [[k, loc, dens] for loc, dens in found]
    header = ["init_id", "converged", "iterations"] + [f"c{i}" for i in range(basis.size)]
    files.append(io.write_csv(out / "coefficients.csv", header, coeff_rows))
    files.append(io.write_csv(out / "peaks.csv", ["init_id", "peak_location", "density"], peak_rows))
    if pdfs:
        grid, mean, var = uq_stats.pointwise_pdf_stats(pdfs)
        files.append(io.write_csv(out / "pdf_mean.csv", ["grid", "mean_density", "variance_density"],
                                  zip(grid, mean, var)))
    n_conv = sum(s.converged for s in sols)
    diag = {"converged": n_conv, "total": len(sols),
            "iterations": [s.iterations for s in sols], "status": [s.status for s in sols]}
    # random starts are allowed to fail; the run needs at least one converged member
    return files, diag, n_conv > 0


def cmd_pitchfork_sweep(cfg, out: Path) -> tuple:
    from . import pitchfork as pf
    basis = PCBasis(Family.LEGENDRE, cfg["npc"])
    means = np.linspace(cfg["from"], cfg["to"], cfg["points"])
    diagram, entries = pf.sweep_diagram(means, cfg["half-width"], basis, cfg["inits"], cfg["amplitude"],
                                        cfg["seed"], cfg["samples"], cfg["prominence"])
    rows = [[r.mu, r.observable, r.weight] for r in diagram.records if r.converged]
    files = [io.write_csv(out / "diagram.csv", ["mu_mean", "peak_location", "weight"], rows)]
    header = ["mu_mean", "init_id", "converged"] + [f"c{i}" for i in range(basis.size)]
    files.append(io.write_csv(out / "coefficients.csv", header,
                              [[e.mu_mean, e.init_id, e.solution.converged, *e.solution.coeffs]
                               for e in entries]))
    ok = all(e.solution.converged for e in entries)
    return files, {"points": len(means), "converged": sum(e.solution.converged for e in entries)}, ok


def _problem(cfg):
    from .nssolve import FlowProblem
    return FlowProblem.from_preset(cfg["mesh"], probe=(cfg["probe-x"], cfg["probe-y"]))


def _node_field_rows(space, columns):
    xy = space.q2_nodes
    return [[k, xy[k, 0], xy[k, 1], *(c[k] for c in columns)] for k in range(space.n_q2)]


def cmd_coanda_det(cfg, out: Path) -> tuple:
    from .nssolve import continuation_sweep
    problem = _problem(cfg)
    res = continuation_sweep(cfg["mu-from"], cfg["mu-to"], cfg["step"], problem, tol=cfg["tol"])
    rows = [[r.mu, r.branch_label, r.observable, r.converged] for r in res.diagram.records]
    files = [io.write_csv(out / "diagram.csv", ["mu", "pass_id", "observable", "converged"], rows)]
    sym = [s for (lab, _), s in res.states.items() if lab == "sym"]
    diag = {"mu_star": res.mu_star, "first_post_critical": res.first_post_critical,
            "iterations": {f"{lab}:{mu:.12g}": s.iterations for (lab, mu), s in res.states.items()}}
    return files, diag, all(s.converged for s in sym)


def cmd_coanda_ssfem(cfg, out: Path) -> tuple:
    from .ssfem import (SsfemSystem, branch_initial, component_variance, default_initial,
                        point_polynomial, ssfem_newton)
    from .nssolve import newton_flow
    problem = _problem(cfg)
    family = Family.LEGENDRE if cfg["dist"] == "uniform" else Family.HERMITE
    basis = PCBasis(family, cfg["npc"])
    system = SsfemSystem(problem, basis, _law(cfg, "half"))
    if cfg["init"] == "branches":
        init = branch_initial(system)
    else:
        det = newton_flow(None, cfg["mu-mean"], problem)
        init = default_initial(system, cfg["noise"], cfg["seed"], det)
    res = ssfem_newton(system, init, cfg["tol"], cfg["max-iter"])
    space = problem.space
    n = space.n_q2
    U = res.U
    files = []
    header = ["node", "x", "y"] + [f"v{c}_{i}" for c in ("x", "y") for i in range(basis.size)]
    cols = [U[c * n:(c + 1) * n, i] for c in range(2) for i in range(basis.size)]
    files.append(io.write_csv(out / "velocity_coefficients.csv", header, _node_field_rows(space, cols)))
    files.append(io.write_csv(out / "mean_field.csv", ["node", "x", "y", "vx", "vy"],
                              _node_field_rows(space, [U[:n, 0], U[n:, 0]])))
    files.append(io.write_csv(out / "variance_field.csv", ["node", "x", "y", "var_vx", "var_vy"],
                              _node_field_rows(space, [component_variance(U, basis, space, 0),
                                                       component_variance(U, basis, space, 1)])))
    probe = (cfg["probe-x"], cfg["probe-y"])
    coeffs = point_polynomial(U, space, probe)
    files.append(io.write_csv(out / "probe_polynomial.csv", ["index", "coefficient"], enumerate(coeffs)))
    extrema = uq_stats.local_extrema(coeffs, basis)
    files.append(io.write_csv(out / "probe_extrema.csv", ["xi", "value", "kind"], extrema))
    pdf, found = uq_stats.pdf_peaks_of_expansion(coeffs, basis, cfg["samples"], cfg["seed"])
    files.append(io.write_csv(out / "probe_pdf.csv", ["grid", "density"], _pdf_rows(pdf)))
    files.append(io.write_csv(out / "diagram.csv", ["mu_mean", "peak_location", "weight"],
                              [[cfg["mu-mean"], loc, d / sum(x for _, x in found)] for loc, d in found]))
    return files, res.diagnostics, res.converged


def cmd_coanda_mc(cfg, out: Path) -> tuple:
    from .mc import ensemble_stats, run_mc, vy_variance
    from .nssolve import continuation_sweep
    problem = _problem(cfg)
    sweep = None
    if cfg["init"] != "zero":
        sweep = continuation_sweep(cfg["sweep-from"], cfg["sweep-to"], cfg["step"], problem, tol=cfg["tol"])
    ens = run_mc(_law(cfg, "half"), cfg["n"], cfg["init"], cfg["seed"], problem, sweep,
                 tol=cfg["tol"], jobs=cfg["jobs"])
    rows = [[s.sample_id, s.mu_draw, s.converged, problem.observable(s.state.v)] for s in ens.samples]
    files = [io.write_csv(out / "samples.csv", ["sample_id", "mu_draw", "converged", "v_y"], rows)]
    diag = {"rejected": ens.rejected, "converged": len(ens.converged_samples()),
            "iterations": [s.state.iterations for s in ens.samples]}
    if len(ens.converged_samples()) >= 2:
        stats = ensemble_stats(ens, problem)
        space = problem.space
        n = space.n_q2
        files.append(io.write_csv(out / "mean_field.csv", ["node", "x", "y", "vx", "vy"],
                                  _node_field_rows(space, [stats.mean[:n], stats.mean[n:]])))
        files.append(io.write_csv(out / "variance_field.csv", ["node", "x", "y", "var_vx", "var_vy"],
                                  _node_field_rows(space, [stats.variance[:n], vy_variance(stats, problem)])))
        if len(stats.scatter) >= 10:
            pdf = uq_stats.kde(stats.scatter[:, 1])
            files.append(io.write_csv(out / "probe_pdf.csv", ["grid", "density"], _pdf_rows(pdf)))
        diag["clusters"] = uq_stats.count_clusters(stats.scatter[:, 1])
    return files, diag, len(ens.converged_samples()) == len(ens.samples)


HANDLERS = {"pitchfork": cmd_pitchfork, "pitchfork-sweep": cmd_pitchfork_sweep,
            "coanda-det": cmd_coanda_det, "coanda-ssfem": cmd_coanda_ssfem, "coanda-mc": cmd_coanda_mc}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stochbif", description="Stochastic Galerkin bifurcation runs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="group", parser_class=_Parser)

    def add(p, command):
        p.set_defaults(command=command)
        p.add_argument("--config", help="key = value configuration file")
        for prm in COMMANDS[command]:
            p.add_argument(f"--{prm.name}", dest=prm.dest, default=None, help=prm.help or None)

    pf = sub.add_parser("pitchfork", help="pitchfork ensemble or sweep")
    add(pf, "pitchfork")
    pf_sub = pf.add_subparsers(dest="action", parser_class=_Parser)
    add(pf_sub.add_parser("sweep", help="probabilistic diagram over a range of means"), "pitchfork-sweep")
    co = sub.add_parser("coanda", help="sudden-expansion channel runs")
    co_sub = co.add_subparsers(dest="action", parser_class=_Parser)
    add(co_sub.add_parser("det", help="deterministic continuation sweep"), "coanda-det")
    add(co_sub.add_parser("ssfem", help="stochastic Galerkin solve"), "coanda-ssfem")
    add(co_sub.add_parser("mc", help="Monte Carlo ensemble"), "coanda-mc")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        command = getattr(args, "command", None)
        if command is None:
            raise ConfigError("command", "choose one of: pitchfork, pitchfork sweep, coanda det|ssfem|mc")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(command, vars(args), file_values)
    except ConfigError as exc:
        print(f"stochbif: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"]) if cfg["out"] else io.default_output_root() / command
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        files, diag, ok = HANDLERS[command](cfg, out)
    except (NumericalFailure, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"stochbif: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    diag = dict(diag, wall_time=time.perf_counter() - start, ok=ok)
    files = list(files)
    files.append(io.write_json(out / "diagnostics.json", diag))
    files.append(io.write_config_snapshot(out / "config.txt", cfg))
    files.append(io.write_manifest(out, command, files))
    if not ok:
        print("stochbif: some required solves did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
