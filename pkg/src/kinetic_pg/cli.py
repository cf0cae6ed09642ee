"""Command-line front end.

Usage::

    kinetic-pg {solve,infsup,converge,sparsity} --config run.json [--out DIR] [--threads N] [--quiet]

The configuration is one JSON document. Recognized keys (all optional unless
noted; see ``configs/`` in the repository for annotated files):

``problem``
    ``kind`` ("stationary" or "time_dependent"), ``n_x``, ``n_v``, ``n_t``,
    ``q_inv`` (0.8), ``T`` (0.75), ``c`` (0.1), ``d`` (0.1). For ``infsup`` and
    ``sparsity`` the resolutions may be replaced by a list ``n`` (one run per
    entry, all resolutions equal to it). ``cases`` is an optional list of
    parameter overrides, e.g. ``[{"c": 1, "d": 0.4}, {"c": 0.1, "d": 0.1}]``.
``solver``
    ``method`` ("auto", "direct", "gmres", "bicgstab", "cg"; default "auto"),
    ``rel_tol`` (1e-10), ``max_iter`` (5000), ``preconditioner`` ("none",
    "jacobi", "ilu0", "ic0", "block_jacobi"), ``restart`` (50).
``eigen``
    ``rel_tol`` (1e-6), ``dense_limit`` (6000), ``max_iter`` (500).
``converge``
    ``n_x`` with ``fixed_n_v`` (sweep in space) and/or ``n_v`` with
    ``fixed_n_x`` (sweep in velocity).
``times``
    Time slices for the moment output of ``solve`` (default: 0 and T).
``max_test_dofs``
    Size cap (default 2e6).

Keys starting with an underscore are ignored and can hold comments.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

COMMANDS = ("solve", "infsup", "converge", "sparsity")
EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("kinetic_pg")


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------------------

_PROBLEM_KEYS = {"kind", "n_x", "n_v", "n_t", "q_inv", "T", "c", "d", "n", "cases"}
_SOLVER_KEYS = {"method", "rel_tol", "max_iter", "preconditioner", "restart"}
_EIGEN_KEYS = {"rel_tol", "dense_limit", "max_iter"}
_TOP_KEYS = {"problem", "solver", "eigen", "converge", "times", "max_test_dofs"}


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = {k for k in section if not k.startswith("_")} - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _strip(section: dict) -> dict:
    return {k: v for k, v in section.items() if not k.startswith("_")}


def _problem_specs(section: dict, command: str) -> list:
    from .problems import ProblemSpec

    _check_keys(section, _PROBLEM_KEYS, "problem")
    base = {k: v for k, v in section.items() if k not in ("n", "cases") and not k.startswith("_")}
    kind = base.setdefault("kind", "stationary")
    ns = section.get("n")
    if ns is not None and command not in ("infsup", "sparsity"):
        raise ConfigError("'problem.n' lists are only allowed for infsup and sparsity")
    ns = [None] if ns is None else (ns if isinstance(ns, list) else [ns])
    cases = section.get("cases") or [{}]
    specs = []
    for case in cases:
        _check_keys(case, _PROBLEM_KEYS - {"n", "cases", "kind"}, "problem.cases entry")
        for n in ns:
            fields = dict(base, **{k: v for k, v in case.items() if not k.startswith("_")})
            if n is not None:
                fields.update(n_x=n, n_v=n)
                if kind == "time_dependent":
                    fields["n_t"] = n
            try:
                specs.append(ProblemSpec(**fields))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid problem: {exc}") from exc
    return specs


def load_config(path, command: str) -> dict:
    """Parse and validate a configuration into ready-to-run objects."""
    from .linalg import EigenOptions, SolverOptions
    from .pipeline import MAX_TEST_DOFS, check_size

    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _check_keys(raw, _TOP_KEYS, "config")
    cap = raw.get("max_test_dofs", MAX_TEST_DOFS)
    if not isinstance(cap, (int, float)) or cap <= 0:
        raise ConfigError("max_test_dofs must be a positive number")
    cap = min(int(cap), MAX_TEST_DOFS)

    solver = raw.get("solver", {})
    _check_keys(solver, _SOLVER_KEYS, "solver")
    eigen = raw.get("eigen", {})
    _check_keys(eigen, _EIGEN_KEYS, "eigen")
    try:
        solver_opts = SolverOptions(**dict({"method": "auto"}, **_strip(solver)))
        eigen_opts = EigenOptions(**_strip(eigen))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver settings: {exc}") from exc

    cfg = {"solver": solver_opts, "eigen": eigen_opts, "cap": cap}
    if command == "converge":
        conv = raw.get("converge")
        if not isinstance(conv, dict):
            raise ConfigError("converge needs a 'converge' section")
        _check_keys(conv, {"n_x", "fixed_n_v", "n_v", "fixed_n_x"}, "converge")
        problem = dict(raw.get("problem", {}))
        _check_keys(problem, {"kind", "c", "d"}, "problem (converge)")
        if problem.get("kind", "stationary") != "stationary":
            raise ConfigError("converge runs the stationary manufactured problem")
        pairs, sweeps = [], []
        if "n_x" in conv:
            if "fixed_n_v" not in conv:
                raise ConfigError("converge.n_x needs converge.fixed_n_v")
            sweeps.append(("n_x", int(conv["fixed_n_v"]), [int(n) for n in conv["n_x"]]))
            pairs += [(n, int(conv["fixed_n_v"])) for n in conv["n_x"]]
        if "n_v" in conv:
            if "fixed_n_x" not in conv:
                raise ConfigError("converge.n_v needs converge.fixed_n_x")
            sweeps.append(("n_v", int(conv["fixed_n_x"]), [int(n) for n in conv["n_v"]]))
            pairs += [(int(conv["fixed_n_x"]), n) for n in conv["n_v"]]
        if not sweeps:
            raise ConfigError("converge needs n_x/fixed_n_v and/or n_v/fixed_n_x")
        c, d = float(problem.get("c", 0.1)), float(problem.get("d", 0.1))
        pairs = list(dict.fromkeys(pairs))
        specs = []
        for nx, nv in pairs:
            try:
                from .problems import ProblemSpec

                specs.append(ProblemSpec.stationary(c, d, nx, nv))
            except ValueError as exc:
                raise ConfigError(f"invalid resolution: {exc}") from exc
        cfg.update(c=c, d=d, pairs=pairs, sweeps=sweeps, problems=specs)
    else:
        if "problem" not in raw:
            raise ConfigError("missing 'problem' section")
        cfg["problems"] = _problem_specs(raw["problem"], command)
        if command == "solve" and len(cfg["problems"]) != 1:
            raise ConfigError("solve takes exactly one problem")
    times = raw.get("times")
    if times is not None:
        if not isinstance(times, list) or not all(isinstance(t, (int, float)) for t in times):
            raise ConfigError("times must be a list of numbers")
        for p in cfg["problems"]:
            if not p.is_time_dependent:
                raise ConfigError("times are only meaningful for time-dependent problems")
            if any(t < 0 or t > p.T for t in times):
                raise ConfigError(f"times must lie in [0, {p.T}]")
    cfg["times"] = times
    for p in cfg["problems"]:
        try:
            check_size(p, cap)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


# -- commands ----------------------------------------------------------------------------------

def _run_solve(cfg: dict, out: Path) -> dict:
    from . import postprocess as pp
    from .pipeline import solve, stationary_errors

    problem = cfg["problems"][0]
    res = solve(problem, cfg["solver"], cap=cfg["cap"])
    files = {}
    pairs = res.disc.test.pairs
    rows = "\n".join(f"{i},{j},{v:.16e}" for (i, j), v in zip(pairs, res.x))
    files["solution.csv"] = "i,j,coefficient\n" + rows + "\n"
    summary = {"problem": problem.tag, "mesh": problem.mesh_tag, "N": res.disc.N, "method": res.method,
               "iterations": res.iterations, "residual": res.residual,
               "timings": {k: round(v, 6) for k, v in res.timings.items()}}
    grids = {}
    if problem.is_time_dependent:
        times = cfg["times"] if cfg["times"] is not None else [0.0, problem.T]
        for t, grid in pp.moments(res.x, res.disc.trial, res.disc.vel, times, problem.lambda_a).items():
            grids[pp.moment_filename(t)] = grid
            summary.setdefault("moment_mass", {})[f"{t:g}"] = pp.grid_integral(grid)
    else:
        err = stationary_errors(res)
        summary["l2_error"], summary["x_error"] = err.l2_error, err.x_error
    _write_all(out, files, grids, summary)
    t = res.timings
    log.info("timings: lifts %.2fs, assembly %.2fs, solve %.2fs, total %.2fs; assembly share %.1f%%",
             t["lifts"], t["assembly"], t["solve"], t["total"], 100 * t["assembly_share"])
    return summary


def _run_infsup(cfg: dict, out: Path) -> dict:
    from . import postprocess as pp
    from .pipeline import infsup

    rows = []
    for p in cfg["problems"]:
        r = infsup(p, cfg["eigen"], cap=cfg["cap"])
        rows.append(dict(r.row(), n=p.n_x))
        log.info("%s %s: beta_delta %.5f, lower bound %.5f, ratio %.4f (%s, %.1fs)",
                 r.problem, r.mesh, r.beta_delta, r.beta_lb, r.ratio, r.method, r.seconds)
    out.mkdir(parents=True, exist_ok=True)
    pp.write_infsup_rows(out / "infsup.csv", rows)
    return {"rows": rows}


def _run_sparsity(cfg: dict, out: Path) -> dict:
    from . import postprocess as pp
    from .pipeline import sparsity

    rows = []
    for p in cfg["problems"]:
        s = sparsity(p, cap=cfg["cap"])
        rows.append((p.n_x, s))
        log.info("%s: N %d, nnz %d, ratio %.4f%%, scaled %.2f", p.mesh_tag, s.n_dofs, s.nnz,
                 100 * s.ratio_entries, s.scaled)
    out.mkdir(parents=True, exist_ok=True)
    pp.write_sparsity_rows(out / "sparsity.csv", rows)
    return {"rows": [dict(n=n, **s.__dict__) for n, s in rows]}


def _run_converge(cfg: dict, out: Path) -> dict:
    from . import postprocess as pp
    from .pipeline import convergence_study

    errors = convergence_study(cfg["c"], cfg["d"], cfg["pairs"], cfg["solver"], cap=cfg["cap"])
    n_xs = sorted({nx for nx, _ in cfg["pairs"]})
    n_vs = sorted({nv for _, nv in cfg["pairs"]})
    slopes = []
    for axis, fixed, ns in cfg["sweeps"]:
        keys = [(n, fixed) if axis == "n_x" else (fixed, n) for n in ns]
        for norm in ("l2", "x"):
            errs = [getattr(errors[k], f"{norm}_error") for k in keys]
            slopes.append({"sweep": axis, "fixed": fixed, "norm": norm, "slope": pp.fit_slope(ns, errs)})
            log.info("slope in %s (fixed %d), %s norm: %.3f", axis, fixed, norm, slopes[-1]["slope"])
    out.mkdir(parents=True, exist_ok=True)
    pp.write_error_table(out / "L2_errors.csv", n_xs, n_vs, {k: v.l2_error for k, v in errors.items()})
    pp.write_error_table(out / "X_errors.csv", n_xs, n_vs, {k: v.x_error for k, v in errors.items()})
    pp.write_slopes(out / "slopes.csv", slopes)
    return {"slopes": slopes}


def _write_all(out: Path, files: dict, grids: dict, summary: dict):
    from .postprocess import write_grid

    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    for name, grid in grids.items():
        write_grid(out / name, grid)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


_RUNNERS = {"solve": _run_solve, "infsup": _run_infsup, "converge": _run_converge, "sparsity": _run_sparsity}


# -- entry point -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinetic-pg",
        description="Inf-sup stable Petrov-Galerkin solver for a kinetic Fokker-Planck equation.",
        epilog="Configuration keys and defaults are listed in the module docstring "
               "(python -m kinetic_pg.cli --help-config).",
    )
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default="results", help="output directory (default: results)")
    parser.add_argument("--threads", type=int, default=None, help="limit BLAS threads")
    parser.add_argument("--quiet", action="store_true", help="only print errors")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if "--help-config" in argv:
        print(__doc__)
        return EXIT_OK
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE

    import numpy as np
    from threadpoolctl import threadpool_limits

    from .linalg import SolverError

    try:
        cfg = load_config(args.config, args.command)
    except (ConfigError, TypeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        # the numba kernels are serial, so limiting the BLAS pools is enough
        with threadpool_limits(limits=args.threads):
            summary = _RUNNERS[args.command](cfg, out)
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MemoryError:
        print("numerical failure: out of memory; reduce the resolution", file=sys.stderr)
        return EXIT_NUMERICAL
    if not args.quiet:
        print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
        log.info("done in %.1fs, outputs in %s", time.perf_counter() - t0, out)
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "item"):
        return obj.item()
    return obj


if __name__ == "__main__":
    sys.exit(main())
