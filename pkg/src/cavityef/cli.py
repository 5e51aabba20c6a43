"""Command-line front end: ``cavityef <task> --config run.ini [--out DIR]``.

Tasks build all their tables in memory and only then write them, so a failed
run leaves no partial artifacts. Exit codes: 0 ok, 2 configuration, 3 solver,
4 bracketing, 5 I/O, 1 anything else. Failures also print a one-line JSON
record to stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import lcao_dho as ld
from .config import TASKS, RunConfig, load_config
from .efactor import (
    FullState,
    eph_potential_exact,
    factorize,
    inversion_residual,
    pnc_error,
    vector_potential,
)
from .eigensolver import orthonormality_check, solve_lowest
from .errors import (
    BracketingError,
    CavityEFError,
    ConfigurationError,
    SolverError,
)
from .model import assemble_coupled_hamiltonian, assemble_electron_hamiltonian
from .output import CurveTable, write_atomic
from .resonance import REFERENCE_RESONANCES, delocalization_metric, find_resonance

log = logging.getLogger("cavityef")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_SOLVER, EXIT_BRACKET, EXIT_IO = 0, 1, 2, 3, 4, 5
THREADS_ENV = "CAVITYEF_NUM_THREADS"
PAIR = (1, 2)
BRANCH_LABEL = {ld.LOWER: "minus", ld.UPPER: "plus"}


# ---------------------------------------------------------------------------
# shared computations


def _solve(cfg: RunConfig, p, k=None):
    g = cfg.grid.build(p)
    op = assemble_coupled_hamiltonian(g, p, cfg.grid.max_dimension)
    res = solve_lowest(op, k=k or cfg.solver.k, tol=cfg.solver.tol, method=cfg.solver.method)
    return g, res


def _curve(cfg: RunConfig, g, res, j, p):
    f = factorize(FullState.from_pair(res[j], g), g, cfg.factorize.eps_node)
    return f, eph_potential_exact(f, g, p)


def _uncoupled_densities(cfg: RunConfig, g, p, count=2):
    op = assemble_electron_hamiltonian(g, p.replace(lambda_c=0.0))
    res = solve_lowest(op, k=count, tol=cfg.solver.tol, method="dense")
    return [res[j].vector**2 / g.dx for j in range(count)]


def _tag(value: float) -> str:
    return f"{value:.16e}"


# ---------------------------------------------------------------------------
# tasks; each returns {filename: CurveTable}


def task_solve(cfg: RunConfig) -> dict:
    p = cfg.model
    g, res = _solve(cfg, p)
    gap = res[PAIR[1]].energy - res[PAIR[0]].energy if len(res) > PAIR[1] else float("nan")
    spectrum = CurveTable(
        {
            "index": np.arange(len(res)),
            "energy": res.energies,
            "residual": np.array([pr.residual for pr in res.pairs]),
        },
        [
            f"method: {res.diagnostics.get('method')}",
            f"polariton_gap: {_tag(gap)}",
            f"orthonormality: {_tag(orthonormality_check(res))}",
        ],
    )
    cols = {"x": g.x_nodes}
    notes = []
    for j, rho in enumerate(_uncoupled_densities(cfg, g, p)):
        cols[f"uncoupled_{j}"] = rho
        notes.append(f"uncoupled_{j} imbalance: {_tag(delocalization_metric(np.sqrt(rho), g))}")
    for j in range(len(res)):
        rho = np.sum(res[j].vector.reshape(g.shape) ** 2, axis=1) / g.dx
        cols[f"coupled_{j}"] = rho
        notes.append(f"coupled_{j} imbalance: {_tag(delocalization_metric(np.sqrt(rho), g))}")
    return {"spectrum.csv": spectrum, "densities.csv": CurveTable(cols, notes)}


def _excited_features(curve):
    x, m = curve.x, curve.mask
    _, xp, hp = ld.peak_location(x, curve.eph_kin, m, np.inf)
    return ld.plateau_step(x, curve.eph, m), xp, hp


def task_factorize(cfg: RunConfig) -> dict:
    p = cfg.model
    g, res = _solve(cfg, p)
    out = {}
    for j in cfg.factorize.states:
        f, curve = _curve(cfg, g, res, j, p)
        s = vector_potential(f, g)
        step, xp, hp = _excited_features(curve)
        notes = [
            f"state: {j}",
            f"energy: {_tag(res[j].energy)}",
            f"pnc_error: {_tag(pnc_error(f, g))}",
            f"max_abs_vector_potential: {_tag(np.nanmax(np.abs(s)))}",
            f"inversion_residual: {_tag(inversion_residual(f, curve, res[j].energy, g, p))}",
            f"eph_step_estimate: {_tag(step)}",
            f"eph_kin_peak: x={_tag(xp)} height={_tag(hp)}",
        ]
        out[f"potential_state{j}.csv"] = CurveTable.from_curve(curve, notes)

    ground = {k: [] for k in ("lambda_c", "x", "bare_V", "total_exact", "total_approx", "mask")}
    dens = {k: [] for k in ("lambda_c", "x", "density_uncoupled", "density_coupled", "difference")}
    excited = {
        k: []
        for k in ("lambda_c", "state", "x", "bare_V", "eph_em", "eph_kin", "total", "mask")
    }
    g_notes, e_notes, warn = [], [], []
    for lam, w in cfg.couplings:
        pc = p.replace(lambda_c=lam, omega_c=w)
        gc, rc = _solve(cfg, pc, k=max(PAIR) + 1)
        _, c0 = _curve(cfg, gc, rc, 0, pc)
        approx = ld.approx_ground_curve(gc.x_nodes, pc)
        rho_free = _uncoupled_densities(cfg, gc, pc, 1)[0]
        n = gc.nx
        ground["lambda_c"].append(np.full(n, lam))
        ground["x"].append(gc.x_nodes)
        ground["bare_V"].append(c0.bare)
        ground["total_exact"].append(np.where(c0.mask, c0.total, np.nan))
        ground["total_approx"].append(approx.total)
        ground["mask"].append(c0.mask.astype(int))
        dens["lambda_c"].append(np.full(n, lam))
        dens["x"].append(gc.x_nodes)
        dens["density_uncoupled"].append(rho_free)
        dens["density_coupled"].append(c0.density)
        dens["difference"].append(rho_free - c0.density)
        g_notes.append(
            f"lambda_c={lam!r}: right_well_elevation exact={_tag(ld.right_well_elevation(c0))} "
            f"approx={_tag(ld.right_well_elevation(approx))}"
        )
        warn.extend(c0.warnings)
        for j in PAIR:
            _, cj = _curve(cfg, gc, rc, j, pc)
            m = cj.mask
            excited["lambda_c"].append(np.full(n, lam))
            excited["state"].append(np.full(n, j))
            excited["x"].append(gc.x_nodes)
            excited["bare_V"].append(cj.bare)
            for key, values in (("eph_em", cj.eph_em), ("eph_kin", cj.eph_kin), ("total", cj.total)):
                excited[key].append(np.where(m, values, np.nan))
            excited["mask"].append(m.astype(int))
            step, xp, hp = _excited_features(cj)
            e_notes.append(
                f"lambda_c={lam!r} state={j}: step={_tag(step)} peak_x={_tag(xp)} peak_height={_tag(hp)}"
            )
            warn.extend(cj.warnings)

    def stack(d):
        return {k: np.concatenate(v) for k, v in d.items()}

    out["ground_potentials.csv"] = CurveTable(stack(ground), g_notes)
    out["density_difference.csv"] = CurveTable(stack(dens))
    out["excited_potentials.csv"] = CurveTable(stack(excited), e_notes, warn)
    return out


def task_resonance(cfg: RunConfig) -> dict:
    r = cfg.resonance
    rows = {
        k: []
        for k in (
            "lambda_c", "omega_c_star", "metric_at_star", "gap_at_star", "omega_c_gap",
            "bracket_lo", "bracket_hi", "n_solves", "criteria_disagree", "scan_unimodal",
        )
    }
    trace = {k: [] for k in ("lambda_c", "stage", "omega_c", "gap", "metric")}
    notes = []
    for lam in r.lambda_values:
        res = find_resonance(
            lam,
            bracket=r.bracket,
            tol=r.tol,
            base=cfg.model,
            grid=cfg.grid.settings(),
            criterion=r.criterion,
            n_scan=r.n_scan,
            solver_tol=cfg.solver.tol,
        )
        for key, value in (
            ("lambda_c", lam), ("omega_c_star", res.omega_c_star),
            ("metric_at_star", res.metric_at_star), ("gap_at_star", res.gap_at_star),
            ("omega_c_gap", res.omega_c_gap), ("bracket_lo", res.bracket[0]),
            ("bracket_hi", res.bracket[1]), ("n_solves", res.n_solves),
            ("criteria_disagree", res.criteria_disagree), ("scan_unimodal", res.scan_unimodal),
        ):
            rows[key].append(value)
        for s in res.trace:
            trace["lambda_c"].append(lam)
            for key in ("stage", "omega_c", "gap", "metric"):
                trace[key].append(s[key])
        if lam in REFERENCE_RESONANCES:
            ref = REFERENCE_RESONANCES[lam]
            notes.append(
                f"lambda_c={lam!r}: reference={_tag(ref)} "
                f"relative_deviation={_tag(res.omega_c_star / ref - 1.0)}"
            )
    return {
        "resonance.csv": CurveTable(rows, notes),
        "resonance_trace.csv": CurveTable(trace),
    }


def task_approx(cfg: RunConfig) -> dict:
    p, a = cfg.model, cfg.approx
    rows = {
        k: []
        for k in ("n", "branch", "overlap", "nu", "energy", "alpha", "beta", "s", "q_element")
    }
    warn = []
    g = cfg.grid.build(p)
    third = solve_lowest(assemble_electron_hamiltonian(g, p), k=3, method="dense")[2].energy
    for b in (ld.LOWER, ld.UPPER):
        with _collect_warnings(warn):
            pol = ld.approx_polariton(a.n, b, p, a.overlap_form, third_level=third)
        for key, value in (
            ("n", a.n), ("branch", BRANCH_LABEL[b]), ("overlap", pol.overlap), ("nu", pol.nu),
            ("energy", pol.energy), ("alpha", pol.elements.alpha), ("beta", pol.elements.beta),
            ("s", pol.elements.s), ("q_element", ld.dho_q_element(a.n, p)),
        ):
            rows[key].append(value)

    lams = np.linspace(a.sweep_lambda_min, a.sweep_lambda_max, a.sweep_count)
    sweep = {"lambda_c": lams, "overlap": [], "height_minus": [], "height_plus": []}
    for lam in lams:
        pl = p.replace(lambda_c=float(lam))
        sweep["overlap"].append(ld.dho_overlap(a.n, pl, a.overlap_form))
        sweep["height_minus"].append(ld.peak_height_at_origin(a.n, ld.LOWER, pl, a.overlap_form))
        sweep["height_plus"].append(ld.peak_height_at_origin(a.n, ld.UPPER, pl, a.overlap_form))
    limit = p.a**2 * p.omega_e**2 / (2.0 * p.mass)

    steps = {k: [] for k in ("lambda_c", "x", "step_minus", "step_plus")}
    for lam, w in cfg.couplings:
        pc = p.replace(lambda_c=lam, omega_c=w)
        x = cfg.grid.build(pc).x_nodes
        steps["lambda_c"].append(np.full(x.size, lam))
        steps["x"].append(x)
        with _collect_warnings(warn):
            steps["step_minus"].append(ld.step_term(a.n, ld.LOWER, x, pc, a.overlap_form))
            steps["step_plus"].append(ld.step_term(a.n, ld.UPPER, x, pc, a.overlap_form))
    return {
        "approx_polaritons.csv": CurveTable(
            {k: np.array(v) if k != "branch" else v for k, v in rows.items()},
            [f"third_uncoupled_level: {_tag(third)}"],
            warn,
        ),
        "peak_heights.csv": CurveTable(
            {k: np.asarray(v) for k, v in sweep.items()},
            [f"omega_c: {_tag(p.omega_c)}", f"large_coupling_limit: {_tag(limit)}"],
        ),
        "step_terms.csv": CurveTable({k: np.concatenate(v) for k, v in steps.items()}),
    }


def task_compare(cfg: RunConfig) -> dict:
    p, a = cfg.model, cfg.approx
    g, res = _solve(cfg, p, k=max(cfg.solver.k, max(PAIR) + 1))
    x = g.x_nodes
    totals = {"x": x, "bare_V": None}
    kinetic = {"x": x}
    summary = {}
    notes, warn = [], []
    for j, b in zip(PAIR, (ld.LOWER, ld.UPPER)):
        label = BRANCH_LABEL[b]
        _, exact = _curve(cfg, g, res, j, p)
        with _collect_warnings(warn):
            approx = ld.approx_excited_curve(a.n, b, x, p, a.overlap_form, cfg.factorize.eps_node)
        report = ld.compare_curves(exact, approx)
        totals["bare_V"] = exact.bare
        totals[f"exact_total_{label}"] = np.where(exact.mask, exact.total, np.nan)
        totals[f"approx_total_{label}"] = np.where(approx.mask, approx.total, np.nan)
        totals[f"mask_exact_{label}"] = exact.mask.astype(int)
        totals[f"mask_approx_{label}"] = approx.mask.astype(int)
        kinetic[f"exact_kin_{label}"] = np.where(exact.mask, exact.eph_kin, np.nan)
        kinetic[f"approx_kin_{label}"] = np.where(approx.mask, approx.eph_kin, np.nan)
        summary.setdefault("branch", []).append(label)
        summary.setdefault("state", []).append(j)
        for key, value in asdict(report).items():
            summary.setdefault(key, []).append(value)
        notes.append(f"state {j} is branch {label}")
        warn.extend(exact.warnings)
    return {
        "compare_potentials.csv": CurveTable(totals, notes, warn),
        "kinetic_terms.csv": CurveTable(kinetic, notes),
        "compare_summary.csv": CurveTable(
            {k: (v if k == "branch" else np.asarray(v)) for k, v in summary.items()}, notes
        ),
    }


TASK_FUNCTIONS = {
    "solve": task_solve,
    "factorize": task_factorize,
    "resonance": task_resonance,
    "approx": task_approx,
    "compare": task_compare,
}


@contextlib.contextmanager
def _collect_warnings(sink: list):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yield
    sink.extend(str(w.message) for w in caught)


# ---------------------------------------------------------------------------
# orchestration


def thread_limit(deterministic: bool):
    """Thread count for BLAS/OpenMP pools: 1 in deterministic mode, else the env setting."""
    if deterministic:
        return 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run(cfg: RunConfig, deterministic: bool = False) -> dict:
    """Execute ``cfg.task`` and write its CSV files; returns {name: path}."""
    from threadpoolctl import threadpool_limits

    limit = thread_limit(deterministic)
    with threadpool_limits(limits=limit) if limit else contextlib.nullcontext():
        tables = TASK_FUNCTIONS[cfg.task](cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, table in tables.items():
        path = out_dir / name
        write_atomic(path, table.render(cfg))
        written[name] = path
    return written


def _error_record(kind: str, code: int, exc: BaseException) -> str:
    record = {"status": "error", "kind": kind, "exit_code": code, "message": str(exc)}
    if isinstance(exc, SolverError):
        record["diagnostics"] = exc.diagnostics
    if isinstance(exc, BracketingError):
        record["trace"] = exc.trace
    return json.dumps(record, default=str, sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavityef", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cavityef {__version__}")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task, help=f"run the {task} task")
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--out", help="output directory (overrides [output] directory)")
        sp.add_argument(
            "--deterministic", action="store_true",
            help="single-threaded numerics for bitwise-reproducible output",
        )
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        cfg = load_config(args.config).with_overrides(task=args.task, output_dir=args.out)
        thread_limit(args.deterministic)
    except ConfigurationError as exc:
        print(_error_record("configuration", EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = run(cfg, deterministic=args.deterministic)
    except ConfigurationError as exc:
        print(_error_record("configuration", EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(_error_record("solver", EXIT_SOLVER, exc), file=sys.stderr)
        return EXIT_SOLVER
    except BracketingError as exc:
        print(_error_record("bracketing", EXIT_BRACKET, exc), file=sys.stderr)
        return EXIT_BRACKET
    except OSError as exc:
        print(_error_record("io", EXIT_IO, exc), file=sys.stderr)
        return EXIT_IO
    except CavityEFError as exc:
        print(_error_record(type(exc).__name__, EXIT_OTHER, exc), file=sys.stderr)
        return EXIT_OTHER
    for name, path in written.items():
        print(path)
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
