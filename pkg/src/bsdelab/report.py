"""Structured-text reports, CSV export and configuration-driven runs.

Report format: one ``key = value`` line per entry, keys dotted, entries in
the order they were produced and ``timing.*`` entries last.  Floats are
written with 17 significant digits (``repr``-exact), strings JSON-quoted,
lists in brackets.  Everything except the timing block is a pure function
of the configuration.
"""

import csv
import json
import math
import os
import time

import numpy as np

from .core import AdaptedProcess, mean_and_se
from .errors import (
    CacheFormatError, ConditioningError, ConfigurationError, ConvergenceError, DimensionError,
    DriverSpecError, RegistryError, SetupError,
)

SOLVER_ERRORS = (ConditioningError, ConvergenceError, DriverSpecError, DimensionError, SetupError)
USAGE_ERRORS = (ConfigurationError, RegistryError, CacheFormatError)


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    if v is None:
        return "none"
    raise TypeError(f"cannot format {type(v).__name__}")


class RunReport:
    """Ordered ``key = value`` entries plus a separate timing block."""

    def __init__(self, command):
        self.command = command
        self.entries = []
        self.timings = []
        self.failures = []     # names of failed verification checks or solver stages

    def add(self, key, value):
        self.entries.append((key, value))

    def update(self, prefix, mapping):
        for k, v in mapping.items():
            self.add(f"{prefix}.{k}", v)

    def time(self, key, seconds):
        self.timings.append((f"timing.{key}", float(seconds)))

    def fail(self, what):
        self.failures.append(what)

    @property
    def ok(self):
        return not self.failures

    @property
    def exit_code(self):
        return 0 if self.ok else 1

    def get(self, key):
        for k, v in self.entries:
            if k == key:
                return v
        raise KeyError(key)

    def to_text(self, timings=True):
        lines = [f"command = {fmt(self.command)}"]
        lines += [f"{k} = {fmt(v)}" for k, v in self.entries]
        lines.append(f"status = {fmt('ok' if self.ok else 'failed')}")
        lines.append(f"failures = {fmt(self.failures)}")
        if timings:
            lines += [f"{k} = {fmt(v)}" for k, v in self.timings]
        return "\n".join(lines) + "\n"

    def write(self, path):
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.to_text())
        except OSError as exc:
            raise OSError(f"cannot write report {path}: {exc.strerror}") from exc


def strip_timings(text):
    """Report text without ``timing.*`` lines (the reproducible part)."""
    return "".join(l for l in text.splitlines(True) if not l.startswith("timing."))


# -------------------------------------------------------------------- CSV


def solution_table(solution):
    """Per-knot rows ``t, mean y, std y, q05 y, q95 y, l2 Y`` (component-wise for ``n > 1``)."""
    ens = solution.ensemble
    y, Y = solution.y.values, solution.Y.values
    n = y.shape[2]
    header = ["t"]
    for c in range(n):
        sfx = "" if n == 1 else f"_{c}"
        header += [f"y_mean{sfx}", f"y_std{sfx}", f"y_q05{sfx}", f"y_q95{sfx}"]
    header.append("Y_l2")
    rows = []
    for j in range(ens.J + 1):
        row = [float(ens.grid.knots[j])]
        for c in range(n):
            col = y[:, j, c]
            m, _ = mean_and_se(col)
            sd = float(np.sqrt(np.mean((col - m) ** 2)))
            q05, q95 = np.quantile(col, [0.05, 0.95])
            row += [m, sd, float(q05), float(q95)]
        row.append(float(np.sqrt(np.mean(np.sum(Y[:, j] ** 2, axis=1)))))
        rows.append(row)
    return header, rows


def export_csv(solution, path, grid=None):
    """Write :func:`solution_table` to ``path`` with 17 significant digits; returns the path."""
    header, rows = solution_table(solution)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([format(x, ".17g") for x in r])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc.strerror}") from exc
    return path


# ------------------------------------------------------------------- runs


def solve_config(cfg, ens, prefix=""):
    """Solve the configured problem (``prefix="compare."`` for the second problem)."""
    from .linear import LinearBSDEProblem, solve_linear
    from .picard import solve_semilinear
    tname = f"{prefix}terminal" if prefix and cfg[f"{prefix}terminal.name"] else "terminal"
    dname = f"{prefix}driver" if prefix and cfg[f"{prefix}driver.name"] else "driver"
    terminal = cfg.terminal(ens, tname)
    if prefix and cfg[f"{prefix}terminal.shift"] is not None:
        terminal = terminal + cfg[f"{prefix}terminal.shift"]
    driver = cfg.driver(dname)
    basis = cfg.basis(ens)
    spec = cfg.regression_spec()
    ridge = cfg["basis.ridge"]
    if driver.is_constant:
        zero = AdaptedProcess.zeros(ens)
        f = driver.evaluate(ens, zero, zero)
        sol = solve_linear(LinearBSDEProblem(f, terminal), ens, basis, spec, ridge)
        sol.driver = driver
    else:
        sol = solve_semilinear(driver, terminal, ens, basis, spec, cfg.picard_config(), ridge)
    return sol


def _solution_entries(report, sol, prefix="solution"):
    from .condexp import martingale_residual
    from .verification import non_representable_part
    from .core import rms
    y0 = sol.y.values[:, 0, 0]
    m0, _ = mean_and_se(y0)
    d = sol.diagnostics
    report.update(prefix, {
        "y0_mean": m0,
        "y0_std": float(np.sqrt(np.mean((y0 - m0) ** 2))),
        "y_sup_l2": d["y_sup_l2"],
        "Y_l2_l2": d["Y_l2_l2"],
        "non_representable_l2": rms(non_representable_part(sol)),
        "martingale_residual": martingale_residual(sol.M, sol.spec),
        "corrected_form_residual": d["corrected_form_residual"],
    })
    keys = ("basis_size", "gram_condition", "gram_ridge", "gram_solve_residual",
            "regression_error", "windows", "picard_iterations", "max_contraction_ratio")
    report.update(prefix + ".diagnostics", {k: d[k] for k in keys if k in d})
    for k, tr in enumerate(d.get("picard_traces", [])):
        report.update(f"{prefix}.picard.window{k:03d}", {
            "knots": list(tr.window), "iterations": tr.iterations, "bisect_depth": tr.bisect_depth,
            "max_ratio": tr.max_ratio, "final_distance": tr.distances[-1],
        })
        if tr.ratios and tr.max_ratio >= 1:
            report.fail(f"{prefix}.picard.window{k:03d}")


def _verify_entries(report, cfg, sol):
    from .verification import orthogonal_decomposition_check, random_test_suite
    rep = random_test_suite(sol, n_tests=cfg["verification.n_tests"], seed=cfg["verification.seed"],
                            factor=cfg["verification.bias_factor"])
    for k, r in enumerate(rep.results):
        report.update(f"verification.test{k:02d}", {
            "j0": r.j0, "residual": r.residual, "se": r.se, "bias_tolerance": r.bias_tolerance,
            "passed": r.passed})
    report.update("verification", {"n_tests": rep.n_tests, "n_passed": rep.n_passed,
                                   "max_failures": rep.max_failures, "passed": rep.passed})
    if not rep.passed:
        report.fail("verification.duality")
    stat, se = orthogonal_decomposition_check(sol)
    ok = abs(stat) <= 3 * se
    report.update("verification.orthogonality", {"statistic": stat, "se": se, "passed": ok})
    if not ok:
        report.fail("verification.orthogonality")


def _cmd_solve(cfg, ens, report, out_dir, verify=False):
    t = time.perf_counter()
    sol = solve_config(cfg, ens)
    report.time("solve", time.perf_counter() - t)
    _solution_entries(report, sol)
    export_csv(sol, os.path.join(out_dir, "solution.csv"))
    if verify:
        t = time.perf_counter()
        _verify_entries(report, cfg, sol)
        report.time("verify", time.perf_counter() - t)
    return sol


def _cmd_compare(cfg, ens, report, out_dir):
    from .verification import comparison_check
    t = time.perf_counter()
    sol = solve_config(cfg, ens)
    sol_bar = solve_config(cfg, ens, prefix="compare.")
    report.time("solve", time.perf_counter() - t)
    _solution_entries(report, sol, "solution")
    _solution_entries(report, sol_bar, "solution_bar")
    export_csv(sol, os.path.join(out_dir, "solution.csv"))
    export_csv(sol_bar, os.path.join(out_dir, "solution_bar.csv"))
    try:
        r = comparison_check(sol, sol_bar, eq_tol=cfg["compare.eq_tol"],
                             factor=cfg["verification.bias_factor"])
    except SetupError as exc:
        report.update("compare", {"status": "setup-error", "error": str(exc)})
        report.fail("compare.setup")
        return
    report.update("compare", {
        "status": "checked", "min_difference": r.min_difference, "tol": r.tol, "eq_tol": r.eq_tol,
        "passed": r.passed, "equality_detected": r.equality_detected,
        "equality_consistent": r.equality_consistent,
        "equal_knots": int(np.sum(r.equal_knots)),
    })
    if not r.passed:
        report.fail("compare.order")
    if not r.equality_consistent:
        report.fail("compare.equality")


def _cmd_consistency(cfg, ens, report, out_dir):
    from .linear import LinearBSDEProblem
    from .verification import time_consistency_check
    driver = cfg.driver()
    if not driver.is_constant:
        raise ConfigurationError("driver.name: the consistency command needs a driver independent of (y, Y)")
    t = time.perf_counter()
    sol = solve_config(cfg, ens)
    zero = AdaptedProcess.zeros(ens)
    problem = LinearBSDEProblem(driver.evaluate(ens, zero, zero), cfg.terminal(ens))
    j1 = cfg["consistency.j1"] or ens.J // 2
    r = time_consistency_check(problem, ens, cfg.basis(ens), cfg.regression_spec(), j1,
                               cfg["basis.ridge"], factor=cfg["verification.bias_factor"], full=sol)
    report.time("consistency", time.perf_counter() - t)
    _solution_entries(report, sol)
    export_csv(sol, os.path.join(out_dir, "solution.csv"))
    report.update("consistency", {"j1": r.j1, "y_distance": r.y_distance,
                                  "Y_distance": r.Y_distance, "tolerance": r.tolerance,
                                  "passed": r.passed})
    if not r.passed:
        report.fail("consistency")


def _cmd_sweep(cfg, report, out_dir):
    from .verification import refinement_study
    t = time.perf_counter()
    tab = refinement_study(
        cfg["sweep.oracle"], cfg["sweep.J_list"], cfg["sweep.N_list"], cfg["sweep.degrees"],
        T=cfg["grid.T"], seed=cfg["ensemble.seed"], spec=cfg.regression_spec(),
        cell_size=cfg["basis.cell_size"], state_degree=cfg["basis.degree"],
        n_tests=cfg["sweep.n_tests"], test_seed=cfg["verification.seed"],
        model=cfg.model(), J_N=cfg["sweep.J_N"])
    report.time("sweep", time.perf_counter() - t)
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "J", "N", "degree", "y_error", "Y_error", "se_mean"])
        for k, r in enumerate(tab.rows):
            se = float(np.mean(r.se)) if r.se else float("nan")
            w.writerow([r.kind, r.J, r.N, r.degree, format(r.y_error, ".17g"),
                        format(r.Y_error, ".17g"), format(se, ".17g")])
            report.update(f"sweep.row{k:02d}", {"kind": r.kind, "J": r.J, "N": r.N,
                                                 "degree": r.degree, "y_error": r.y_error,
                                                 "Y_error": r.Y_error, "se_mean": se})
    flags = {"J_monotone": tab.J_monotone, "N_scaling_ok": tab.N_scaling_ok,
             "m_monotone": tab.m_monotone}
    report.update("sweep", flags)
    for k, ok in flags.items():
        if not ok:
            report.fail(f"sweep.{k}")


def _cmd_cache(cfg, report, out_dir):
    from .cache import cache_load, cache_save
    path = cfg["ensemble.cache"] or os.path.join(out_dir, "ensemble.bin")
    t = time.perf_counter()
    ens = cfg.replace(**{"ensemble.cache": path}).ensemble()
    if not os.path.exists(path):
        cache_save(ens, path)
    back = cache_load(path)
    report.time("cache", time.perf_counter() - t)
    report.update("cache", {"path": os.path.basename(path), "N": ens.N, "J": ens.J,
                            "seed": ens.seed, "model": ens.model.kind,
                            "bytes": os.path.getsize(path), "round_trip": back.same_scenarios(ens)})
    if not back.same_scenarios(ens):
        report.fail("cache.round_trip")


COMMANDS = ("solve", "verify", "compare", "consistency", "sweep", "cache")


def run_config(config, command="verify", out_dir=".", seed_override=None):
    """Execute ``command`` for a configuration (path or :class:`RunConfig`).

    Writes ``report.txt`` plus CSV outputs into ``out_dir`` and returns the
    :class:`RunReport`.  Solver failures are recorded in the report (and make
    ``exit_code`` nonzero); configuration errors propagate.
    """
    from .config import RunConfig
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r} (known: {', '.join(COMMANDS)})")
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_file(config)
    if seed_override is not None:
        cfg = cfg.with_seed(seed_override)
    os.makedirs(out_dir, exist_ok=True)
    report = RunReport(command)
    for k, v in cfg.echo():
        if k != "ensemble.cache":
            report.add(f"config.{k}", v)
    t0 = time.perf_counter()
    try:
        if command == "sweep":
            _cmd_sweep(cfg, report, out_dir)
        elif command == "cache":
            _cmd_cache(cfg, report, out_dir)
        else:
            t = time.perf_counter()
            ens = cfg.ensemble()
            report.time("ensemble", time.perf_counter() - t)
            if command in ("solve", "verify"):
                _cmd_solve(cfg, ens, report, out_dir, verify=command == "verify")
            elif command == "compare":
                _cmd_compare(cfg, ens, report, out_dir)
            else:
                _cmd_consistency(cfg, ens, report, out_dir)
    except SOLVER_ERRORS as exc:
        report.add("error.type", type(exc).__name__)
        report.add("error.message", str(exc))
        report.fail("solver")
    report.time("total", time.perf_counter() - t0)
    report.write(os.path.join(out_dir, "report.txt"))
    return report
