"""The steps behind each command-line subcommand."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import Cohort, cohort_standardizations, load_cohort, write_cohort
from .config import RunConfig
from .diagnostics import DiagnosticRow, diagnose_traces, dic, thinned_params
from .effects import estimate_ate, estimate_rmst
from .matching import MatchResult, balance_table, match_cohort
from .rsm import RSM_COLUMNS, risk_set_match
from .sampler import PosteriorDraws, prepare_window, run_chain
from .spline import curve_bands, smooth_curve
from .synth import demo_params, generate_cohort, true_ate_from_outcomes, write_truth
from .tables import (EFFECT_COLUMNS, TableError, effect_row, read_draws, read_table,
                     write_diagnostics, write_draws, write_rows)


class ConvergenceError(RuntimeError):
    """Some R-hat exceeds the configured limit."""


RHAT_NOTE = "rhat omitted: the Gelman-Rubin statistic needs at least two chains\n"


def load_inputs(cfg: RunConfig) -> Cohort:
    for path in (cfg.units, cfg.visits):
        if not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")
    cohort = load_cohort(cfg.units, cfg.visits)
    for name in cfg.baseline or ():
        if name not in cohort.baseline_names:
            raise TableError(f"unknown baseline covariate {name!r}")
    for name in cfg.time_varying or ():
        if name not in cohort.visit_names:
            raise TableError(f"unknown time-varying covariate {name!r}")
    return cohort


def truth_path(cfg: RunConfig) -> Path:
    return cfg.truth if cfg.truth is not None else cfg.out_dir / "truth.csv"


def cmd_simulate(cfg: RunConfig, seed: int) -> dict[str, Path]:
    """Write a synthetic cohort, its truth table and the true effect per window."""
    cohort, truth = generate_cohort(cfg.n_units, cfg.sim_window, demo_params(), seed)
    tpath = truth_path(cfg)
    for p in (cfg.units, cfg.visits, tpath):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    write_cohort(cohort, cfg.units, cfg.visits)
    write_truth(truth, tpath)
    epath = tpath.with_name(tpath.stem + "_effects.csv")
    rows = [[K, true_ate_from_outcomes(truth.T, truth.y0, truth.y1, K, cfg.horizon)]
            for K in cfg.windows if K <= cfg.sim_window]
    write_rows(epath, ["window", "true_ate"], rows)
    return {"units": cfg.units, "visits": cfg.visits, "truth": tpath, "effects": epath}


def cmd_validate(cfg: RunConfig) -> dict[str, int]:
    cohort = load_inputs(cfg)
    n1 = sum(u.treated for u in cohort)
    return {"units": len(cohort), "treated": n1, "untreated": len(cohort) - n1,
            "baseline": len(cohort.baseline_names), "time_varying": len(cohort.visit_names)}


def _balance_rows(cohort: Cohort, cfg: RunConfig, control_ids) -> list:
    names = list(cfg.baseline or cohort.baseline_names)
    idx = [cohort.baseline_names.index(n) for n in names]
    by_id = cohort.by_id()
    tr = np.array([u.baseline[idx] for u in cohort if u.treated]).reshape(-1, len(idx))
    co = np.array([by_id[i].baseline[idx] for i in control_ids]).reshape(-1, len(idx))
    return balance_table(tr, co, names)


def cmd_match(cfg: RunConfig, cohort: Cohort | None = None) -> MatchResult:
    """Match treated to untreated units and write ``matches.csv`` and ``balance.csv``."""
    cohort = load_inputs(cfg) if cohort is None else cohort
    result = match_cohort(cohort, cfg.baseline)
    write_rows(cfg.out_dir / "matches.csv", ["treated_id", "control_id", "distance"], result.pairs)
    rows = _balance_rows(cohort, cfg, result.retained_controls)
    write_rows(cfg.out_dir / "balance.csv", ["covariate", "mean_treated", "mean_control", "smd"],
               [[r.covariate, r.mean_treated, r.mean_control, r.smd] for r in rows])
    return result


def _pool_ids(cohort: Cohort, control_ids) -> list[str]:
    keep = set(control_ids)
    return [u.unit_id for u in cohort if u.treated or u.unit_id in keep]


def analysis_pool(cfg: RunConfig, cohort: Cohort) -> Cohort:
    """Treated units plus matched controls, or the whole cohort without matching."""
    if not cfg.match:
        return cohort
    path = cfg.out_dir / "matches.csv"
    if not path.is_file():
        raise TableError(f"matches not found: {path}")
    table = read_table(path)
    return cohort.subset(_pool_ids(cohort, table["control_id"].astype(str)))


@dataclass
class WindowFit:
    K: int
    draws: PosteriorDraws
    diagnostics: list[DiagnosticRow]
    dic: object
    max_rhat: float = float("nan")


def fit_window(pool: Cohort, K: int, cfg: RunConfig, threads: int = 1) -> WindowFit:
    std = cohort_standardizations(pool) if cfg.standardize else None
    data = prepare_window(pool, K, baseline=cfg.baseline, time_varying=cfg.time_varying,
                          standardize=cfg.standardize, standardization=std)
    draws = run_chain(data, cfg.mcmc(K), cfg.prior(data.p), threads=threads)
    rows = diagnose_traces(draws.scalar_traces())
    d = dic(thinned_params(draws, cfg.dic_draws), data.records(), data.X, K,
            cfg.mc_paths, cfg.seed)
    rhats = [r.rhat for r in rows if r.rhat is not None and math.isfinite(r.rhat)]
    return WindowFit(K, draws, rows, d, max(rhats) if rhats else float("nan"))


def write_window(fit: WindowFit, cfg: RunConfig) -> Path:
    out = cfg.window_dir(fit.K)
    out.mkdir(parents=True, exist_ok=True)
    write_draws(fit.draws, out)
    write_diagnostics(fit.diagnostics, out / "diagnostics.csv", fit.draws.n_chains)
    note = out / "diagnostics_note.txt"
    if fit.draws.n_chains < 2:
        note.write_text(RHAT_NOTE)
    elif note.exists():
        note.unlink()
    d = fit.dic
    write_rows(out / "dic.csv", ["dic", "p_d", "mean_deviance", "deviance_at_mean", "n_draws",
                                 "mc_paths"],
               [[d.dic, d.p_d, d.mean_deviance, d.deviance_at_mean, d.n_draws, cfg.mc_paths]])
    return out


def cmd_fit(cfg: RunConfig, threads: int = 1, allow_unconverged: bool = False,
            log=None) -> list[WindowFit]:
    """Match (unless disabled), then fit every window and write its outputs."""
    cohort = load_inputs(cfg)
    if cfg.match:
        cmd_match(cfg, cohort)
    pool = analysis_pool(cfg, cohort)
    fits, failed = [], []
    for K in cfg.windows:
        fit = fit_window(pool, K, cfg, threads)
        write_window(fit, cfg)
        fits.append(fit)
        if log is not None:
            log(f"window {K}: max rhat {fit.max_rhat:.3f}, DIC {fit.dic.dic:.1f}")
        if math.isfinite(fit.max_rhat) and fit.max_rhat > cfg.rhat_max:
            failed.append(K)
    if failed and not allow_unconverged:
        raise ConvergenceError(f"R-hat above {cfg.rhat_max} in windows {failed}")
    return fits


@dataclass
class Report:
    effects: list
    rmst: list
    rsm: list
    curve: np.ndarray
    balance: list


def cmd_report(cfg: RunConfig) -> Report:
    """Effects per window, the risk-set comparison, the smoothed curve and balance."""
    cohort = load_inputs(cfg)
    pool = analysis_pool(cfg, cohort)
    effects, rmst = [], []
    for K in cfg.windows:
        draws = read_draws(cfg.window_dir(K))
        if draws.K != K:
            raise TableError(f"draws in {cfg.window_dir(K)} were fitted for window {draws.K}")
        effects.append(estimate_ate(draws, pool, K, cfg.horizon))
        rmst.append(estimate_rmst(draws, pool, K, cfg.horizon))
    write_rows(cfg.out_dir / "effects.csv", EFFECT_COLUMNS, [effect_row(e) for e in effects])
    write_rows(cfg.out_dir / "effects_rmst.csv", EFFECT_COLUMNS, [effect_row(e) for e in rmst])

    rsm_rows = cmd_rsm(cfg, cohort)

    curve = np.zeros((0, 4))
    x = np.array(cfg.windows, dtype=float)
    y = np.array([e.tau_mean for e in effects])
    if len(x) >= 3 and np.all(np.isfinite(y)):
        grid, val = smooth_curve(x, y, cfg.spline_lambda)
        lo, hi = curve_bands(x, [e.tau_draws for e in effects], cfg.spline_lambda, grid)
        curve = np.column_stack([grid, val, lo, hi])
    write_rows(cfg.out_dir / "curve.csv", ["day", "tau_smooth", "lo", "hi"],
               [[int(r[0]), r[1], r[2], r[3]] for r in curve])

    controls = [u.unit_id for u in pool if not u.treated]
    balance = _balance_rows(cohort, cfg, controls) if controls else []
    write_rows(cfg.out_dir / "balance.csv", ["covariate", "mean_treated", "mean_control", "smd"],
               [[r.covariate, r.mean_treated, r.mean_control, r.smd] for r in balance])
    return Report(effects, rmst, rsm_rows, curve, balance)


def cmd_rsm(cfg: RunConfig, cohort: Cohort | None = None) -> list:
    cohort = load_inputs(cfg) if cohort is None else cohort
    rows = risk_set_match(cohort, cfg.windows, cfg.horizon, cfg.baseline, cfg.time_varying)
    write_rows(cfg.out_dir / "rsm.csv", RSM_COLUMNS,
               [[r.window, r.n_treated, r.n_matched, r.surv_treated, r.surv_control, r.difference]
                for r in rows])
    return rows


def cmd_diagnose(cfg: RunConfig) -> dict[int, list[DiagnosticRow]]:
    """Recompute diagnostics from the stored draws of every window."""
    out = {}
    for K in cfg.windows:
        draws = read_draws(cfg.window_dir(K))
        out[K] = diagnose_traces(draws.scalar_traces())
    return out


def read_true_effects(path: Path) -> dict[int, float]:
    with open(path, newline="") as fh:
        return {int(r["window"]): float(r["true_ate"]) for r in csv.DictReader(fh)}

