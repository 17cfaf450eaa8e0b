"""Causal effect estimates from imputed indication times.

Within every posterior draw the untreated units whose imputed indication
falls in the window are the true controls.  The per-draw effect is the
difference between the survival rates of treated units and true controls,
with survival measured from the (observed or imputed) indication day.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, CohortUnit

HORIZON = 365


def classify_controls(t_mis, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks ``(true_controls, ineligible)`` for one draw."""
    t = np.asarray(t_mis)
    true = (t >= 1) & (t <= K)
    return true, ~true


def effective_day(day: int) -> int:
    """Indication day on the model's grid, where day 0 counts as day 1."""
    return max(int(day), 1)


def survival_outcome(unit: CohortUnit, T: int, horizon: int = HORIZON) -> int | None:
    """1 if alive ``horizon`` days after ``T``, 0 if dead by then, else ``None``.

    ``None`` marks follow-up ending before the horizon without a death.
    """
    if T < 0 or T > unit.followup_end_day:
        raise ValueError(f"unit {unit.unit_id}: day {T} outside follow-up")
    if unit.death_day is not None and unit.death_day - T <= horizon:
        return 0
    if unit.death_day is not None or unit.followup_end_day - T >= horizon:
        return 1
    return None


def survival_days(unit: CohortUnit, T: int, horizon: int = HORIZON) -> float:
    """Survival time after ``T`` restricted to ``horizon``, NaN when censored earlier."""
    if T < 0 or T > unit.followup_end_day:
        raise ValueError(f"unit {unit.unit_id}: day {T} outside follow-up")
    if unit.death_day is not None:
        return float(min(unit.death_day - T, horizon))
    if unit.followup_end_day - T >= horizon:
        return float(horizon)
    return float("nan")


def rate_difference(treated_rate: float, control_rate: float) -> float:
    return treated_rate - control_rate


def _outcome_table(units: list[CohortUnit], K: int, horizon: int, fn) -> np.ndarray:
    """``out[i, t]`` is the outcome of unit ``i`` if indicated on day ``t``.

    Column 0 is unused (NaN); days past follow-up are NaN.
    """
    out = np.full((len(units), K + 1), np.nan)
    for i, u in enumerate(units):
        for t in range(1, min(K, u.followup_end_day) + 1):
            y = fn(u, t, horizon)
            out[i, t] = np.nan if y is None else y
    return out


@dataclass
class EffectEstimate:
    """Posterior summary of the effect for one window or indication interval."""

    window: int
    interval: tuple[int, int]
    n1: int
    n0_median: float
    n0_lo: float
    n0_hi: float
    surv_treated: float
    surv_control: float
    tau_mean: float
    tau_median: float
    tau_lo: float
    tau_hi: float
    n_draws_used: int
    n_draws_skipped: int
    tau_draws: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    control_rate_draws: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    n0_draws: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def tau(self) -> float:
        return self.tau_mean


def _draw_matrix(draws) -> np.ndarray:
    t = np.asarray(draws.t_mis)
    return t.reshape(-1, t.shape[-1])


def _per_draw(draws, cohort: Cohort, K: int, a: int, b: int, horizon: int, fn):
    by_id = cohort.by_id()
    treated = [u for u in cohort if u.treated and u.indication_day is not None
               and a <= effective_day(u.indication_day) <= b and effective_day(u.indication_day) <= K]
    y_t = np.array([np.nan if (v := fn(u, u.indication_day, horizon)) is None else v
                    for u in treated], dtype=float)
    controls = [by_id[i] for i in draws.untreated_ids]
    kmax = int(draws.K)
    table = _outcome_table(controls, kmax, horizon, fn)
    T = _draw_matrix(draws)
    if T.shape[1] != len(controls):
        raise ValueError("draws do not match the untreated units")
    lo, hi = max(a, 1), min(b, K)
    S = T.shape[0]
    n0 = np.empty(S, dtype=np.int64)
    c_rate = np.full(S, np.nan)
    for start in range(0, S, 2000):
        Tc = T[start:start + 2000]
        in_group = (Tc >= lo) & (Tc <= hi)
        n0[start:start + 2000] = in_group.sum(axis=1)
        if not len(controls):
            continue
        y_c = np.take_along_axis(table, np.where(in_group, Tc, 0).T, axis=1).T
        ok = in_group & ~np.isnan(y_c)
        cnt = ok.sum(axis=1)
        sums = np.where(ok, y_c, 0.0).sum(axis=1)
        c_rate[start:start + 2000] = np.where(cnt > 0, sums / np.maximum(cnt, 1), np.nan)
    det = y_t[~np.isnan(y_t)]
    t_rate = float(det.mean()) if len(det) else float("nan")
    return len(treated), t_rate, c_rate, n0


def _summarize(K, a, b, n1, t_rate, c_rate, n0) -> EffectEstimate:
    used = ~np.isnan(c_rate)
    tau = rate_difference(t_rate, c_rate[used])
    nan = float("nan")
    q = (lambda v, p: float(np.quantile(v, p))) if np.isfinite(t_rate) and used.any() else (lambda v, p: nan)
    return EffectEstimate(
        window=K, interval=(a, b), n1=n1,
        n0_median=float(np.median(n0)), n0_lo=float(np.quantile(n0, 0.025)),
        n0_hi=float(np.quantile(n0, 0.975)),
        surv_treated=t_rate,
        surv_control=float(c_rate[used].mean()) if used.any() else nan,
        tau_mean=float(tau.mean()) if len(tau) else nan,
        tau_median=q(tau, 0.5), tau_lo=q(tau, 0.025), tau_hi=q(tau, 0.975),
        n_draws_used=int(used.sum()), n_draws_skipped=int((~used).sum()),
        tau_draws=tau, control_rate_draws=c_rate, n0_draws=n0)


def estimate_cate(draws, cohort: Cohort, interval: tuple[int, int], horizon: int = HORIZON,
                  K: int | None = None) -> EffectEstimate:
    """Effect among units whose indication day lies in ``interval = (a, b)``.

    Treated units use their observed day and controls their imputed day.
    Indeterminate outcomes are left out of both rates, and draws without
    any determinate control outcome are skipped.
    """
    a, b = int(interval[0]), int(interval[1])
    K = int(draws.K) if K is None else int(K)
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    if K > draws.K:
        raise ValueError("window exceeds the fitted window")
    n1, t_rate, c_rate, n0 = _per_draw(draws, cohort, K, a, b, horizon, survival_outcome)
    return _summarize(K, a, b, n1, t_rate, c_rate, n0)


def estimate_ate(draws, cohort: Cohort, K: int | None = None,
                 horizon: int = HORIZON) -> EffectEstimate:
    """Average effect over all units indicated within ``[0, K]``."""
    K = int(draws.K) if K is None else int(K)
    return estimate_cate(draws, cohort, (1, K), horizon, K)


def estimate_rmst(draws, cohort: Cohort, K: int | None = None,
                  horizon: int = HORIZON) -> EffectEstimate:
    """Difference in mean survival days restricted to ``horizon`` (an extension).

    Rates in the result are mean restricted survival times instead of
    proportions.
    """
    K = int(draws.K) if K is None else int(K)
    n1, t_mean, c_mean, n0 = _per_draw(draws, cohort, K, 1, K, horizon, survival_days)
    return _summarize(K, 1, K, n1, t_mean, c_mean, n0)


def true_control_counts(draws, K: int) -> np.ndarray:
    """Per-draw number of untreated units imputed as indicated by day ``K``."""
    T = _draw_matrix(draws)
    return np.sum((T >= 1) & (T <= K), axis=1)


def format_percent(value: float) -> str:
    if not np.isfinite(value):
        return "NA"
    # adding 0.0 turns a rounded -0.0 into 0.0
    return f"{round(100 * value, 1) + 0.0:.1f}%"

