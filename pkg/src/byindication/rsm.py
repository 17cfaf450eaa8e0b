"""Risk-set matching: a comparison that needs no model for indication times.

Each treated unit, at its treatment day ``t``, is paired with the
not-yet-treated unit whose estimated probability of treatment at ``t`` is
closest to its own.  Outcomes of both are measured from ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression

from .cohort import Cohort, build_design, cohort_standardizations, id_sort_key
from .effects import HORIZON, format_percent, survival_outcome


@dataclass
class RsmRow:
    window: int
    n_treated: int
    n_matched: int
    surv_treated: float
    surv_control: float
    difference: float
    pairs: list[tuple[str, str, int]]


def _risk_set(units, t: int) -> np.ndarray:
    """Indices of units untreated through day ``t``, alive and followed at ``t``."""
    out = []
    for j, u in enumerate(units):
        if u.treated and u.indication_day <= t:
            continue
        if u.death_day is not None and u.death_day <= t:
            continue
        if u.followup_end_day < t:
            continue
        out.append(j)
    return np.array(out, dtype=np.int64)


def _scores(X, times, risk_sets, treated_at) -> list[np.ndarray]:
    """Fit P(treated at t | covariates at t) on the pooled risk sets.

    Returns for each time the scores of ``treated_at[k] + risk_sets[k]`` in
    that order.
    """
    rows, labels = [], []
    for t, rs, tr in zip(times, risk_sets, treated_at):
        idx = np.concatenate([tr, rs])
        rows.append(X[idx, t])
        labels.append(np.r_[np.ones(len(tr)), np.zeros(len(rs))])
    A = np.vstack(rows)
    y = np.concatenate(labels)
    if len(np.unique(y)) < 2 or A.shape[1] == 0:
        return [np.full(len(tr) + len(rs), 0.5) for tr, rs in zip(treated_at, risk_sets)]
    model = LogisticRegression(max_iter=1000)
    model.fit(A, y)
    p = model.predict_proba(A)[:, 1]
    out, k = [], 0
    for tr, rs in zip(treated_at, risk_sets):
        m = len(tr) + len(rs)
        out.append(p[k:k + m])
        k += m
    return out


def risk_set_match(cohort: Cohort, windows, horizon: int = HORIZON,
                   baseline=None, time_varying=None) -> list[RsmRow]:
    """Greedy 1:1 risk-set matching without replacement, one table row per window.

    Treated units are processed by ascending treatment day (then id); ties
    in score go to the smallest id.  A treated unit whose risk set is empty
    is left unmatched and excluded from both rates.
    """
    windows = [int(k) for k in windows]
    units = list(cohort)
    bnames = list(cohort.baseline_names if baseline is None else baseline)
    vnames = list(cohort.visit_names if time_varying is None else time_varying)
    bstd, vstd = cohort_standardizations(cohort)
    X = build_design(cohort, max(windows), intercept=False,
                     baseline_cols=[cohort.baseline_names.index(n) for n in bnames],
                     visit_cols=[cohort.visit_names.index(n) for n in vnames],
                     baseline_std=bstd, visit_std=vstd)
    rank = {j: id_sort_key(u.unit_id) for j, u in enumerate(units)}
    risk_cache: dict[int, np.ndarray] = {}
    rows = []
    for K in windows:
        treated = sorted((j for j, u in enumerate(units) if u.treated and u.indication_day <= K),
                         key=lambda j: (units[j].indication_day, rank[j]))
        times = sorted({units[j].indication_day for j in treated})
        by_time = {t: [j for j in treated if units[j].indication_day == t] for t in times}
        for t in times:
            if t not in risk_cache:
                risk_cache[t] = _risk_set(units, t)
        risk = {t: risk_cache[t] for t in times}
        score_list = _scores(X, times, [risk[t] for t in times],
                             [np.array(by_time[t], dtype=np.int64) for t in times])
        scores = {}
        for t, sc in zip(times, score_list):
            idx = np.concatenate([np.array(by_time[t], dtype=np.int64), risk[t]])
            scores[t] = dict(zip(idx.tolist(), sc.tolist()))
        used: set[int] = set()
        pairs, y1, y0 = [], [], []
        for i in treated:
            t = units[i].indication_day
            cand = sorted((j for j in risk[t] if j not in used), key=lambda j: rank[j])
            if not cand:
                continue
            s_i = scores[t][i]
            dist = np.abs(np.array([scores[t][j] for j in cand]) - s_i)
            j = cand[int(np.argmin(dist))]
            used.add(j)
            pairs.append((units[i].unit_id, units[j].unit_id, t))
            y1.append(survival_outcome(units[i], t, horizon))
            y0.append(survival_outcome(units[j], t, horizon))
        r1 = _rate(y1)
        r0 = _rate(y0)
        rows.append(RsmRow(K, len(treated), len(pairs), r1, r0, r1 - r0, pairs))
    return rows


def _rate(values) -> float:
    det = [v for v in values if v is not None]
    return float(np.mean(det)) if det else float("nan")


RSM_COLUMNS = ["window", "n_treated", "n_matched", "surv_treated", "surv_control", "difference"]


def format_rsm_row(window: int, surv_treated: float, surv_control: float) -> list[str]:
    """A printable row: window label and the two rates with their difference."""
    return [f"{window} Days", format_percent(surv_treated), format_percent(surv_control),
            format_percent(surv_treated - surv_control)]


def format_rsm_table(rows: list[RsmRow]) -> list[list[str]]:
    return [format_rsm_row(r.window, r.surv_treated, r.surv_control) for r in rows]
