"""Synthetic cohorts drawn from the indication-time model with known truth.

Covariates follow AR(1) Gaussian processes observed at intermittent
visits; the model sees them carried forward to a daily grid, and the
indication process is generated on exactly that grid.  Survival after
indication is geometric with daily hazard
``invlogit(a0 + a1 * Z + a2 * theta_T)``, so both potential outcomes are
recorded for every indicated unit.  Before indication units die at a
constant daily hazard, which stops the indication process.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal, special

from .cohort import CENSORED, Cohort, CohortUnit, load_cohort, locf_index, write_cohort

DEMO_SEED = 20021
DEMO_UNITS = 1000
DEMO_K = 365
DEMO_WINDOWS = (14, 30, 60, 90, 120, 180, 270, 365)
HORIZON = 365


@dataclass(frozen=True)
class GenerativeParams:
    """Parameters of the synthetic data-generating process.

    ``beta`` multiplies the design ``[1, baseline..., time-varying...]``
    (without the leading 1 when ``intercept`` is false), so its length fixes
    the numbers of covariates together with ``n_baseline``.
    """

    rho: float = 0.3
    beta: tuple = (-3.4, 0.5, 0.0, 0.4, 0.0)
    n_baseline: int = 2
    intercept: bool = True
    delta0: float = 1.0
    delta1: float = -0.02
    calendar_span: float = 15.0
    outcome_a0: float = -7.4
    outcome_a1: float = 0.5
    outcome_a2: float = 0.3
    pre_hazard: float = 2e-4
    visit_gap: float = 30.0
    covariate_ar: float = 0.98
    admin_min: int = 200
    admin_max: int = 800

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if self.delta1 > 0:
            raise ValueError("delta1 must be non-positive")
        if not 0 <= self.pre_hazard < 1:
            raise ValueError("pre-indication hazard must lie in [0, 1)")
        if self.n_baseline < 0 or self.n_time_varying < 0:
            raise ValueError("beta is too short for the requested covariates")
        if self.visit_gap < 1 or not 0 <= self.covariate_ar < 1:
            raise ValueError("invalid covariate process settings")
        if self.admin_min < 0 or self.admin_max < self.admin_min:
            raise ValueError("invalid administrative follow-up range")

    @property
    def n_time_varying(self) -> int:
        return len(self.beta) - int(self.intercept) - self.n_baseline

    def outcome_hazard(self, z, theta_T):
        return special.expit(self.outcome_a0 + self.outcome_a1 * z + self.outcome_a2 * theta_T)


@dataclass
class TruthRecord:
    """Latent quantities behind a synthetic cohort.

    ``noise[:, 0]`` is the initial state and ``noise[:, t]`` the innovation on
    day ``t``.  ``T`` is ``CENSORED`` when no indication fires by ``K``; ``Z``,
    ``y0`` and ``y1`` are -1 for such units.  Outcomes are survival days
    after indication.
    """

    unit_ids: list[str]
    K: int
    theta: np.ndarray
    noise: np.ndarray
    psi: np.ndarray
    T: np.ndarray
    Z: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    params: GenerativeParams | None = None
    X: np.ndarray | None = field(default=None, repr=False)

    def true_ate(self, K: int, horizon: int = HORIZON) -> float:
        """Average effect on survival past ``horizon`` among units with T <= K."""
        return true_ate_from_outcomes(self.T, self.y0, self.y1, K, horizon)


def true_ate_from_outcomes(T, y0, y1, K: int, horizon: int = HORIZON) -> float:
    T = np.asarray(T)
    sel = (T >= 1) & (T <= K)
    if not np.any(sel):
        return float("nan")
    s1 = np.asarray(y1)[sel] > horizon
    s0 = np.asarray(y0)[sel] > horizon
    return float(np.mean(s1.astype(float) - s0.astype(float)))


def _geometric(rng, p, size):
    """Days until the first event with daily probability ``p`` (support 1, 2, ...)."""
    p = np.broadcast_to(np.asarray(p, dtype=float), size)
    out = np.full(size, np.iinfo(np.int64).max // 4, dtype=np.int64)
    pos = p > 0
    out[pos] = rng.geometric(p[pos])
    return out


def generate_cohort(n_units: int, K: int, params: GenerativeParams | None = None,
                    seed: int = 0) -> tuple[Cohort, TruthRecord]:
    """Simulate ``n_units`` subjects over indication window ``K``."""
    if n_units < 1:
        raise ValueError("n_units must be positive")
    if K < 1:
        raise ValueError("K must be positive")
    params = GenerativeParams() if params is None else params
    rng = np.random.default_rng(seed)
    n, p0, p1 = n_units, params.n_baseline, params.n_time_varying
    beta = np.asarray(params.beta, dtype=float)

    baseline = rng.standard_normal((n, p0))
    D = rng.uniform(0.0, params.calendar_span, n)

    # covariate processes: unit shift plus a stationary daily AR(1), half the variance each
    phi = params.covariate_ar
    shift = rng.standard_normal((n, 1, p1)) * np.sqrt(0.5)
    innov = rng.standard_normal((n, p1, K + 1)) * np.sqrt(0.5 * (1 - phi ** 2))
    innov[:, :, 0] = rng.standard_normal((n, p1)) * np.sqrt(0.5)
    daily = signal.lfilter([1.0], [1.0, -phi], innov, axis=-1).transpose(0, 2, 1) + shift

    visit_days = []
    for i in range(n):
        gaps = rng.geometric(1.0 / params.visit_gap, size=int(3 * K / params.visit_gap) + 10)
        days = np.concatenate([[0], np.cumsum(gaps)])
        visit_days.append(days[days <= K])

    X = np.empty((n, K + 1, len(beta)))
    col = 0
    if params.intercept:
        X[:, :, 0] = 1.0
        col = 1
    X[:, :, col:col + p0] = baseline[:, None, :]
    for i in range(n):
        X[i, :, col + p0:] = daily[i, visit_days[i]][locf_index(visit_days[i], K)]
    eta = X @ beta

    noise = rng.standard_normal((n, K + 1))
    theta = signal.lfilter([1.0], [1.0, -params.rho], noise, axis=-1)
    u = rng.random((n, K + 1))
    q = special.ndtr(theta + eta)
    psi = u < q
    psi[:, 0] = False

    pre_death = _geometric(rng, params.pre_hazard, n)
    alive = np.arange(K + 1)[None, :] < pre_death[:, None]
    psi &= alive
    hit = psi.any(axis=1)
    T = np.where(hit, psi.argmax(axis=1), CENSORED)

    pi = special.expit(params.delta0 + params.delta1 * D)
    Zdraw = rng.random(n) < pi
    theta_T = theta[np.arange(n), np.where(hit, T, 0)]
    y0 = _geometric(rng, params.outcome_hazard(0, theta_T), n)
    y1 = _geometric(rng, params.outcome_hazard(1, theta_T), n)
    admin = K + rng.integers(params.admin_min, params.admin_max + 1, n)

    Z = np.where(hit, Zdraw.astype(int), -1)
    y0 = np.where(hit, y0, -1)
    y1 = np.where(hit, y1, -1)
    death = np.where(hit, T + np.where(Z == 1, y1, y0), pre_death)
    followup = np.minimum(death, admin)

    ids = [str(i + 1) for i in range(n)]
    units = []
    for i in range(n):
        treated = bool(hit[i] and Z[i] == 1)
        vd = visit_days[i][visit_days[i] <= followup[i]]
        units.append(CohortUnit(
            unit_id=ids[i],
            treated=treated,
            indication_day=int(T[i]) if treated else None,
            baseline=baseline[i].copy(),
            visit_days=vd.astype(np.int64),
            visit_values=daily[i, vd].copy(),
            death_day=int(death[i]) if death[i] <= admin[i] else None,
            followup_end_day=int(followup[i]),
            exogenous=np.array([D[i]]),
        ))
    cohort = Cohort(units, [f"x0_{j + 1}" for j in range(p0)], [f"v_{j + 1}" for j in range(p1)])
    truth = TruthRecord(ids, K, theta, noise, psi, T.astype(np.int64), Z.astype(np.int64),
                        y0.astype(np.int64), y1.astype(np.int64), params, X)
    return cohort, truth


def write_truth(truth: TruthRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "true_T", "true_Z", "y0", "y1"])
        for i, uid in enumerate(truth.unit_ids):
            w.writerow([uid, int(truth.T[i]),
                        "" if truth.Z[i] < 0 else int(truth.Z[i]),
                        "" if truth.y0[i] < 0 else int(truth.y0[i]),
                        "" if truth.y1[i] < 0 else int(truth.y1[i])])


def read_truth(path) -> dict[str, np.ndarray]:
    """Columns of a truth table; absent values become -1."""
    cols = {"unit_id": [], "true_T": [], "true_Z": [], "y0": [], "y1": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cols["unit_id"].append(row["unit_id"])
            for key in ("true_T", "true_Z", "y0", "y1"):
                cols[key].append(int(row[key]) if row[key] != "" else -1)
    return {k: (v if k == "unit_id" else np.array(v, dtype=np.int64)) for k, v in cols.items()}


def demo_params() -> GenerativeParams:
    return GenerativeParams(rho=0.3, beta=(-4.0, 0.5, -0.3, 0.0, 0.2, 0.4, 0.0, 0.25),
                            n_baseline=4)


def write_demo(directory, seed: int = DEMO_SEED) -> dict[str, Path]:
    """Regenerate the bundled demo files into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cohort, truth = generate_cohort(DEMO_UNITS, DEMO_K, demo_params(), seed)
    paths = {name: directory / f"demo_{name}.csv" for name in ("units", "visits", "truth", "effects")}
    write_cohort(cohort, paths["units"], paths["visits"])
    write_truth(truth, paths["truth"])
    with open(paths["effects"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "true_ate"])
        for K in DEMO_WINDOWS:
            w.writerow([K, repr(truth.true_ate(K, HORIZON))])
    return paths


def demo_paths() -> dict[str, Path]:
    base = resources.files("byindication") / "data"
    return {name: Path(str(base / f"demo_{name}.csv"))
            for name in ("units", "visits", "truth", "effects")}


def demo_dataset() -> tuple[Cohort, dict[str, np.ndarray], dict[int, float]]:
    """The bundled demo cohort, its truth table and true effects per window."""
    paths = demo_paths()
    cohort = load_cohort(paths["units"], paths["visits"])
    truth = read_truth(paths["truth"])
    effects = {}
    with open(paths["effects"], newline="") as fh:
        for row in csv.DictReader(fh):
            effects[int(row["window"])] = float(row["true_ate"])
    return cohort, truth, effects
