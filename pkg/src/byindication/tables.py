"""Comma-separated output tables and their readers."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pandas as pd

from .sampler import PosteriorDraws


class TableError(ValueError):
    """An output table is missing or malformed."""


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "NA" if np.isnan(v) else repr(v)


def write_rows(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _num(v) for v in row])


def write_draws(draws: PosteriorDraws, directory: Path) -> None:
    """``draws.csv`` with one row per stored draw and ``tmis.csv`` in long form."""
    directory = Path(directory)
    C, S = draws.rho.shape
    p = draws.beta.shape[2]
    header = ["chain", "iter", "rho", "delta0", "delta1"] + [f"beta_{j + 1}" for j in range(p)]
    rows = ([c + 1, int(draws.iteration[s]), draws.rho[c, s], draws.delta0[c, s], draws.delta1[c, s]]
            + list(draws.beta[c, s]) for c in range(C) for s in range(S))
    write_rows(directory / "draws.csv", header, rows)
    n0 = len(draws.untreated_ids)
    frame = pd.DataFrame({
        "chain": np.repeat(np.arange(1, C + 1), S * n0),
        "iter": np.tile(np.repeat(draws.iteration, n0), C),
        "unit_id": np.tile(np.asarray(draws.untreated_ids, dtype=object), C * S),
        "t_mis": draws.t_mis.reshape(-1).astype(np.int64),
    })
    frame.to_csv(directory / "tmis.csv", index=False, lineterminator="\n")
    meta = [["K", str(draws.K)], ["beta_names", ";".join(draws.beta_names)]]
    meta += [[f"acceptance_chain{c + 1}", repr(float(a))] for c, a in enumerate(draws.acceptance)]
    if draws.rho_acceptance is not None:
        meta += [[f"rho_acceptance_chain{c + 1}", repr(float(a))]
                 for c, a in enumerate(draws.rho_acceptance)]
    write_rows(directory / "run.csv", ["key", "value"], meta)


def read_draws(directory: Path) -> PosteriorDraws:
    directory = Path(directory)
    try:
        d = pd.read_csv(directory / "draws.csv", float_precision="round_trip")
        t = pd.read_csv(directory / "tmis.csv", dtype={"unit_id": str})
        meta = dict(pd.read_csv(directory / "run.csv", dtype=str, keep_default_na=False).values)
    except (FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise TableError(f"cannot read draws in {directory}: {exc}") from None
    need = {"chain", "iter", "rho", "delta0", "delta1"}
    if not need <= set(d.columns) or not {"chain", "iter", "unit_id", "t_mis"} <= set(t.columns):
        raise TableError(f"draw tables in {directory} lack required columns")
    chains = sorted(d["chain"].unique())
    C = len(chains)
    if C == 0 or len(d) % C:
        raise TableError("draw table has unequal chain lengths")
    S = len(d) // C
    bcols = [c for c in d.columns if c.startswith("beta_")]
    d = d.sort_values(["chain", "iter"], kind="stable")
    ids = list(dict.fromkeys(t["unit_id"]))
    n0 = len(ids)
    if len(t) != C * S * n0:
        raise TableError("imputed-time table does not match the draw table")
    t = t.sort_values(["chain", "iter"], kind="stable")
    try:
        K = int(meta["K"])
    except (KeyError, ValueError):
        raise TableError("run metadata lacks the window") from None
    acc = np.array([float(meta.get(f"acceptance_chain{c + 1}", "nan")) for c in range(C)])
    racc = np.array([float(meta.get(f"rho_acceptance_chain{c + 1}", "nan")) for c in range(C)])
    names = meta.get("beta_names", "")
    return PosteriorDraws(
        K=K,
        rho=d["rho"].to_numpy().reshape(C, S),
        delta0=d["delta0"].to_numpy().reshape(C, S),
        delta1=d["delta1"].to_numpy().reshape(C, S),
        beta=d[bcols].to_numpy().reshape(C, S, len(bcols)),
        t_mis=t["t_mis"].to_numpy().reshape(C, S, n0).astype(np.int32),
        iteration=d["iter"].to_numpy()[:S],
        untreated_ids=ids,
        beta_names=names.split(";") if names else [f"beta_{j + 1}" for j in range(len(bcols))],
        acceptance=acc,
        rho_acceptance=racc,
    )


def write_diagnostics(rows, path: Path, n_chains: int) -> None:
    header = ["parameter"] + [f"geweke_z_chain{c + 1}" for c in range(n_chains)]
    with_rhat = n_chains >= 2
    if with_rhat:
        header.append("rhat")
    out = []
    for r in rows:
        line = [r.parameter] + list(r.geweke)
        if with_rhat:
            line.append(r.rhat)
        out.append(line)
    write_rows(path, header, out)


EFFECT_COLUMNS = ["window", "n1", "n0_median", "n0_lo", "n0_hi", "surv_treated",
                  "surv_control", "tau", "tau_lo", "tau_hi"]


def effect_row(e) -> list:
    return [e.window, e.n1, e.n0_median, e.n0_lo, e.n0_hi, e.surv_treated, e.surv_control,
            e.tau_mean, e.tau_lo, e.tau_hi]


def read_table(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype={"unit_id": str, "treated_id": str, "control_id": str},
                           float_precision="round_trip")
    except (FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise TableError(f"cannot read {path}: {exc}") from None

