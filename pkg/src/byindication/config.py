"""Flat ``key = value`` run configuration.

Blank lines and text after ``#`` are ignored; lists are comma-separated.
Relative paths are resolved against the directory of the config file.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .model import PriorSpec
from .sampler import McmcConfig

DEFAULT_WINDOWS = (14, 30, 60, 90, 120, 180, 270, 365)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    units: Path = Path("data/units.csv")
    visits: Path = Path("data/visits.csv")
    truth: Path | None = None
    out_dir: Path = Path("out")
    baseline: tuple[str, ...] | None = None
    time_varying: tuple[str, ...] | None = None
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    horizon: int = 365
    spline_lambda: float = 1000.0
    match: bool = True
    standardize: bool = True
    # priors
    rho_mean: float = 0.0
    rho_sd: float = 0.5
    beta_mean: float = 0.0
    beta_sd: float = 3.0
    delta0_mean: float = 0.0
    delta0_sd: float = 2.0
    delta1_shape: float = 2.0
    delta1_rate: float = 50.0
    # sampler
    chains: int = 4
    iters: int = 20_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    step_delta0: float = 0.3
    step_delta1: float = 0.5
    step_rho: float = 0.05
    rhat_max: float = 1.1
    # likelihood evaluations for DIC
    mc_paths: int = 200
    dic_draws: int = 50
    # simulation
    n_units: int = 1000
    sim_window: int = 365

    def __post_init__(self):
        w = list(self.windows)
        if not w or any(k <= 0 for k in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ConfigError("windows must be strictly increasing positive integers")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.spline_lambda < 0:
            raise ConfigError("spline_lambda must be non-negative")
        if self.n_units < 1:
            raise ConfigError("n_units must be positive")
        if self.sim_window < 1:
            raise ConfigError("sim_window must be positive")
        if self.mc_paths < 1:
            raise ConfigError("mc_paths must be positive")
        try:
            self.mcmc(self.windows[0])
            self.prior(1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mcmc(self, K: int) -> McmcConfig:
        return McmcConfig(K=K, n_chains=self.chains, n_iters=self.iters, burn_in=self.burn_in,
                          thin=self.thin, seed=self.seed, step_delta0=self.step_delta0,
                          step_delta1=self.step_delta1, step_rho=self.step_rho)

    def prior(self, p: int) -> PriorSpec:
        return PriorSpec(rho_mean=self.rho_mean, rho_sd=self.rho_sd,
                         beta_mean=np.full(p, self.beta_mean),
                         beta_cov=np.eye(p) * self.beta_sd ** 2,
                         delta0_mean=self.delta0_mean, delta0_sd=self.delta0_sd,
                         delta1_gamma_shape=self.delta1_shape,
                         delta1_gamma_rate=self.delta1_rate)

    def window_dir(self, K: int) -> Path:
        return self.out_dir / str(K)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_PATHS = {"units", "visits", "truth", "out_dir"}
_BOOLS = {"match", "standardize"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw: str, default, base: Path):
    if key in _PATHS:
        if raw == "":
            return None
        p = Path(raw)
        return p if p.is_absolute() else base / p
    if key in _BOOLS:
        if raw.lower() in _TRUE:
            return True
        if raw.lower() in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key == "windows":
        try:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"windows: expected integers, got {raw!r}") from None
    if key in ("baseline", "time_varying"):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    try:
        return type(default)(raw) if not isinstance(default, bool) else raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str, base: Path | str = ".") -> RunConfig:
    base = Path(base)
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, getattr(defaults, key), base)
    for key in ("units", "visits", "out_dir"):
        values.setdefault(key, base / getattr(defaults, key))
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Path | str | None) -> RunConfig:
    if path is None:
        return parse_config("", Path.cwd())
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), path.parent)


def format_config(cfg: RunConfig) -> str:
    """Render ``cfg`` in the file format (paths as given)."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"

