"""Run configuration: flat key-value text with section headers.

Sections: [scenario] (horizon, withdrawal bounds, fee, tail level, ...),
[model] (jump-diffusion parameters), [solver] (grid and search sizes) and
[run] (paths, seed, blocksize, output directory).  Every output table embeds
the config fingerprint and the seed, so re-running a command with the same
config reproduces byte-identical numbers.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .market import ModelParams
from .mortality import MortalityTable
from .scenario import Scenario, default_mortality_table


def fingerprint_for(scenario: Scenario, params: ModelParams) -> str:
    """Stable short hash of the scenario and model (not solver resolution)."""
    blob = json.dumps({"scenario": scenario.to_dict(),
                       "model": asdict(params)},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SolverSettings:
    grid: int = 1024
    n_q: int = 41
    n_p: int = 101
    scan_shrink: int = 4
    wstar_tol: float = 0.5

    def __post_init__(self):
        if self.grid < 4 or (self.grid & (self.grid - 1)) != 0:
            raise ValueError("grid size must be a power of two")
        if self.n_q < 2 or self.n_p < 2:
            raise ValueError("need at least two control candidates per search")


@dataclass
class RunSettings:
    paths: int = 256_000
    seed: int = 20170815
    blocksize_years: float = 2.0
    market_data: str = "builtin"
    outdir: str = "out"
    kappas: tuple = (0.15, 0.17, 0.18, 0.185, 0.2, 0.25, 0.3, 0.5, 1.0, 10.0)
    p_grid: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    q_const: float = 40.0
    g_sd: float = 0.0
    figures: bool = False

    def __post_init__(self):
        if self.paths < 1 or self.seed is None:
            raise ValueError("run block needs positive paths and a seed")
        if self.blocksize_years <= 0:
            raise ValueError("blocksize must be positive")


@dataclass
class RunConfig:
    scenario: Scenario
    params: ModelParams
    solver: SolverSettings
    run: RunSettings

    @property
    def fingerprint(self) -> str:
        return fingerprint_for(self.scenario, self.params)


def default_config_path() -> Path:
    ref = resources.files("tontine_overlay.data").joinpath("base_case.ini")
    with resources.as_file(ref) as path:
        return path


def _floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse an INI run configuration; `overrides` maps flat CLI names onto it."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    src = Path(path) if path is not None else default_config_path()
    if not src.exists():
        raise FileNotFoundError(f"config file {src} does not exist")
    cp.read(src)
    ov = overrides or {}

    sc = cp["scenario"] if cp.has_section("scenario") else {}
    md = cp["model"] if cp.has_section("model") else {}
    sv = cp["solver"] if cp.has_section("solver") else {}
    rn = cp["run"] if cp.has_section("run") else {}

    def get(section, key, cast, default):
        if key in ov and ov[key] is not None:
            return ov[key]
        if key in section:
            return cast(section[key])
        return default

    kappa_raw = get(sc, "kappa", str, "0.185")
    kappa = math.inf if str(kappa_raw).strip().lower() in ("inf", "infinite") \
        else float(kappa_raw)

    mort_file = get(sc, "mortality_file", str, "builtin")
    tontine = get(sc, "tontine", lambda s: s.strip().lower() in ("1", "true", "yes"), True)
    if ov.get("no_tontine"):
        tontine = False
    fee = get(sc, "fee", float, 0.005)
    if ov.get("fee_bps") is not None:
        fee = float(ov["fee_bps"]) / 1e4
    if not tontine:
        fee = 0.0
    mortality = None
    if tontine:
        mortality = (default_mortality_table() if mort_file == "builtin"
                     else MortalityTable.from_csv(mort_file))

    scenario = Scenario(
        w0=get(sc, "w0", float, 1000.0),
        horizon=get(sc, "horizon", float, 30.0),
        m=get(sc, "rebalances", int, 30),
        q_min=get(sc, "q_min", float, 40.0),
        q_max=get(sc, "q_max", float, 80.0),
        alpha=get(sc, "alpha", float, 0.05),
        kappa=kappa,
        epsilon=get(sc, "epsilon", float, -1e-4),
        fee=fee,
        start_age=get(sc, "start_age", int, 65),
        tontine_enabled=tontine,
        mortality=mortality)

    defaults = ModelParams.default()
    params = ModelParams(**{
        name: get(md, name, float, getattr(defaults, name))
        for name in ("mu_s", "sigma_s", "lambda_s", "u_s", "eta1_s", "eta2_s",
                     "mu_b", "sigma_b", "lambda_b", "u_b", "eta1_b", "eta2_b",
                     "rho_sb", "mu_c_b")})

    solver = SolverSettings(
        grid=get(sv, "grid", int, 1024),
        n_q=get(sv, "n_q", int, 41),
        n_p=get(sv, "n_p", int, 101),
        scan_shrink=get(sv, "scan_shrink", int, 4),
        wstar_tol=get(sv, "wstar_tol", float, 0.5))

    run = RunSettings(
        paths=get(rn, "paths", int, 256_000),
        seed=get(rn, "seed", int, 20170815),
        blocksize_years=get(rn, "blocksize_years", float, 2.0),
        market_data=get(rn, "market_data", str, "builtin"),
        outdir=get(rn, "outdir", str, "out"),
        kappas=get(rn, "kappas", _floats, RunSettings.kappas),
        p_grid=get(rn, "p_grid", _floats, RunSettings.p_grid),
        q_const=get(rn, "q_const", float, 40.0),
        g_sd=get(rn, "g_sd", float, 0.0),
        figures=bool(ov.get("figures", False)))
    return RunConfig(scenario, params, solver, run)
