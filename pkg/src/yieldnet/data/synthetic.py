"""Seeded synthetic dataset generator with known causal structure.

Yields follow

    base + trend * (year - start)
    + alpha * mean(weekly precipitation over the causal weeks)
    + beta  * county soil latent
    + gamma * relu(mean(weekly max temperature over the heat weeks) - threshold)
    + noise

computed from the *stored* weekly weather arrays, so a model (or an
attribution method) can in principle recover the causal cells exactly. The
generator records the causal metadata alongside the data. Daily weather is
generated first and reduced through :func:`weekly_average`, exercising the
same path real daily data would take.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractViolation
from .preprocess import weekly_average
from .records import make_record

# per-variable seasonal shape: (base level, amplitude, phase day)
_SEASONAL = (
    (4.0, 2.0, 80.0),    # precipitation
    (15.0, 8.0, 80.0),   # solar radiation
    (8.0, 8.0, -100.0),  # snow water equivalent
    (16.0, 14.0, 105.0), # max temperature
    (7.0, 14.0, 105.0),  # min temperature
    (1.6, 0.9, 105.0),   # vapor pressure
)
# week-level anomaly sd and day-level noise sd per variable
_WEEK_SD = (1.8, 0.8, 1.0, 0.45, 0.45, 0.12)
_DAY_SD = (0.8, 0.5, 0.5, 0.6, 0.6, 0.08)
# variables clipped at zero (precip, srad, swe, vp)
_NONNEG = (True, True, True, False, False, True)

_SOIL_BASE = (1.25, 1.40, 24.0, 0.32, 0.16, 2.2, 3.4, 6.4, 38.0, 0.46)
_SOIL_DEPTH_SLOPE = (0.02, 0.02, 0.5, -0.01, -0.005, -0.1, -0.25, 0.05, 0.8, -0.01)
_SOIL_LATENT_LOAD = (0.10, 0.06, 2.5, 0.04, 0.02, 0.0, 0.45, 0.0, -2.0, 0.03)
_SOIL_NOISE_SD = 0.05


@dataclass
class SyntheticConfig:
    """Knobs of the generator; defaults give the desk-scale fixture."""

    n_counties: int = 60
    n_states: int = 4
    year_start: int = 1980
    year_end: int = 2000
    seed: int = 42
    crop: str = "corn"
    management_dim: int = 15
    base_yield: float = 50.0
    trend_per_year: float = 0.8
    alpha_precip: float = 3.0
    precip_weeks: tuple = tuple(range(26, 33))
    beta_soil: float = 2.5
    gamma_heat: float = 8.0
    heat_weeks: tuple = tuple(range(28, 35))
    heat_threshold_offset: float = 0.3
    heat_anomaly_sd: float = 0.8
    noise_sd: float = 0.8


def _seasonal_daily(variable):
    days = np.arange(365, dtype=np.float64)
    base, amp, phase = _SEASONAL[variable]
    return base + amp * np.sin(2.0 * np.pi * (days - phase) / 365.0)


def heat_threshold(config):
    """Deterministic activation threshold for the heat-stress term."""
    weekly = weekly_average(_seasonal_daily(3))
    idx = [w - 1 for w in config.heat_weeks]
    return float(weekly[idx].mean() + config.heat_threshold_offset)


def gen_synthetic(config: SyntheticConfig):
    """Generate (records, meta). Bit-identical for a given config."""
    if config.n_counties < 10:
        raise ContractViolation("synthetic generation needs at least 10 counties")
    n_years = config.year_end - config.year_start + 1
    if n_years < 8:
        raise ContractViolation("synthetic generation needs at least 8 years")
    if config.n_states < 1 or config.n_states > config.n_counties:
        raise ContractViolation("state count must be within 1..n_counties")

    rng = np.random.default_rng(config.seed)
    counties = list(range(1, config.n_counties + 1))
    states = {c: (c - 1) % config.n_states + 1 for c in counties}
    years = list(range(config.year_start, config.year_end + 1))
    m = config.management_dim

    # static per-county soil
    latent = {c: rng.normal() for c in counties}
    soil_profiles = {}
    surfaces = {}
    for c in counties:
        q = latent[c]
        prof = np.empty((10, 9))
        for v in range(10):
            depths = np.arange(9, dtype=np.float64)
            prof[v] = (
                _SOIL_BASE[v]
                + _SOIL_DEPTH_SLOPE[v] * depths
                + _SOIL_LATENT_LOAD[v] * q
                + rng.normal(0.0, _SOIL_NOISE_SD, size=9)
            )
        soil_profiles[c] = prof
        surfaces[c] = np.array(
            [
                2.0 + 0.8 * abs(rng.normal()),
                float(np.clip(0.55 + 0.15 * q + 0.05 * rng.normal(), 0.0, 1.0)),
                float(np.clip(0.50 + 0.12 * q + 0.05 * rng.normal(), 0.0, 1.0)),
                100.0 + 10.0 * q + 5.0 * rng.normal(),
            ]
        )

    # state-level planting-progress curves (logistic, non-decreasing)
    state_mid = {s: rng.uniform(5.0, 8.0) for s in sorted(set(states.values()))}
    state_rate = {s: rng.uniform(1.0, 1.8) for s in sorted(set(states.values()))}
    management = {}
    for s in sorted(set(states.values())):
        for y in years:
            mid = state_mid[s] + rng.normal(0.0, 0.7)
            weeksax = np.arange(1, m + 1, dtype=np.float64)
            management[(s, y)] = 100.0 / (1.0 + np.exp(-(weeksax - mid) / state_rate[s]))

    thr = heat_threshold(config)
    precip_idx = [w - 1 for w in config.precip_weeks]
    heat_idx = [w - 1 for w in config.heat_weeks]
    seasonal = [_seasonal_daily(v) for v in range(6)]
    day_week = np.minimum(np.arange(365) // 7, 51)  # week 52 owns the tail days

    records = []
    for c in counties:
        for y in years:
            weather = np.empty((6, 52))
            heat_anom = rng.normal(0.0, config.heat_anomaly_sd)
            for v in range(6):
                week_anom = rng.normal(0.0, _WEEK_SD[v], size=52)
                daily = seasonal[v] + week_anom[day_week]
                daily = daily + rng.normal(0.0, _DAY_SD[v], size=365)
                if v in (3, 4):
                    daily = daily + heat_anom
                if _NONNEG[v]:
                    daily = np.maximum(daily, 0.0)
                weather[v] = weekly_average(daily)
            q = latent[c]
            heat_stress = max(0.0, weather[3, heat_idx].mean() - thr)
            y_val = (
                config.base_yield
                + config.trend_per_year * (y - config.year_start)
                + config.alpha_precip * weather[0, precip_idx].mean()
                + config.beta_soil * q
                + config.gamma_heat * heat_stress
                + rng.normal(0.0, config.noise_sd)
            )
            records.append(
                make_record(
                    county_id=c,
                    state_id=states[c],
                    year=y,
                    crop=config.crop,
                    weather=weather,
                    soil_profile=soil_profiles[c],
                    soil_surface=surfaces[c],
                    management=management[(states[c], y)],
                    yield_bu_acre=y_val,
                )
            )

    meta = {
        "generator": asdict(config),
        "causal": {
            "precipitation": {
                "variable": 1,
                "weeks": list(config.precip_weeks),
                "coefficient": config.alpha_precip,
            },
            "heat_stress": {
                "variable": 4,
                "weeks": list(config.heat_weeks),
                "coefficient": config.gamma_heat,
                "threshold": thr,
            },
            "soil_latent": {
                "coefficient": config.beta_soil,
                "per_county": {str(c): latent[c] for c in counties},
                "profile_loadings": list(_SOIL_LATENT_LOAD),
            },
            "trend_per_year": config.trend_per_year,
            "base_yield": config.base_yield,
            "noise_sd": config.noise_sd,
        },
    }
    return records, meta
