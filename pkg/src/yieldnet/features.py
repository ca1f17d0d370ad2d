"""Feature-space utilities: flat layout and z-scoring statistics.

The flat order is fixed: weather variable-major (var 1 weeks 1..52, var 2
...), then soil profile variable-major (var 1 depths 1..9, ...), then the
four surface soil values, then the management weeks, then the average-yield
input last. Weeks and depths are 1-based in descriptions and metadata.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

WEATHER_VARS = 6
WEEKS = 52
SOIL_VARS = 10
SOIL_DEPTHS = 9
SURFACE_VARS = 4

GROUP_WEATHER = "weather"
GROUP_SOIL_DEPTH = "soil-depth"
GROUP_SOIL_SURFACE = "soil-surface"
GROUP_MANAGEMENT = "management"
GROUP_AVG_YIELD = "avg-yield"

WEATHER_NAMES = ("precip", "srad", "swe", "tmax", "tmin", "vp")
SURFACE_NAMES = ("slope_pct", "nccpi_corn", "nccpi_all", "root_zone_depth")


@dataclass(frozen=True)
class FeatureLayout:
    """Index arithmetic for the flat feature vector of one sample."""

    management_dim: int = 15

    @property
    def n_weather(self):
        return WEATHER_VARS * WEEKS

    @property
    def n_soil(self):
        return SOIL_VARS * SOIL_DEPTHS

    @property
    def size(self):
        return self.n_weather + self.n_soil + SURFACE_VARS + self.management_dim + 1

    @property
    def weather_slice(self):
        return slice(0, self.n_weather)

    @property
    def soil_slice(self):
        start = self.n_weather
        return slice(start, start + self.n_soil)

    @property
    def surface_slice(self):
        start = self.n_weather + self.n_soil
        return slice(start, start + SURFACE_VARS)

    @property
    def management_slice(self):
        start = self.n_weather + self.n_soil + SURFACE_VARS
        return slice(start, start + self.management_dim)

    @property
    def avg_yield_index(self):
        return self.size - 1

    def weather_index(self, variable, week):
        """Flat index of a weather cell; variable and week are 1-based."""
        return (variable - 1) * WEEKS + (week - 1)

    def groups(self):
        """Group label per flat feature index."""
        g = np.empty(self.size, dtype=object)
        g[self.weather_slice] = GROUP_WEATHER
        g[self.soil_slice] = GROUP_SOIL_DEPTH
        g[self.surface_slice] = GROUP_SOIL_SURFACE
        g[self.management_slice] = GROUP_MANAGEMENT
        g[self.avg_yield_index] = GROUP_AVG_YIELD
        return g

    def descriptions(self):
        out = []
        for v in range(1, WEATHER_VARS + 1):
            for w in range(1, WEEKS + 1):
                out.append(f"weather var {v} ({WEATHER_NAMES[v - 1]}) week {w}")
        for v in range(1, SOIL_VARS + 1):
            for d in range(1, SOIL_DEPTHS + 1):
                out.append(f"soil var {v} depth {d}")
        for v in range(1, SURFACE_VARS + 1):
            out.append(f"soil surface var {v} ({SURFACE_NAMES[v - 1]})")
        for w in range(1, self.management_dim + 1):
            out.append(f"management week {w}")
        out.append("avg yield input")
        return out


def _floored_sd(arr, axis=0):
    sd = np.asarray(arr, dtype=np.float64).std(axis=axis)
    return np.where(sd < 1e-12, 1.0, sd)


@dataclass
class Standardizer:
    """Per-feature z-scoring statistics, fit from training data only.

    Predictions and targets stay in bushels per acre at the interface; when
    ``standardize_targets`` is set the network operates on z-scored targets
    internally and predictions are mapped back.
    """

    weather_mean: np.ndarray
    weather_sd: np.ndarray
    soil_mean: np.ndarray
    soil_sd: np.ndarray
    surface_mean: np.ndarray
    surface_sd: np.ndarray
    management_mean: np.ndarray
    management_sd: np.ndarray
    avg_yield_mean: float
    avg_yield_sd: float
    target_mean: float = 0.0
    target_sd: float = 1.0
    standardize_targets: bool = False

    @classmethod
    def fit(cls, samples, standardize_targets=False):
        seen = {}
        avg_vals = []
        targets = []
        for s in samples:
            for rec in s.records:
                seen.setdefault((rec.county_id, rec.year), rec)
            avg_vals.extend(s.avg_yield_inputs.tolist())
            if s.has_target:
                targets.append(s.target)
        if not seen:
            raise ContractViolation("cannot fit a standardizer on zero samples")
        recs = [seen[key] for key in sorted(seen)]
        weather = np.stack([r.weather for r in recs])
        soil = np.stack([r.soil_profile for r in recs])
        surface = np.stack([r.soil_surface for r in recs])
        mgmt = np.stack([r.management for r in recs])
        avg_arr = np.asarray(avg_vals)
        t_mean, t_sd = 0.0, 1.0
        if standardize_targets:
            if not targets:
                raise ContractViolation("target standardization needs observed targets")
            t_arr = np.asarray(targets)
            t_mean = float(t_arr.mean())
            t_sd = float(max(t_arr.std(), 1e-12))
        return cls(
            weather_mean=weather.mean(axis=0),
            weather_sd=_floored_sd(weather),
            soil_mean=soil.mean(axis=0),
            soil_sd=_floored_sd(soil),
            surface_mean=surface.mean(axis=0),
            surface_sd=_floored_sd(surface),
            management_mean=mgmt.mean(axis=0),
            management_sd=_floored_sd(mgmt),
            avg_yield_mean=float(avg_arr.mean()),
            avg_yield_sd=float(max(avg_arr.std(), 1e-12)),
            target_mean=t_mean,
            target_sd=t_sd,
            standardize_targets=standardize_targets,
        )

    @classmethod
    def identity(cls, management_dim=15, weather_vars=WEATHER_VARS, weeks=WEEKS,
                 soil_vars=SOIL_VARS, soil_depths=SOIL_DEPTHS, surface_dim=SURFACE_VARS):
        return cls(
            weather_mean=np.zeros((weather_vars, weeks)),
            weather_sd=np.ones((weather_vars, weeks)),
            soil_mean=np.zeros((soil_vars, soil_depths)),
            soil_sd=np.ones((soil_vars, soil_depths)),
            surface_mean=np.zeros(surface_dim),
            surface_sd=np.ones(surface_dim),
            management_mean=np.zeros(management_dim),
            management_sd=np.ones(management_dim),
            avg_yield_mean=0.0,
            avg_yield_sd=1.0,
        )

    @property
    def flat_mean(self):
        return np.concatenate([
            self.weather_mean.ravel(), self.soil_mean.ravel(), self.surface_mean,
            self.management_mean, [self.avg_yield_mean],
        ])

    @property
    def flat_sd(self):
        return np.concatenate([
            self.weather_sd.ravel(), self.soil_sd.ravel(), self.surface_sd,
            self.management_sd, [self.avg_yield_sd],
        ])

    def target_to_model(self, y):
        y = np.asarray(y, dtype=np.float64)
        return (y - self.target_mean) / self.target_sd if self.standardize_targets else y

    def model_to_target(self, p):
        p = np.asarray(p, dtype=np.float64)
        return p * self.target_sd + self.target_mean if self.standardize_targets else p
