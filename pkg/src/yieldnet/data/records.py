"""Core data records and the target-access guard.

The guard exists so experiment code can *prove* it never touches held-out
ground truth during training: while a :func:`guard_targets` context is
active, reading an observed yield for a guarded year raises
:class:`AuditViolation`. Metric computation happens outside the guard.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import AuditViolation, ContractViolation

CROPS = ("corn", "soybean")

_guarded_years: list[set] = []


@contextlib.contextmanager
def guard_targets(years):
    """Forbid reads of observed yields for ``years`` inside the context."""
    _guarded_years.append(set(years))
    try:
        yield
    finally:
        _guarded_years.pop()


def _check_guard(year):
    for guarded in _guarded_years:
        if year in guarded:
            raise AuditViolation(f"read of a guarded target for year {year}")


@dataclass
class CountyYearRecord:
    """One county-crop-year observation.

    weather: (6, 52) weekly means; soil_profile: (10, 9) variables x depths;
    soil_surface: (4,); management: (m,) cumulative planted percentages.
    ``imputed`` flags which cells were filled by imputation, keyed by field.
    """

    county_id: int
    state_id: int
    year: int
    crop: str
    weather: np.ndarray
    soil_profile: np.ndarray
    soil_surface: np.ndarray
    management: np.ndarray
    _yield_bu_acre: float | None = None
    imputed: dict = field(default_factory=dict)

    @property
    def has_yield(self) -> bool:
        return self._yield_bu_acre is not None

    @property
    def yield_bu_acre(self) -> float:
        """Observed yield; raises under an active guard for this year."""
        _check_guard(self.year)
        if self._yield_bu_acre is None:
            raise ContractViolation(
                f"county {self.county_id} year {self.year} has no observed yield"
            )
        return self._yield_bu_acre


def make_record(county_id, state_id, year, crop, weather, soil_profile,
                soil_surface, management, yield_bu_acre=None, imputed=None):
    weather = np.asarray(weather, dtype=np.float64)
    soil_profile = np.asarray(soil_profile, dtype=np.float64)
    soil_surface = np.asarray(soil_surface, dtype=np.float64)
    management = np.asarray(management, dtype=np.float64)
    if crop not in CROPS:
        raise ContractViolation(f"unknown crop {crop!r}")
    return CountyYearRecord(
        county_id=int(county_id),
        state_id=int(state_id),
        year=int(year),
        crop=crop,
        weather=weather,
        soil_profile=soil_profile,
        soil_surface=soil_surface,
        management=management,
        _yield_bu_acre=None if yield_bu_acre is None else float(yield_bu_acre),
        imputed=imputed or {},
    )


@dataclass
class SequenceSample:
    """A (k+1)-year window ending at the target year.

    ``avg_yield_inputs`` holds the per-step average-yield channel; in the
    test phase the final entry is the previous year's average, flagged by
    ``final_step_substituted``. The window years are consecutive.
    """

    county_id: int
    target_year: int
    records: tuple
    avg_yield_inputs: np.ndarray
    final_step_substituted: bool
    _target: float | None = None

    @property
    def k(self) -> int:
        return len(self.records) - 1

    @property
    def has_target(self) -> bool:
        return self._target is not None

    @property
    def target(self) -> float:
        """Ground-truth yield at the target year; audited by the guard."""
        _check_guard(self.target_year)
        if self._target is None:
            raise ContractViolation(
                f"sample (county {self.county_id}, year {self.target_year}) has no target"
            )
        return self._target
