"""Preprocessing: weekly averaging, imputation, sequence assembly, summaries.

All transformations are pure (imputations return completed copies of their
input tables) and idempotent.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import ContractViolation, DataFormatError
from .records import SequenceSample

DAYS_PER_WEEK = np.full(52, 7.0)


def weekly_average(daily):
    """Reduce a 365/366-day series to 52 weekly means.

    Weeks 1..51 average seven days each; week 52 absorbs the remaining
    8 or 9 days.
    """
    daily = np.asarray(daily, dtype=np.float64)
    if daily.ndim != 1 or daily.shape[0] not in (365, 366):
        raise ContractViolation(f"daily series must have 365 or 366 entries, got {daily.shape}")
    weekly = np.empty(52)
    head = daily[: 51 * 7].reshape(51, 7)
    weekly[:51] = head.mean(axis=1)
    weekly[51] = daily[51 * 7 :].mean()
    return weekly


def impute_column_mean(table, variable):
    """Fill missing soil entries with the cross-county mean of the same cell.

    ``table``: {county_id: (SOIL_VARS, SOIL_DEPTHS) array with NaN for
    missing}; ``variable`` is a 1-based soil variable index. Returns a
    completed copy plus {county_id: bool mask of filled cells}.
    """
    v = variable - 1
    counties = sorted(table)
    stack = np.stack([table[c][v] for c in counties])
    observed = ~np.isnan(stack)
    if not observed.any(axis=0).all():
        depth = int(np.argmin(observed.any(axis=0))) + 1
        raise DataFormatError(
            f"soil variable {variable} depth {depth} has no observed values in any county"
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(stack, axis=0)
    out = {}
    flags = {}
    for c in counties:
        arr = table[c].copy()
        missing = np.isnan(arr[v])
        arr[v, missing] = means[missing]
        out[c] = arr
        mask = np.zeros_like(arr, dtype=bool)
        mask[v] = missing
        flags[c] = mask
    return out, flags


def impute_management(table):
    """Fill missing management cells with the same-year, same-week mean.

    ``table``: {(state_id, year): (m,) array with NaN for missing}. Only
    states observed in the same year contribute; other years never leak in.
    """
    years = sorted({year for (_, year) in table})
    out = {}
    flags = {}
    for year in years:
        keys = sorted(k for k in table if k[1] == year)
        stack = np.stack([table[k] for k in keys])
        observed = ~np.isnan(stack)
        if not observed.any(axis=0).all():
            week = int(np.argmin(observed.any(axis=0))) + 1
            raise DataFormatError(f"management week {week} of year {year} has no observations")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            means = np.nanmean(stack, axis=0)
        for k in keys:
            arr = table[k].copy()
            missing = np.isnan(arr)
            arr[missing] = means[missing]
            out[k] = arr
            flags[k] = missing
    return out, flags


def compute_avg_yields(records, crop, years=None):
    """Per-year mean yield over counties with an observed yield."""
    sums = {}
    counts = {}
    for r in records:
        if r.crop != crop or not r.has_yield:
            continue
        if years is not None and r.year not in years:
            continue
        sums[r.year] = sums.get(r.year, 0.0) + r.yield_bu_acre
        counts[r.year] = counts.get(r.year, 0) + 1
    return {year: sums[year] / counts[year] for year in sorted(sums)}


def assemble_sequences(records, k, target_years, phase, crop=None, avg_yields=None):
    """Build one sample per county and target year with a complete window.

    Training-phase samples carry the observed average yield for every step;
    test-phase samples substitute the previous year's average at the final
    step. Counties with a gap anywhere in the (k+1)-year window are skipped.
    Returns (samples, skipped_count).
    """
    if phase not in ("train", "test"):
        raise ContractViolation(f"phase must be 'train' or 'test', got {phase!r}")
    if crop is None:
        crops = {r.crop for r in records}
        if len(crops) != 1:
            raise ContractViolation("records mix crops; pass crop= explicitly")
        crop = crops.pop()
    pool = [r for r in records if r.crop == crop]
    by_cy = {}
    for r in pool:
        key = (r.county_id, r.year)
        if key in by_cy:
            raise ContractViolation(f"duplicate record for county {key[0]} year {key[1]}")
        by_cy[key] = r
    if avg_yields is None:
        avg_yields = compute_avg_yields(pool, crop)

    samples = []
    skipped = 0
    counties = sorted({r.county_id for r in pool})
    for t in sorted(target_years):
        for county in counties:
            window = [by_cy.get((county, year)) for year in range(t - k, t + 1)]
            if any(r is None for r in window):
                if (county, t) in by_cy:
                    skipped += 1
                continue
            avg_inputs = np.empty(k + 1)
            ok = True
            for idx, year in enumerate(range(t - k, t + 1)):
                source_year = year
                if phase == "test" and year == t:
                    source_year = t - 1
                if source_year not in avg_yields:
                    ok = False
                    break
                avg_inputs[idx] = avg_yields[source_year]
            if not ok:
                skipped += 1
                continue
            target_rec = window[-1]
            samples.append(
                SequenceSample(
                    county_id=county,
                    target_year=t,
                    records=tuple(window),
                    avg_yield_inputs=avg_inputs,
                    final_step_substituted=(phase == "test"),
                    _target=target_rec._yield_bu_acre,
                )
            )
    return samples, skipped


def substitute_weather(sample, source_records, weeks):
    """Replace target-year weather at 1-based ``weeks`` from a source year.

    ``source_records``: {county_id: CountyYearRecord} for the replacement
    year. Returns a new sample; missing source counties are returned
    unchanged with a warning.
    """
    weeks = sorted(set(weeks))
    if not weeks:
        return sample
    if any(w < 1 or w > 52 for w in weeks):
        raise ContractViolation("substitution weeks must be within 1..52")
    source = source_records.get(sample.county_id)
    if source is None:
        warnings.warn(f"no replacement weather for county {sample.county_id}; left unchanged")
        return sample
    target_rec = sample.records[-1]
    weather = target_rec.weather.copy()
    idx = [w - 1 for w in weeks]
    weather[:, idx] = source.weather[:, idx]
    new_rec = type(target_rec)(
        county_id=target_rec.county_id,
        state_id=target_rec.state_id,
        year=target_rec.year,
        crop=target_rec.crop,
        weather=weather,
        soil_profile=target_rec.soil_profile,
        soil_surface=target_rec.soil_surface,
        management=target_rec.management,
        _yield_bu_acre=target_rec._yield_bu_acre,
        imputed=target_rec.imputed,
    )
    return SequenceSample(
        county_id=sample.county_id,
        target_year=sample.target_year,
        records=sample.records[:-1] + (new_rec,),
        avg_yield_inputs=sample.avg_yield_inputs,
        final_step_substituted=sample.final_step_substituted,
        _target=sample._target,
    )


def summarize_dataset(records, years=None):
    """Per (crop, year) mean, population standard deviation and count.

    Rows without an observed yield are excluded from all three statistics.
    """
    groups = {}
    for r in records:
        if not r.has_yield:
            continue
        if years is not None and r.year not in years:
            continue
        groups.setdefault((r.crop, r.year), []).append(r.yield_bu_acre)
    if not groups:
        raise ContractViolation("no observed yields to summarize")
    out = {}
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        out[key] = {
            "mean": float(vals.mean()),
            "sd": float(vals.std()),
            "n": int(vals.size),
        }
    return out
