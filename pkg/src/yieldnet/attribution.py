"""Guided-backpropagation feature importance for the trained CNN-RNN.

A seed vector marks the LSTM output neurons at the final step whose mean
activation over the given samples is positive. Backpropagating that seed in
guided mode (positive gradients only through ReLU units) down to the
final-step inputs and averaging gradient magnitudes over samples gives a raw
importance per flat input feature. Importances are then normalized within
each feature group so groups are separately comparable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation
from .features import FeatureLayout
from .model import Standardizer, cnn_rnn_apply

CSV_HEADER = "feature_id,group,description,raw_importance,normalized_importance"


@dataclass
class AttributionReport:
    """Raw and group-normalized importance per flat feature."""

    raw: np.ndarray
    normalized: np.ndarray
    groups: np.ndarray
    descriptions: list
    layout: FeatureLayout
    n_samples: int = 0
    seeded_from_head: bool = False

    def top_weather_weeks(self, count, variable=1):
        """1-based weeks of the top ``count`` weather features restricted to
        one variable, by raw importance."""
        lo = self.layout.weather_index(variable, 1)
        scores = self.raw[lo : lo + 52]
        order = np.argsort(-scores, kind="stable")
        return [int(w) + 1 for w in order[:count]]

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for i in range(self.layout.size):
            lines.append(
                f"{i},{self.groups[i]},{self.descriptions[i]},"
                f"{repr(float(self.raw[i]))},{repr(float(self.normalized[i]))}"
            )
        return "\n".join(lines) + "\n"


def select_seed_neurons(model, samples):
    """0/1 vector over LSTM output units: 1 where the mean final-step
    activation over ``samples`` is strictly positive."""
    if not samples:
        raise ContractViolation("seed selection needs at least one sample")
    prep = model.prepare(samples)
    tape = ad.Tape()
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    res = cnn_rnn_apply(model.config, bound, tape, prep.steps_for(np.arange(prep.n)))
    mean_h = res.h_steps[-1].data.mean(axis=0)
    return (mean_h > 0).astype(np.float64)


def _group_normalize(raw, groups):
    normalized = np.zeros_like(raw)
    for g in np.unique(groups):
        sel = groups == g
        top = raw[sel].max()
        if top > 0:
            normalized[sel] = raw[sel] / top
    return normalized


def guided_attribute(model, samples, seed=None, from_head=False) -> AttributionReport:
    """Mean absolute guided gradient per final-step input feature.

    ``seed`` defaults to :func:`select_seed_neurons` over the same samples.
    ``from_head`` seeds the scalar prediction instead of the LSTM output.
    """
    samples = list(samples)
    if not samples:
        raise ContractViolation("attribution needs at least one sample")
    layout = model.config.layout
    if seed is None and not from_head:
        seed = select_seed_neurons(model, samples)
    prep = model.prepare(samples)
    tape = ad.Tape(ad.GUIDED)
    bound = {name: tape.leaf(arr) for name, arr in model.params.items()}
    res = cnn_rnn_apply(model.config, bound, tape, prep.steps_for(np.arange(prep.n)))
    if from_head:
        out = res.preds[-1]
        tape.backward(out, np.ones_like(out.data))
    else:
        seed = np.asarray(seed, dtype=np.float64)
        out = res.h_steps[-1]
        if seed.shape != (out.data.shape[1],):
            raise ContractViolation(
                f"seed must have shape ({out.data.shape[1]},), got {seed.shape}"
            )
        if not seed.any():
            warnings.warn("all-zero attribution seed; importances are zero")
        tape.backward(out, np.broadcast_to(seed, out.data.shape))
    final = res.input_leaves[-1]

    def mean_abs(leaf, width):
        if leaf.grad is None:
            return np.zeros(width)
        return np.abs(leaf.grad).reshape(prep.n, width).mean(axis=0)

    raw = np.concatenate([
        mean_abs(final["weather"], layout.n_weather),
        mean_abs(final["soil"], layout.n_soil),
        mean_abs(final["surface"], 4),
        mean_abs(final["mgmt"], layout.management_dim),
        mean_abs(final["avg"], 1),
    ])
    groups = layout.groups()
    return AttributionReport(
        raw=raw,
        normalized=_group_normalize(raw, groups),
        groups=groups,
        descriptions=layout.descriptions(),
        layout=layout,
        n_samples=prep.n,
        seeded_from_head=from_head,
    )


def select_top_fraction(report: AttributionReport, fraction):
    """Boolean mask keeping the ceil(fraction * p) features with highest raw
    importance; ties break toward the lowest feature index."""
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation("fraction must be in (0, 1]")
    p = report.raw.shape[0]
    keep = math.ceil(fraction * p)
    order = np.argsort(-report.raw, kind="stable")
    mask = np.zeros(p, dtype=bool)
    mask[order[:keep]] = True
    return mask


def mask_fill_values(standardizer: Standardizer):
    """Raw-space values a masked feature is pinned to: the training means,
    i.e. zero after standardization."""
    return standardizer.flat_mean.copy()


def apply_mask(sample, mask, fill, layout=None):
    """Pin unselected weather/soil/management inputs to their fill values.

    The mask and fill follow the flat feature layout; the average-yield input
    is never masked. Masking applies to every step of the window, so the
    retained architecture is unchanged. Idempotent.
    """
    from .data.records import CountyYearRecord, SequenceSample

    mask = np.asarray(mask, dtype=bool)
    if layout is None:
        layout = FeatureLayout(management_dim=sample.records[-1].management.shape[0])
    if mask.shape[0] != layout.size or np.asarray(fill).shape[0] != layout.size:
        raise ContractViolation(
            f"mask/fill must have {layout.size} entries, got {mask.shape[0]}"
        )
    w_keep = mask[layout.weather_slice].reshape(6, 52)
    w_fill = np.asarray(fill)[layout.weather_slice].reshape(6, 52)
    s_keep = mask[layout.soil_slice].reshape(10, 9)
    s_fill = np.asarray(fill)[layout.soil_slice].reshape(10, 9)
    f_keep = mask[layout.surface_slice]
    f_fill = np.asarray(fill)[layout.surface_slice]
    m_keep = mask[layout.management_slice]
    m_fill = np.asarray(fill)[layout.management_slice]

    new_records = []
    for rec in sample.records:
        new_records.append(
            CountyYearRecord(
                county_id=rec.county_id,
                state_id=rec.state_id,
                year=rec.year,
                crop=rec.crop,
                weather=np.where(w_keep, rec.weather, w_fill),
                soil_profile=np.where(s_keep, rec.soil_profile, s_fill),
                soil_surface=np.where(f_keep, rec.soil_surface, f_fill),
                management=np.where(m_keep, rec.management, m_fill),
                _yield_bu_acre=rec._yield_bu_acre,
                imputed=rec.imputed,
            )
        )
    return SequenceSample(
        county_id=sample.county_id,
        target_year=sample.target_year,
        records=tuple(new_records),
        avg_yield_inputs=sample.avg_yield_inputs.copy(),
        final_step_substituted=sample.final_step_substituted,
        _target=sample._target,
    )
