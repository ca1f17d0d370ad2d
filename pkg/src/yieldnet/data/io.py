"""Dataset directory I/O.

CSV schemas (headers mandatory, UTF-8):

* yield.csv:        county_id,state_id,year,crop,yield_bu_acre
* weather.csv:      county_id,year,variable,week,value      (variable 1-6, week 1-52)
* soil.csv:         county_id,variable,depth_index,value    (empty value = missing)
* soil_surface.csv: county_id,variable,value                (variable 1-4)
* management.csv:   state_id,year,week,cum_planted_pct      (empty = missing)
* synthetic_meta.json: generator spec + causal metadata (optional)

Floats are written with ``repr`` so a reload-rewrite cycle is byte-identical.
All writes go through a temp file in the destination directory followed by a
rename.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from ..errors import DataFormatError
from .preprocess import compute_avg_yields, impute_column_mean, impute_management
from .records import make_record

META_NAME = "synthetic_meta.json"


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, blob):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return repr(float(x))


def _rows_to_csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


@dataclass
class Dataset:
    """Loaded records plus simple indexes."""

    records: list
    crop: str
    meta: dict | None = None

    def __post_init__(self):
        self.by_county_year = {(r.county_id, r.year): r for r in self.records}
        self.counties = sorted({r.county_id for r in self.records})
        self.years = sorted({r.year for r in self.records})
        self.management_dim = self.records[0].management.shape[0] if self.records else 0

    def avg_yields(self, years=None):
        return compute_avg_yields(self.records, self.crop, years=years)

    def records_for_year(self, year):
        return {r.county_id: r for r in self.records if r.year == year}


def write_dataset(records, out_dir, meta=None):
    """Write records (single crop) into a dataset directory."""
    os.makedirs(out_dir, exist_ok=True)
    recs = sorted(records, key=lambda r: (r.county_id, r.year))

    yield_rows = []
    weather_rows = []
    management = {}
    soil = {}
    surface = {}
    for r in recs:
        if r.has_yield:
            yield_rows.append((r.county_id, r.state_id, r.year, r.crop, _fmt(r.yield_bu_acre)))
        for v in range(r.weather.shape[0]):
            for w in range(r.weather.shape[1]):
                weather_rows.append((r.county_id, r.year, v + 1, w + 1, _fmt(r.weather[v, w])))
        management[(r.state_id, r.year)] = r.management
        soil[r.county_id] = r.soil_profile
        surface[r.county_id] = r.soil_surface

    soil_rows = []
    for c in sorted(soil):
        prof = soil[c]
        for v in range(prof.shape[0]):
            for d in range(prof.shape[1]):
                val = "" if np.isnan(prof[v, d]) else _fmt(prof[v, d])
                soil_rows.append((c, v + 1, d + 1, val))
    surface_rows = []
    for c in sorted(surface):
        for v in range(4):
            surface_rows.append((c, v + 1, _fmt(surface[c][v])))
    management_rows = []
    for (s, y) in sorted(management):
        arr = management[(s, y)]
        for w in range(arr.shape[0]):
            val = "" if np.isnan(arr[w]) else _fmt(arr[w])
            management_rows.append((s, y, w + 1, val))

    atomic_write_text(
        os.path.join(out_dir, "yield.csv"),
        _rows_to_csv(["county_id", "state_id", "year", "crop", "yield_bu_acre"], yield_rows),
    )
    atomic_write_text(
        os.path.join(out_dir, "weather.csv"),
        _rows_to_csv(["county_id", "year", "variable", "week", "value"], weather_rows),
    )
    atomic_write_text(
        os.path.join(out_dir, "soil.csv"),
        _rows_to_csv(["county_id", "variable", "depth_index", "value"], soil_rows),
    )
    atomic_write_text(
        os.path.join(out_dir, "soil_surface.csv"),
        _rows_to_csv(["county_id", "variable", "value"], surface_rows),
    )
    atomic_write_text(
        os.path.join(out_dir, "management.csv"),
        _rows_to_csv(["state_id", "year", "week", "cum_planted_pct"], management_rows),
    )
    if meta is not None:
        atomic_write_text(
            os.path.join(out_dir, META_NAME), json.dumps(meta, indent=2, sort_keys=True) + "\n"
        )


def _read_csv(path, expected_header):
    if not os.path.exists(path):
        raise DataFormatError(f"missing required file {os.path.basename(path)}", path=path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("file is empty", path=path) from None
        if header != expected_header:
            raise DataFormatError(
                f"header {header!r} does not match expected {expected_header!r}", path=path, row=1
            )
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DataFormatError(
                    f"expected {len(expected_header)} columns, found {len(row)}", path=path, row=i
                )
            rows.append((i, row))
    return rows


def _to_int(value, path, row, what):
    try:
        return int(value)
    except ValueError:
        raise DataFormatError(f"bad integer for {what}: {value!r}", path=path, row=row) from None


def _to_float(value, path, row, what, allow_empty=False):
    if value == "":
        if allow_empty:
            return np.nan
        raise DataFormatError(f"empty value for {what}", path=path, row=row)
    try:
        return float(value)
    except ValueError:
        raise DataFormatError(f"bad number for {what}: {value!r}", path=path, row=row) from None


def load_dataset(data_dir, management_dim=None):
    """Read a dataset directory, impute missing soil/management, build records."""
    p_yield = os.path.join(data_dir, "yield.csv")
    p_weather = os.path.join(data_dir, "weather.csv")
    p_soil = os.path.join(data_dir, "soil.csv")
    p_surface = os.path.join(data_dir, "soil_surface.csv")
    p_mgmt = os.path.join(data_dir, "management.csv")

    yields = {}
    states = {}
    crops = set()
    for i, row in _read_csv(p_yield, ["county_id", "state_id", "year", "crop", "yield_bu_acre"]):
        c = _to_int(row[0], p_yield, i, "county_id")
        s = _to_int(row[1], p_yield, i, "state_id")
        y = _to_int(row[2], p_yield, i, "year")
        crop = row[3]
        crops.add(crop)
        yields[(c, y)] = _to_float(row[4], p_yield, i, "yield_bu_acre")
        states[c] = s
    if len(crops) > 1:
        raise DataFormatError(f"dataset mixes crops {sorted(crops)}", path=p_yield)
    crop = crops.pop() if crops else "corn"

    weather = {}
    for i, row in _read_csv(p_weather, ["county_id", "year", "variable", "week", "value"]):
        c = _to_int(row[0], p_weather, i, "county_id")
        y = _to_int(row[1], p_weather, i, "year")
        v = _to_int(row[2], p_weather, i, "variable")
        w = _to_int(row[3], p_weather, i, "week")
        if not (1 <= v <= 6 and 1 <= w <= 52):
            raise DataFormatError(f"variable/week out of range: {v},{w}", path=p_weather, row=i)
        weather.setdefault((c, y), np.full((6, 52), np.nan))[v - 1, w - 1] = _to_float(
            row[4], p_weather, i, "value"
        )
    for (c, y), arr in weather.items():
        if np.isnan(arr).any():
            raise DataFormatError(f"county {c} year {y} weather is incomplete", path=p_weather)

    soil = {}
    for i, row in _read_csv(p_soil, ["county_id", "variable", "depth_index", "value"]):
        c = _to_int(row[0], p_soil, i, "county_id")
        v = _to_int(row[1], p_soil, i, "variable")
        d = _to_int(row[2], p_soil, i, "depth_index")
        if not (1 <= v <= 10 and 1 <= d <= 9):
            raise DataFormatError(f"variable/depth out of range: {v},{d}", path=p_soil, row=i)
        soil.setdefault(c, np.full((10, 9), np.nan))[v - 1, d - 1] = _to_float(
            row[3], p_soil, i, "value", allow_empty=True
        )

    surface = {}
    for i, row in _read_csv(p_surface, ["county_id", "variable", "value"]):
        c = _to_int(row[0], p_surface, i, "county_id")
        v = _to_int(row[1], p_surface, i, "variable")
        if not 1 <= v <= 4:
            raise DataFormatError(f"surface variable out of range: {v}", path=p_surface, row=i)
        surface.setdefault(c, np.full(4, np.nan))[v - 1] = _to_float(
            row[2], p_surface, i, "value"
        )

    mgmt_cells = {}
    for i, row in _read_csv(p_mgmt, ["state_id", "year", "week", "cum_planted_pct"]):
        s = _to_int(row[0], p_mgmt, i, "state_id")
        y = _to_int(row[1], p_mgmt, i, "year")
        w = _to_int(row[2], p_mgmt, i, "week")
        mgmt_cells.setdefault((s, y), {})[w] = _to_float(
            row[3], p_mgmt, i, "cum_planted_pct", allow_empty=True
        )
    if management_dim is None:
        management_dim = max((max(d) for d in mgmt_cells.values()), default=0)
    mgmt = {}
    for key, cells in mgmt_cells.items():
        arr = np.full(management_dim, np.nan)
        for w, val in cells.items():
            if 1 <= w <= management_dim:
                arr[w - 1] = val
        mgmt[key] = arr

    # imputation: soil per variable across counties, management within year
    soil_flags = {c: np.zeros((10, 9), dtype=bool) for c in soil}
    for v in range(1, 11):
        if any(np.isnan(soil[c][v - 1]).any() for c in soil):
            soil, flags = impute_column_mean(soil, v)
            for c in flags:
                soil_flags[c] |= flags[c]
    mgmt, mgmt_flags = impute_management(mgmt)

    meta = None
    meta_path = os.path.join(data_dir, META_NAME)
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)

    records = []
    for (c, y) in sorted(weather):
        state = states.get(c, 0)
        if c not in soil or c not in surface:
            raise DataFormatError(f"county {c} lacks soil data", path=p_soil)
        key = (state, y)
        if key not in mgmt:
            raise DataFormatError(f"state {state} year {y} lacks management data", path=p_mgmt)
        records.append(
            make_record(
                county_id=c,
                state_id=state,
                year=y,
                crop=crop,
                weather=weather[(c, y)],
                soil_profile=soil[c],
                soil_surface=surface[c],
                management=mgmt[key],
                yield_bu_acre=yields.get((c, y)),
                imputed={
                    "soil_profile": soil_flags.get(c),
                    "management": mgmt_flags.get(key),
                },
            )
        )
    return Dataset(records=records, crop=crop, meta=meta)
