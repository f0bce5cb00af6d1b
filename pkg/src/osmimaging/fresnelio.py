"""Fresnel-style measurement files, calibration to scattered fields, and the dataset container.

Measurement files are whitespace-separated text with ``#`` comment lines. The
meaning of each column comes from a column map, since files from different
sources order their columns differently.

The internal dataset container is versioned text::

    #format: osmimaging-dataset
    #version: 1
    #kind: scatter | calibrated
    #M: 36
    #N: 49
    #A: 0.72
    #B: 0.76
    #seed: 7
    #noise_db: 20
    #provenance: {...json...}
    #frequency_Hz: 8000000000
    #meta: {...json...}
    1 1 <re> <im>
    ...
    #end

Floats are written with ``%.17g`` so that reading reproduces every finite
value bit for bit. Missing cells are written as ``nan nan``.
"""

import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .forward import ScatterDataset
from .geometry import fresnel_geometry

log = logging.getLogger(__name__)

FORMAT_NAME = "osmimaging-dataset"
FORMAT_VERSION = 1

FIELDS = ("tx_angle", "rx_angle", "freq_ghz", "re_total", "im_total", "re_incident", "im_incident")
DEFAULT_COLUMNS = FIELDS
IGNORE = "ignore"


class FresnelParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ColumnMapError(ValueError):
    pass


class AmbiguousSnapError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


class DuplicateRecordError(ValueError):
    pass


@dataclass(frozen=True)
class RawMeasurement:
    tx_angle: float    # deg, [0, 360)
    rx_angle: float    # deg, [0, 360)
    freq_ghz: float
    total: complex
    incident: complex

    def __post_init__(self):
        if not self.freq_ghz > 0:
            raise ValueError("frequency must be positive")
        for name in ("tx_angle", "rx_angle"):
            v = getattr(self, name)
            if not 0.0 <= v < 360.0:
                raise ValueError(f"{name} must lie in [0, 360), got {v}")


@dataclass(eq=False)
class CalibratedDataset:
    datasets: list
    provenance: dict = field(default_factory=dict)

    @property
    def frequencies(self):
        return [ds.frequency for ds in self.datasets]

    def at(self, frequency_hz, rtol=1e-9):
        for ds in self.datasets:
            if math.isclose(ds.frequency, frequency_hz, rel_tol=rtol):
                return ds
        raise KeyError(f"no dataset at {frequency_hz} Hz")


def atomic_write_text(path, text):
    """Write ``text`` to a temporary file beside ``path``, then rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# measurement files

def resolve_columns(column_map=None):
    """Validate a column map and return ``{field: column index}``.

    ``column_map`` lists one name per file column; ``"ignore"`` skips a column.
    A mapping ``{field: index}`` is accepted as well.
    """
    if column_map is None:
        column_map = DEFAULT_COLUMNS
    if isinstance(column_map, str):
        column_map = [c.strip() for c in column_map.split(",")]
    if isinstance(column_map, dict):
        unknown = set(column_map) - set(FIELDS)
        if unknown:
            raise ColumnMapError(f"unknown column(s) {sorted(unknown)}; known: {list(FIELDS)}")
        index = {k: int(v) for k, v in column_map.items()}
        if any(v < 0 for v in index.values()):
            raise ColumnMapError("column indices must be nonnegative")
    else:
        names = list(column_map)
        unknown = [n for n in names if n not in FIELDS and n != IGNORE]
        if unknown:
            raise ColumnMapError(f"unknown column(s) {unknown}; known: {list(FIELDS)}")
        dup = {n for n in names if n != IGNORE and names.count(n) > 1}
        if dup:
            raise ColumnMapError(f"column(s) {sorted(dup)} mapped twice")
        index = {n: i for i, n in enumerate(names) if n != IGNORE}
    missing = [f for f in FIELDS if f not in index]
    if missing:
        raise ColumnMapError(f"column map lacks required field(s) {missing}")
    return index


def _parse_float(token, lineno, name):
    # float() accepts the C locale form only, which is what we want
    try:
        value = float(token)
    except ValueError:
        raise FresnelParseError(f"non-numeric value {token!r} in column {name}", lineno) from None
    if not math.isfinite(value):
        raise FresnelParseError(f"non-finite value {token!r} in column {name}", lineno)
    return value


def parse_fresnel(source, column_map=None):
    """Read measurement records from a path or text stream.

    Lines starting with ``#`` and blank lines are skipped. Angles are reduced
    modulo 360 degrees.
    """
    index = resolve_columns(column_map)
    width = max(index.values()) + 1
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < width:
            raise FresnelParseError(f"expected at least {width} columns, found {len(tokens)}", lineno)
        v = {name: _parse_float(tokens[i], lineno, name) for name, i in index.items()}
        if not v["freq_ghz"] > 0:
            raise FresnelParseError("frequency must be positive", lineno)
        records.append(RawMeasurement(
            tx_angle=v["tx_angle"] % 360.0,
            rx_angle=v["rx_angle"] % 360.0,
            freq_ghz=v["freq_ghz"],
            total=complex(v["re_total"], v["im_total"]),
            incident=complex(v["re_incident"], v["im_incident"]),
        ))
    log.info("parsed %d measurement rows", len(records))
    return records


def format_fresnel(records, column_map=None, header=None):
    index = resolve_columns(column_map)
    width = max(index.values()) + 1
    out = io.StringIO()
    if header:
        for line in str(header).splitlines():
            out.write(f"# {line}\n")
    names = [IGNORE] * width
    for name, i in index.items():
        names[i] = name
    out.write("# columns: " + " ".join(names) + "\n")
    for r in records:
        vals = {"tx_angle": r.tx_angle, "rx_angle": r.rx_angle, "freq_ghz": r.freq_ghz,
                "re_total": r.total.real, "im_total": r.total.imag,
                "re_incident": r.incident.real, "im_incident": r.incident.imag}
        row = ["0"] * width
        for name, i in index.items():
            row[i] = "%.17g" % vals[name]
        out.write(" ".join(row) + "\n")
    return out.getvalue()


def write_fresnel(records, path, column_map=None, header=None):
    atomic_write_text(path, format_fresnel(records, column_map, header))


def export_measurements(datasets, incident, rx_relative=False):
    """Turn scattered datasets into total/incident records.

    ``incident(ds)`` returns an ``(M, N)`` complex matrix used as the incident
    field; the total field is ``incident + data``. Missing cells are skipped.
    """
    records = []
    for ds in datasets:
        g = ds.geometry
        inc = np.asarray(incident(ds), dtype=complex)
        tx = np.degrees(g.emitter_angles) % 360.0
        rx = np.degrees(g.receiver_angles) % 360.0
        for m in range(g.M):
            for n in range(g.N):
                if ds.missing[m, n]:
                    continue
                rxa = (rx[m, n] - tx[m]) % 360.0 if rx_relative else rx[m, n]
                records.append(RawMeasurement(float(tx[m]), float(rxa), ds.frequency / 1e9,
                                              complex(inc[m, n] + ds.data[m, n]),
                                              complex(inc[m, n])))
    return records


# ---------------------------------------------------------------------------
# calibration

def _snap(angle, lattice, tol):
    """Indices of lattice angles (deg) within ``tol`` of ``angle`` on the circle."""
    diff = np.abs((np.asarray(lattice) - angle + 180.0) % 360.0 - 180.0)
    return np.flatnonzero(diff <= tol)


def calibrate(raw, geom, frequencies_ghz, snap_tol_deg=0.5, factors=None,
              rx_relative=False, freq_tol_ghz=1e-6, source=None, column_map=None):
    """Scattered field ``factor_f * (total - incident)`` on the geometry lattice.

    Parameters
    ----------
    raw : list of RawMeasurement
    geom : ArrayGeometry
    frequencies_ghz : sequence of float
        Frequencies to extract; records at other frequencies are rejected.
    snap_tol_deg : float
        A record snaps to a lattice angle within this tolerance.
    factors : sequence of complex, optional
        One calibration factor per frequency; default 1.
    rx_relative : bool
        Receiver angles are measured from the emitter angle.

    Returns
    -------
    CalibratedDataset
        Cells without a record are NaN (missing). ``provenance`` holds the
        counts of rejected records per reason.

    Raises
    ------
    AmbiguousSnapError
        If an angle lies within tolerance of two lattice angles.
    DuplicateRecordError
        If two records land on the same cell at the same frequency.
    """
    freqs = [float(f) for f in frequencies_ghz]
    if not freqs:
        raise ValueError("at least one frequency is required")
    if factors is None:
        factors = [1.0] * len(freqs)
    factors = [complex(c) for c in factors]
    if len(factors) != len(freqs):
        raise ValueError("need one calibration factor per frequency")
    tx_lat = np.degrees(geom.emitter_angles) % 360.0
    rx_lat = np.degrees(geom.receiver_angles) % 360.0
    data = np.full((len(freqs), geom.M, geom.N), np.nan + 1j * np.nan)
    seen = np.zeros(data.shape, dtype=bool)
    rejected = {"frequency": 0, "tx_angle": 0, "rx_angle": 0}
    for rec in raw:
        fi = [i for i, f in enumerate(freqs) if abs(rec.freq_ghz - f) <= freq_tol_ghz]
        if not fi:
            rejected["frequency"] += 1
            continue
        fi = fi[0]
        hits = _snap(rec.tx_angle, tx_lat, snap_tol_deg)
        if len(hits) == 0:
            rejected["tx_angle"] += 1
            continue
        if len(hits) > 1:
            raise AmbiguousSnapError(f"emitter angle {rec.tx_angle} deg is within "
                                     f"{snap_tol_deg} deg of several emitters")
        m = int(hits[0])
        rx = (rec.rx_angle + tx_lat[m]) % 360.0 if rx_relative else rec.rx_angle
        hits = _snap(rx, rx_lat[m], snap_tol_deg)
        if len(hits) == 0:
            rejected["rx_angle"] += 1
            continue
        if len(hits) > 1:
            raise AmbiguousSnapError(f"receiver angle {rx} deg is within {snap_tol_deg} deg "
                                     f"of several receivers of emitter {m + 1}")
        n = int(hits[0])
        if seen[fi, m, n]:
            raise DuplicateRecordError(f"duplicate record for emitter {m + 1}, receiver {n + 1} "
                             f"at {freqs[fi]} GHz")
        seen[fi, m, n] = True
        data[fi, m, n] = factors[fi] * (rec.total - rec.incident)
    n_rej = sum(rejected.values())
    if n_rej:
        log.warning("rejected %d of %d records: %s", n_rej, len(raw), rejected)
    provenance = {
        "source": None if source is None else os.fspath(source),
        "columns": list(column_map) if column_map is not None else list(DEFAULT_COLUMNS),
        "calibration": "subtract-incident",
        "factors": [[c.real, c.imag] for c in factors],
        "rx_relative": bool(rx_relative),
        "snap_tol_deg": snap_tol_deg,
        "records": len(raw),
        "rejected": rejected,
        "missing_cells": [int((~seen[i]).sum()) for i in range(len(freqs))],
    }
    datasets = [ScatterDataset(f * 1e9, geom, data[i], {"generator": "calibrated"})
                for i, f in enumerate(freqs)]
    return CalibratedDataset(datasets, provenance)


# ---------------------------------------------------------------------------
# internal dataset container

def _fmt(v):
    return "%.17g" % v


def format_dataset(obj):
    if isinstance(obj, CalibratedDataset):
        kind, blocks, provenance = "calibrated", obj.datasets, obj.provenance
    elif isinstance(obj, ScatterDataset):
        kind, blocks, provenance = "scatter", [obj], {}
    else:
        raise TypeError("expected ScatterDataset or CalibratedDataset")
    if not blocks:
        raise ValueError("nothing to write")
    g = blocks[0].geometry
    for ds in blocks:
        if (ds.geometry.M, ds.geometry.N, ds.geometry.A, ds.geometry.B) != (g.M, g.N, g.A, g.B):
            raise ValueError("all frequencies must share one geometry")
    meta0 = blocks[0].meta
    out = io.StringIO()
    out.write(f"#format: {FORMAT_NAME}\n#version: {FORMAT_VERSION}\n#kind: {kind}\n")
    out.write(f"#M: {g.M}\n#N: {g.N}\n#A: {_fmt(g.A)}\n#B: {_fmt(g.B)}\n")
    out.write(f"#seed: {meta0.get('seed', '')}\n#noise_db: {meta0.get('noise_db', '')}\n")
    out.write(f"#provenance: {json.dumps(provenance, sort_keys=True)}\n")
    m_idx, n_idx = np.meshgrid(np.arange(1, g.M + 1), np.arange(1, g.N + 1), indexing="ij")
    for ds in blocks:
        out.write(f"#frequency_Hz: {_fmt(ds.frequency)}\n")
        out.write(f"#meta: {json.dumps(ds.meta, sort_keys=True)}\n")
        miss = ds.missing
        for m, n, z, gone in zip(m_idx.ravel(), n_idx.ravel(), ds.data.ravel(), miss.ravel()):
            if gone:
                out.write(f"{m} {n} nan nan\n")
            else:
                out.write(f"{m} {n} {_fmt(z.real)} {_fmt(z.imag)}\n")
    out.write("#end\n")
    return out.getvalue()


def write_dataset(obj, path):
    atomic_write_text(path, format_dataset(obj))


def _header_value(headers, key, cast=str):
    if key not in headers:
        raise DatasetFormatError(f"missing header {key!r}")
    try:
        return cast(headers[key])
    except ValueError:
        raise DatasetFormatError(f"bad value for header {key!r}: {headers[key]!r}") from None


def parse_dataset(text):
    lines = text.splitlines()
    headers = {}
    pos = 0
    while pos < len(lines) and lines[pos].startswith("#") and not lines[pos].startswith("#frequency_Hz:"):
        key, _, value = lines[pos][1:].partition(":")
        headers[key.strip()] = value.strip()
        pos += 1
    if headers.get("format") != FORMAT_NAME:
        raise DatasetFormatError(f"not an {FORMAT_NAME} file")
    version = _header_value(headers, "version", int)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version: expected {FORMAT_VERSION}, "
                                 f"found {version}")
    kind = _header_value(headers, "kind")
    M, N = _header_value(headers, "M", int), _header_value(headers, "N", int)
    A, B = _header_value(headers, "A", float), _header_value(headers, "B", float)
    try:
        provenance = json.loads(headers.get("provenance") or "{}")
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad provenance header: {exc}") from None
    geom = fresnel_geometry(M, N, A, B)
    blocks = []
    while pos < len(lines) and lines[pos].startswith("#frequency_Hz:"):
        freq = float(lines[pos].partition(":")[2])
        pos += 1
        meta = {}
        if pos < len(lines) and lines[pos].startswith("#meta:"):
            try:
                meta = json.loads(lines[pos].partition(":")[2])
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {pos + 1}: bad meta header: {exc}") from None
            pos += 1
        rows = lines[pos:pos + M * N]
        if len(rows) < M * N or any(r.startswith("#") for r in rows):
            raise DatasetFormatError(f"truncated block at {freq} Hz: expected {M * N} rows")
        data = np.empty((M, N), dtype=complex)
        for offset, row in enumerate(rows):
            tokens = row.split()
            if len(tokens) != 4:
                raise DatasetFormatError(f"line {pos + offset + 1}: expected 'm n re im'")
            try:
                m, n = int(tokens[0]), int(tokens[1])
                z = complex(float(tokens[2]), float(tokens[3]))
            except ValueError:
                raise DatasetFormatError(f"line {pos + offset + 1}: non-numeric entry") from None
            if not (1 <= m <= M and 1 <= n <= N):
                raise DatasetFormatError(f"line {pos + offset + 1}: cell ({m}, {n}) out of range")
            data[m - 1, n - 1] = z
        pos += M * N
        blocks.append(ScatterDataset(freq, geom, data, meta))
    if pos >= len(lines) or lines[pos].strip() != "#end":
        raise DatasetFormatError("truncated dataset file: missing '#end' marker")
    if not blocks:
        raise DatasetFormatError("dataset file contains no frequency blocks")
    if kind == "scatter":
        if len(blocks) != 1:
            raise DatasetFormatError("scatter datasets hold exactly one frequency")
        return blocks[0]
    if kind == "calibrated":
        return CalibratedDataset(blocks, provenance)
    raise DatasetFormatError(f"unknown dataset kind {kind!r}")


def read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def export_csv(obj, path):
    """Long-format CSV: ``frequency_Hz,m,n,re,im`` (empty re/im for missing cells)."""
    blocks = obj.datasets if isinstance(obj, CalibratedDataset) else [obj]
    out = io.StringIO()
    out.write("frequency_Hz,m,n,re,im\n")
    for ds in blocks:
        for m in range(ds.geometry.M):
            for n in range(ds.geometry.N):
                if ds.missing[m, n]:
                    out.write(f"{_fmt(ds.frequency)},{m + 1},{n + 1},,\n")
                else:
                    z = ds.data[m, n]
                    out.write(f"{_fmt(ds.frequency)},{m + 1},{n + 1},{_fmt(z.real)},{_fmt(z.imag)}\n")
    atomic_write_text(path, out.getvalue())
