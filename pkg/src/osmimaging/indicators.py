"""Orthogonality-sampling indicator maps.

Every indicator contracts the data with the complex conjugate of a test
vector built from Green's functions:

    response_m(r) = sum_n u_scat(b_mn, a_m) * conj(t_mn(r))

The default test entry is ``t_mn(r) = grad G(b_mn, r) . grad G(a_m, r)``.
Variant ``f`` uses ``G(b_mn, r)`` and variant ``h`` uses ``c . grad G(b_mn, r)``.
The single-source map is ``|response_m|``. The multi-source map is
``|sum_m response_m|``.

In the Fresnel layout, receivers of different emitters share the same 72
positions. Green's functions are therefore computed once per distinct
receiver.
"""

from dataclasses import dataclass, field

import numpy as np

from .specfun import grad_green, green

ANTENNA_EXCLUSION = 1e-3
_CHUNK = 8192


@dataclass(eq=False)
class IndicatorMap:
    """Nonnegative map on ``grid``; ``values`` has shape ``grid.shape`` (rows = y)."""

    grid: object
    values: np.ndarray
    mode: str
    frequencies: tuple = ()
    normalized: bool = False
    meta: dict = field(default_factory=dict)
    response: np.ndarray = None  # complex pre-magnitude field, kept in memory only

    @property
    def max(self):
        return float(self.values.max())

    def normalized_values(self):
        peak = self.values.max()
        return self.values / peak if peak > 0 else np.zeros_like(self.values)

    def argmax_point(self):
        row, col = np.unravel_index(np.argmax(self.values), self.values.shape)
        return self.grid.point_at(row, col)


def _unique_points(points):
    flat = points.reshape(-1, 2)
    _, first, inverse = np.unique(np.round(flat, 12), axis=0, return_index=True,
                                  return_inverse=True)
    return flat[first], inverse.reshape(points.shape[:-1])


def _emitter_indices(geom, emitters):
    if emitters is None:
        return np.arange(geom.M)
    idx = np.asarray(list(emitters), dtype=int)
    if idx.size == 0 or idx.min() < 1 or idx.max() > geom.M:
        raise ValueError(f"emitter index out of range 1..{geom.M}")
    return idx - 1


def responses(ds, grid, emitters=None, variant="g", c=None):
    """Complex per-emitter responses, shape ``(len(emitters),) + grid.shape``.

    ``emitters`` holds 1-based emitter numbers; ``None`` means all of them.
    """
    geom = ds.geometry
    k = ds.wavenumber
    sel = _emitter_indices(geom, emitters)
    data = ds.filled()[sel]
    rx, inv = _unique_points(geom.receiver_points[sel])
    coeff = np.zeros((len(sel), len(rx)), dtype=complex)
    np.add.at(coeff, (np.repeat(np.arange(len(sel)), geom.N), inv.ravel()), data.ravel())

    if variant not in ("g", "f", "h"):
        raise ValueError(f"unknown test-vector variant {variant!r}")
    pts = grid.points
    if variant == "h":
        c = np.asarray(c, dtype=complex)
        if c.shape == (2,):
            c = np.broadcast_to(c, pts.shape)
        else:
            c = c.reshape(pts.shape)
        if np.any(np.all(c == 0, axis=-1)):
            raise ValueError("variant 'h' requires a nonzero vector c")

    antennas = np.concatenate([rx, geom.emitter_points[sel]])
    near = np.zeros(len(pts), dtype=bool)
    for ant in antennas:
        near |= np.hypot(*(pts - ant).T) < ANTENNA_EXCLUSION
    out = np.zeros((len(sel), len(pts)), dtype=complex)
    live = np.flatnonzero(~near)
    for start in range(0, len(live), _CHUNK):
        idx = live[start:start + _CHUNK]
        p = pts[idx]
        if variant == "f":
            gb = green(k, rx[:, None, :], p[None])                     # U,P
            out[:, idx] = coeff @ np.conj(gb)
            continue
        gb = grad_green(k, rx[:, None, :], p[None])                    # U,P,2
        w = (coeff @ np.conj(gb).reshape(len(rx), -1)).reshape(len(sel), len(idx), 2)
        if variant == "h":
            out[:, idx] = np.einsum("pc,mpc->mp", np.conj(c[idx]), w)
        else:
            ga = grad_green(k, geom.emitter_points[sel][:, None, :], p[None])  # m,P,2
            out[:, idx] = np.einsum("mpc,mpc->mp", np.conj(ga), w)
    return out.reshape((len(sel),) + grid.shape), int(near.sum())


def _meta(ds, excluded, **extra):
    return {"frequency_Hz": ds.frequency, "excluded_points": excluded, **extra}


def osm_single(ds, m, grid):
    """Single-source map ``|E(m) . conj(G(r))|`` for the 1-based emitter ``m``."""
    if not 1 <= m <= ds.geometry.M:
        raise ValueError(f"emitter index {m} out of range 1..{ds.geometry.M}")
    resp, excluded = responses(ds, grid, [m])
    return IndicatorMap(grid, np.abs(resp[0]), f"single:{m}", (ds.frequency,),
                        meta=_meta(ds, excluded), response=resp[0])


def osm_single_variant(ds, m, grid, variant, c=None):
    """Single-source map with the alternative test vectors ``f`` or ``h``.

    For ``h`` the vector ``c`` is either one 2-vector or one per grid point
    (shape ``grid.shape + (2,)``).
    """
    if not 1 <= m <= ds.geometry.M:
        raise ValueError(f"emitter index {m} out of range 1..{ds.geometry.M}")
    if variant == "h" and c is None:
        raise ValueError("variant 'h' requires the vector c")
    resp, excluded = responses(ds, grid, [m], variant=variant, c=c)
    return IndicatorMap(grid, np.abs(resp[0]), f"single:{m}:{variant}", (ds.frequency,),
                        meta=_meta(ds, excluded, variant=variant), response=resp[0])


def osm_multi(ds, grid):
    """Multi-source map ``|sum_m E(m) . conj(G(r))|``."""
    resp, excluded = responses(ds, grid)
    total = resp.sum(axis=0)
    return IndicatorMap(grid, np.abs(total), "multi", (ds.frequency,),
                        meta=_meta(ds, excluded), response=total)


def osm_multifreq(inputs, mode, grid):
    """Fuse multi-source maps over frequencies.

    mode 1: ``sum_f F(r, f) / max F(., f)``
    mode 2: ``|sum_f R(r, f)|`` with ``R`` the complex multi-source response
    mode 3: ``sum_f F(r, f)``

    ``inputs`` are ``ScatterDataset`` objects or multi-source ``IndicatorMap``
    objects. Mode 2 needs the complex response, which a map only carries when
    it was computed in this session.
    """
    if mode not in (1, 2, 3):
        raise ValueError("fusion mode must be 1, 2 or 3")
    inputs = list(inputs)
    if not inputs:
        raise ValueError("at least one frequency is required")
    maps = [x if isinstance(x, IndicatorMap) else osm_multi(x, grid) for x in inputs]
    for mp in maps:
        if mp.values.shape != grid.shape:
            raise ValueError("per-frequency map does not match the grid")
    if mode == 1:
        values = np.zeros(grid.shape)
        for mp in maps:
            peak = mp.values.max()
            if peak > 0:
                values += mp.values / peak
    elif mode == 2:
        if any(mp.response is None for mp in maps):
            raise ValueError("mode 2 needs complex responses; pass datasets instead of maps")
        values = np.abs(sum(mp.response for mp in maps))
    else:
        values = sum(mp.values for mp in maps)
    freqs = tuple(f for mp in maps for f in mp.frequencies)
    return IndicatorMap(grid, np.asarray(values, dtype=float), f"fsm:{mode}", freqs,
                        meta={"fusion_mode": mode})


def find_peaks(values, grid, count, min_separation=0.02):
    """Largest local maxima (8-neighbourhood), greedily kept at least ``min_separation`` apart."""
    v = np.asarray(values)
    padded = np.pad(v, 1, mode="constant", constant_values=-np.inf)
    is_max = np.ones(v.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            shifted = padded[1 + dr:1 + dr + v.shape[0], 1 + dc:1 + dc + v.shape[1]]
            is_max &= v >= shifted
    rows, cols = np.nonzero(is_max)
    order = np.argsort(v[rows, cols])[::-1]
    peaks = []
    for i in order:
        p = grid.point_at(rows[i], cols[i])
        if all(np.hypot(*(p - q)) >= min_separation for q, _ in peaks):
            peaks.append((p, float(v[rows[i], cols[i]])))
            if len(peaks) == count:
                break
    return peaks


def normalized_rms_gap(values, reference, relative_to="peak"):
    """RMS difference between two maps after each is divided by its maximum.

    ``relative_to="peak"`` returns the plain RMS of the difference (the peaks
    are 1). ``"energy"`` further divides by the RMS of the normalised reference.
    """
    a = np.asarray(values, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError("maps must have the same shape")
    if not (a.max() > 0 and b.max() > 0):
        raise ValueError("maps must have a positive maximum")
    a = a / a.max()
    b = b / b.max()
    gap = float(np.sqrt(np.mean((a - b) ** 2)))
    if relative_to == "peak":
        return gap
    if relative_to == "energy":
        return gap / float(np.sqrt(np.mean(b**2)))
    raise ValueError("relative_to must be 'peak' or 'energy'")
