"""Closed-form Bessel-series structure of the OSM indicators and their oracles.

Two forms of the remainder series are available:

``"printed"``
    Uncorrected coefficients: weight ``2 i^q / (q +- 2)`` in the arc integral
    and ``i^q`` on the first remainder series. The reference profile values
    (peak level 0.1744 of ``osm2``, for instance) come from this form.

``"corrected"``
    Coefficients obtained by integrating ``cos^2(t - v) cos(q (t - phi))`` term by
    term: the ``q +- 2`` series carry ``i^q / (q +- 2)`` and the ``J_2`` term is
    halved. Evaluated over the Fresnel arc, every series picks up ``(-1)^q``.
    This form agrees with indicator maps computed from Born data.

With ``c = 1/2 - 3 sqrt(3) / (16 pi)`` and ``x = k |r - r_s|``, the bracket of the
single-source structure is ``c J_0 - w2 cos(2v - 2phi) J_2 + E_osm``. Here
``w2`` is 1 for the printed form and 1/2 for the corrected one. The multi-source
bracket is ``c J_0^2 + w2 J_2^2 + E_msm``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .forward import check_objects
from .geometry import MediumParams
from .specfun import EULER_GAMMA, _LOG_TINY, bessel_j_range

C_ARC = 0.5 - 3.0 * math.sqrt(3.0) / (16.0 * math.pi)
FORMS = ("printed", "corrected")
PROFILE_KINDS = ("osm1", "osm2", "osm", "msm1", "msm2", "msm")

_EXACT_SUM_LIMIT = 10**6
_FAR_FIELD_WARN = 50.0


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation control for the Bessel series.

    ``Q`` is the hard cap on the summation index. With ``fixed=True`` every term
    up to ``Q`` is included; terms whose ``J_q`` underflows double precision
    are skipped because they add exactly nothing. Otherwise the sum stops once
    three consecutive terms fall below ``tol`` past ``q > x``.
    """

    Q: int = 200_000
    tol: float = 1e-12
    fixed: bool = False

    def __post_init__(self):
        if int(self.Q) != self.Q or self.Q < 1:
            raise ValueError("Q must be a positive integer")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


class ConvergenceError(RuntimeError):
    def __init__(self, message, partial_sum=None):
        super().__init__(message)
        self.partial_sum = partial_sum


def _check_form(form):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")


def _underflow_order(xmax):
    """Smallest q > xmax with (xmax/2)^q / q! below the double-precision floor."""
    if xmax <= 0:
        return 1
    q = int(math.ceil(xmax)) + 1
    half = math.log(xmax) - math.log(2.0)
    while q * half - math.lgamma(q + 1) > _LOG_TINY:
        q += max(1, q // 8)
    return q


def _bessel_table(x, cfg):
    """``J_0..J_qmax`` at the points ``x``; returns ``(J, qmax)``.

    ``qmax`` is the order past which every ``J_q`` underflows, capped by ``cfg.Q``.
    """
    x = np.abs(np.asarray(x, dtype=float))
    xmax = float(x.max()) if x.size else 0.0
    need = _underflow_order(xmax)
    if cfg.fixed:
        qmax = min(cfg.Q, need)
    else:
        # three consecutive small terms past x, plus a small margin
        qmax = min(cfg.Q, need + 3)
    return bessel_j_range(qmax, x), qmax


def _check_tail(terms, x, cfg, partial):
    """Require three consecutive terms below ``tol`` with ``q > x`` before the cap.

    ``terms`` has shape ``(qmax,) + x.shape`` and holds the magnitudes of terms
    ``q = 1..qmax``.
    """
    if cfg.fixed:
        return
    qmax = terms.shape[0]
    q = np.arange(1, qmax + 1).reshape((-1,) + (1,) * x.ndim)
    small = (terms < cfg.tol) & (q > x)
    if qmax < 3:
        ok = np.zeros(x.shape, dtype=bool)
    else:
        run = small[:-2] & small[1:-1] & small[2:]
        ok = run.any(axis=0)
    if not np.all(ok):
        raise ConvergenceError(
            f"series did not converge within Q={cfg.Q} (tol={cfg.tol:g}); "
            "increase Q or loosen tol", partial_sum=partial)


def _pm_weights(q, form):
    """Coefficients of the ``1/q``, ``1/(q+2)`` and ``1/(q-2)`` series (q >= 1)."""
    s0 = np.sin(2.0 * q * np.pi / 3.0) / q
    sp = np.sin(2.0 * (q + 2) * np.pi / 3.0) / (q + 2)
    qm = np.where(q == 2, 1, q - 2)
    sm = np.where(q == 2, 0.0, np.sin(2.0 * (q - 2) * np.pi / 3.0) / qm)
    half = 1.0 if form == "printed" else 0.5
    return s0, half * sp, half * sm


# ---------------------------------------------------------------------------
# arc integral

def lemma_integral_closed(x, theta1, thetaN, vartheta, phi, cfg=SeriesConfig(), form="corrected"):
    """Series evaluation of ``int_{theta1}^{thetaN} cos^2(t - vartheta) exp(i x cos(t - phi)) dt``.

    Parameters
    ----------
    x : float
        Nonnegative argument ``k |r|``.
    theta1, thetaN : float
        Arc end points (rad), ``theta1 < thetaN``.
    vartheta, phi : float
        Direction of the squared projection and of ``r``.
    cfg : SeriesConfig
    form : {"corrected", "printed"}
        ``"printed"`` keeps the uncorrected coefficients ``2 i^q/(q +- 2)`` and
        ``-(thetaN - theta1) cos(2 vartheta - 2 phi) J_2``; it does not equal the
        integral and exists for comparison.

    Raises
    ------
    ConvergenceError
        If the adaptive stop is not reached within ``cfg.Q`` terms.
    """
    _check_form(form)
    if not theta1 < thetaN:
        raise ValueError("theta1 must be smaller than thetaN")
    if x < 0:
        raise ValueError("x must be nonnegative")
    x = float(x)
    J, qmax = _bessel_table(np.array(x), cfg)
    width = thetaN - theta1
    total = thetaN + theta1
    j2 = J[2] if qmax >= 2 else 0.0
    w2 = 1.0 if form == "printed" else 0.5
    value = complex(width * (0.5 * J[0]) - w2 * width * math.cos(2 * vartheta - 2 * phi) * j2)
    value += 0.5 * math.sin(width) * math.cos(total - 2 * vartheta) * J[0]
    q = np.arange(1, qmax + 1)
    iq = 1j ** (q % 4)
    pm = 2.0 if form == "printed" else 1.0
    t0 = 2.0 / q * np.sin(q * width / 2) * np.cos(q * (total - 2 * phi) / 2)
    tp = pm / (q + 2) * np.sin((q + 2) * width / 2) * np.cos(
        ((q + 2) * total - 4 * vartheta - 2 * q * phi) / 2)
    qm = np.where(q == 2, 1, q - 2)
    tm = np.where(q == 2, 0.0, pm / qm * np.sin((q - 2) * width / 2) * np.cos(
        ((q - 2) * total + 4 * vartheta - 2 * q * phi) / 2))
    terms = iq * (t0 + tp + tm) * J[1:]
    value += complex(np.sum(terms))
    _check_tail(np.abs(terms), np.array(x), cfg, value)
    return value


def _gauss_panels(f, a, b, panels, nodes, weights):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = mid[:, None] + half[:, None] * nodes[None, :]
    return complex(np.sum(half[:, None] * weights[None, :] * f(t)))


def lemma_integral_quadrature(x, theta1, thetaN, vartheta, phi, tol=1e-11, max_panels=1 << 16):
    """Composite Gauss-Legendre oracle for the arc integral.

    The panel count starts proportional to ``x * (thetaN - theta1)`` and doubles
    until two successive estimates differ by less than ``tol``.
    """
    if not theta1 < thetaN:
        raise ValueError("theta1 must be smaller than thetaN")
    nodes, weights = np.polynomial.legendre.leggauss(20)

    def f(t):
        return np.cos(t - vartheta) ** 2 * np.exp(1j * x * np.cos(t - phi))

    panels = max(4, int(math.ceil(abs(x) * (thetaN - theta1) / 8.0)))
    prev = _gauss_panels(f, theta1, thetaN, panels, nodes, weights)
    while panels < max_panels:
        panels *= 2
        cur = _gauss_panels(f, theta1, thetaN, panels, nodes, weights)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise ConvergenceError(f"quadrature did not reach {tol:g} with {max_panels} panels",
                           partial_sum=prev)


# ---------------------------------------------------------------------------
# remainder series

def _polar(r, rs):
    d = np.asarray(r, dtype=float) - np.asarray(rs, dtype=float)
    return np.hypot(d[..., 0], d[..., 1]), np.arctan2(d[..., 1], d[..., 0])


def _e_osm_from(x, angle, cfg, form):
    """``E_osm`` at arguments ``x`` with ``angle = vartheta_m - phi_s``."""
    x = np.asarray(x, dtype=float)
    angle = np.broadcast_to(np.asarray(angle, dtype=float), x.shape)
    J, qmax = _bessel_table(x, cfg)
    q = np.arange(1, qmax + 1)
    s0, sp, sm = _pm_weights(q, form)
    miq = (-1j) ** (q % 4)
    first = (1j ** (q % 4)) if form == "printed" else miq
    coef = first * s0 + miq * (sp + sm)
    shape = (-1,) + (1,) * x.ndim
    terms = (3.0 / (2.0 * np.pi)) * coef.reshape(shape) * np.cos(
        q.reshape(shape) * angle[None]) * J[1:]
    value = terms.sum(axis=0)
    _check_tail(np.abs(terms), x, cfg, value)
    return value


def _e_msm_from(x, cfg, form):
    x = np.asarray(x, dtype=float)
    J, qmax = _bessel_table(x, cfg)
    q = np.arange(1, qmax + 1)
    s0, sp, sm = _pm_weights(q, form)
    if form == "printed":
        sign = np.where(q % 2 == 0, 1.0, -1.0)
        coef = sign * s0 - sign * sp - sign * sm
    else:
        coef = s0 + sp + sm
    shape = (-1,) + (1,) * x.ndim
    terms = (3.0 / (2.0 * np.pi)) * coef.reshape(shape) * J[1:] ** 2
    value = terms.sum(axis=0)
    _check_tail(np.abs(terms), x, cfg, value)
    return value


def e_osm(r, rs, vartheta, k, cfg=SeriesConfig(), form="printed"):
    """Single-source remainder ``E_osm(r, m)``; vectorised over the leading axes of ``r``."""
    _check_form(form)
    dist, phi = _polar(r, rs)
    out = _e_osm_from(k * dist, vartheta - phi, cfg, form)
    return out[()] if out.ndim == 0 else out


def e_msm(r, rs, k, cfg=SeriesConfig(), form="printed"):
    """Multi-source remainder ``E_msm(r)`` (real)."""
    _check_form(form)
    dist, _ = _polar(r, rs)
    out = _e_msm_from(k * dist, cfg, form)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# structure functions

def _far_field_check(r, geom, k, emitters):
    pts = np.asarray(r, dtype=float).reshape(-1, 2)
    rx = geom.receiver_points[emitters].reshape(-1, 2)
    tx = geom.emitter_points[emitters].reshape(-1, 2)
    ant = np.concatenate([rx, tx])
    # the nearest antenna to a point inside the circles lies on the radius
    rmax = float(np.hypot(pts[:, 0], pts[:, 1]).max())
    rmin_ant = float(np.hypot(ant[:, 0], ant[:, 1]).min())
    worst = 4.0 * k * max(rmin_ant - rmax, 0.0)
    if worst < _FAR_FIELD_WARN:
        warnings.warn(f"far-field condition weak: min 4k|r - antenna| = {worst:.3g} < "
                      f"{_FAR_FIELD_WARN:g}", RuntimeWarning, stacklevel=3)


def _arc_bracket(x, angle, cfg, form):
    w2 = 1.0 if form == "printed" else 0.5
    J = bessel_j_range(2, x)
    return C_ARC * J[0] - w2 * np.cos(2.0 * angle) * J[2] + _e_osm_from(x, angle, cfg, form)


def _multi_bracket(x, cfg, form):
    w2 = 1.0 if form == "printed" else 0.5
    J = bessel_j_range(2, x)
    return C_ARC * J[0] ** 2 + w2 * J[2] ** 2 + _e_msm_from(x, cfg, form)


def structure_single(r, m, objects, medium, geom, cfg=SeriesConfig(), form="corrected"):
    """Far-field closed form of the single-source map at points ``r`` (shape ``(..., 2)``).

    ``form="printed"`` uses the uncorrected prefactor ``N k^2 / (4AB)`` with
    ``alpha^2`` weights. ``"corrected"`` uses ``N k^2 tau / (64 pi^2 A B)`` with the
    polarizability ``tau``, which matches the absolute level of Born-data maps.
    """
    _check_form(form)
    if not 1 <= m <= geom.M:
        raise ValueError(f"emitter index {m} out of range 1..{geom.M}")
    objects = check_objects(objects, geom)
    k = medium.wavenumber
    r = np.asarray(r, dtype=float)
    _far_field_check(r, geom, k, [m - 1])
    v = float(geom.emitter_angles[m - 1])
    vdir = np.array([math.cos(v), math.sin(v)])
    total = np.zeros(r.shape[:-1], dtype=complex)
    for obj in objects:
        dist, phi = _polar(r, obj.center)
        phase = np.exp(1j * k * ((r - np.asarray(obj.center)) @ vdir))
        if form == "printed":
            weight = obj.radius**2 * obj.contrast(medium.mu0)
        else:
            weight = obj.polarizability(medium.mu0)
        total += weight * phase * _arc_bracket(k * dist, v - phi, cfg, form)
    if form == "printed":
        pref = geom.N * k * k / (4.0 * geom.A * geom.B)
    else:
        pref = geom.N * k * k / (64.0 * math.pi**2 * geom.A * geom.B)
    out = np.abs(pref * total)
    return out[()] if out.ndim == 0 else out


def structure_multi(r, objects, medium, geom, cfg=SeriesConfig(), form="corrected"):
    """Far-field closed form of the multi-source map; independent of emitter positions."""
    _check_form(form)
    objects = check_objects(objects, geom)
    k = medium.wavenumber
    r = np.asarray(r, dtype=float)
    _far_field_check(r, geom, k, slice(None))
    total = np.zeros(r.shape[:-1], dtype=float)
    for obj in objects:
        dist, _ = _polar(r, obj.center)
        total += obj.polarizability(medium.mu0) * _multi_bracket(k * dist, cfg, form)
    if form == "printed":
        pref = geom.M * geom.N * k * k / (4.0 * geom.A * geom.B)
    else:
        pref = geom.M * geom.N * k * k / (64.0 * math.pi**2 * geom.A * geom.B)
    out = np.abs(pref * total)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# one-dimensional profiles

def d_profile(kind, x, f, cfg=SeriesConfig(), form="printed", medium=None):
    """Profile along a line through a single object at the origin with ``vartheta_m = phi``.

    ``x`` in metres (any shape), ``f`` in Hz. ``osm1``, ``msm1``, ``msm2`` and
    ``msm`` are real. ``osm2`` and ``osm`` are complex; plot their magnitude.
    Every profile depends on ``|x|`` only.
    """
    if kind not in PROFILE_KINDS:
        raise ValueError(f"kind must be one of {PROFILE_KINDS}, got {kind!r}")
    _check_form(form)
    medium = medium or MediumParams(f)
    t = medium.wavenumber * np.abs(np.asarray(x, dtype=float))
    w2 = 1.0 if form == "printed" else 0.5
    J = bessel_j_range(2, t)
    if kind == "osm1":
        out = C_ARC * J[0] - w2 * J[2]
    elif kind == "msm1":
        out = C_ARC * J[0] ** 2 + w2 * J[2] ** 2
    elif kind == "osm2":
        out = _e_osm_from(t, 0.0, cfg, form)
    elif kind == "msm2":
        out = _e_msm_from(t, cfg, form)
    elif kind == "osm":
        out = C_ARC * J[0] - w2 * J[2] + _e_osm_from(t, 0.0, cfg, form)
    else:
        out = C_ARC * J[0] ** 2 + w2 * J[2] ** 2 + _e_msm_from(t, cfg, form)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# harmonic sums

def _harmonic(n):
    """``H_n``; compensated summation up to 10^6, Euler-Maclaurin beyond."""
    if n <= 0:
        return 0.0
    if n <= _EXACT_SUM_LIMIT:
        return math.fsum(1.0 / np.arange(1, n + 1, dtype=float))
    n = float(n)
    return (math.log(n) + EULER_GAMMA + 1.0 / (2 * n) - 1.0 / (12 * n**2)
            + 1.0 / (120 * n**4) - 1.0 / (252 * n**6))


def series_s1_s2(Q):
    """``S1(Q) = sum_{q != 2} 1/(q - 2) + sum 1/(q + 2)`` and ``S2(Q) = sum 2/q``, q = 1..Q.

    Reindexing gives ``S1 = (H_{Q-2} - 1) + (H_{Q+2} - 3/2)`` and ``S2 = 2 H_Q``.
    """
    if int(Q) != Q or Q < 3:
        raise ValueError("Q must be an integer >= 3")
    Q = int(Q)
    s1 = (_harmonic(Q - 2) - 1.0) + (_harmonic(Q + 2) - 1.5)
    s2 = 2.0 * _harmonic(Q)
    return s1, s2
