"""Integer-order Bessel functions, Hankel functions and the 2D Helmholtz Green's function.

``J_n`` is computed by Miller's backward recurrence, normalised with the
identity ``J_0 + 2 * sum_k J_2k = 1``. For ``x < 20`` the Neumann series turn
the same ``J`` sequence into ``Y_0`` and ``Y_1``; from ``x >= 20`` on, Hankel's
asymptotic expansion is used. Its smallest term there is ~exp(-2x).

Points are numpy arrays with a trailing axis of length 2. Complex values are
plain numpy ``complex128``.
"""

import math

import numpy as np

EULER_GAMMA = 0.5772156649015329
MAX_ORDER = 100_000

_ASYMPTOTIC_MIN_X = 20.0
_RESCALE = 1e250
_LOG_TINY = -745.0
_SERIES_MAX_X = 1e-100


def _start_index(order, xmax):
    n = max(order, xmax, 1.0)
    start = int(n + 20 + 2 * math.sqrt(40 * n))
    return start + (start % 2)


def bessel_j_range(qmax, x):
    """Return ``J_0(x), ..., J_qmax(x)`` stacked along a new leading axis.

    Parameters
    ----------
    qmax : int
        Highest order returned.
    x : array_like
        Real arguments of any shape.

    Returns
    -------
    ndarray of shape ``(qmax + 1,) + x.shape``
    """
    qmax = int(qmax)
    if qmax < 0:
        raise ValueError("qmax must be nonnegative")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("Bessel argument must be finite")
    shape = x.shape
    ax = np.abs(x).ravel()
    out = np.zeros((qmax + 1, ax.size))
    tiny = ax < _SERIES_MAX_X
    if tiny.any():
        # leading term (x/2)^n / n!; the next term is smaller by x^2/4
        t = ax[tiny] / 2.0
        term = np.ones_like(t)
        for n in range(qmax + 1):
            out[n, tiny] = term
            term = term * t / (n + 1)
    live = ~tiny
    if live.any():
        out[:, live] = _miller(ax[live], qmax)
    if np.any(x < 0):
        odd = np.arange(qmax + 1) % 2 == 1
        neg = (x.ravel() < 0)
        out[np.ix_(odd, neg)] *= -1.0
    return out.reshape((qmax + 1,) + shape)


def _miller(x, qmax):
    # x > 0, 1-D
    start = _start_index(qmax, float(x.max()))
    out = np.zeros((qmax + 1, x.size))
    two_over_x = 2.0 / x
    jp1 = np.zeros_like(x)
    j = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for n in range(start, 0, -1):
        if n <= qmax:
            out[n] = j
        if n % 2 == 0:
            norm += 2.0 * j
        jm1 = n * two_over_x * j - jp1
        jp1, j = j, jm1
        big = np.abs(j) > _RESCALE
        if big.any():
            s = 1.0 / _RESCALE
            j[big] *= s
            jp1[big] *= s
            norm[big] *= s
            out[min(n, qmax + 1):, big] *= s
    out[0] = j
    norm += j
    return out / norm


def bessel_j(order, x, max_order=MAX_ORDER):
    """Bessel function of the first kind ``J_order(x)`` for integer ``order >= 0``."""
    if int(order) != order or order < 0:
        raise ValueError(f"order must be a nonnegative integer, got {order!r}")
    order = int(order)
    if order > max_order:
        raise ValueError(f"order {order} exceeds the configured maximum {max_order}")
    xa = np.asarray(x, dtype=float)
    xmax = float(np.max(np.abs(xa))) if xa.size else 0.0
    if order > xmax + 1 and xmax > 0:
        # J_n(x) <= (x/2)^n / n! for n >= 0, x >= 0
        if order * (math.log(xmax) - math.log(2.0)) - math.lgamma(order + 1) < _LOG_TINY:
            res = np.zeros(xa.shape)
            return res[()] if res.ndim == 0 else res
    if order > 0 and xmax == 0.0:
        res = np.zeros(xa.shape)
        return res[()] if res.ndim == 0 else res
    res = bessel_j_range(order, xa)[order]
    return res[()] if res.ndim == 0 else res


def _jy01_small(x):
    """J_0, J_1, Y_0, Y_1 for 0 < x < 20 via Miller + Neumann series."""
    nmax = _start_index(0, float(x.max())) - 2
    J = _miller(x, nmax)
    lg = np.log(x / 2.0) + EULER_GAMMA
    k = np.arange(1, nmax // 2)
    sign = np.where(k % 2 == 0, 1.0, -1.0)[:, None]
    s0 = np.sum(sign * J[2 * k] / k[:, None], axis=0)
    s1 = np.sum(sign * (J[2 * k - 1] - J[2 * k + 1]) / k[:, None], axis=0)
    y0 = (2.0 / np.pi) * lg * J[0] - (4.0 / np.pi) * s0
    y1 = (2.0 / np.pi) * (lg * J[1] - J[0] / x) + (2.0 / np.pi) * s1
    return J[0], J[1], y0, y1


def _hankel_asymptotic(order, x):
    nu2 = 4.0 * order * order
    xmin = float(x.min())
    coeffs = [1.0]
    while True:
        k = len(coeffs)
        a = coeffs[-1] * (nu2 - (2 * k - 1) ** 2) / (8.0 * k)
        if a == 0.0 or abs(a) / xmin**k < 1e-18 or k > 2 * xmin:
            break
        coeffs.append(a)
    inv = 1.0 / x
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    # Horner in 1/x; even k feed P, odd k feed Q, with alternating signs i^k
    for k in range(len(coeffs) - 1, -1, -1):
        sgn = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 0:
            p = p + sgn * coeffs[k] * inv**k
        else:
            q = q + sgn * coeffs[k] * inv**k
    omega = x - (0.5 * order + 0.25) * np.pi
    amp = np.sqrt(2.0 / (np.pi * x))
    return amp * (p + 1j * q) * np.exp(1j * omega)


def hankel1(order, x):
    """Hankel function of the first kind ``H^(1)_order(x) = J + iY`` for order 0 or 1.

    Raises ``ValueError`` for ``x <= 0`` (logarithmic singularity at the origin).
    """
    if order not in (0, 1):
        raise ValueError("hankel1 supports orders 0 and 1 only")
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise ValueError("hankel1 requires x > 0")
    flat = x.ravel()
    out = np.empty(flat.shape, dtype=complex)
    far = flat >= _ASYMPTOTIC_MIN_X
    if far.any():
        out[far] = _hankel_asymptotic(order, flat[far])
    near = ~far
    if near.any():
        j0, j1, y0, y1 = _jy01_small(flat[near])
        out[near] = (j0 + 1j * y0) if order == 0 else (j1 + 1j * y1)
    out = out.reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def bessel_y(order, x):
    """``Y_order(x)`` for order 0 or 1, x > 0."""
    return np.imag(hankel1(order, x))


def _separation(x, y):
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r == 0.0):
        raise ValueError("Green's function evaluated at coincident points")
    return d, r


def green(k, x, y):
    """Free-space Green's function ``G(x, y) = -(i/4) H0(k|x - y|)``."""
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    _, r = _separation(x, y)
    return -0.25j * hankel1(0, k * r)


def grad_green(k, x, r):
    """Gradient of ``G(x, r)`` with respect to ``r``; trailing axis holds (d/dr_x, d/dr_y).

    ``d/dz H0(z) = -H1(z)`` gives ``(ik/4) H1(k|r-x|) (r-x)/|r-x|``.
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    d, dist = _separation(x, r)
    scale = 0.25j * k * hankel1(1, k * dist) / dist
    return np.asarray(scale)[..., None] * d


def hess_green(k, x, r):
    """Hessian of ``G(x, r)`` with respect to ``r`` (symmetric 2x2 on the last two axes)."""
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    d, dist = _separation(x, r)
    z = k * dist
    h0 = hankel1(0, z)
    h1 = hankel1(1, z)
    u = d / dist[..., None]
    outer = u[..., :, None] * u[..., None, :]
    eye = np.eye(2)
    # d/dz H1 = H0 - H1/z
    radial = 0.25j * k * k * (h0 - h1 / z)
    tangential = 0.25j * k * h1 / dist
    return (np.asarray(radial)[..., None, None] * outer
            + np.asarray(tangential)[..., None, None] * (eye - outer))
