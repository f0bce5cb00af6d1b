"""Synthetic scattered-field data for small permeable disks.

Three generators share one data layout, an ``(M, N)`` complex matrix with
entry ``(m, n) = u_scat(b_mn, a_m)``:

* ``born_scattered``: leading small-volume term, linear in each polarizability
  ``tau_s = alpha_s^2 * pi * mu0 / (mu_s + mu0)``.
* ``foldy_lax_scattered``: point dipoles coupled through the Hessian of G.
* ``add_awgn``: circular complex white noise at a prescribed SNR.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import EPS0, MU0
from .specfun import grad_green, hess_green


@dataclass(frozen=True)
class SmallObject:
    """Disk of radius ``radius`` (m) centred at ``center`` with absolute permeability (H/m)."""

    center: tuple
    radius: float
    permeability: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValueError("object radius must be positive")
        if not self.permeability > 0:
            raise ValueError("object permeability must be positive")

    @classmethod
    def relative(cls, center, radius, mu_rel, mu0=MU0):
        return cls(center, radius, mu_rel * mu0)

    def contrast(self, mu0=MU0):
        return mu0 / (self.permeability + mu0)

    def polarizability(self, mu0=MU0):
        return self.radius**2 * math.pi * self.contrast(mu0)


class SingularInteractionError(RuntimeError):
    pass


@dataclass(eq=False)
class ScatterDataset:
    """Measured or simulated ``u_scat`` for one frequency. NaN marks a missing cell."""

    frequency: float
    geometry: object
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        expected = (self.geometry.M, self.geometry.N)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} does not match geometry {expected}")
        bad = ~np.isfinite(self.data) & ~self.missing
        if bad.any():
            raise ValueError("dataset entries must be finite or NaN (missing)")

    @property
    def missing(self):
        return np.isnan(self.data.real) | np.isnan(self.data.imag)

    @property
    def wavenumber(self):
        eps0 = self.meta.get("eps0", EPS0)
        mu0 = self.meta.get("mu0", MU0)
        return 2.0 * math.pi * self.frequency * math.sqrt(eps0 * mu0)

    def filled(self):
        """Data with missing cells set to zero, which drops them from every contraction."""
        return np.where(self.missing, 0.0, self.data)

    def scaled(self, c):
        return ScatterDataset(self.frequency, self.geometry, self.data * c, dict(self.meta))


def check_objects(objects, geom=None):
    objects = list(objects)
    for i, s in enumerate(objects):
        for t in objects[i + 1:]:
            dist = math.dist(s.center, t.center)
            if dist <= s.radius + t.radius:
                raise ValueError(f"objects at {s.center} and {t.center} overlap")
        if geom is not None and math.hypot(*s.center) >= min(geom.A, geom.B):
            raise ValueError(f"object at {s.center} lies outside the antenna circles")
    return objects


def _medium_meta(medium, generator):
    meta = {"generator": generator}
    if medium.eps0 != EPS0 or medium.mu0 != MU0:
        meta.update(eps0=medium.eps0, mu0=medium.mu0)
    return meta


def _object_arrays(objects, mu0):
    centers = np.array([o.center for o in objects], dtype=float).reshape(-1, 2)
    tau = np.array([o.polarizability(mu0) for o in objects], dtype=float)
    return centers, tau


def born_scattered(objects, medium, geom):
    """Leading-order data: ``sum_s tau_s grad G(b_mn, r_s) . grad G(a_m, r_s)``."""
    objects = check_objects(objects, geom)
    k = medium.wavenumber
    data = np.zeros((geom.M, geom.N), dtype=complex)
    if objects:
        centers, tau = _object_arrays(objects, medium.mu0)
        gb = grad_green(k, geom.receiver_points[:, :, None, :], centers[None, None])  # M,N,S,2
        ga = grad_green(k, geom.emitter_points[:, None, :], centers[None])             # M,S,2
        data = np.einsum("s,mnsc,msc->mn", tau, gb, ga)
    return ScatterDataset(medium.frequency, geom, data, _medium_meta(medium, "born"))


def foldy_lax_scattered(objects, medium, geom, max_condition=1e12):
    """Dipole moments solve ``p_s = tau_s [grad u_inc(r_s) + sum_{t!=s} P(r_s, r_t) p_t]``.

    ``P(r_s, r_t) = -Hess_r G(r_s, r_t)`` maps a dipole at ``r_t`` to the field
    gradient at ``r_s``. The recorded field is ``sum_s grad G(b_mn, r_s) . p_s``.
    """
    objects = check_objects(objects, geom)
    k = medium.wavenumber
    if not objects:
        return ScatterDataset(medium.frequency, geom, np.zeros((geom.M, geom.N), complex),
                              _medium_meta(medium, "foldy-lax"))
    centers, tau = _object_arrays(objects, medium.mu0)
    S = len(objects)
    system = np.eye(2 * S, dtype=complex)
    for s in range(S):
        for t in range(S):
            if s != t:
                prop = -hess_green(k, centers[s], centers[t])
                system[2 * s:2 * s + 2, 2 * t:2 * t + 2] -= tau[s] * prop
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularInteractionError(
            f"dipole interaction matrix is near-singular (condition number {cond:.3g}); "
            "the configuration is close to a multiple-scattering resonance")
    ga = grad_green(k, geom.emitter_points[:, None, :], centers[None])    # M,S,2
    rhs = (tau[None, :, None] * ga).reshape(geom.M, 2 * S).T              # 2S,M
    moments = np.linalg.solve(system, rhs).T.reshape(geom.M, S, 2)
    gb = grad_green(k, geom.receiver_points[:, :, None, :], centers[None, None])
    data = np.einsum("mnsc,msc->mn", gb, moments)
    return ScatterDataset(medium.frequency, geom, data, _medium_meta(medium, "foldy-lax"))


def add_awgn(ds, snr_db, seed):
    """Add circular complex Gaussian noise with total power ``sum|u|^2 / 10^(snr/10)``.

    Each emitter row draws from its own stream seeded by ``(seed, m)``, so the
    result does not depend on the order in which rows are processed.
    ``snr_db = inf`` returns the data unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return ScatterDataset(ds.frequency, ds.geometry, ds.data.copy(),
                              {**ds.meta, "noise_db": math.inf, "seed": seed})
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    present = ~ds.missing
    if not present.any():
        raise ValueError("dataset has no populated entries")
    power = float(np.sum(np.abs(ds.data[present]) ** 2))
    if power == 0.0:
        raise ValueError("signal power is zero; SNR is undefined")
    sigma2 = power / 10 ** (snr_db / 10) / present.sum()
    noise = np.empty(ds.data.shape, dtype=complex)
    for m in range(ds.data.shape[0]):
        rng = np.random.default_rng([int(seed), m])
        z = rng.standard_normal((2, ds.data.shape[1]))
        noise[m] = (z[0] + 1j * z[1]) * math.sqrt(sigma2 / 2)
    data = np.where(present, ds.data + noise, ds.data)
    return ScatterDataset(ds.frequency, ds.geometry, data,
                          {**ds.meta, "noise_db": float(snr_db), "seed": int(seed)})
