"""Medium constants, the Fresnel bistatic antenna layout and rectangular imaging grids."""

import math
from dataclasses import dataclass

import numpy as np

EPS0 = 8.854e-12
MU0 = 4e-7 * math.pi

FRESNEL_M = 36
FRESNEL_N = 49
FRESNEL_A = 0.72
FRESNEL_B = 0.76


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous background. ``frequency`` in Hz."""

    frequency: float
    eps0: float = EPS0
    mu0: float = MU0
    sigma0: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")

    @classmethod
    def from_ghz(cls, f_ghz, **kwargs):
        return cls(frequency=float(f_ghz) * 1e9, **kwargs)

    @property
    def omega(self):
        return 2.0 * math.pi * self.frequency

    @property
    def wavenumber(self):
        return self.omega * math.sqrt(self.eps0 * self.mu0)

    @property
    def wavelength(self):
        return 2.0 * math.pi / self.wavenumber


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Emitters on a circle of radius ``A``; each emitter m owns N receivers on radius ``B``.

    Arrays are indexed from 0, while emitter numbers in the public API (``m``)
    start at 1.
    """

    A: float
    B: float
    M: int
    N: int
    emitter_angles: np.ndarray
    receiver_angles: np.ndarray
    emitter_points: np.ndarray
    receiver_points: np.ndarray

    @property
    def emitter_directions(self):
        return self.emitter_points / self.A

    @property
    def receiver_directions(self):
        return self.receiver_points / self.B

    def to_dict(self):
        return {"M": self.M, "N": self.N, "A": self.A, "B": self.B}

    def reorder_emitters(self, order):
        """Same antennas with emitter rows permuted by ``order`` (0-based indices)."""
        order = np.asarray(order)
        return ArrayGeometry(
            A=self.A, B=self.B, M=self.M, N=self.N,
            emitter_angles=self.emitter_angles[order],
            receiver_angles=self.receiver_angles[order],
            emitter_points=self.emitter_points[order],
            receiver_points=self.receiver_points[order],
        )


def fresnel_geometry(M=FRESNEL_M, N=FRESNEL_N, A=FRESNEL_A, B=FRESNEL_B):
    """Build the bistatic layout: receivers cover the 4*pi/3 arc opposite each emitter."""
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    if int(N) != N or N < 2:
        raise ValueError("N must be an integer >= 2 (the receiver step divides by N - 1)")
    if not (A > 0 and B > 0):
        raise ValueError("radii A and B must be positive")
    M, N = int(M), int(N)
    vartheta = 2.0 * np.arange(M) * np.pi / M
    theta = vartheta[:, None] + np.pi / 3 + 4.0 * np.arange(N)[None, :] * np.pi / (3.0 * (N - 1))
    a = A * np.stack([np.cos(vartheta), np.sin(vartheta)], axis=-1)
    b = B * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    for arr in (vartheta, theta, a, b):
        arr.setflags(write=False)
    return ArrayGeometry(A=float(A), B=float(B), M=M, N=N, emitter_angles=vartheta,
                         receiver_angles=theta, emitter_points=a, receiver_points=b)


@dataclass(frozen=True)
class ImagingGrid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def xs(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self):
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self):
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def points(self):
        """Row-major lattice, shape ``(ny * nx, 2)``; x varies fastest."""
        X, Y = np.meshgrid(self.xs, self.ys, indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def index_of(self, point):
        """(row, col) of the lattice node nearest to ``point``."""
        col = int(round((point[0] - self.x_min) / self.dx))
        row = int(round((point[1] - self.y_min) / self.dy))
        return min(max(row, 0), self.ny - 1), min(max(col, 0), self.nx - 1)

    def point_at(self, row, col):
        return np.array([self.xs[col], self.ys[row]])

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min,
                "y_max": self.y_max, "nx": self.nx, "ny": self.ny}


def make_grid(x_min=-0.1, x_max=0.1, y_min=-0.1, y_max=0.1, nx=201, ny=201,
              max_radius=FRESNEL_A):
    """Uniform imaging lattice that must lie strictly inside the disk ``|r| < max_radius``."""
    if not (x_min < x_max and y_min < y_max):
        raise ValueError("grid bounds must satisfy x_min < x_max and y_min < y_max")
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise ValueError("nx and ny must be integers >= 2")
    corner = max(math.hypot(x, y) for x in (x_min, x_max) for y in (y_min, y_max))
    if corner >= max_radius:
        raise ValueError(f"grid reaches |r| = {corner:.4g} m, outside the antenna circle "
                         f"of radius {max_radius} m")
    return ImagingGrid(float(x_min), float(x_max), float(y_min), float(y_max), int(nx), int(ny))
