"""Discrete domain, fields, quadrature and norms.

The layer ``[0, gamma] x [0, 1]`` is discretised with a uniform periodic
grid in ``x1`` (no duplicated seam column) and Chebyshev-Gauss-Lobatto
nodes in ``x2`` mapped to ``[0, 1]``, so that both walls are grid nodes.
Vertical integrals use Clenshaw-Curtis weights on the same nodes.

Field values are stored as ``(nx, nz)`` arrays: row index is horizontal.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import chebyshev as cheb

__all__ = [
    "Domain",
    "ScalarField",
    "VectorField",
    "integrate",
    "norm",
    "sobolev_norm",
    "horizontal_average",
    "wall_trace_integral",
    "vertical_integral",
    "partial_weights",
]


def cheb_diff_matrix(n: int) -> np.ndarray:
    """First-derivative matrix on ``x_j = cos(pi j / n)``, j = 0..n.

    Uses trigonometric differences for the off-diagonal entries and the
    negative-sum trick on the diagonal (rows annihilate constants exactly).
    """
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** j
    jj, ii = np.meshgrid(j, j)
    # x_i - x_j = 2 sin(pi (i + j) / 2n) sin(pi (j - i) / 2n)
    dx = 2.0 * np.sin(np.pi * (ii + jj) / (2 * n)) * np.sin(np.pi * (jj - ii) / (2 * n))
    np.fill_diagonal(dx, 1.0)
    d = np.outer(c, 1.0 / c) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d, x


def clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on ``cos(pi j / n)`` for ``[-1, 1]``."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    interior = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[interior]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
    w[interior] = 2.0 * v / n
    return w


@dataclass(frozen=True)
class Domain:
    """Rectangle ``[0, gamma] x [0, 1]``; periodic in x1, walls at x2 = 0, 1.

    ``nx`` is the number of horizontal grid points (even, >= 8) and ``nz``
    the number of vertical collocation nodes (>= 9), endpoints included.
    """

    gamma: float = 2.0
    nx: int = 64
    nz: int = 33

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if int(self.nx) != self.nx or self.nx < 8 or self.nx % 2:
            raise ValueError(f"nx must be an even integer >= 8, got {self.nx}")
        if int(self.nz) != self.nz or self.nz < 9:
            raise ValueError(f"nz must be an integer >= 9, got {self.nz}")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nz", int(self.nz))

    @cached_property
    def x(self) -> np.ndarray:
        return self.gamma * np.arange(self.nx) / self.nx

    @cached_property
    def _cheb(self):
        return cheb_diff_matrix(self.nz - 1)

    @cached_property
    def vertical_nodes(self) -> np.ndarray:
        # z = (1 - x)/2 maps cos(pi j/N) onto increasing nodes in [0, 1]
        j = np.arange(self.nz)
        z = np.sin(np.pi * j / (2 * (self.nz - 1))) ** 2
        z[0], z[-1] = 0.0, 1.0
        return z

    @property
    def z(self) -> np.ndarray:
        return self.vertical_nodes

    @cached_property
    def quad_weights(self) -> np.ndarray:
        return 0.5 * clenshaw_curtis(self.nz - 1)

    @cached_property
    def dz_matrix(self) -> np.ndarray:
        return -2.0 * self._cheb[0]

    @cached_property
    def dz2_matrix(self) -> np.ndarray:
        return self.dz_matrix @ self.dz_matrix

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the ``rfft`` modes (Nyquist included)."""
        return 2.0 * np.pi * np.arange(self.nx // 2 + 1) / self.gamma

    @cached_property
    def dx(self) -> float:
        return self.gamma / self.nx

    @cached_property
    def dz_local(self) -> np.ndarray:
        """Local vertical spacing per node (mean of adjacent gaps)."""
        g = np.diff(self.vertical_nodes)
        out = np.empty(self.nz)
        out[0], out[-1] = g[0], g[-1]
        out[1:-1] = 0.5 * (g[:-1] + g[1:])
        return out

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(x1, x2)`` of shape ``(nx, nz)``."""
        return np.meshgrid(self.x, self.vertical_nodes, indexing="ij")

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def from_function(self, f) -> "ScalarField":
        x1, x2 = self.mesh()
        return ScalarField(self, np.broadcast_to(f(x1, x2), (self.nx, self.nz)).astype(float))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros((self.nx, self.nz)))


@lru_cache(maxsize=256)
def _partial_weights(nz: int, delta: float) -> np.ndarray:
    n = nz - 1
    j = np.arange(nz)
    # Chebyshev-Vandermonde on the CGL nodes, V[j, m] = T_m(x_j)
    vander = np.cos(np.pi * np.outer(j, np.arange(nz)) / n)
    lo = 1.0 - 2.0 * delta
    r = np.empty(nz)
    for m in range(nz):
        anti = cheb.chebint(np.eye(nz)[m])
        r[m] = cheb.chebval(1.0, anti) - cheb.chebval(lo, anti)
    # integral of f over [0, delta] = 1/2 * integral over x in [1 - 2 delta, 1]
    return 0.5 * np.linalg.solve(vander.T, r)


def partial_weights(domain: Domain, delta: float) -> np.ndarray:
    """Weights ``w`` with ``w @ f(z_j) = integral_0^delta f dz`` (interpolant)."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return _partial_weights(domain.nz, float(delta))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Point values of one scalar on the grid of ``domain``."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.nx, self.domain.nz):
            raise ValueError(
                f"field shape {v.shape} does not match domain ({self.domain.nx}, {self.domain.nz})"
            )
        object.__setattr__(self, "values", v)

    def _wrap(self, other):
        if isinstance(other, ScalarField):
            if other.domain != self.domain:
                raise ValueError("fields live on different domains")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.domain, self.values + self._wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - self._wrap(other))

    def __rsub__(self, other):
        return ScalarField(self.domain, self._wrap(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.domain, self.values * self._wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.domain, self.values / self._wrap(other))

    def __neg__(self):
        return ScalarField(self.domain, -self.values)

    def __pow__(self, p):
        return ScalarField(self.domain, self.values**p)

    def __abs__(self):
        return ScalarField(self.domain, np.abs(self.values))

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())

    @property
    def bottom(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def top(self) -> np.ndarray:
        return self.values[:, -1]


@dataclass(frozen=True, eq=False)
class VectorField:
    u1: ScalarField
    u2: ScalarField

    def __post_init__(self):
        if self.u1.domain != self.u2.domain:
            raise ValueError("velocity components live on different domains")

    @property
    def domain(self) -> Domain:
        return self.u1.domain


def _finite(f: ScalarField) -> np.ndarray:
    v = f.values
    if not np.all(np.isfinite(v)):
        raise ValueError("field contains non-finite values")
    return v


def integrate(f: ScalarField) -> float:
    """Integral over the whole domain."""
    v = _finite(f)
    d = f.domain
    return float(d.gamma * (v.mean(axis=0) @ d.quad_weights))


def vertical_integral(profile, domain: Domain) -> float:
    return float(np.asarray(profile) @ domain.quad_weights)


def norm(f: ScalarField, p=2) -> float:
    """Lebesgue norm over the domain for ``p`` in {1, 2, 4, inf}."""
    if p not in (1, 2, 4, np.inf, "inf"):
        raise ValueError(f"unsupported norm exponent {p!r}; use 1, 2, 4 or inf")
    v = _finite(f)
    if p in (np.inf, "inf"):
        return float(np.abs(v).max(initial=0.0))
    val = integrate(ScalarField(f.domain, np.abs(v) ** p))
    return max(val, 0.0) ** (1.0 / p)


def sobolev_norm(f: ScalarField, kind: str, gradient_provider) -> float:
    """``W^{1,p}`` norm, p = 2 for ``"H1"`` and p = 4 for ``"W14"``.

    ``gradient_provider(f)`` must return the pair ``(d1 f, d2 f)``.
    """
    p = {"H1": 2, "W14": 4}.get(kind)
    if p is None:
        raise ValueError(f"unknown Sobolev norm {kind!r}; use 'H1' or 'W14'")
    g1, g2 = gradient_provider(f)
    grad_sq = g1.values**2 + g2.values**2
    total = norm(f, p) ** p + integrate(ScalarField(f.domain, grad_sq ** (p / 2)))
    return total ** (1.0 / p)


def horizontal_average(f: ScalarField) -> np.ndarray:
    """Mean over x1 at every vertical node."""
    return _finite(f).mean(axis=0)


def wall_trace_integral(f: ScalarField, wall: str) -> float:
    """Integral over x1 of the trace of ``f`` on the ``"bottom"`` or ``"top"`` wall."""
    v = _finite(f)
    if wall == "bottom":
        row = v[:, 0]
    elif wall == "top":
        row = v[:, -1]
    else:
        raise ValueError(f"wall must be 'bottom' or 'top', got {wall!r}")
    return float(f.domain.gamma * row.mean())
