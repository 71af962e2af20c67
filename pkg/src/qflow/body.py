"""Convex bodies stored by their support function on a sphere-parameter grid.

Two backends are provided:

* ``CIRCLE``: planar curves, u(theta) on a uniform periodic grid; radii of
  curvature r = u'' + u from the trigonometric interpolant.
* ``AXISYMMETRIC``: surfaces of revolution in R^3, u(phi) with phi the polar
  angle of the normal, on the cell-centred grid phi_j = (j - 1/2) pi / N.
  Since u is even across both poles it is a polynomial in x = cos(phi); the
  radii r_1 = u_phiphi + u (meridian) and r_2 = u_phi cot(phi) + u (parallel)
  are obtained from its Chebyshev expansion, where cot(phi) u_phi = -x du/dx
  is regular on the axis.
"""
import enum
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, gamma, pi

import numpy as np
from scipy.optimize import linprog

from .errors import ConstructionError, ConvexityLossError, DomainError, NumericalError

# Convexity is declared lost below this fraction of the mean radius.
MARGIN_FRACTION = 1e-8


class Backend(enum.Enum):
    CIRCLE = "CIRCLE"
    AXISYMMETRIC = "AXISYMMETRIC"

    @property
    def n(self):
        return 1 if self is Backend.CIRCLE else 2


def unit_ball_volume(n_plus_1):
    """kappa_{n+1}; exact constants for the two dimensions the grids support."""
    if n_plus_1 == 2:
        return pi
    if n_plus_1 == 3:
        return 4.0 * pi / 3.0
    return pi ** (n_plus_1 / 2) / gamma(n_plus_1 / 2 + 1)


def sphere_area(n):
    """Measure of the unit sphere S^n."""
    return (n + 1) * unit_ball_volume(n + 1)


@dataclass(frozen=True, eq=False)
class Grid:
    backend: Backend
    N: int
    nodes: np.ndarray
    weights: np.ndarray     # quadrature on S^n, sums to |S^n|
    normals: np.ndarray     # (N, 3) unit normals z_j
    free_axes: tuple        # coordinates a centre may move along
    _ops: tuple = field(repr=False, default=())

    @property
    def n(self):
        return self.backend.n

    @property
    def spacing(self):
        return (2 * pi if self.backend is Backend.CIRCLE else pi) / self.N

    @property
    def max_wavenumber_sq(self):
        """Largest eigenvalue of minus the discrete sphere Laplacian."""
        if self.backend is Backend.CIRCLE:
            return (self.N / 2) ** 2
        return float(self.N * (self.N - 1))

    def integrate(self, f):
        return float(np.dot(self.weights, f))

    def radii(self, u):
        """Raw principal radii, shape (N, n). No convexity check."""
        u = np.asarray(u, dtype=float)
        # derivatives annihilate constants; removing the mean keeps spheres exact
        dev = u - u.sum() / self.N
        (stacked,) = self._ops
        if self.backend is Backend.CIRCLE:
            return (u + dev @ stacked)[:, None]
        return u[:, None] + (dev @ stacked).reshape(2, self.N).T

    def d_theta(self, u):
        """Derivative of u along the grid parameter (used for reconstruction)."""
        u = np.asarray(u, dtype=float)
        if self.backend is Backend.CIRCLE:
            m = np.fft.rfftfreq(self.N, 1.0 / self.N)
            c = np.fft.rfft(u) * 1j * m
            if self.N % 2 == 0:
                c[-1] = 0.0
            return np.fft.irfft(c, n=self.N)
        phi = self.nodes
        m = np.arange(self.N)
        coeff = _cosine_coefficients(self.N) @ u
        return -(np.sin(np.outer(phi, m)) * m) @ coeff


def _cosine_coefficients(N):
    """Matrix mapping nodal values to coefficients c_m of sum c_m cos(m phi)."""
    phi = (np.arange(1, N + 1) - 0.5) * pi / N
    m = np.arange(N)
    C = np.cos(np.outer(m, phi))
    scale = np.full(N, 2.0 / N)
    scale[0] = 1.0 / N
    return C * scale[:, None]


def _fejer_weights(N):
    """Fejer's first rule on x = cos(phi_j): exact for polynomials of degree < N."""
    phi = (np.arange(1, N + 1) - 0.5) * pi / N
    m = np.arange(1, N // 2 + 1)
    s = np.cos(2.0 * np.outer(phi, m)) / (4.0 * m * m - 1.0)
    return (2.0 / N) * (1.0 - 2.0 * s.sum(axis=1))


@lru_cache(maxsize=None)
def get_grid(backend, N):
    backend = Backend(backend)
    N = int(N)
    if backend is Backend.CIRCLE:
        if N < 16 or N % 2:
            raise DomainError(f"CIRCLE grid needs even N >= 16, got {N}")
        theta = 2 * pi * np.arange(N) / N
        m = np.fft.rfftfreq(N, 1.0 / N)
        # dense form of the spectral second derivative: row j is the image of e_j
        d2 = np.fft.irfft(np.fft.rfft(np.eye(N), axis=1) * -(m * m), n=N, axis=1)
        normals = np.stack([np.cos(theta), np.sin(theta), np.zeros(N)], axis=1)
        weights = np.full(N, 2 * pi / N)
        grid = Grid(backend, N, theta, weights, normals, (0, 1), (d2,))
    else:
        if N < 16:
            raise DomainError(f"AXISYMMETRIC grid needs N >= 16, got {N}")
        phi = (np.arange(1, N + 1) - 0.5) * pi / N
        x = np.cos(phi)
        m = np.arange(N)
        coeff = _cosine_coefficients(N)
        # u_phiphi: cos(m phi) -> -m^2 cos(m phi)
        d2 = (np.cos(np.outer(phi, m)) * -(m * m)) @ coeff
        # cot(phi) u_phi: cos(m phi) -> -m cos(phi) sin(m phi) / sin(phi)
        ratio = np.sin(np.outer(phi, m)) / np.sin(phi)[:, None]
        dc = (-(x[:, None]) * ratio * m) @ coeff
        stacked = np.hstack([d2.T, dc.T])
        normals = np.stack([np.sin(phi), np.zeros(N), x], axis=1)
        weights = 2 * pi * _fejer_weights(N)
        grid = Grid(backend, N, phi, weights, normals, (2,), (stacked,))
    for a in (grid.nodes, grid.weights, grid.normals, *grid._ops):
        a.setflags(write=False)
    return grid


@dataclass(frozen=True, eq=False)
class SupportField:
    """Support values of a strictly convex body at the grid normals."""

    backend: Backend
    u: np.ndarray
    origin_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        u = np.array(self.u, dtype=float)
        if u.ndim != 1:
            raise DomainError("support values must be one-dimensional")
        get_grid(self.backend, u.size)
        if not np.all(np.isfinite(u)):
            raise DomainError("support values must be finite")
        u.setflags(write=False)
        off = np.array(self.origin_offset, dtype=float).reshape(3)
        off.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "origin_offset", off)

    @property
    def grid(self):
        return get_grid(self.backend, self.u.size)

    @property
    def N(self):
        return self.u.size

    @property
    def n(self):
        return self.backend.n

    @property
    def nodes(self):
        return self.grid.nodes

    def with_u(self, u, origin_offset=None):
        off = self.origin_offset if origin_offset is None else origin_offset
        return SupportField(self.backend, u, off)

    def scaled(self, c):
        return self.with_u(c * self.u, c * self.origin_offset)

    def translated(self, q):
        """Support field of the body moved by the vector q (origin fixed)."""
        q = np.asarray(q, dtype=float)
        return self.with_u(self.u + self.grid.normals @ q)


# -- construction ------------------------------------------------------------

def sphere(R, N, backend=Backend.CIRCLE):
    if R <= 0:
        raise ConstructionError("sphere radius must be positive")
    return SupportField(backend, np.full(int(N), float(R)))


def ellipse(a, b, N):
    """Ellipse with semi-axes a (along x) and b."""
    if a <= 0 or b <= 0:
        raise ConstructionError("ellipse semi-axes must be positive")
    th = get_grid(Backend.CIRCLE, N).nodes
    return SupportField(Backend.CIRCLE, np.sqrt(a * a * np.cos(th) ** 2 + b * b * np.sin(th) ** 2))


def ellipsoid_rev(a, c, N):
    """Ellipsoid of revolution with semi-axes (a, a, c), c along the symmetry axis."""
    if a <= 0 or c <= 0:
        raise ConstructionError("ellipsoid semi-axes must be positive")
    phi = get_grid(Backend.AXISYMMETRIC, N).nodes
    return SupportField(Backend.AXISYMMETRIC, np.sqrt(c * c * np.cos(phi) ** 2 + a * a * np.sin(phi) ** 2))


def random_trig(seed, modes, margin, N, backend=Backend.CIRCLE, max_attempts=60):
    """Unit-mean body with a random low-order perturbation and min radius >= margin.

    The perturbation (orders 1..modes) is shrunk by 0.8 per attempt until the
    smallest principal radius clears ``margin``.
    """
    backend = Backend(backend)
    if modes < 1:
        raise ConstructionError("random_trig needs modes >= 1")
    rng = np.random.default_rng(seed)
    grid = get_grid(backend, N)
    t = grid.nodes
    m = np.arange(1, modes + 1)[:, None]
    if backend is Backend.CIRCLE:
        a, b = rng.normal(size=(2, modes, 1)) / m
        pert = np.sum(a * np.cos(m * t) + b * np.sin(m * t), axis=0)
    else:
        a = rng.normal(size=(modes, 1)) / m
        pert = np.sum(a * np.cos(m * t), axis=0)
    scale = 1.0
    for _ in range(max_attempts):
        body = SupportField(backend, 1.0 + scale * pert)
        r = grid.radii(body.u)
        if r.min() >= margin and body.u.min() > 0:
            return body
        scale *= 0.8
    raise ConstructionError(f"random_trig(seed={seed}) could not reach radius margin {margin}")


def make_body(shape, N, **params):
    """Build a body from a shape name: sphere, ellipse, ellipsoid_rev, random_trig."""
    if shape == "sphere":
        return sphere(params.get("R", 1.0), N, params.get("backend", Backend.CIRCLE))
    if shape == "ellipse":
        return ellipse(params["a"], params["b"], N)
    if shape == "ellipsoid_rev":
        return ellipsoid_rev(params["a"], params["c"], N)
    if shape == "random_trig":
        return random_trig(params.get("seed", 0), params.get("modes", 4), params.get("margin", 0.1), N,
                           params.get("backend", Backend.CIRCLE))
    raise ConstructionError(f"unknown shape {shape!r}")


# -- radii and integrals -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadiiField:
    r: np.ndarray      # (N, n)
    margin: float


def check_radii(r):
    margin = float(r.min())
    floor = MARGIN_FRACTION * float(np.abs(r).sum()) / r.size
    if not margin > floor:
        node = int(np.unravel_index(np.nanargmin(r), r.shape)[0]) if np.isfinite(r).any() else 0
        raise ConvexityLossError(f"convexity lost at node {node}: min radius {margin:.3e}", node=node,
                                 margin=margin)
    return margin


def radii(body):
    r = body.grid.radii(body.u)
    return RadiiField(r, check_radii(r))


def _esp_radii(r):
    from .algebra import esp_table
    return esp_table(r, r.shape[-1])


def area(body):
    r = radii(body).r
    return body.grid.integrate(np.prod(r, axis=1))


def volume(body):
    r = radii(body).r
    return body.grid.integrate(body.u * np.prod(r, axis=1)) / (body.n + 1)


def curvature_integral(body, k):
    """Integral of E_k(lambda) over the surface, as the sphere integral of E_{n-k}(r)."""
    n = body.n
    if int(k) != k or not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    e = _esp_radii(radii(body).r)
    return body.grid.integrate(e[:, n - k])


def mixed_volumes(body):
    """[V_0, ..., V_{n+1}] with V_{n-k} = (n+1)^-1 binom(n,k)^-1 int E_k dmu."""
    n = body.n
    e = _esp_radii(radii(body).r)
    V = np.empty(n + 2)
    for k in range(n + 1):
        V[n - k] = body.grid.integrate(e[:, n - k]) / ((n + 1) * comb(n, k))
    V[n + 1] = body.grid.integrate(body.u * e[:, n]) / (n + 1)
    return V


def steiner_coefficients(body):
    """Coefficients a_j of the discrete Vol(u + t) = sum_j a_j t**j, j = 0..n+1.

    Shifting u by a constant shifts every radius by the same constant, so the
    parallel-body volume is an exact polynomial in t on the grid.
    """
    n = body.n
    e = _esp_radii(radii(body).r)
    g = body.grid
    a = np.zeros(n + 2)
    for j in range(n + 1):
        a[j] += g.integrate(body.u * e[:, n - j])
        a[j + 1] += g.integrate(e[:, n - j])
    return a / (n + 1)


def steiner_volume(body, t):
    """Vol(Omega + tB) evaluated directly on the shifted support function u + t."""
    return volume(body.with_u(body.u + t))


def steiner_polynomial(body, t):
    """sum_i binom(n+1, i) V_{n+1-i} t**i from the computed mixed volumes."""
    V = mixed_volumes(body)
    n = body.n
    return float(sum(comb(n + 1, i) * V[n + 1 - i] * t ** i for i in range(n + 2)))


def iso_ratio(body, k):
    """Generalized isoperimetric ratio V_{n-k+1}^(n+1) / Vol^(n-k+1)."""
    n = body.n
    if int(k) != k or not 1 <= k <= n:
        raise DomainError(f"k={k} outside [1, {n}]")
    V = mixed_volumes(body)
    if not V[n + 1] > 0:
        raise DomainError("iso_ratio of a body with zero volume")
    return float(V[n - k + 1] ** (n + 1) / V[n + 1] ** (n - k + 1))


def minkowski_residual(body, l):
    """int Et_l dmu - int u Et_{l+1} dmu, computed in the Gauss-map measure."""
    n = body.n
    if int(l) != l or not 0 <= l <= n - 1:
        raise DomainError(f"l={l} outside [0, {n - 1}]")
    e = _esp_radii(radii(body).r)
    g = body.grid
    lhs = g.integrate(e[:, n - l]) / comb(n, l)
    rhs = g.integrate(body.u * e[:, n - l - 1]) / comb(n, l + 1)
    return lhs - rhs


def ros_deficit(body):
    """int 1/Et_1 dmu - (n+1) Vol; nonnegative, zero only for spheres."""
    r = radii(body).r
    n = body.n
    e = _esp_radii(r)
    # 1/Et_1 = n / H with H = E_{n-1}(r) / E_n(r); dmu = E_n(r)
    integrand = n * e[:, n] * e[:, n] / e[:, n - 1]
    return body.grid.integrate(integrand) - body.grid.integrate(body.u * e[:, n])


def af_deficit(body, m, l):
    """kappa^(m-l) - V_l^m / V_m^l; nonnegative, zero only for balls."""
    n = body.n
    if not (int(m) == m and int(l) == l and 1 <= m < l <= n + 1):
        raise DomainError(f"need 1 <= m < l <= {n + 1}, got m={m}, l={l}")
    V = mixed_volumes(body)
    kappa = unit_ball_volume(n + 1)
    return float(kappa ** (m - l) - V[l] ** m / V[m] ** l)


# -- centres and radii bounds --------------------------------------------------

def _minimax_lp(body, sign, with_radius=False):
    """Solve the centre LP for the outer (sign=+1) or inner (sign=-1) radius.

    Outer: min_q max_j (u_j - <q, z_j>).  Inner: max_q min_j (...).
    With ``with_radius`` the objective is the sup-distance to a ball,
    min_{q,R} max_j |u_j - <q, z_j> - R|.
    """
    g = body.grid
    Z = g.normals[:, list(g.free_axes)]
    u = body.u
    N, d = Z.shape
    if with_radius:
        # vars (q, R, t): +-(u - Zq - R) <= t
        A = np.vstack([np.hstack([-Z, -np.ones((N, 1)), -np.ones((N, 1))]),
                       np.hstack([Z, np.ones((N, 1)), -np.ones((N, 1))])])
        b = np.concatenate([-u, u])
        c = np.zeros(d + 2)
        c[-1] = 1.0
        nvar = d + 2
    else:
        # vars (q, t): sign*(u - Zq) <= sign*t
        A = sign * np.hstack([-Z, -np.ones((N, 1))])
        b = -sign * u
        c = np.zeros(d + 1)
        c[-1] = sign
        nvar = d + 1
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * nvar, method="highs-ds")
    if res.status != 0 or res.x is None:
        raise NumericalError(f"centre optimisation failed: {res.message}", best=None)
    q = np.zeros(3)
    q[list(g.free_axes)] = res.x[:d]
    # re-evaluate the objective exactly at the returned centre
    shifted = u - g.normals @ q
    if with_radius:
        R = float(res.x[d])
        return float(np.max(np.abs(shifted - R))), q, R
    return (float(shifted.max()) if sign > 0 else float(shifted.min())), q


def radii_bounds(body):
    """(R_minus, R_plus, inner_centre, outer_centre) over the grid normals."""
    r_plus, q_plus = _minimax_lp(body, +1)
    r_minus, q_minus = _minimax_lp(body, -1)
    return r_minus, r_plus, q_minus + body.origin_offset, q_plus + body.origin_offset


def circumcenter(body):
    return _minimax_lp(body, +1)[1]


def recenter(body):
    """Move the origin to the circumcentre; origin_offset records the total shift."""
    q = circumcenter(body)
    return SupportField(body.backend, body.u - body.grid.normals @ q, body.origin_offset + q)


def hausdorff_to_ball(body, return_fit=False):
    """Hausdorff distance to the best-fitting ball, as a support-function sup-norm."""
    dist, q, R = _minimax_lp(body, +1, with_radius=True)
    if return_fit:
        return dist, q + body.origin_offset, R
    return dist


def reconstruct(body):
    """Boundary points X(z) = u z + grad u, shape (N, 3)."""
    g = body.grid
    du = g.d_theta(body.u)
    z = g.normals
    if body.backend is Backend.CIRCLE:
        tangent = np.stack([-np.sin(g.nodes), np.cos(g.nodes), np.zeros(body.N)], axis=1)
    else:
        tangent = np.stack([np.cos(g.nodes), np.zeros(body.N), -np.sin(g.nodes)], axis=1)
    return body.u[:, None] * z + du[:, None] * tangent + body.origin_offset
