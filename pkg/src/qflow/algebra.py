"""Elementary symmetric polynomials and the speed law sigma = E_k**alpha.

Every function accepts either a single vector of length ``n`` or a stack of
vectors with shape ``(..., n)``; the last axis always holds the principal
curvatures (or radii) of one point.
"""
from dataclasses import dataclass
from math import comb
from typing import NamedTuple

import numpy as np

from .errors import DomainError, PositivityError


@dataclass(frozen=True)
class SpeedLaw:
    """Speed sigma = E_k(lambda)**alpha on n-dimensional hypersurfaces."""

    n: int
    k: int
    alpha: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n}")
        if int(self.k) != self.k or not 1 <= self.k <= self.n:
            raise DomainError(f"k must satisfy 1 <= k <= n={self.n}, got {self.k}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise DomainError(f"alpha > 0 required, got {self.alpha}")

    @property
    def degree(self):
        """Homogeneity degree of sigma in the curvatures."""
        return self.alpha * self.k

    def sphere_speed(self, radius):
        return comb(self.n, self.k) ** self.alpha * radius ** (-self.degree)


def _as_cone(x, what="lambda"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DomainError(f"{what} must have at least one entry")
    if not np.all(x > 0):
        bad = np.argwhere(~(x > 0))[0]
        raise PositivityError(f"{what} must lie in the positive cone; entry {tuple(bad)} is {x[tuple(bad)]}")
    return x


def _check_order(k, n, top):
    if int(k) != k or not 0 <= k <= top:
        raise DomainError(f"order k={k} outside [0, {top}] for n={n}")


def esp_table(x, kmax=None):
    """All of E_0..E_kmax of ``x`` along the last axis, shape ``(..., kmax+1)``.

    Built up one variable at a time as the coefficients of prod(1 + x_i t);
    orders above n come out as zero.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if kmax is None:
        kmax = n
    cols = np.ascontiguousarray(np.moveaxis(x, -1, 0))
    e = [np.ones(x.shape[:-1])] + [np.zeros(x.shape[:-1]) for _ in range(kmax)]
    for i in range(n):
        # descending j so e[j - 1] still holds the previous stage
        for j in range(min(i + 1, kmax), 0, -1):
            e[j] = e[j] + cols[i] * e[j - 1]
    return np.stack(e, axis=-1)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def elem_sym(lam, k):
    """E_k(lambda). E_0 = 1 and E_{n+1} = 0 by convention."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_order(k, n, n + 1)
    if k == n + 1:
        return _scalar(np.zeros(lam.shape[:-1]))
    return _scalar(esp_table(lam, k)[..., k])


def norm_sym(lam, k):
    """Normalized polynomial E_k / binomial(n, k); equals c**k on the diagonal."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_order(k, n, n)
    return _scalar(esp_table(lam, k)[..., k] / comb(n, k))


def _check_law(x, law):
    if x.shape[-1] != law.n:
        raise DomainError(f"vector has {x.shape[-1]} entries, law expects n={law.n}")


def speed(lam, law):
    lam = _as_cone(lam)
    _check_law(lam, law)
    return _scalar(esp_table(lam, law.k)[..., law.k] ** law.alpha)


def esp_leave_one_out(x, k):
    """E_k of x with entry i removed, for every i; shape ``(..., n)``.

    Uses prefix and suffix coefficient tables so no division by x_i occurs.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.empty(x.shape)
    if k < 0:
        out[...] = 0.0
        return out
    # prefix[i] holds E_0..E_k of x_0..x_{i-1}; suffix[i] of x_{i+1}..x_{n-1}
    cols = np.ascontiguousarray(np.moveaxis(x, -1, 0))
    base = [np.ones(x.shape[:-1])] + [np.zeros(x.shape[:-1]) for _ in range(k)]

    def sweep(order):
        tables, cur = {}, list(base)
        for i in order:
            tables[i] = cur
            cur = [cur[0]] + [cur[j] + cols[i] * cur[j - 1] for j in range(1, k + 1)]
        return tables

    prefix = sweep(range(n))
    suffix = sweep(range(n - 1, -1, -1))
    for i in range(n):
        out[..., i] = sum(prefix[i][j] * suffix[i][k - j] for j in range(k + 1))
    return out


def speed_grad(lam, law):
    """Partial derivatives d sigma / d lambda_i, all positive on the positive cone."""
    lam = _as_cone(lam)
    _check_law(lam, law)
    ek = esp_table(lam, law.k)[..., law.k]
    dek = esp_leave_one_out(lam, law.k - 1)
    return law.alpha * ek[..., None] ** (law.alpha - 1.0) * dek


def speed_from_radii(r, law):
    """sigma at lambda_i = 1/r_i, through E_k(1/r) = E_{n-k}(r) / E_n(r)."""
    r = _as_cone(r, "r")
    _check_law(r, law)
    e = esp_table(r, law.n)
    return _scalar((e[..., law.n - law.k] / e[..., law.n]) ** law.alpha)


def speed_radii_grad(r, law):
    """d sigma / d r_i = -(d sigma / d lambda_i) * lambda_i**2, evaluated at lambda = 1/r."""
    r = _as_cone(r, "r")
    lam = 1.0 / r
    return -speed_grad(lam, law) * lam * lam


def phi(r, law):
    """Phi(r) = sigma(1/r)**(-1/(alpha k)); concave and 1-homogeneous in the radii."""
    return _scalar(np.asarray(speed_from_radii(r, law)) ** (-1.0 / law.degree))


class IdentityResiduals(NamedTuple):
    """Residuals of the curvature identities, each divided by its largest term.

    product_rule: sum_i dE_k/dl_i l_i^2 - (H E_k - (k+1) E_{k+1})
    product_lower: slack of  H E_k - (k+1) E_{k+1} >= (k/n) H E_k  (clamped at 0)
    maclaurin: slack of  Et_{k+1}^(1/(k+1)) <= Et_k^(1/k)  (clamped at 0)
    euler: sum_i dsigma/dl_i l_i - alpha k sigma
    """

    product_rule: object
    product_lower: object
    maclaurin: object
    euler: object

    def worst(self):
        return max(float(np.max(np.abs(v))) for v in self)


def identity_residuals(lam, law, grad=None):
    """Relative residuals of the symmetric-polynomial identities at ``lam``.

    ``grad`` overrides the speed gradient; the verification suite uses it to
    inject a deliberately broken derivative as a negative control.
    """
    lam = _as_cone(lam)
    _check_law(lam, law)
    n, k = law.n, law.k
    grad = speed_grad if grad is None else grad
    e = esp_table(lam, n)
    h = e[..., 1]
    ek = e[..., k]
    ek1 = e[..., k + 1] if k < n else np.zeros_like(ek)
    dek = esp_leave_one_out(lam, k - 1)

    lhs = np.sum(dek * lam * lam, axis=-1)
    rhs = h * ek - (k + 1) * ek1
    scale = h * ek
    product_rule = np.abs(lhs - rhs) / scale
    product_lower = np.maximum(0.0, (k / n) * h * ek - rhs) / scale

    etk = ek / comb(n, k)
    if k < n:
        etk1 = ek1 / comb(n, k + 1)
        mac_hi = etk1 ** (1.0 / (k + 1))
        mac_lo = etk ** (1.0 / k)
        maclaurin = np.maximum(0.0, mac_hi - mac_lo) / mac_lo
    else:
        maclaurin = np.zeros_like(ek)

    sigma = ek ** law.alpha
    g = grad(lam, law)
    euler = np.abs(np.sum(g * lam, axis=-1) - law.degree * sigma) / (law.degree * sigma)
    return IdentityResiduals(*(_scalar(v) for v in (product_rule, product_lower, maclaurin, euler)))
