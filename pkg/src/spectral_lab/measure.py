"""Jacobi potential measures on [-1, 1].

The law of the diagonal entries is

    mu(v) = Z^{-1} (1 + v)^a (1 - v)^b d(v),     -1 <= v <= 1,

with ``a`` the lower-edge exponent, ``b`` the upper-edge exponent and ``d`` a
polynomial that is strictly positive on the interval.  All integrals against
``mu`` go through Gauss-Jacobi rules built with the Golub-Welsch method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh_tridiagonal
from scipy.special import betainc, betaln

from .errors import DivergentIntegral, NoConvergence, NonPositiveWeight, NotIntegrable

__all__ = [
    "JacobiMeasure",
    "QuadratureRule",
    "gauss_jacobi",
    "build_measure",
    "density",
    "integrate",
    "edge_integrals",
    "cdf",
    "quantile",
    "sample_sorted",
]

ESCALATION_ORDERS = (32, 64, 128, 256, 512)
CDF_TABLE_SIZE = 4096
_SIGN_SCAN_POINTS = 4001


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule for the weight (1 + v)^a (1 - v)^b on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    a: float
    b: float

    def __call__(self, values):
        return np.dot(self.weights, values)


@lru_cache(maxsize=64)
def gauss_jacobi(n: int, a: float, b: float) -> QuadratureRule:
    """Golub-Welsch nodes and weights for (1 + v)^a (1 - v)^b.

    In the classical notation P_n^{(alpha, beta)} the weight is
    (1 - x)^alpha (1 + x)^beta, so alpha = b and beta = a here.
    """
    if n < 1:
        raise ValueError("quadrature order must be positive")
    if a <= -1 or b <= -1:
        raise NotIntegrable(f"Jacobi exponents must exceed -1, got a={a}, b={b}")
    al, be = float(b), float(a)
    s = al + be
    k = np.arange(n, dtype=float)
    diag = np.empty(n)
    diag[0] = (be - al) / (s + 2.0)
    if n > 1:
        kk = k[1:]
        diag[1:] = (be * be - al * al) / ((2 * kk + s) * (2 * kk + s + 2))
    off2 = np.empty(max(n - 1, 0))
    if n > 1:
        off2[0] = 4.0 * (1 + al) * (1 + be) / ((2 + s) ** 2 * (3 + s))
        kk = k[2:]
        off2[1:] = (
            4.0 * kk * (kk + al) * (kk + be) * (kk + s)
            / ((2 * kk + s) ** 2 * (2 * kk + s + 1) * (2 * kk + s - 1))
        )
    log_mu0 = (s + 1) * math.log(2.0) + math.lgamma(al + 1) + math.lgamma(be + 1) - math.lgamma(s + 2)
    if n == 1:
        nodes, vecs = diag.copy(), np.ones((1, 1))
    else:
        nodes, vecs = eigh_tridiagonal(diag, np.sqrt(off2))
    weights = math.exp(log_mu0) * vecs[0, :] ** 2
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, n, float(a), float(b))


@dataclass(frozen=True)
class JacobiMeasure:
    a: float
    b: float
    d_coeffs: tuple
    z_norm: float

    def d(self, v):
        """Evaluate the positive polynomial factor (works for complex ``v``)."""
        return np.polynomial.polynomial.polyval(v, self.d_coeffs)

    @property
    def edge_limit(self) -> float:
        """lim_{v -> 1} mu(v) / (1 - v)^b, which is 2^a d(1) / Z."""
        return 2.0 ** self.a * float(self.d(1.0)) / self.z_norm

    @property
    def mean(self) -> float:
        return integrate(self, lambda v: v)

    @property
    def is_centered(self) -> bool:
        return abs(self.mean) <= 1e-10

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "d": list(self.d_coeffs)}


def _exact_order(m_deg: int) -> int:
    return max(32, m_deg + 2)


def build_measure(a: float, b: float, d_coeffs=(1.0,)) -> JacobiMeasure:
    """Normalized Jacobi measure; raises on non-integrable exponents or d <= 0."""
    a, b = float(a), float(b)
    if a <= -1 or b <= -1:
        raise NotIntegrable(f"need a > -1 and b > -1, got a={a}, b={b}")
    coeffs = tuple(float(c) for c in np.atleast_1d(np.asarray(d_coeffs, dtype=float)))
    if not coeffs:
        raise NonPositiveWeight("empty coefficient list for d(v)")
    grid = np.linspace(-1.0, 1.0, _SIGN_SCAN_POINTS)
    dvals = np.polynomial.polynomial.polyval(grid, coeffs)
    if np.any(dvals <= 0):
        bad = grid[np.argmin(dvals)]
        raise NonPositiveWeight(f"d(v) <= 0 at v={bad:.6g}")
    m = JacobiMeasure(a, b, coeffs, 1.0)
    coef, _ = _cdf_basis(m)  # with Z = 1 these are the exact Beta-function masses
    m = JacobiMeasure(a, b, coeffs, float(coef.sum()))
    total = integrate(m, lambda v: np.ones_like(v))
    if abs(total - 1.0) > 1e-12:
        raise ArithmeticError(f"normalization check failed: total mass {total!r}")
    return m


def density(m: JacobiMeasure, v):
    """mu(v); zero outside [-1, 1]."""
    v = np.asarray(v, dtype=float)
    inside = (v >= -1.0) & (v <= 1.0)
    vc = np.clip(v, -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (1 + vc) ** m.a * (1 - vc) ** m.b * m.d(vc) / m.z_norm
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def integrate(m: JacobiMeasure, f, rtol: float = 1e-11, max_order: int = 512) -> float:
    """Integral of ``f`` against ``mu`` with order escalation 32 -> 512.

    ``f`` is called with an array of nodes and must return an array.
    """
    prev = None
    for n in ESCALATION_ORDERS:
        if n > max_order:
            break
        rule = gauss_jacobi(n, m.a, m.b)
        fx = np.asarray(f(rule.nodes))
        terms = rule.weights * m.d(rule.nodes) * fx / m.z_norm
        est = terms.sum()
        scale = max(np.abs(terms).sum(), abs(est), 1e-300)
        if prev is not None and abs(est - prev) <= rtol * scale:
            return est.item() if np.ndim(est) == 0 else est
        prev = est
    raise NoConvergence(
        "Gauss-Jacobi escalation did not settle", last_two=(prev, est) if prev is not None else (est,)
    )


def edge_integrals(m: JacobiMeasure, side: str = "upper"):
    """(lambda_crit, tau) for one edge.

    upper: lambda_+ = (int dmu/(1-v)^2)^{1/2}, tau_+ = int dmu/(1-v);
    lower: the same with (1+v).  The singular factor is absorbed into the
    Jacobi weight so the rules stay exact for polynomial d.
    """
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    exp = m.b if side == "upper" else m.a
    if exp <= 1:
        name = "b" if side == "upper" else "a"
        raise DivergentIntegral(f"{side} edge needs {name} > 1 (got {exp}); critical coupling is infinite")
    n = _exact_order(len(m.d_coeffs))
    if side == "upper":
        r2, r1 = gauss_jacobi(n, m.a, m.b - 2), gauss_jacobi(n, m.a, m.b - 1)
    else:
        r2, r1 = gauss_jacobi(n, m.a - 2, m.b), gauss_jacobi(n, m.a - 1, m.b)
    lam_sq = float(r2(m.d(r2.nodes))) / m.z_norm
    tau = float(r1(m.d(r1.nodes))) / m.z_norm
    return math.sqrt(lam_sq), tau


@lru_cache(maxsize=32)
def _cdf_basis(m: JacobiMeasure):
    # d(v) rewritten in powers of t = 1 + v
    e = Polynomial(m.d_coeffs)(Polynomial([-1.0, 1.0])).coef
    j = np.arange(len(e), dtype=float)
    log_scale = (m.a + m.b + j + 1) * math.log(2.0) + betaln(m.a + j + 1, m.b + 1)
    return e * np.exp(log_scale) / m.z_norm, m.a + j + 1


def cdf(m: JacobiMeasure, x):
    """Exact CDF via regularized incomplete beta functions."""
    x = np.asarray(x, dtype=float)
    coef, p = _cdf_basis(m)
    u = np.clip((1.0 + x) / 2.0, 0.0, 1.0)
    vals = np.zeros_like(u)
    for c, pj in zip(coef, p):
        vals = vals + c * betainc(pj, m.b + 1, u)
    return np.clip(vals, 0.0, 1.0)


@lru_cache(maxsize=32)
def _cdf_table(m: JacobiMeasure):
    grid = -np.cos(np.pi * np.arange(CDF_TABLE_SIZE) / (CDF_TABLE_SIZE - 1))
    grid[0], grid[-1] = -1.0, 1.0
    table = cdf(m, grid)
    keep = np.concatenate(([True], np.diff(table) > 0))
    grid, table = grid[keep], table[keep]
    if table[-1] < 1.0:
        grid, table = np.append(grid, 1.0), np.append(table, 1.0)
    return grid, table, PchipInterpolator(table, grid)


def quantile(m: JacobiMeasure, p, tol: float = 1e-12, max_iter: int = 100):
    """Inverse CDF: monotone cubic table lookup, polished inside the table cell."""
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    grid, table, inv = _cdf_table(m)
    idx = np.clip(np.searchsorted(table, p, side="right") - 1, 0, len(table) - 2)
    lo, hi = grid[idx].copy(), grid[idx + 1].copy()
    x = np.clip(inv(p), lo, hi)
    for _ in range(max_iter):
        fx = cdf(m, x) - p
        active = np.abs(fx) > tol
        if not active.any():
            break
        lo = np.where(fx < 0, x, lo)
        hi = np.where(fx > 0, x, hi)
        dens = density(m, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - fx / dens
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        x = np.where(active, step, x)
    x = np.where(p == 0.0, -1.0, np.where(p == 1.0, 1.0, x))
    return float(x[0]) if scalar else x


def sample_sorted(m: JacobiMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws by inverse CDF, sorted descending (stable for ties)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    draws = quantile(m, rng.random(n))
    return draws[np.argsort(-draws, kind="stable")]
