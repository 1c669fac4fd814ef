"""Pastur fixed-point solvers, deformed semicircle density and edge constants.

The Stieltjes transform of the deformed semicircle law solves

    m(z) = int dmu(v) / (lam v - z - m(z)),    Im m >= 0,

and its empirical counterpart replaces ``mu`` by the sample average over the
realized ``v_i``.  Writing w = z + m, both reduce to w - z = S(w) with
S(w) = int dmu(v) / (lam v - w).

For the continuous measure S is evaluated by Gauss-Jacobi quadrature on a
contour bent into the lower half plane.  Since Im w > 0 the pole at w / lam
sits above the real segment, so the deformation is exact, and the integrand
stays smooth even when w approaches the support (where plain quadrature on
the segment cannot resolve the near-real pole).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    CriticalCoupling,
    DivergentIntegral,
    NoConvergence,
    NoSubcriticalEdge,
    RegimeError,
)
from .measure import JacobiMeasure, edge_integrals, gauss_jacobi

__all__ = [
    "StieltjesSolution",
    "EdgeConstants",
    "semicircle_m",
    "solve_mfc",
    "solve_mfc_hat",
    "solve_mfc_many",
    "solve_mfc_hat_many",
    "density_fc",
    "edge_constants",
    "empirical_edge",
    "linear_edge_check",
    "cauchy_kernel",
]

CONTOUR_ORDER = 512
CONTOUR_DEPTH = 0.75
DAMPING = 0.5
ITER_BUDGET = 10_000
RESIDUAL_TOL = 1e-13
START_ETA = 10.0
ETA_STEP = 0.3
RICHARDSON_ETAS = (1e-3, 5e-4, 2.5e-4)
CRITICAL_GUARD = 1e-9
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    m: complex
    residual: float
    iterations: int
    r2: float


@dataclass(frozen=True)
class EdgeConstants:
    lam: float
    lambda_plus: float
    lambda_minus: float
    tau_plus: float
    tau_minus: float
    l_plus: float
    l_minus: float
    regime: str
    regime_lower: str
    w_plus: float
    w_minus: float
    m_plus: float
    c_lambda: float | None
    c_mu: float | None
    beta_exp: float
    frak_b: float

    @property
    def supercritical(self) -> bool:
        return self.regime == "supercritical"

    def to_dict(self) -> dict:
        return asdict(self)


def semicircle_m(z):
    """Closed-form semicircle transform (-z + sqrt(z^2 - 4)) / 2 on the Herglotz branch."""
    z = np.asarray(z, dtype=complex)
    # sqrt(z-2)*sqrt(z+2) has its cut on [-2, 2] only, giving Im m > 0 on C+
    out = (-z + np.sqrt(z - 2) * np.sqrt(z + 2)) / 2
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------- kernels


@lru_cache(maxsize=32)
def _contour(m: JacobiMeasure, order: int = CONTOUR_ORDER, depth: float = CONTOUR_DEPTH):
    """Nodes v(s) = s - i depth (1 - s^2) and the pulled-back weights."""
    rule = gauss_jacobi(order, m.a, m.b)
    s = rule.nodes
    h = depth
    v = s - 1j * h * (1 - s * s)
    jac = 1 + 2j * h * s
    factor = (1 + 1j * h * (1 + s)) ** m.b * (1 - 1j * h * (1 - s)) ** m.a
    weights = rule.weights * m.d(v) * factor * jac / m.z_norm
    return v, weights


def cauchy_kernel(m: JacobiMeasure, lam: float):
    """Return w -> (S(w), S'(w)) for S(w) = int dmu(v) / (lam v - w).

    Valid for Im w >= 0 with w off the segment lam * [-1, 1].
    """
    if lam == 0:
        def kernel(w):
            w = np.asarray(w, dtype=complex)
            return -1.0 / w, 1.0 / (w * w)
        return kernel
    v, wt = _contour(m)
    lv = lam * v

    def kernel(w):
        w = np.asarray(w, dtype=complex)
        inv = 1.0 / (lv - w[..., None])
        return inv @ wt, (inv * inv) @ wt

    return kernel


def _empirical_kernel(v, lam: float):
    lv = lam * np.asarray(v, dtype=float)
    n = lv.size
    if n == 0:
        raise ValueError("empty potential")

    def kernel(w):
        w = np.asarray(w, dtype=complex)
        flat = w.reshape(-1)
        s = np.empty(flat.size, dtype=complex)
        ds = np.empty(flat.size, dtype=complex)
        step = max(1, _CHUNK_ELEMENTS // n)
        for i in range(0, flat.size, step):
            inv = 1.0 / (lv[None, :] - flat[i:i + step, None])
            s[i:i + step] = inv.sum(axis=1) / n
            ds[i:i + step] = (inv * inv).sum(axis=1) / n
        return s.reshape(w.shape), ds.reshape(w.shape)

    return kernel


# --------------------------------------------------------------------------- solver


def _eta_schedule(target: float) -> list[float]:
    levels = []
    eta = max(START_ETA, target)
    while eta > target:
        levels.append(eta)
        eta *= ETA_STEP
    levels.append(target)
    return levels


def _iterate_level(kernel, z, m, tol, budget):
    """Safeguarded Newton on F(m) = S(z + m) - m with damped Picard fallback."""
    s, ds = kernel(z + m)
    f = s - m
    its = np.zeros(z.shape, dtype=int)
    active = np.abs(f) > tol
    for _ in range(budget):
        if not active.any():
            break
        za, ma, fa, dsa = z[active], m[active], f[active], ds[active]
        cand = ma + fa / (1.0 - dsa)
        sc, dsc = kernel(za + cand)
        fc = sc - cand
        good = (cand.imag > 0) & np.isfinite(cand) & (np.abs(fc) < np.abs(fa))
        if not good.all():
            pic = ma[~good] + DAMPING * fa[~good]
            sp, dsp = kernel(za[~good] + pic)
            cand[~good], fc[~good], dsc[~good] = pic, sp - pic, dsp
        m[active], f[active], ds[active] = cand, fc, dsc
        its[active] += 1
        active = np.abs(f) > tol
    return m, f, its, active


def _solve(kernel, zs, m0=None, tol=RESIDUAL_TOL, budget=ITER_BUDGET):
    zs = np.asarray(zs, dtype=complex)
    shape = zs.shape
    zs = zs.reshape(-1)
    if np.any(zs.imag <= 0):
        raise ValueError("spectral parameter must satisfy Im z > 0")
    targets = zs.imag
    m = np.empty_like(zs)
    total_its = np.zeros(zs.size, dtype=int)
    if m0 is not None:
        m[:] = np.broadcast_to(np.asarray(m0, dtype=complex).reshape(-1), zs.shape)
        m, f, its, bad = _iterate_level(kernel, zs, m, tol, 200)
        total_its += its
        redo = bad | (m.imag <= 0)
    else:
        redo = np.ones(zs.size, dtype=bool)
    if redo.any():
        idx = np.flatnonzero(redo)
        zr = zs[idx]
        levels = _eta_schedule(float(targets[idx].min()))
        z_start = zr.real + 1j * np.maximum(levels[0], targets[idx])
        mr = -1.0 / z_start
        for lvl, eta in enumerate(levels):
            zl = zr.real + 1j * np.maximum(eta, targets[idx])
            last = lvl == len(levels) - 1
            mr, f, its, bad = _iterate_level(kernel, zl, mr, tol if last else 1e-9, budget)
            total_its[idx] += its
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise NoConvergence(
                    f"Pastur iteration did not converge at z={zl[k]!r}",
                    z=complex(zl[k]), best=complex(mr[k]), residual=float(abs(f[k])),
                )
        m[idx] = mr
    s, _ = kernel(zs + m)
    residual = np.abs(s - m)
    return m.reshape(shape), residual.reshape(shape), total_its.reshape(shape)


def _as_solution(z, m, res, its, r2):
    return StieltjesSolution(complex(z), complex(m), float(res), int(its), float(r2))


def solve_mfc_many(m: JacobiMeasure, lam: float, zs, m0=None):
    """Vectorized m_fc over an array of spectral parameters; returns (m, residual)."""
    vals, res, _ = _solve(cauchy_kernel(m, lam), zs, m0)
    return vals, res


def solve_mfc_hat_many(v, lam: float, zs, m0=None):
    vals, res, _ = _solve(_empirical_kernel(v, lam), zs, m0)
    return vals, res


def solve_mfc(m: JacobiMeasure, lam: float, z: complex, m0=None) -> StieltjesSolution:
    """Deterministic Pastur solution m_fc(z) for Im z > 0."""
    z = complex(z)
    vals, res, its = _solve(cauchy_kernel(m, lam), np.array([z]), m0)
    mv = vals[0]
    r2 = mv.imag / (z.imag + mv.imag)
    return _as_solution(z, mv, res[0], its[0], r2)


def solve_mfc_hat(v, lam: float, z: complex, m0=None) -> StieltjesSolution:
    """Empirical Pastur solution with the integral replaced by a sample mean."""
    z = complex(z)
    v = np.asarray(v, dtype=float)
    vals, res, its = _solve(_empirical_kernel(v, lam), np.array([z]), m0)
    mv = vals[0]
    r2 = float(np.mean(1.0 / np.abs(lam * v - z - mv) ** 2))
    return _as_solution(z, mv, res[0], its[0], r2)


def density_fc(m: JacobiMeasure, lam: float, e, etas=RICHARDSON_ETAS):
    """Deformed semicircle density by Richardson extrapolation of Im m_fc(E + i eta) / pi.

    ``etas`` must be a geometric sequence with ratio 1/2.
    """
    e = np.asarray(e, dtype=float)
    scalar = e.ndim == 0
    e = np.atleast_1d(e)
    kernel = cauchy_kernel(m, lam)
    vals = []
    prev = None
    for eta in etas:
        mv, _, _ = _solve(kernel, e + 1j * eta, m0=prev)
        vals.append(mv.imag)
        prev = mv
    f1, f2, f4 = vals
    ext = (8 * f4 - 6 * f2 + f1) / 3 / math.pi
    if np.any(ext < -1e-6):
        warnings.warn("density extrapolation produced a markedly negative value", RuntimeWarning)
    ext = np.maximum(ext, 0.0)
    return float(ext[0]) if scalar else ext


# --------------------------------------------------------------------------- edges


def _bisect_decreasing(g, lo, hi, max_iter=400):
    """Root of a decreasing function with g(lo) > 0 > g(hi); bisect to float resolution."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _subcritical_edge(r2_of_tau, s_of_tau, anchor, direction):
    """Solve r2(tau) = 1 beyond ``anchor`` (direction +1 upper, -1 lower)."""
    def g(t):
        return r2_of_tau(anchor + direction * t) - 1.0

    lo, hi = 1e-12, 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise ArithmeticError("could not bracket the subcritical edge")
    t = _bisect_decreasing(g, lo, hi)
    tau = anchor + direction * t
    return tau, tau - s_of_tau(tau)


def edge_constants(m: JacobiMeasure, lam: float) -> EdgeConstants:
    """Critical couplings, support endpoints and Weibull constants for coupling ``lam``."""
    lam = float(lam)
    if lam <= 0:
        raise ValueError("coupling must be positive")
    lam_p, tau_p = edge_integrals(m, "upper")
    if abs(lam - lam_p) <= CRITICAL_GUARD:
        raise CriticalCoupling(f"lambda={lam} is within {CRITICAL_GUARD} of lambda_+={lam_p}")
    try:
        lam_m, tau_m = edge_integrals(m, "lower")
    except DivergentIntegral:
        lam_m, tau_m = math.inf, math.inf
    kernel = cauchy_kernel(m, lam)

    def s_real(t):
        return float(kernel(np.array([t + 0j]))[0][0].real)

    def r2_real(t):
        return float(kernel(np.array([t + 0j]))[1][0].real)

    if lam > lam_p:
        regime = "supercritical"
        l_plus = lam + tau_p / lam
        w_plus = lam
    else:
        regime = "subcritical"
        w_plus, l_plus = _subcritical_edge(r2_real, s_real, lam, +1)
    if abs(lam - lam_m) <= CRITICAL_GUARD:
        raise CriticalCoupling(f"lambda={lam} is within {CRITICAL_GUARD} of lambda_-={lam_m}")
    if lam > lam_m:
        regime_lower = "supercritical"
        l_minus = -(lam + tau_m / lam)
        w_minus = -lam
    else:
        regime_lower = "subcritical"
        w_minus, l_minus = _subcritical_edge(r2_real, s_real, -lam, -1)
    beta = m.b
    c_lambda = c_mu = None
    if regime == "supercritical":
        c_lambda = (lam * lam - lam_p * lam_p) / lam
        c_mu = (lam / (lam * lam - lam_p * lam_p)) ** (beta + 1) * m.edge_limit
    return EdgeConstants(
        lam=lam,
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        tau_plus=tau_p,
        tau_minus=tau_m,
        l_plus=l_plus,
        l_minus=l_minus,
        regime=regime,
        regime_lower=regime_lower,
        w_plus=w_plus,
        w_minus=w_minus,
        m_plus=w_plus - l_plus,
        c_lambda=c_lambda,
        c_mu=c_mu,
        beta_exp=beta,
        frak_b=0.5 - 1.0 / (beta + 1.0),
    )


def empirical_edge(v, lam: float):
    """(L_hat_+, tau_hat) for the empirical free convolution.

    tau_hat > lam * max(v) solves mean 1/(lam v_j - tau)^2 = 1, and
    L_hat_+ = tau_hat - mean 1/(lam v_j - tau_hat).
    """
    lv = lam * np.asarray(v, dtype=float)
    if lv.size == 0:
        raise ValueError("empty potential")
    with np.errstate(divide="ignore"):
        pre = np.mean(1.0 / (lv - lam) ** 2)
    if pre < 1.0 - 1e-12:
        raise NoSubcriticalEdge(
            f"mean 1/(lam v - lam)^2 = {pre:.6g} < 1: no subcritical edge beyond lambda"
        )
    top = lv.max()

    def g(t):
        return np.mean(1.0 / (lv - (top + t)) ** 2) - 1.0

    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
    t = _bisect_decreasing(g, 0.0, hi)
    tau = top + t
    l_hat = tau - np.mean(1.0 / (lv - tau))
    return float(l_hat), float(tau)


def linear_edge_check(m: JacobiMeasure, lam: float, z: complex, ec: EdgeConstants | None = None):
    """Compare z + m_fc(z) with its linearization at the supercritical edge.

    Returns (predicted, actual, T(z)) with
    T(z) = int dmu / ((lam v - z - m_fc)(lam v - lam)).
    """
    z = complex(z)
    ec = ec or edge_constants(m, lam)
    if not ec.supercritical:
        raise RegimeError("linear edge approximation needs lambda > lambda_+")
    if z.imag <= 0 or abs(z - ec.l_plus) > 0.1:
        raise ValueError(f"z={z!r} is not within 0.1 of L_+={ec.l_plus} in the upper half plane")
    sol = solve_mfc(m, lam, z)
    w = z + sol.m
    lp2 = ec.lambda_plus ** 2
    predicted = lam - lam * lam / (lam * lam - lp2) * (ec.l_plus - z)
    s_edge = -ec.tau_plus / lam  # S(lam) = int dmu / (lam v - lam)
    t_value = (sol.m - s_edge) / (w - lam)
    return predicted, w, t_value
