"""Green-function diagnostics for H = lambda V + W.

Dense resolvent oracles, the fluctuating Schur-complement term Z_i, exact
resolvent identities, the local law near the upper edge and a checker for the
"typical potential" event.  Indices are 0-based throughout; ``n0`` keeps its
meaning as a count (the edge block is indices 0 .. n0 - 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ensemble
from .errors import EmptyDomain, NoRoot, RegimeError
from .freeconv import EdgeConstants, edge_constants, solve_mfc_hat_many, solve_mfc_many
from .measure import JacobiMeasure

__all__ = [
    "ScaleParams",
    "GreenEval",
    "LocalLawReport",
    "OmegaVReport",
    "resolvent_direct",
    "stieltjes_from_spectrum",
    "minor_resolvent",
    "z_var",
    "schur_check",
    "ward_check",
    "minor_identity_check",
    "interlacing_check",
    "minor_trace_gap",
    "fluctuation_average",
    "solve_zhat",
    "local_law_scan",
    "check_omega_v",
]

DEFAULT_EPSILON = 0.05
DEFAULT_N0 = 5
GRID_E = 64
GRID_ETA = 16
LOCAL_LAW_SAFETY = 5.0
OMEGA_R2_THRESHOLD = 0.95
OMEGA_CLT_CONSTANT = 2.0
ZHAT_BRACKET_FACTOR = 10.0


@dataclass(frozen=True)
class ScaleParams:
    epsilon: float
    kappa0: float
    eta0: float
    n0: int
    n: int
    beta: float

    @classmethod
    def for_size(cls, n: int, beta: float, epsilon: float = DEFAULT_EPSILON, n0: int = DEFAULT_N0):
        if beta <= 1:
            raise ValueError(f"edge exponent must exceed 1, got {beta}")
        frak_b = 0.5 - 1.0 / (beta + 1.0)
        limit = (10.0 + (beta + 1.0) / (beta - 1.0)) * frak_b
        if not 0 < epsilon < limit:
            raise ValueError(f"epsilon={epsilon} outside (0, {limit:.6g})")
        if n0 < 2:
            raise ValueError("n0 must be at least 2")
        kappa0 = n ** (-1.0 / (beta + 1.0))
        eta0 = n ** (-epsilon) / math.sqrt(n)
        return cls(float(epsilon), kappa0, eta0, int(n0), int(n), float(beta))

    def edge_window(self, l_plus: float):
        half = self.n ** self.epsilon * self.kappa0
        return l_plus - half, l_plus + half

    def eta_range(self):
        return self.n ** (-0.5 - self.epsilon), self.n ** (-1.0 / (self.beta + 1.0) + self.epsilon)

    def grid(self, l_plus: float) -> np.ndarray:
        """64 x 16 spectral-parameter grid near L_+ (rows: eta, columns: E)."""
        es = np.linspace(*self.edge_window(l_plus), GRID_E)
        etas = np.geomspace(*self.eta_range(), GRID_ETA)
        return es[None, :] + 1j * etas[:, None]


@dataclass(frozen=True)
class GreenEval:
    z: complex
    g_diag: np.ndarray
    m: complex
    g: np.ndarray | None = None
    m_minor: np.ndarray | None = None
    z_vars: np.ndarray | None = None


def _dense(h) -> np.ndarray:
    return h.dense if isinstance(h, ensemble.DeformedMatrix) else np.asarray(h)


def _check_upper(z: complex) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"spectral parameter must lie in the upper half plane, got {z!r}")
    return z


def _resolvent(a: np.ndarray, z: complex) -> np.ndarray:
    n = a.shape[0]
    return np.linalg.solve(a - z * np.eye(n), np.eye(n, dtype=complex))


def resolvent_direct(h, z: complex) -> GreenEval:
    """G = (H - z)^{-1} by LU with partial pivoting; keeps the full matrix."""
    z = _check_upper(z)
    g = _resolvent(_dense(h), z)
    diag = np.diag(g).copy()
    return GreenEval(z, diag, complex(diag.mean()), g=g)


def stieltjes_from_spectrum(eigs, z):
    """m(z) = N^{-1} sum 1/(mu_a - z); vectorized over z."""
    eigs = np.asarray(eigs, dtype=float)
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("spectral parameter must lie in the upper half plane")
    flat = z.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    step = max(1, 2_000_000 // max(len(eigs), 1))
    for s in range(0, flat.size, step):
        out[s:s + step] = np.mean(1.0 / (eigs[None, :] - flat[s:s + step, None]), axis=1)
    out = out.reshape(z.shape)
    return complex(out) if out.ndim == 0 else out


def minor_resolvent(h, i: int, z: complex) -> np.ndarray:
    """Resolvent of H with row/column i removed, from a fresh dense solve."""
    a = _dense(h)
    keep = np.delete(np.arange(a.shape[0]), i)
    return _resolvent(a[np.ix_(keep, keep)], _check_upper(z))


def _row_without(a: np.ndarray, i: int) -> np.ndarray:
    return np.delete(a[i], i)


def z_var(h, i: int, z: complex) -> complex:
    """Z_i = sum_{s,t != i} w_is G^{(i)}_st w_ti - N^{-1} tr G^{(i)}.

    The off-diagonal entries of row i of H are those of W, so the row is read
    straight from H.
    """
    a = _dense(h)
    n = a.shape[0]
    gi = minor_resolvent(a, i, z)
    row = _row_without(a, i)
    quad = row @ gi @ row.conj()
    return complex(quad - np.trace(gi) / n)


def schur_check(h, i: int, z: complex) -> float:
    """|G_ii - 1/(h_ii - z - sum_{k,l != i} h_ik G^{(i)}_kl h_li)|."""
    a = _dense(h)
    z = _check_upper(z)
    g = _resolvent(a, z)
    gi = minor_resolvent(a, i, z)
    row = _row_without(a, i)
    rhs = 1.0 / (a[i, i] - z - row @ gi @ row.conj())
    return float(abs(g[i, i] - rhs))


def ward_check(h, i: int, z: complex) -> float:
    """|sum_j |G_ij|^2 - Im G_ii / eta|."""
    z = _check_upper(z)
    g = _resolvent(_dense(h), z)
    return float(abs(np.sum(np.abs(g[i]) ** 2) - g[i, i].imag / z.imag))


def minor_identity_check(h, k: int, z: complex) -> float:
    """max over i, j != k of |G_ij - G^{(k)}_ij - G_ik G_kj / G_kk|."""
    a = _dense(h)
    z = _check_upper(z)
    g = _resolvent(a, z)
    gk = minor_resolvent(a, k, z)
    keep = np.delete(np.arange(a.shape[0]), k)
    pred = g[np.ix_(keep, keep)] - np.outer(g[keep, k], g[k, keep]) / g[k, k]
    return float(np.max(np.abs(pred - gk)))


def interlacing_check(h, i: int) -> float:
    """Largest violation of mu_{a+1} <= nu_a <= mu_a (0 when the minor interlaces)."""
    a = _dense(h)
    mu = ensemble.eigenvalues(ensemble.tridiagonalize(a))
    keep = np.delete(np.arange(a.shape[0]), i)
    nu = ensemble.eigenvalues(ensemble.tridiagonalize(a[np.ix_(keep, keep)]))
    upper = np.max(nu - mu[:-1], initial=0.0)
    lower = np.max(mu[1:] - nu, initial=0.0)
    return float(max(upper, lower, 0.0))


def minor_trace_gap(h, i: int, z: complex) -> float:
    """N * eta * |m - m^{(i)}| with m^{(i)} normalized by N; at most 1 exactly."""
    a = _dense(h)
    z = _check_upper(z)
    n = a.shape[0]
    m = np.trace(_resolvent(a, z)) / n
    mi = np.trace(minor_resolvent(a, i, z)) / n
    return float(n * z.imag * abs(m - mi))


def fluctuation_average(h, z: complex, n0: int, method: str = "schur") -> complex:
    """(1/N) sum_{a >= n0 - 1} Z_a, i.e. the average over all but the top n0 - 1 rows.

    ``method="schur"`` reads every Z_a off one resolvent of H: the Schur
    complement gives the quadratic form as h_aa - z - 1/G_aa and the minor
    identity gives tr G^{(a)} = tr G - (G^2)_aa / G_aa.  ``method="minors"``
    calls :func:`z_var` with a fresh solve per row.
    """
    a = _dense(h)
    n = a.shape[0]
    if not 1 <= n0 <= n:
        raise ValueError(f"n0 must lie in [1, {n}], got {n0}")
    z = _check_upper(z)
    rows = np.arange(n0 - 1, n)
    if method == "minors":
        total = sum(z_var(a, i, z) for i in rows)
    elif method == "schur":
        g = _resolvent(a, z)
        gd = np.diag(g)
        g2 = np.einsum("ij,ji->i", g, g)
        zs = a.diagonal()[rows] - z - 1.0 / gd[rows] - (np.trace(g) - g2[rows] / gd[rows]) / n
        total = zs.sum()
    else:
        raise ValueError(f"method must be 'schur' or 'minors', got {method!r}")
    return complex(total / n)


# --------------------------------------------------------------------------- edge location


def _zhat_gap(v, lam, target, eta0):
    def f(es):
        es = np.atleast_1d(np.asarray(es, dtype=float))
        mv, _ = solve_mfc_hat_many(v, lam, es + 1j * eta0)
        return es + mv.real - target

    return f


def solve_zhat(v, lam: float, k: int, eta0: float, ec: EdgeConstants | None = None,
               *, bracket=None, beta: float | None = None) -> float:
    """Largest real E with E + Re m_hat(E + i eta0) = lam v_k (k is 0-based).

    Without an explicit ``bracket`` the search runs over
    L_+ +/- 10 kappa0 log N, scanned downward from the top on a grid of
    spacing eta0 / 4 starting near the linear prediction L_+ - C_lam (1 - v_k);
    the bracketing cell is then bisected.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not 0 <= k < n:
        raise ValueError(f"index k={k} out of range for N={n}")
    target = lam * v[k]
    f = _zhat_gap(v, lam, target, eta0)
    if bracket is None:
        if ec is None or not ec.supercritical:
            raise RegimeError("the default search bracket needs supercritical edge constants")
        b = ec.beta_exp if beta is None else beta
        half = ZHAT_BRACKET_FACTOR * n ** (-1.0 / (b + 1.0)) * math.log(n)
        lo, hi = ec.l_plus - half, ec.l_plus + half
        seed = ec.l_plus - ec.c_lambda * (1.0 - v[k])
        start = max(lo, seed - 2.0 * n ** (-1.0 / (b + 1.0)))
    else:
        lo, hi = map(float, bracket)
        start = lo
    step = eta0 / 4.0
    top = hi
    while True:
        count = max(int(math.ceil((top - start) / step)) + 1, 2)
        es = np.linspace(top, start, count)
        vals = f(es)
        sign_change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        exact = np.flatnonzero(vals == 0)
        if exact.size and (not sign_change.size or exact[0] <= sign_change[0]):
            return float(es[exact[0]])
        if sign_change.size:
            j = sign_change[0]
            a, b_ = es[j + 1], es[j]
            fa = vals[j + 1]
            break
        if start <= lo:
            raise NoRoot(f"no sign change of E + Re m_hat - lam v_k in [{lo:.6g}, {hi:.6g}]")
        top, start = start, lo
    for _ in range(200):
        mid = 0.5 * (a + b_)
        if mid in (a, b_):
            break
        fm = f(mid)[0]
        if fm == 0:
            return float(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b_ = mid
    return float(0.5 * (a + b_))


# --------------------------------------------------------------------------- local law


@dataclass(frozen=True)
class LocalLawReport:
    sup_deviation: float
    bound: float
    passed: bool
    grid_points_used: int

    def to_dict(self) -> dict:
        return {
            "sup_deviation": self.sup_deviation,
            "bound": self.bound,
            "pass": self.passed,
            "grid_points_used": self.grid_points_used,
        }


def _supercritical(measure: JacobiMeasure, lam: float, ec: EdgeConstants | None) -> EdgeConstants:
    if lam <= 0:
        raise RegimeError(f"lambda={lam} is not in the supercritical regime")
    ec = ec or edge_constants(measure, lam)
    if not ec.supercritical:
        raise RegimeError(f"lambda={lam} is not above lambda_+={ec.lambda_plus}")
    return ec


def local_law_scan(h, v, lam: float, p: ScaleParams, measure: JacobiMeasure,
                   ec: EdgeConstants | None = None, eigs=None,
                   safety: float = LOCAL_LAW_SAFETY) -> LocalLawReport:
    """sup |m(z) - m_hat(z)| over the edge grid restricted to the separated domain.

    A grid point survives when |lam v_a - z - m_fc(z)| > N^{-1/(beta+1)-eps}/2
    for every a >= n0 - 1.
    """
    ec = _supercritical(measure, lam, ec)
    v = np.asarray(v, dtype=float)
    if eigs is None:
        eigs = ensemble.eigenvalues(ensemble.tridiagonalize(h))
    zs = p.grid(ec.l_plus).reshape(-1)
    mfc, _ = solve_mfc_many(measure, lam, zs)
    w = zs + mfc
    tail = lam * v[p.n0 - 1:]
    sep = 0.5 * p.n ** (-1.0 / (p.beta + 1.0) - p.epsilon)
    dist = np.min(np.abs(tail[None, :] - w[:, None]), axis=1)
    keep = dist > sep
    if not keep.any():
        raise EmptyDomain("every grid point violates the separation from the bulk potential values")
    zk = zs[keep]
    m_emp = stieltjes_from_spectrum(eigs, zk)
    m_hat, _ = solve_mfc_hat_many(v, lam, zk)
    sup = float(np.max(np.abs(m_emp - m_hat)))
    bound = safety * p.n ** (-0.5 + 2 * p.epsilon)
    return LocalLawReport(sup, bound, sup <= bound, int(keep.sum()))


# --------------------------------------------------------------------------- typical potentials


@dataclass(frozen=True)
class OmegaVReport:
    gap_lower_ok: bool
    gap_upper_ok: bool
    r2_sup: float
    clt_sup: float
    passed: bool
    r2_threshold: float = OMEGA_R2_THRESHOLD
    clt_bound: float = float("nan")
    grid_points_used: int = 0

    def to_dict(self) -> dict:
        return {
            "gap_lower_ok": self.gap_lower_ok,
            "gap_upper_ok": self.gap_upper_ok,
            "r2_sup": self.r2_sup,
            "r2_threshold": self.r2_threshold,
            "clt_sup": self.clt_sup,
            "clt_bound": self.clt_bound,
            "grid_points_used": self.grid_points_used,
            "pass": self.passed,
        }


def _gap_checks(v: np.ndarray, p: ScaleParams):
    low = p.n ** (-p.epsilon) * p.kappa0
    high = math.log(p.n) * p.kappa0
    kmax = min(p.n0 - 1, v.size)
    lower_ok = low < 1.0 - v[0]
    upper_ok = 1.0 - v[0] < high
    for k in range(kmax):
        if k > 0:
            lower_ok &= v[k - 1] - v[k] > low
        if k + 1 < v.size:
            gap = v[k] - v[k + 1]
            lower_ok &= gap > low
            upper_ok &= gap < high
    return bool(lower_ok), bool(upper_ok)


def check_omega_v(v, lam: float, measure: JacobiMeasure, p: ScaleParams,
                  ec: EdgeConstants | None = None, r2_threshold: float = OMEGA_R2_THRESHOLD,
                  clt_constant: float = OMEGA_CLT_CONSTANT) -> OmegaVReport:
    """Measure the three conditions of the typical-potential event on the edge grid."""
    ec = _supercritical(measure, lam, ec)
    v = np.asarray(v, dtype=float)
    if np.any(np.diff(v) > 0):
        raise ValueError("potential values must be sorted in descending order")
    lower_ok, upper_ok = _gap_checks(v, p)

    zs = p.grid(ec.l_plus).reshape(-1)
    mfc, _ = solve_mfc_many(measure, lam, zs)
    w = zs + mfc
    lv = lam * v
    n = v.size

    nearest = np.argmin(np.abs(lv[None, :] - w.real[:, None]), axis=1)
    near_top = nearest < p.n0 - 1
    r2_sup = 0.0
    used = int(near_top.sum())
    for zi in np.flatnonzero(near_top):
        terms = 1.0 / np.abs(lv - w[zi]) ** 2
        r2_sup = max(r2_sup, float((terms.sum() - terms[nearest[zi]]) / n))

    emp = np.array([np.mean(1.0 / (lv - wi)) for wi in w])
    clt_sup = float(np.max(np.abs(emp - mfc)))
    clt_bound = clt_constant * p.n ** (1.5 * p.epsilon) / math.sqrt(p.n)

    ok = lower_ok and upper_ok and r2_sup < r2_threshold and clt_sup <= clt_bound
    return OmegaVReport(lower_ok, upper_ok, r2_sup, clt_sup, bool(ok), r2_threshold, clt_bound, used)
