"""Special functions, interpolation, quadrature, and small dense linear algebra.

Everything here is pure and reentrant.  Inverse CDFs use bracketed
bisection/Newton hybrids on top of mature forward evaluations so results are
bit-stable across platforms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

from .errors import DecompositionError, DomainError

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# standard normal
# ---------------------------------------------------------------------------

def std_normal_cdf(x):
    """Phi(x) via the complementary error function (array-friendly)."""
    return 0.5 * _sp.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def std_normal_log_cdf(x):
    """log Phi(x), stable far into the lower tail."""
    return _sp.log_ndtr(np.asarray(x, dtype=float))


# Acklam's rational approximation for the inverse normal CDF (|err| < 1.2e-9),
# refined below by one Halley step to full double precision.
_INV_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_INV_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_INV_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_INV_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def _inv_cdf_initial(p):
    p = np.asarray(p, dtype=float)
    x = np.empty_like(p)
    lo = p < 0.02425
    hi = p > 1.0 - 0.02425
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_INV_A[0] * r + _INV_A[1]) * r + _INV_A[2]) * r + _INV_A[3]) * r + _INV_A[4]) * r + _INV_A[5]
        den = ((((_INV_B[0] * r + _INV_B[1]) * r + _INV_B[2]) * r + _INV_B[3]) * r + _INV_B[4]) * r + 1.0
        x[mid] = q * num / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(p[lo]))
        num = ((((_INV_C[0] * q + _INV_C[1]) * q + _INV_C[2]) * q + _INV_C[3]) * q + _INV_C[4]) * q + _INV_C[5]
        den = (((_INV_D[0] * q + _INV_D[1]) * q + _INV_D[2]) * q + _INV_D[3]) * q + 1.0
        x[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - p[hi]))
        num = ((((_INV_C[0] * q + _INV_C[1]) * q + _INV_C[2]) * q + _INV_C[3]) * q + _INV_C[4]) * q + _INV_C[5]
        den = (((_INV_D[0] * q + _INV_D[1]) * q + _INV_D[2]) * q + _INV_D[3]) * q + 1.0
        x[hi] = -num / den
    return x


def std_normal_inv_cdf(p):
    """Inverse of Phi, accurate to well below 1e-9 absolute.

    Rational initial guess plus one Halley refinement against the
    erfc-based CDF.  Raises DomainError outside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("std_normal_inv_cdf requires 0 < p < 1")
    x = _inv_cdf_initial(arr)
    # Halley step: e = Phi(x) - p, u = e / pdf(x)
    err = std_normal_cdf(x) - arr
    u = err * _SQRT_2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    if np.isscalar(p) or np.ndim(p) == 0:
        return float(x)
    return x


# ---------------------------------------------------------------------------
# regularized incomplete beta and its inverse
# ---------------------------------------------------------------------------

def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError("incomplete_beta requires positive shapes")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return float(_sp.betainc(a, b, x))


def _log_beta_pdf(a: float, b: float, x: float) -> float:
    return ((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
            - float(_sp.gammaln(a) + _sp.gammaln(b) - _sp.gammaln(a + b)))


def beta_inv_cdf(p: float, a: float, b: float) -> float:
    """x in [0, 1] with I_x(a, b) = p, via a bracketed bisection/Newton hybrid.

    The bracket never escapes [0, 1]; Newton steps are only accepted while
    they stay inside the current bracket.  Terminates when the bracket is
    narrower than 1e-12 or the residual underflows.
    """
    if not (a > 0.0 and b > 0.0):
        raise DomainError("beta_inv_cdf requires positive shapes")
    if not (0.0 <= p <= 1.0):
        raise DomainError("beta_inv_cdf requires 0 <= p <= 1")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0

    lo, hi = 0.0, 1.0
    x = 0.5
    for _ in range(200):
        f = incomplete_beta(a, b, x) - p
        if f > 0.0:
            hi = x
        elif f < 0.0:
            lo = x
        else:
            return x
        if hi - lo < 1e-12:
            break
        step = None
        if 0.0 < x < 1.0:
            dlog = _log_beta_pdf(a, b, x)
            if dlog > -700.0:
                step = f / math.exp(dlog)
        if step is not None:
            cand = x - step
            if lo < cand < hi:
                x = cand
                continue
        x = 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# small dense linear algebra
# ---------------------------------------------------------------------------

def gauss_newton_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M s = rhs for SPD M via Cholesky."""
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"matrix is not SPD: {exc}") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def pinv(A: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values <= rcond * s_max are dropped."""
    return np.linalg.pinv(np.asarray(A, dtype=float), rcond=rcond)


def log_det_spd(M: np.ndarray) -> float:
    """log det of an SPD matrix from its Cholesky factor."""
    M = np.asarray(M, dtype=float)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"matrix is not SPD: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(L))))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def trapezoid_path_integral(field, start, end, n_steps: int = 129) -> float:
    """Trapezoid rule for int_0^1 field((1-t) start + t end) dt.

    ``field`` is called once with an (n_steps, d) array of points and must
    return n_steps values (a scalar-per-point callable also works).
    """
    if n_steps < 2:
        raise DomainError("trapezoid_path_integral requires n_steps >= 2")
    start = np.atleast_1d(np.asarray(start, dtype=float))
    end = np.atleast_1d(np.asarray(end, dtype=float))
    t = np.linspace(0.0, 1.0, n_steps)
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    try:
        vals = np.asarray(field(pts), dtype=float)
        if vals.shape != (n_steps,):
            raise TypeError
    except TypeError:
        vals = np.array([float(field(pt)) for pt in pts])
    dt = 1.0 / (n_steps - 1)
    return float(dt * (0.5 * (vals[0] + vals[-1]) + vals[1:-1].sum()))


# ---------------------------------------------------------------------------
# elementwise utilities with NaN guards
# ---------------------------------------------------------------------------

def _checked(values, op: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError(f"{op} rejects NaN input")
    return arr


def cumsum(values) -> np.ndarray:
    return np.cumsum(_checked(values, "cumsum"))


def sort_descending(values) -> np.ndarray:
    arr = _checked(values, "sort_descending")
    return np.sort(arr)[::-1].copy()


def mean(values) -> float:
    arr = _checked(values, "mean")
    if arr.size == 0:
        raise DomainError("mean of an empty sequence is undefined")
    return float(arr.mean())


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

class Interpolant1D:
    """Piecewise-linear interpolant with clamp-to-endpoint extrapolation.

    Knots must be strictly increasing; evaluation at a knot returns its
    ordinate exactly.  Linearity preserves monotonicity of the data.
    """

    __slots__ = ("knots", "values")

    def __init__(self, knots, values):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape:
            raise DomainError("knots and values must be 1-D arrays of equal length")
        if knots.size < 2:
            raise DomainError("need at least two knots")
        if not np.all(np.diff(knots) > 0.0):
            raise DomainError("knots must be strictly increasing")
        if np.any(~np.isfinite(knots)) or np.any(~np.isfinite(values)):
            raise DomainError("knots and values must be finite")
        self.knots = knots
        self.values = values

    def __call__(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.knots, self.values)
        if np.ndim(x) == 0:
            return float(out)
        return out

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])
