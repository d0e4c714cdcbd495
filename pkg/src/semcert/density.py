"""Smoothing log-density and its gradient in the attack parameter.

For sigma > 0 the log-density of y given the attacked image x_hat is
estimated by a Gauss-Newton/Laplace expansion around the sampled smoothing
parameter; for sigma = 0 the resolvable structure gives the closed form
z(alpha, beta) = log N(alpha) - log|det d(gamma_psi)/d(alpha)| on the
transform manifold.  Either way the attack-parameter gradient combines the
two partials through the resolving function's Jacobians:

    grad_beta z = dz/dbeta - dz/dalpha . pinv(dgamma/dalpha) . dgamma/dbeta

evaluated with the expansion point tracking the sampled parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionError, DomainError
from .transforms import TransformChain, psi_deriv, psi_forward

_FD_REL = 1e-4      # finite-difference step, relative to parameter scale
_GAMMA_FD = 1e-5    # step for resolving-function Jacobians (smooth algebra)


@dataclass(frozen=True)
class SmoothingSpec:
    """Transform chain, per-coordinate psi maps, pixel-noise scale, sample count."""

    transform: TransformChain
    maps: tuple
    sigma: float = 0.05
    n_samples: int = 10_000

    def __post_init__(self):
        if len(self.maps) != self.transform.d:
            raise DomainError(
                f"need one psi map per parameter: {len(self.maps)} != {self.transform.d}")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")

    @property
    def d(self) -> int:
        return self.transform.d

    def psi(self, alpha):
        return psi_forward(self.maps, alpha)

    def psi_deriv(self, alpha):
        return psi_deriv(self.maps, alpha)


@dataclass(frozen=True)
class LogDensityEval:
    """Laplace evaluation: value plus the Gauss-Newton internals."""

    z: float
    alpha0: np.ndarray
    M: np.ndarray
    mu: np.ndarray


def sample_y(spec: SmoothingSpec, x_hat: np.ndarray, alpha, noise=None) -> np.ndarray:
    """y = phi(x_hat, psi(alpha)) + sigma * noise (no clamping here)."""
    y = spec.transform.apply(x_hat, spec.psi(np.asarray(alpha, dtype=float)))
    if noise is not None and spec.sigma > 0:
        y = y + spec.sigma * noise
    return y


# ---------------------------------------------------------------------------
# batched SPD helpers (d is tiny; d <= 2 uses closed forms)
# ---------------------------------------------------------------------------

def _solve_spd_batch(M: np.ndarray, rhs: np.ndarray):
    """Solve M a = rhs and return (a, log det M) for stacked SPD matrices."""
    d = M.shape[-1]
    if d == 1:
        m = M[:, 0, 0]
        if np.any(m <= 0):
            raise DecompositionError("1x1 matrix not positive definite")
        return rhs / m[:, None], np.log(m)
    if d == 2:
        a, b, c = M[:, 0, 0], M[:, 0, 1], M[:, 1, 1]
        det = a * c - b * b
        if np.any(det <= 0) or np.any(a <= 0):
            raise DecompositionError("2x2 matrix not positive definite")
        out = np.empty_like(rhs)
        out[:, 0] = (c * rhs[:, 0] - b * rhs[:, 1]) / det
        out[:, 1] = (a * rhs[:, 1] - b * rhs[:, 0]) / det
        return out, np.log(det)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"stacked Cholesky failed: {exc}") from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    sol = np.linalg.solve(M, rhs[..., None])[..., 0]
    return sol, logdet


def _inv_batch(M: np.ndarray) -> np.ndarray:
    """Inverse of stacked small matrices (pinv fallback off the fast path)."""
    d = M.shape[-1]
    if d == 1:
        m = M[:, 0, 0]
        if np.any(m == 0):
            raise DecompositionError("singular resolving Jacobian")
        return (1.0 / m)[:, None, None]
    if d == 2:
        a, b, c, e = M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1]
        det = a * e - b * c
        if np.any(det == 0):
            raise DecompositionError("singular resolving Jacobian")
        out = np.empty_like(M)
        out[:, 0, 0] = e / det
        out[:, 0, 1] = -b / det
        out[:, 1, 0] = -c / det
        out[:, 1, 1] = a / det
        return out
    return np.linalg.pinv(M, rcond=1e-10)


def _logabsdet_batch(M: np.ndarray) -> np.ndarray:
    d = M.shape[-1]
    if d == 1:
        return np.log(np.abs(M[:, 0, 0]))
    if d == 2:
        return np.log(np.abs(M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]))
    return np.linalg.slogdet(M)[1]


# ---------------------------------------------------------------------------
# Laplace evaluation (sigma > 0)
# ---------------------------------------------------------------------------

def _jacobian_alpha_batch(spec: SmoothingSpec, x_hat: np.ndarray, A: np.ndarray) -> np.ndarray:
    """d phi(x_hat, psi(alpha)) / d alpha, shape (B, n, d)."""
    theta = spec.psi(A)
    J = spec.transform.param_jacobian_batch(x_hat, theta)
    return J * spec.psi_deriv(A)[:, None, :]


def laplace_z_batch(spec: SmoothingSpec, Y_flat: np.ndarray, x_hat: np.ndarray,
                    A: np.ndarray) -> np.ndarray:
    """Laplace log-density (up to the beta-free constant) for a sample batch."""
    if spec.sigma <= 0:
        raise DomainError("the Laplace path requires sigma > 0")
    B = len(A)
    theta = spec.psi(A)
    F = spec.transform.apply_one_to_batch(x_hat, theta).reshape(B, -1)
    J = _jacobian_alpha_batch(spec, x_hat, A)
    mu = Y_flat - F + np.einsum("bnd,bd->bn", J, A)
    M = np.einsum("bnd,bne->bde", J, J)
    M[:, np.arange(spec.d), np.arange(spec.d)] += spec.sigma ** 2
    rhs = np.einsum("bnd,bn->bd", J, mu)
    alpha0, logdet = _solve_spd_batch(M, rhs)
    quad = np.einsum("bd,bd->b", alpha0, rhs)
    s2 = spec.sigma ** 2
    return (-np.einsum("bn,bn->b", mu, mu) + quad) / (2.0 * s2) - 0.5 * logdet


def laplace_log_rho(spec: SmoothingSpec, y: np.ndarray, x_hat: np.ndarray,
                    alpha) -> LogDensityEval:
    """Single-sample Laplace evaluation, exposing the Gauss-Newton internals.

    The normalization constant (independent of the attack parameter) is
    omitted throughout: only gradients and differences of z are consumed.
    """
    if spec.sigma <= 0:
        raise DomainError("the Laplace path requires sigma > 0")
    A = np.asarray(alpha, dtype=float).reshape(1, -1)
    theta = spec.psi(A)
    F = spec.transform.apply_one_to_batch(x_hat, theta).reshape(1, -1)
    J = _jacobian_alpha_batch(spec, x_hat, A)
    mu = y.reshape(1, -1) - F + np.einsum("bnd,bd->bn", J, A)
    M = np.einsum("bnd,bne->bde", J, J)
    M[:, np.arange(spec.d), np.arange(spec.d)] += spec.sigma ** 2
    rhs = np.einsum("bnd,bn->bd", J, mu)
    alpha0, logdet = _solve_spd_batch(M, rhs)
    quad = float(np.einsum("bd,bd->b", alpha0, rhs)[0])
    s2 = spec.sigma ** 2
    z = (-float(np.einsum("bn,bn->b", mu, mu)[0]) + quad) / (2.0 * s2) - 0.5 * float(logdet[0])
    return LogDensityEval(z=z, alpha0=alpha0[0], M=M[0], mu=mu[0])


# ---------------------------------------------------------------------------
# resolving-function Jacobians
# ---------------------------------------------------------------------------

def _gamma_jacobians(spec: SmoothingSpec, A: np.ndarray, beta: np.ndarray):
    """FD Jacobians of gamma_psi(alpha, beta) = resolve(psi(alpha), beta).

    Returns (Gamma_alpha, Gamma_beta), each (B, d, d) with [b, i, k] =
    d gamma_i / d arg_k.
    """
    chain = spec.transform
    d = spec.d
    B = len(A)
    Ga = np.empty((B, d, d))
    Gb = np.empty((B, d, d))
    for k in range(d):
        step = _GAMMA_FD
        hi = A.copy()
        lo = A.copy()
        hi[:, k] += step
        lo[:, k] -= step
        Ga[:, :, k] = (chain.resolve(spec.psi(hi), beta)
                       - chain.resolve(spec.psi(lo), beta)) / (2.0 * step)
        step_b = _GAMMA_FD * max(1.0, abs(float(beta[k])))
        bhi = beta.copy()
        blo = beta.copy()
        bhi[k] += step_b
        blo[k] -= step_b
        theta = spec.psi(A)
        Gb[:, :, k] = (chain.resolve(theta, bhi) - chain.resolve(theta, blo)) / (2.0 * step_b)
    return Ga, Gb


# ---------------------------------------------------------------------------
# sigma = 0 closed form
# ---------------------------------------------------------------------------

def _z0_batch(spec: SmoothingSpec, A: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """log-density on the transform manifold: log N(alpha) - log|det Gamma_alpha|."""
    Ga, _ = _gamma_jacobians(spec, A, beta)
    return -0.5 * np.einsum("bd,bd->b", A, A) - _logabsdet_batch(Ga)


# ---------------------------------------------------------------------------
# gradient w.r.t. the attack parameter
# ---------------------------------------------------------------------------

def _x_hat_at(spec: SmoothingSpec, beta_ref: np.ndarray, beta_new: np.ndarray,
              x_hat: np.ndarray, base_image):
    """Attacked image at beta_new, from the base image or by group transfer."""
    if base_image is not None:
        return spec.transform.apply(base_image, beta_new)
    delta = spec.transform.transfer(beta_ref, beta_new)
    return spec.transform.apply(x_hat, delta)


def grad_log_rho_beta_batch(spec: SmoothingSpec, Y_flat, A: np.ndarray,
                            beta, x_hat=None, base_image=None) -> np.ndarray:
    """Per-sample gradient of log rho(y | phi(x, beta)) w.r.t. beta, shape (B, d).

    For sigma = 0 only the sampled alphas and beta matter; for sigma > 0 the
    Laplace value is differenced in beta (through the attacked image) and in
    alpha, then combined through the resolving-function Jacobians.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float)
    d = spec.d
    B = len(A)

    if spec.sigma == 0.0:
        def z_of(Ax, bx):
            return _z0_batch(spec, Ax, bx)

        dzdb = np.empty((B, d))
        dzda = np.empty((B, d))
        for k in range(d):
            step = _FD_REL * max(1.0, abs(beta[k]))
            bhi = beta.copy()
            blo = beta.copy()
            bhi[k] += step
            blo[k] -= step
            dzdb[:, k] = (z_of(A, bhi) - z_of(A, blo)) / (2.0 * step)
            ahi = A.copy()
            alo = A.copy()
            ahi[:, k] += _FD_REL
            alo[:, k] -= _FD_REL
            dzda[:, k] = (z_of(ahi, beta) - z_of(alo, beta)) / (2.0 * _FD_REL)
    else:
        if x_hat is None:
            raise DomainError("sigma > 0 gradients need the attacked image x_hat")
        Y_flat = np.asarray(Y_flat, dtype=float)
        dzdb = np.empty((B, d))
        dzda = np.empty((B, d))
        for k in range(d):
            step = _FD_REL * max(1.0, abs(beta[k]))
            bhi = beta.copy()
            blo = beta.copy()
            bhi[k] += step
            blo[k] -= step
            x_hi = _x_hat_at(spec, beta, bhi, x_hat, base_image)
            x_lo = _x_hat_at(spec, beta, blo, x_hat, base_image)
            dzdb[:, k] = (laplace_z_batch(spec, Y_flat, x_hi, A)
                          - laplace_z_batch(spec, Y_flat, x_lo, A)) / (2.0 * step)
            ahi = A.copy()
            alo = A.copy()
            ahi[:, k] += _FD_REL
            alo[:, k] -= _FD_REL
            dzda[:, k] = (laplace_z_batch(spec, Y_flat, x_hat, ahi)
                          - laplace_z_batch(spec, Y_flat, x_hat, alo)) / (2.0 * _FD_REL)

    Ga, Gb = _gamma_jacobians(spec, A, beta)
    correction = np.einsum("bi,bij,bjk->bk", dzda, _inv_batch(Ga), Gb)
    return dzdb - correction


def grad_log_rho_beta(spec: SmoothingSpec, y, x_hat, alpha, beta,
                      base_image=None) -> np.ndarray:
    """Single-sample wrapper around :func:`grad_log_rho_beta_batch`."""
    A = np.asarray(alpha, dtype=float).reshape(1, -1)
    if spec.sigma == 0.0:
        return grad_log_rho_beta_batch(spec, None, A, beta)[0]
    Y = np.asarray(y, dtype=float).reshape(1, -1)
    return grad_log_rho_beta_batch(spec, Y, A, beta, x_hat=x_hat,
                                   base_image=base_image)[0]
