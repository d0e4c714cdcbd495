"""Resolvable semantic transformations, their resolving algebra, and psi maps.

A transform chain applies its parts in listed order.  Chains built from
{translate, blur, brightness, contrast} normalize to the affine-spatial form
``x -> a * blur(shift(x, t), r) + d`` and chains from {gamma, contrast,
translate} to the power form ``x -> a * shift(x, t)**g``; composing two
parameter tuples reduces to composing normal forms, which gives the closed
resolving function gamma with phi(phi(x, beta), alpha) = phi(x, gamma(alpha,
beta)).

Translation uses integer pixel shifts on a circular (wrap-around) lattice and
blur uses the same wrap boundary: wrap is the unique boundary rule under
which integer shifts compose bit-exactly and shift/blur commute, which the
resolving algebra requires.  Sampled continuous shifts are rounded to the
nearest pixel; this is a sampling discretization, recorded in the docs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError, UnsupportedCompositionError
from .numerics import std_normal_log_cdf, std_normal_pdf

# ---------------------------------------------------------------------------
# psi maps: standard normal coordinates -> smoothing distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalMap:
    """psi(a) = kappa * a, the N(0, kappa^2) quantile coupling."""

    kappa: float

    def forward(self, a):
        return self.kappa * np.asarray(a, dtype=float)

    def deriv(self, a):
        return np.full_like(np.asarray(a, dtype=float), self.kappa)


@dataclass(frozen=True)
class LogNormalMap:
    """psi(a) = exp(mu + s a); psi(0) is the LogNormal median e^mu."""

    mu: float
    s: float

    def forward(self, a):
        return np.exp(self.mu + self.s * np.asarray(a, dtype=float))

    def deriv(self, a):
        return self.s * self.forward(a)


@dataclass(frozen=True)
class RayleighMap:
    """psi(a) = loc + scale * sqrt(-2 log Phi(-a)), the Rayleigh quantile map."""

    loc: float
    scale: float

    def _q(self, a):
        # -2 log(1 - Phi(a)), computed through the stable log CDF
        return np.maximum(-2.0 * std_normal_log_cdf(-np.asarray(a, dtype=float)), 0.0)

    def forward(self, a):
        return self.loc + self.scale * np.sqrt(self._q(a))

    def deriv(self, a):
        a = np.asarray(a, dtype=float)
        q = self._q(a)
        root = np.sqrt(np.maximum(q, 1e-300))
        dq = 2.0 * std_normal_pdf(a) * np.exp(-std_normal_log_cdf(-a))
        return self.scale * dq / (2.0 * root)


_MAP_KINDS = {
    "normal": (NormalMap, 1),
    "lognormal": (LogNormalMap, 2),
    "rayleigh": (RayleighMap, 2),
}


def param_map(kind: str, params) -> object:
    """Build a psi map from a config-style (kind, params) pair.

    rayleigh takes explicit (loc, scale); a single value is read as the
    scale with loc 0.
    """
    kind = kind.lower()
    if kind == "normal":
        (kappa,) = params
        if kappa <= 0:
            raise DomainError("normal map requires kappa > 0")
        return NormalMap(float(kappa))
    if kind == "lognormal":
        mu, s = params
        if s <= 0:
            raise DomainError("lognormal map requires s > 0")
        return LogNormalMap(float(mu), float(s))
    if kind == "rayleigh":
        if len(params) == 1:
            loc, scale = 0.0, params[0]
        else:
            loc, scale = params
        if scale <= 0:
            raise DomainError("rayleigh map requires scale > 0")
        if loc < 0:
            raise DomainError("rayleigh map requires loc >= 0")
        return RayleighMap(float(loc), float(scale))
    raise DomainError(f"unknown distribution kind {kind!r}")


def psi_forward(maps, alpha):
    """Coordinatewise psi over a (..., d) array of standard-normal values."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    for k, m in enumerate(maps):
        out[..., k] = m.forward(alpha[..., k])
    return out


def psi_deriv(maps, alpha):
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    for k, m in enumerate(maps):
        out[..., k] = m.deriv(alpha[..., k])
    return out


# ---------------------------------------------------------------------------
# transform parts
# ---------------------------------------------------------------------------


class _Part:
    name: str = ""
    dim: int = 1

    @property
    def identity(self) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x: np.ndarray, theta) -> np.ndarray:
        raise NotImplementedError

    def apply_batch(self, X: np.ndarray, TH: np.ndarray) -> np.ndarray:
        # fallback: per-sample loop
        return np.stack([self.apply(X[i], TH[i]) for i in range(len(X))])

    def param_cols_batch(self, Z: np.ndarray, TH: np.ndarray) -> np.ndarray:
        """d(apply)/d(theta) columns, shape (B, dim) + image shape."""
        raise NotImplementedError

    def jvp_batch(self, Z: np.ndarray, TH: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Directional derivative of apply w.r.t. the input, along V."""
        raise NotImplementedError


class Brightness(_Part):
    name = "brightness"
    dim = 1

    @property
    def identity(self):
        return np.array([0.0])

    def apply(self, x, theta):
        return x + float(np.asarray(theta).reshape(-1)[0])

    def apply_batch(self, X, TH):
        return X + TH[:, 0].reshape((-1,) + (1,) * (X.ndim - 1))

    def param_cols_batch(self, Z, TH):
        return np.ones((len(Z), 1) + Z.shape[1:])

    def jvp_batch(self, Z, TH, V):
        return V


class Contrast(_Part):
    name = "contrast"
    dim = 1

    @property
    def identity(self):
        return np.array([1.0])

    def apply(self, x, theta):
        c = float(np.asarray(theta).reshape(-1)[0])
        if c <= 0:
            raise DomainError("contrast requires c > 0")
        return x * c

    def apply_batch(self, X, TH):
        if np.any(TH[:, 0] <= 0):
            raise DomainError("contrast requires c > 0")
        return X * TH[:, 0].reshape((-1,) + (1,) * (X.ndim - 1))

    def param_cols_batch(self, Z, TH):
        return Z[:, None]

    def jvp_batch(self, Z, TH, V):
        return V * TH[:, 0].reshape((-1,) + (1,) * (Z.ndim - 1))


class GammaCorrect(_Part):
    name = "gamma"
    dim = 1

    @property
    def identity(self):
        return np.array([1.0])

    def apply(self, x, theta):
        g = float(np.asarray(theta).reshape(-1)[0])
        if g <= 0:
            raise DomainError("gamma correction requires g > 0")
        if np.any(x < 0):
            raise DomainError("gamma correction requires non-negative intensities")
        return x ** g

    def apply_batch(self, X, TH):
        if np.any(TH[:, 0] <= 0):
            raise DomainError("gamma correction requires g > 0")
        if np.any(X < 0):
            raise DomainError("gamma correction requires non-negative intensities")
        return X ** TH[:, 0].reshape((-1,) + (1,) * (X.ndim - 1))

    def param_cols_batch(self, Z, TH):
        g = TH[:, 0].reshape((-1,) + (1,) * (Z.ndim - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            col = np.where(Z > 0, Z ** g * np.log(np.where(Z > 0, Z, 1.0)), 0.0)
        return col[:, None]

    def jvp_batch(self, Z, TH, V):
        g = TH[:, 0].reshape((-1,) + (1,) * (Z.ndim - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(Z > 0, g * Z ** (g - 1.0), 0.0)
        return w * V


class Translate(_Part):
    """Integer pixel shift (T_x, T_y) on the circular lattice."""

    name = "translate"
    dim = 2

    @property
    def identity(self):
        return np.array([0.0, 0.0])

    @staticmethod
    def _shift_of(theta) -> tuple[int, int]:
        t = np.round(np.asarray(theta, dtype=float).reshape(-1)).astype(int)
        return int(t[0]), int(t[1])

    def apply(self, x, theta):
        tx, ty = self._shift_of(theta)
        h, w = x.shape[0], x.shape[1]
        if abs(tx) >= w or abs(ty) >= h:
            raise DomainError(f"shift magnitude ({tx}, {ty}) must stay below image extent")
        return np.roll(x, shift=(ty, tx), axis=(0, 1))

    def apply_batch(self, X, TH):
        shifts = np.round(TH).astype(int)
        h, w = X.shape[1], X.shape[2]
        if np.any(np.abs(shifts[:, 0]) >= w) or np.any(np.abs(shifts[:, 1]) >= h):
            raise DomainError("shift magnitude must stay below image extent")
        out = np.empty_like(X)
        uniq, inverse = np.unique(shifts, axis=0, return_inverse=True)
        for k, (tx, ty) in enumerate(uniq):
            idx = np.nonzero(inverse == k)[0]
            out[idx] = np.roll(X[idx], shift=(int(ty), int(tx)), axis=(1, 2))
        return out

    def param_cols_batch(self, Z, TH):
        # piecewise-constant in its parameter: no usable derivative
        return np.zeros((len(Z), 2) + Z.shape[1:])

    def jvp_batch(self, Z, TH, V):
        shifts = np.round(TH).astype(int)
        out = np.empty_like(V)
        uniq, inverse = np.unique(shifts, axis=0, return_inverse=True)
        for k, (tx, ty) in enumerate(uniq):
            idx = np.nonzero(inverse == k)[0]
            out[idx] = np.roll(V[idx], shift=(int(ty), int(tx)), axis=(1, 2))
        return out


class GaussianBlur(_Part):
    """Convolution with a normalized Gaussian of std r, truncated at 4r."""

    name = "blur"
    dim = 1

    @property
    def identity(self):
        return np.array([0.0])

    def apply(self, x, theta):
        r = float(np.asarray(theta).reshape(-1)[0])
        if r < 0:
            raise DomainError("blur radius must be non-negative")
        if r == 0.0:
            return x.copy()
        return gaussian_filter(x, sigma=(r, r, 0), mode="wrap", truncate=4.0)

    def param_cols_batch(self, Z, TH):
        cols = np.empty((len(Z), 1) + Z.shape[1:])
        for i in range(len(Z)):
            r = float(TH[i, 0])
            h = 1e-3 * max(r, 0.1)
            if r - h >= 0.0:
                cols[i, 0] = (self.apply(Z[i], [r + h]) - self.apply(Z[i], [r - h])) / (2.0 * h)
            else:
                cols[i, 0] = (self.apply(Z[i], [r + h]) - self.apply(Z[i], [r])) / h
        return cols

    def jvp_batch(self, Z, TH, V):
        out = np.empty_like(V)
        for i in range(len(V)):
            out[i] = self.apply(V[i], TH[i])
        return out


_PART_CLASSES = {cls.name: cls for cls in (Brightness, Contrast, GammaCorrect, Translate, GaussianBlur)}

_AFFINE_NAMES = {"translate", "blur", "brightness", "contrast"}
_POWER_NAMES = {"gamma", "contrast", "translate"}


def make_part(name: str) -> _Part:
    try:
        return _PART_CLASSES[name.lower()]()
    except KeyError:
        raise DomainError(f"unknown transform name {name!r}") from None


# ---------------------------------------------------------------------------
# plain single-transform operations
# ---------------------------------------------------------------------------

def brightness(x, b):
    return Brightness().apply(x, [b])


def contrast(x, c):
    return Contrast().apply(x, [c])


def gamma_correct(x, g):
    return GammaCorrect().apply(x, [g])


def translate(x, t):
    return Translate().apply(x, t)


def gaussian_blur(x, r):
    return GaussianBlur().apply(x, [r])


# ---------------------------------------------------------------------------
# transform chains and resolving algebra
# ---------------------------------------------------------------------------


class TransformChain:
    """Ordered composition of parts with a closed-form resolving function.

    Construct through :func:`compose`, which validates that the part set
    admits a joint resolve.
    """

    def __init__(self, parts):
        if not parts:
            raise DomainError("a transform chain needs at least one part")
        names = [p.name for p in parts]
        if len(set(names)) != len(names):
            raise UnsupportedCompositionError("each transform may appear once per chain")
        nameset = set(names)
        if nameset <= _AFFINE_NAMES:
            self.family = "affine"
        elif "gamma" in nameset and nameset <= _POWER_NAMES:
            self.family = "power"
        else:
            raise UnsupportedCompositionError(
                f"no registered joint resolve for part set {sorted(nameset)}")
        self.parts = list(parts)
        self.names = names
        self.dims = [p.dim for p in parts]
        self.d = sum(self.dims)
        offsets = np.cumsum([0] + self.dims)
        self.slices = [slice(int(offsets[i]), int(offsets[i + 1])) for i in range(len(parts))]
        self.identity = np.concatenate([p.identity for p in parts])

    def __repr__(self):
        return f"TransformChain({'+'.join(self.names)})"

    # -- application --------------------------------------------------------

    def apply(self, x: np.ndarray, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape != (self.d,):
            raise DomainError(f"expected {self.d} parameters, got {beta.shape}")
        out = x
        for part, sl in zip(self.parts, self.slices):
            out = part.apply(out, beta[sl])
        return out

    def apply_batch(self, X: np.ndarray, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=float)
        out = X
        for part, sl in zip(self.parts, self.slices):
            out = part.apply_batch(out, B[:, sl])
        return out

    def apply_one_to_batch(self, x: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Apply a batch of parameter tuples to one image."""
        X = np.broadcast_to(x, (len(B),) + x.shape).copy()
        return self.apply_batch(X, np.asarray(B, dtype=float))

    # -- normal forms -------------------------------------------------------

    def _to_nf(self, params: np.ndarray):
        """params (..., d) -> normal-form component arrays."""
        p = np.asarray(params, dtype=float)
        lead = p.shape[:-1]
        if self.family == "affine":
            t = np.zeros(lead + (2,))
            r = np.zeros(lead)
            a = np.ones(lead)
            dd = np.zeros(lead)
            for part, sl in zip(self.parts, self.slices):
                th = p[..., sl]
                if part.name == "translate":
                    t = t + th
                elif part.name == "blur":
                    r = np.hypot(r, th[..., 0])
                elif part.name == "contrast":
                    c = th[..., 0]
                    a = a * c
                    dd = dd * c
                else:  # brightness
                    dd = dd + th[..., 0]
            return t, r, a, dd
        t = np.zeros(lead + (2,))
        g = np.ones(lead)
        a = np.ones(lead)
        for part, sl in zip(self.parts, self.slices):
            th = p[..., sl]
            if part.name == "translate":
                t = t + th
            elif part.name == "gamma":
                gg = th[..., 0]
                g = g * gg
                a = a ** gg
            else:  # contrast
                a = a * th[..., 0]
        return t, g, a

    def _from_nf(self, nf) -> np.ndarray:
        if self.family == "affine":
            t, r, a, dd = nf
            lead = a.shape
            out = np.empty(lead + (self.d,))
            bright_idx = self.names.index("brightness") if "brightness" in self.names else None
            contrast_idx = self.names.index("contrast") if "contrast" in self.names else None
            for part, sl in zip(self.parts, self.slices):
                if part.name == "translate":
                    out[..., sl] = t
                elif part.name == "blur":
                    out[..., sl.start] = r
                elif part.name == "contrast":
                    out[..., sl.start] = a
                else:
                    b = dd
                    if contrast_idx is not None and contrast_idx > bright_idx:
                        b = dd / a
                    out[..., sl.start] = b
            return out
        t, g, a = nf
        lead = a.shape
        out = np.empty(lead + (self.d,))
        gamma_idx = self.names.index("gamma")
        contrast_idx = self.names.index("contrast") if "contrast" in self.names else None
        for part, sl in zip(self.parts, self.slices):
            if part.name == "translate":
                out[..., sl] = t
            elif part.name == "gamma":
                out[..., sl.start] = g
            else:
                c = a
                if contrast_idx is not None and contrast_idx < gamma_idx:
                    c = a ** (1.0 / g)
                out[..., sl.start] = c
        return out

    def _compose_nf(self, first, second):
        """Normal form of (apply first, then second)."""
        if self.family == "affine":
            t1, r1, a1, d1 = first
            t2, r2, a2, d2 = second
            return t1 + t2, np.hypot(r1, r2), a1 * a2, a2 * d1 + d2
        t1, g1, a1 = first
        t2, g2, a2 = second
        return t1 + t2, g1 * g2, a1 ** g2 * a2

    # -- resolving function --------------------------------------------------

    def resolve(self, alpha_params, beta_params) -> np.ndarray:
        """gamma(alpha, beta): phi(phi(x, beta), alpha) = phi(x, gamma(alpha, beta)).

        Either argument may carry leading batch dimensions.
        """
        a = np.asarray(alpha_params, dtype=float)
        b = np.asarray(beta_params, dtype=float)
        nf = self._compose_nf(self._to_nf(b), self._to_nf(a))
        out = self._from_nf(nf)
        if a.ndim == 1 and b.ndim == 1:
            return out.reshape(self.d)
        return out

    def transfer(self, beta_from, beta_to) -> np.ndarray:
        """delta with phi(phi(x, beta_from), delta) = phi(x, beta_to)."""
        f = self._to_nf(np.asarray(beta_from, dtype=float))
        t = self._to_nf(np.asarray(beta_to, dtype=float))
        if self.family == "affine":
            tf, rf, af, df = f
            tt, rt, at, dt = t
            dr2 = rt ** 2 - rf ** 2
            if np.any(dr2 < -1e-12):
                raise DomainError("cannot transfer to a smaller blur radius")
            a_delta = at / af
            nf = (tt - tf, np.sqrt(np.maximum(dr2, 0.0)), a_delta, dt - a_delta * df)
        else:
            tf, gf, af = f
            tt, gt, at = t
            g_delta = gt / gf
            nf = (tt - tf, g_delta, at / af ** g_delta)
        return self._from_nf(nf).reshape(self.d)

    # -- parameter Jacobian --------------------------------------------------

    def param_jacobian_batch(self, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """d(apply)/d(theta) for one image under a batch of parameter tuples.

        Returns (B, n, d) with n = image size, by forward accumulation:
        analytic per-part columns pushed through downstream linearizations.
        """
        thetas = np.asarray(thetas, dtype=float)
        B = len(thetas)
        stages = [np.broadcast_to(x, (B,) + x.shape).copy()]
        for part, sl in zip(self.parts, self.slices):
            stages.append(part.apply_batch(stages[-1], thetas[:, sl]))
        n = int(np.prod(x.shape))
        J = np.empty((B, n, self.d))
        for k, (part, sl) in enumerate(zip(self.parts, self.slices)):
            cols = part.param_cols_batch(stages[k], thetas[:, sl])
            for j in range(part.dim):
                v = cols[:, j]
                for later in range(k + 1, len(self.parts)):
                    v = self.parts[later].jvp_batch(stages[later], thetas[:, self.slices[later]], v)
                J[:, :, sl.start + j] = v.reshape(B, n)
        return J


def compose(parts) -> TransformChain:
    """Build a chain from part instances or registered names, in order."""
    built = [p if isinstance(p, _Part) else make_part(p) for p in parts]
    return TransformChain(built)


def jacobian_fd(transform, x: np.ndarray, theta, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian d(apply)/d(theta), shape (n, d)."""
    if step <= 0:
        raise DomainError("finite-difference step must be positive")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n = int(np.prod(x.shape))
    d = theta.size
    J = np.empty((n, d))
    for k in range(d):
        hi = theta.copy()
        lo = theta.copy()
        hi[k] += step
        lo[k] -= step
        J[:, k] = (transform.apply(x, hi) - transform.apply(x, lo)).reshape(n) / (2.0 * step)
    return J
