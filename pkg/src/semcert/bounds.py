"""Normalized directional-derivative bound profiles over a parameter grid.

For every grid point the projected per-sample score eta . t_hat is centered,
sorted descending, and prefix-averaged: the value at level h = i / N_s is the
worst-[0,1]-classifier bound on the unit-direction derivative of the smoothed
confidence at that confidence level.  The table keeps

* ``p``  - the pointwise maximum of the raw per-point profiles, and
* ``g_j = s_j * ||beta_j - beta0||`` where ``s_j = max_h profile_j(h) / p(h)``

so that profile_j(h) * ||beta_j - beta0|| <= p(h) * g_j holds for every j and
h.  Keeping ``p`` at its raw scale (rather than unit-normalized) makes the
integrated confidence map reproduce the analytic additive closed form
directly; the per-point scale then lives in ``g``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import validate_image
from .density import SmoothingSpec, grad_log_rho_beta_batch
from .errors import ConfigError, DegenerateTransformError, DomainError
from .numerics import cumsum, mean, sort_descending

_IDENTITY_TOL = 1e-12
_PROFILE_BUDGET = 2 * 10 ** 8  # max stored doubles for per-point profiles


@dataclass(frozen=True)
class ParameterGrid:
    """Tensor lattice over the attack parameter space."""

    axes: tuple
    beta0: np.ndarray

    def __post_init__(self):
        for ax in self.axes:
            if len(ax) < 2:
                raise DomainError("each grid axis needs at least two points")
            if not np.all(np.diff(ax) > 0):
                raise DomainError("grid axes must be strictly increasing")
        if len(self.beta0) != len(self.axes):
            raise DomainError("beta0 dimension must match the number of axes")

    @classmethod
    def from_ranges(cls, ranges, beta0, points_per_dim: int = 17) -> "ParameterGrid":
        axes = tuple(np.linspace(lo, hi, points_per_dim) for lo, hi in ranges)
        return cls(axes=axes, beta0=np.asarray(beta0, dtype=float))

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(ax) for ax in self.axes)

    @property
    def points(self) -> np.ndarray:
        """All lattice points, C-order flattened, shape (m, d)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass(frozen=True)
class BoundTable:
    """Profile envelope p over confidence levels plus per-point magnitudes g."""

    p: np.ndarray            # (n_samples,), level h = (i + 1) / n_samples
    g: np.ndarray            # one value per lattice point (0 at beta0)
    grid: ParameterGrid
    n_samples: int
    seed: int
    sigma: float
    spec_digest: str = ""
    config_digest: str = ""

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.n_samples + 1) / self.n_samples

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": "bound_table",
            "n_samples": int(self.n_samples),
            "seed": int(self.seed),
            "sigma": float(self.sigma),
            "spec_digest": self.spec_digest,
            "config_digest": self.config_digest,
            "beta0": [float(v) for v in self.grid.beta0],
            "axes": [[float(v) for v in ax] for ax in self.grid.axes],
            "p": [float(v) for v in self.p],
            "g": [float(v) for v in self.g],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BoundTable":
        if doc.get("kind") != "bound_table" or doc.get("schema") != 1:
            raise DomainError("not a schema-1 bound table document")
        grid = ParameterGrid(
            axes=tuple(np.asarray(ax, dtype=float) for ax in doc["axes"]),
            beta0=np.asarray(doc["beta0"], dtype=float),
        )
        return cls(
            p=np.asarray(doc["p"], dtype=float),
            g=np.asarray(doc["g"], dtype=float),
            grid=grid,
            n_samples=int(doc["n_samples"]),
            seed=int(doc["seed"]),
            sigma=float(doc["sigma"]),
            spec_digest=doc.get("spec_digest", ""),
            config_digest=doc.get("config_digest", ""),
        )

    @classmethod
    def load(cls, path: str) -> "BoundTable":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json_dict(json.load(fh))


def worst_classifier_bound(etas, h: float) -> float:
    """LP optimum of the worst-classifier problem at confidence level h.

    Equals (1/N) * sum of the floor(h N) largest entries: with the empirical
    constraints sum q_k = floor(h N), 0 <= q_k <= 1, the maximizing vertex
    sets q_k = 1 exactly on the top scores.
    """
    if not 0.0 <= h <= 1.0:
        raise DomainError("confidence level must lie in [0, 1]")
    etas = np.asarray(etas, dtype=float)
    n = etas.size
    k = int(np.floor(h * n))
    if k == 0:
        return 0.0
    top = np.partition(etas, n - k)[n - k:]
    return float(top.sum() / n)


def _profile_from_scores(scores: np.ndarray) -> np.ndarray:
    """Center, sort descending, prefix-average: the per-point bound profile."""
    centered = scores - mean(scores)
    ordered = sort_descending(centered)
    return cumsum(ordered) / scores.size


def compute_normed_bounds(x, spec: SmoothingSpec, grid: ParameterGrid,
                          seed: int = 0, batch_size: int = 4096) -> BoundTable:
    """Estimate the bound profile envelope and per-point magnitudes.

    Grid points within tolerance of the identity are skipped with a warning
    (their direction is undefined; their g value is exactly 0).  The same
    random draws are reused for every grid point (common random numbers).
    """
    x = validate_image(x)
    n_s = spec.n_samples
    if n_s < 1000:
        raise DomainError("bound estimation needs n_samples >= 1000")
    chain = spec.transform
    if grid.d != spec.d:
        raise DomainError("grid dimension must match the transform dimension")
    if spec.sigma > 0 and "translate" in chain.names:
        raise DegenerateTransformError(
            "integer translation has a piecewise-constant density for sigma > 0; "
            "use sigma = 0 for translation chains")

    points = grid.points
    beta0 = grid.beta0
    dists = np.linalg.norm(points - beta0[None, :], axis=1)
    active = dists > _IDENTITY_TOL * (1.0 + np.linalg.norm(beta0))
    if not np.any(active):
        raise DomainError("grid contains no points distinct from the identity")
    if np.any(~active):
        warnings.warn("grid contains the identity parameter; skipping it "
                      "(direction undefined)", stacklevel=2)
    n_active = int(active.sum())
    if n_active * n_s > _PROFILE_BUDGET:
        raise ConfigError(
            f"profile storage {n_active} x {n_s} exceeds the budget; "
            "reduce bounds n_samples or the grid resolution")

    draw_seed = np.random.SeedSequence([int(seed), 0xB0D])
    profiles = np.empty((n_active, n_s))
    row = 0
    index_of_row = []
    for j in np.nonzero(active)[0]:
        beta_j = points[j]
        t_hat = (beta_j - beta0) / dists[j]
        x_hat = chain.apply(x, beta_j) if spec.sigma > 0 else None
        rng = np.random.default_rng(draw_seed)  # identical stream per grid point
        scores = np.empty(n_s)
        done = 0
        while done < n_s:
            b = min(batch_size, n_s - done)
            A = rng.standard_normal((b, spec.d))
            if spec.sigma > 0:
                Y = chain.apply_one_to_batch(x_hat, spec.psi(A)).reshape(b, -1)
                Y += spec.sigma * rng.standard_normal(Y.shape)
                eta = grad_log_rho_beta_batch(spec, Y, A, beta_j, x_hat=x_hat,
                                              base_image=x)
            else:
                eta = grad_log_rho_beta_batch(spec, None, A, beta_j)
            scores[done:done + b] = eta @ t_hat
            done += b
        prof = _profile_from_scores(scores)
        if prof.max() <= 0.0:
            raise DegenerateTransformError(
                f"score profile at grid point {beta_j.tolist()} carries no signal")
        profiles[row] = prof
        index_of_row.append(j)
        row += 1

    p_env = np.maximum(profiles.max(axis=0), 0.0)
    g = np.zeros(len(points))
    positive = p_env > 0.0
    for row, j in enumerate(index_of_row):
        ratio = np.zeros(n_s)
        np.divide(profiles[row], p_env, out=ratio, where=positive)
        g[j] = float(ratio.max()) * dists[j]

    return BoundTable(p=p_env, g=g, grid=grid, n_samples=n_s, seed=int(seed),
                      sigma=spec.sigma)
