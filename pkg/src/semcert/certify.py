"""Certification functions xi and g-hat and the robustness decision.

xi integrates the inverse profile envelope over confidence levels; g-hat
path-integrates the per-unit-length direction bound from the identity to the
queried parameter.  A smoothed classifier with confidence lower bound h at
the clean input is declared robust at beta (and along the whole straight
segment from the identity to beta) when

    ghat(beta) < xi(1/2) - xi(1 - h)      (strict inequality)

xi is anchored at xi(0) = 0; only differences enter the decision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .bounds import BoundTable
from .errors import DegenerateTransformError, DomainError
from .numerics import Interpolant1D, trapezoid_path_integral

_CLIP_FLOOR_REL = 1e-4   # floor for p before inversion, relative to max(p)
_PATH_STEPS = 129


def build_xi(table: BoundTable, clip_floor_rel: float = _CLIP_FLOOR_REL) -> Interpolant1D:
    """Cumulative trapezoid of 1/p over the uniform level grid, anchored at 0.

    p is floored at clip_floor_rel * max(p) before inversion: xi would
    diverge at the endpoints where the centered profile vanishes, and the
    floor only flattens xi there, which shrinks the certification threshold
    (the conservative direction).
    """
    p_max = float(table.p.max())
    if p_max <= 0.0:
        raise DegenerateTransformError("bound profile is identically zero")
    h = np.concatenate(([0.0], table.levels))
    p = np.concatenate(([0.0], table.p))
    p_eff = np.maximum(p, clip_floor_rel * p_max)
    inv = 1.0 / p_eff
    dh = np.diff(h)
    xi = np.concatenate(([0.0], np.cumsum(0.5 * dh * (inv[:-1] + inv[1:]))))
    if not np.all(np.diff(xi) > 0.0):
        raise DegenerateTransformError("xi failed to come out strictly increasing")
    return Interpolant1D(h, xi)


def _rate_values(table: BoundTable) -> np.ndarray:
    """Per-lattice-point unit-length rates g_j / ||beta_j - beta0||.

    Identity nodes (distance 0) take the rate of the nearest active node.
    """
    points = table.grid.points
    dists = np.linalg.norm(points - table.grid.beta0[None, :], axis=1)
    tol = 1e-12 * (1.0 + float(np.linalg.norm(table.grid.beta0)))
    active = dists > tol
    rates = np.zeros(len(points))
    rates[active] = table.g[active] / dists[active]
    if np.any(~active):
        for j in np.nonzero(~active)[0]:
            k = np.argmin(np.where(active, np.linalg.norm(points - points[j], axis=1), np.inf))
            rates[j] = rates[k]
    return rates


def build_ghat(table: BoundTable, n_steps: int = _PATH_STEPS):
    """Return ghat(beta) -> (value, outside_grid_flag).

    The rate field is linearly interpolated over the lattice (clamped beyond
    it) and integrated along the straight segment from the identity, then
    scaled by the segment length, so ghat(beta0) = 0 exactly.
    """
    grid = table.grid
    rates = _rate_values(table)
    lows = np.array([ax[0] for ax in grid.axes])
    highs = np.array([ax[-1] for ax in grid.axes])
    if grid.d == 1:
        interp = Interpolant1D(grid.axes[0], rates)

        def rate_field(pts):
            return interp(pts[:, 0])
    else:
        rgi = RegularGridInterpolator(tuple(grid.axes), rates.reshape(grid.shape),
                                      method="linear", bounds_error=False)

        def rate_field(pts):
            return rgi(np.clip(pts, lows[None, :], highs[None, :]))

    beta0 = grid.beta0

    def ghat(beta):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        dist = float(np.linalg.norm(beta - beta0))
        outside = bool(np.any(beta < lows - 1e-12) or np.any(beta > highs + 1e-12))
        if dist == 0.0:
            return 0.0, outside
        val = dist * trapezoid_path_integral(rate_field, beta0, beta, n_steps)
        return val, outside

    return ghat


@dataclass(frozen=True)
class CertificationResult:
    certified: bool
    margin: float
    h_lower: float
    beta: np.ndarray
    outside_grid: bool = False

    def to_json_dict(self) -> dict:
        return {
            "certified": bool(self.certified),
            "margin": float(self.margin),
            "h_lower": float(self.h_lower),
            "beta": [float(v) for v in self.beta],
            "outside_grid": bool(self.outside_grid),
        }


@dataclass(frozen=True)
class RegionCertification:
    certified: bool
    fraction: float
    n_points: int
    witnesses: tuple

    def to_json_dict(self) -> dict:
        return {
            "certified": bool(self.certified),
            "fraction": float(self.fraction),
            "n_points": int(self.n_points),
            "witnesses": [[float(v) for v in w] for w in self.witnesses],
        }


class Certifier:
    """Immutable xi / g-hat pair with the decision procedure."""

    def __init__(self, table: BoundTable):
        self.table = table
        self.beta0 = np.asarray(table.grid.beta0, dtype=float)
        self.xi = build_xi(table)
        self._ghat = build_ghat(table)
        payload = json.dumps(table.to_json_dict(), sort_keys=True).encode()
        self.table_digest = hashlib.sha256(payload).hexdigest()

    @classmethod
    def from_file(cls, path: str) -> "Certifier":
        return cls(BoundTable.load(path))

    def threshold(self, h_lower: float) -> float:
        return self.xi(0.5) - self.xi(1.0 - h_lower)

    def ghat(self, beta) -> float:
        return self._ghat(beta)[0]

    def certify_point(self, h_lower: float, beta) -> CertificationResult:
        if not 0.0 <= h_lower <= 1.0:
            raise DomainError("h_lower must lie in [0, 1]")
        beta = np.asarray(beta, dtype=float).reshape(-1)
        g_val, outside = self._ghat(beta)
        margin = self.threshold(h_lower) - g_val
        certified = bool(h_lower > 0.5 and margin > 0.0)
        return CertificationResult(certified=certified, margin=float(margin),
                                   h_lower=float(h_lower), beta=beta,
                                   outside_grid=outside)

    def certify_region(self, h_lower: float, box, resolution=17,
                       max_witnesses: int = 32) -> RegionCertification:
        """Exhaustive check over the tensor grid of an axis-aligned box.

        Every grid point is the endpoint of its own straight path from the
        identity, so the region claim is the union of those segment claims.
        """
        box = [(float(lo), float(hi)) for lo, hi in box]
        if len(box) != len(self.beta0):
            raise DomainError("box dimension must match the parameter dimension")
        if isinstance(resolution, int):
            resolution = [resolution] * len(box)
        axes = [np.linspace(lo, hi, int(r)) for (lo, hi), r in zip(box, resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        certified_all = True
        witnesses = []
        n_ok = 0
        for pt in pts:
            res = self.certify_point(h_lower, pt)
            if res.certified:
                n_ok += 1
            else:
                certified_all = False
                if len(witnesses) < max_witnesses:
                    witnesses.append(pt.copy())
        return RegionCertification(certified=certified_all,
                                   fraction=n_ok / len(pts),
                                   n_points=len(pts),
                                   witnesses=tuple(witnesses))
