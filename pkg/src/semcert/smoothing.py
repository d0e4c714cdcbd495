"""Monte-Carlo evaluation of the smoothed classifier with exact lower bounds.

A sample succeeds for class c when the base classifier's probability for c
exceeds 1/2; the smoothed confidence is lower-bounded by the Clopper-Pearson
limit at level alpha_star / 2.  Images are clamped to [0, 1] right before
each forward pass (and nowhere inside the transform chain).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import clamp01
from .density import SmoothingSpec
from .errors import ContractViolationError, DomainError
from .numerics import beta_inv_cdf

_BATCH = 2048


@dataclass(frozen=True)
class SmoothedEstimate:
    n: int
    n_max: int
    alpha_star: float
    h_lower: float
    class_id: int


def clopper_pearson_lower(n: int, n_max: int, alpha_star: float) -> float:
    """Exact binomial lower confidence limit Beta-quantile(alpha*/2; n, N-n+1)."""
    if not 0 <= n <= n_max:
        raise DomainError("need 0 <= n <= n_max")
    if not 0.0 < alpha_star < 1.0:
        raise DomainError("alpha_star must lie in (0, 1)")
    if n == 0:
        return 0.0
    return beta_inv_cdf(alpha_star / 2.0, n, n_max - n + 1)


def per_image_seed(root_seed: int, image_index: int) -> np.random.SeedSequence:
    """Deterministic per-image stream so parallel order cannot change results."""
    return np.random.SeedSequence([int(root_seed), int(image_index)])


def smoothed_counts(x: np.ndarray, model, spec: SmoothingSpec, n_max: int,
                    rng: np.random.Generator, batch_size: int = _BATCH) -> np.ndarray:
    """Per-class counts of f_c(clamp(phi(x, psi(alpha)) + sigma eps)) > 1/2."""
    if n_max < 1:
        raise DomainError("n_max must be positive")
    counts = None
    done = 0
    while done < n_max:
        b = min(batch_size, n_max - done)
        A = rng.standard_normal((b, spec.d))
        Y = spec.transform.apply_one_to_batch(x, spec.psi(A))
        if spec.sigma > 0:
            Y = Y + spec.sigma * rng.standard_normal(Y.shape)
        probs = model.forward(clamp01(Y))
        if np.any(probs < -1e-9) or np.any(probs > 1.0 + 1e-9):
            raise ContractViolationError("classifier produced probabilities outside [0, 1]")
        if counts is None:
            counts = np.zeros(probs.shape[1], dtype=np.int64)
        counts += (probs > 0.5).sum(axis=0)
        done += b
    return counts


def smoothed_predict(x: np.ndarray, model, spec: SmoothingSpec, class_id: int,
                     n_max: int, alpha_star: float, seed) -> SmoothedEstimate:
    """Figure-style smoothed estimate for one class of one image."""
    rng = np.random.default_rng(seed)
    counts = smoothed_counts(x, model, spec, n_max, rng)
    if not 0 <= class_id < counts.size:
        raise DomainError("class_id out of range")
    n = int(counts[class_id])
    return SmoothedEstimate(n=n, n_max=n_max, alpha_star=alpha_star,
                            h_lower=clopper_pearson_lower(n, n_max, alpha_star),
                            class_id=class_id)
