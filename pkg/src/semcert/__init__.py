"""Certified robustness of image classifiers under resolvable semantic transforms."""

from .bounds import BoundTable, ParameterGrid, compute_normed_bounds, worst_classifier_bound
from .certify import CertificationResult, Certifier, RegionCertification, build_ghat, build_xi
from .dataio import LabeledDataset, clamp01, export_grid_csv, load_idx, save_idx
from .density import (LogDensityEval, SmoothingSpec, grad_log_rho_beta,
                      laplace_log_rho, sample_y)
from .model import MLPClassifier, TrainConfig, train_augmented
from .smoothing import SmoothedEstimate, clopper_pearson_lower, smoothed_counts, smoothed_predict
from .transforms import (TransformChain, compose, jacobian_fd, param_map, psi_forward,
                         brightness, contrast, gamma_correct, gaussian_blur, translate)

__version__ = "0.1.0"

__all__ = [
    "BoundTable", "ParameterGrid", "compute_normed_bounds", "worst_classifier_bound",
    "CertificationResult", "Certifier", "RegionCertification", "build_ghat", "build_xi",
    "LabeledDataset", "clamp01", "export_grid_csv", "load_idx", "save_idx",
    "LogDensityEval", "SmoothingSpec", "grad_log_rho_beta", "laplace_log_rho", "sample_y",
    "MLPClassifier", "TrainConfig", "train_augmented",
    "SmoothedEstimate", "clopper_pearson_lower", "smoothed_counts", "smoothed_predict",
    "TransformChain", "compose", "jacobian_fd", "param_map", "psi_forward",
    "brightness", "contrast", "gamma_correct", "gaussian_blur", "translate",
    "__version__",
]
