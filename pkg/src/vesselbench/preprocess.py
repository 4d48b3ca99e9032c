"""Intensity preprocessing: bias-field correction and z-score normalization.

The bias correction here is a deliberately simple homomorphic filter: the
smooth multiplicative inhomogeneity is estimated as a wide Gaussian blur
of the log-intensities and divided out, preserving the log-mean. It
stands in for heavier iterative correction methods; the point is to
flatten low-frequency shading before thresholding and training, not to
match any particular estimator.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, ParameterError, ValidationError
from .volume import Volume

DEFAULT_BIAS_SIGMA_MM = 30.0


def bias_correct(v: Volume, sigma_mm: float = DEFAULT_BIAS_SIGMA_MM) -> Volume:
    """Remove smooth multiplicative shading via log-domain Gaussian filtering.

    output = exp(log(v + eps) - smooth + mean(smooth)), rescaled so the
    output mean matches the input mean exactly. ``sigma_mm`` is the
    Gaussian width in mm, converted to voxels per axis through the
    volume spacing. Requires non-negative intensities.
    """
    if sigma_mm <= 0:
        raise ParameterError(f"sigma_mm must be > 0, got {sigma_mm}")
    data = v.data
    if data.min() < 0:
        raise ValidationError("bias correction requires non-negative intensities")
    peak = float(data.max())
    if peak <= 0:
        return v.with_data(data.copy())

    eps = 1e-6 * peak
    log_v = np.log(data.astype(np.float64) + eps)
    sx, sy, sz = v.spacing
    sigma_vox = (sigma_mm / sz, sigma_mm / sy, sigma_mm / sx)  # (z, y, x) order
    smooth = ndimage.gaussian_filter(log_v, sigma=sigma_vox, mode="reflect")
    corrected = np.exp(log_v - smooth + smooth.mean())
    corrected *= data.mean(dtype=np.float64) / corrected.mean()
    return v.with_data(corrected.astype(np.float32))


def zscore_normalize(v: Volume) -> Volume:
    """Shift/scale to zero mean and unit population standard deviation."""
    if v.n_voxels < 2:
        raise ParameterError("z-score normalization needs at least 2 voxels")
    data = v.data.astype(np.float64)
    mu = data.mean()
    sd = data.std()  # population (ddof=0)
    if sd == 0 or not np.isfinite(sd):
        raise DegenerateInputError("zero-variance volume cannot be z-scored")
    return v.with_data(((data - mu) / sd).astype(np.float32))
