"""Adaptive matched detection in compound-Gaussian noise with inverse-gamma texture.

Submodules
----------
specfun     special functions, RNG streams and samplers
scenario    signal/noise model and dataset synthesis
detectors   NSCM estimate and the nG-AMD, ASD and 1S-GLRT statistics
theory      closed-form false-alarm and detection probabilities
montecarlo  trial engine, threshold calibration, SNR sweeps, CFAR study
"""

__version__ = "0.1.0"

from .specfun import RngStream, TextureParams  # noqa: E402
from .scenario import Scenario, reference_scenario  # noqa: E402
from .detectors import nscm, ngamd_statistic, asd_statistic, glrt1s_statistic  # noqa: E402
from .theory import DetectorDims, pfa, invert_threshold, pd_deterministic, pd_fluctuating  # noqa: E402

__all__ = [
    "RngStream",
    "TextureParams",
    "Scenario",
    "reference_scenario",
    "nscm",
    "ngamd_statistic",
    "asd_statistic",
    "glrt1s_statistic",
    "DetectorDims",
    "pfa",
    "invert_threshold",
    "pd_deterministic",
    "pd_fluctuating",
]
