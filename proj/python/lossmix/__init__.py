"""Loss mixup training laboratory.

Mixing-function algebra, reparameterized gradient estimation and the
synthetic spectral-denoising training regimes, backed by the C++ core.
"""

from lossmix._core import (
    __version__,
    ablate,
    beta_cdf,
    beta_inverse_cdf,
    equivalence_report,
    fft,
    loss_eval,
    make_dataset_summary,
    phi_curve,
    phi_eval,
    sample_lambda,
    stft_log_power,
    train,
)

__all__ = [
    "__version__",
    "ablate",
    "beta_cdf",
    "beta_inverse_cdf",
    "equivalence_report",
    "fft",
    "loss_eval",
    "make_dataset_summary",
    "phi_curve",
    "phi_eval",
    "sample_lambda",
    "stft_log_power",
    "train",
]
