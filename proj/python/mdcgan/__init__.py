"""Modified DCGAN for paintings.

Thin wrapper over the C++ core: architecture reports, checkpoint-backed
generators, latent arithmetic and batch statistics.
"""

from ._core import (
    LATENT_DIM,
    Generator,
    analyze,
    architecture_report,
    combine,
    f_quantile,
    f_test,
    image_extent,
    parameter_count,
    random_walk,
    snr_db,
    train_synthetic,
    zscore,
)

__all__ = [
    "LATENT_DIM",
    "Generator",
    "analyze",
    "architecture_report",
    "combine",
    "f_quantile",
    "f_test",
    "image_extent",
    "parameter_count",
    "random_walk",
    "snr_db",
    "train_synthetic",
    "zscore",
]
