"""Benchmark lab: baselines, simulation generators, metrics, denoising."""

from peelfdr.evalab.baselines import bh, storey_bh, fixed_order_accumulation
from peelfdr.evalab.generate import (
    ExperimentConfig,
    gen_dataset,
    gen_correlated_z,
)
from peelfdr.evalab.experiment import (
    fdp_power,
    run_experiment,
    threshold_relation_check,
)
from peelfdr.evalab.wavelet import (
    WaveletDataset,
    haar_dwt2,
    haar_idwt2,
    wavelet_pvalues,
    threshold_baselines,
    snr,
    compression_ratio,
    randomized_pvalue,
    denoise_image,
)

__all__ = [
    "bh",
    "storey_bh",
    "fixed_order_accumulation",
    "ExperimentConfig",
    "gen_dataset",
    "gen_correlated_z",
    "fdp_power",
    "run_experiment",
    "threshold_relation_check",
    "WaveletDataset",
    "haar_dwt2",
    "haar_idwt2",
    "wavelet_pvalues",
    "threshold_baselines",
    "snr",
    "compression_ratio",
    "randomized_pvalue",
    "denoise_image",
]
