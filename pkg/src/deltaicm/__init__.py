"""Gaussian + delta entropy modelling for region-masked learned image coding.

The package pairs a per-element mixture of a discretized Gaussian and a
delta (one-cell) distribution with a range coder, a fixed 8x8 block DCT
standing in for a learned transform, and a small optimizer that fits the
mixture to one image under a region mask.
"""

from .codec import CodedImage, Comparison, DecodedImage, compare, decode_stream, encode_result
from .coder import Bitstream, LatentTensor, ModelId, decode, encode, ideal_bits, measure
from .errors import (CapacityError, DecodeError, DeltaICMError, DimensionError, EncodeError,
                     FormatError, InvalidParameterError, OptimizationError)
from .optimizer import OptimConfig, OptimResult, baseline_gaussian, optimize
from .prob_models import (DeltaParams, GaussianParams, GmmParams, MixtureParams, PmfTable,
                          build_pmf, delta_likelihood, gaussian_likelihood, gmm_likelihood,
                          likelihood, mixture_likelihood)
from .rate import (loss_rd, loss_region, loss_task, masked_mse, rate_estimate,
                   surrogate_grad, surrogate_likelihood)
from .toy_codec import TransformSpec, analyze, mask_to_latent_mask, quantize, synthesize

__version__ = "0.1.0"
