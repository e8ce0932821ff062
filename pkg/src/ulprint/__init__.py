"""Latent fingerprint enhancement toolkit.

Pre-enhancement, Gabor-based ridge ground truth, guided-filter blending,
a small dilated-convolution segmenter and paired augmentation.
"""
from .augment import AugmentConfig, augment_pair, pair_rng
from .guidedblend import GuidedFilterParams, enhance_latent, guided_filter
from .imagecore import ImageFormatError, load_gray, load_mask, save_gray, save_mask, white_ratio
from .preenhance import PreenhanceConfig, clahe, nl_means, pre_enhance
from .ridgegabor import GaborConfig, make_groundtruth, orientation_field, ridge_frequency
from .segnet.predict import predict_with_fallback

__version__ = "0.1.0"
