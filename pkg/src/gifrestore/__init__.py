"""Restore continuous-tone, full-frame-rate video from GIF animations."""

from .dequant import DequantConfig, dequantize, dequantize_uint8
from .ditherdetect import LinearClassifier, extract_features
from .errors import (ConfigError, GifError, GifFormatError, GifTruncatedError, ImageFormatError,
                     LzwError, PaletteMismatchError)
from .flow import FlowConfig, estimate_flow, interpolate_sequence
from .gif import GifDocument, IndexedFrame, composite_frames, decode_gif, encode_gif
from .metrics import psnr, quality_report, ssim
from .pipeline import PipelineConfig, eval_sweep, gif_to_video, synth_pairs
from .quant import dither_floyd_steinberg, median_cut_palette, quantize

__version__ = "0.1.0"
