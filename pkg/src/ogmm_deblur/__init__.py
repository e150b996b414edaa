"""Deblurring of blurred/noisy image pairs with flow-guided per-patch Gaussian mixtures."""

from .detail_layer import DetailParams, add_detail_layer
from .image_core import EnhanceParams, enhance, load_image, save_image
from .metrics import evaluate, mse, psnr, ssim
from .ogmm import OgmmConfig, run_em
from .optical_flow import FlowParams, compute_dense_flow, flow_error, read_flo, write_flo
from .patching import PatchSpec
from .pipeline import PipelineConfig, RunReport, deblur

__version__ = "0.1.0"

__all__ = [
    "DetailParams",
    "EnhanceParams",
    "FlowParams",
    "OgmmConfig",
    "PatchSpec",
    "PipelineConfig",
    "RunReport",
    "add_detail_layer",
    "compute_dense_flow",
    "deblur",
    "enhance",
    "evaluate",
    "flow_error",
    "load_image",
    "mse",
    "psnr",
    "read_flo",
    "run_em",
    "save_image",
    "ssim",
    "write_flo",
]
