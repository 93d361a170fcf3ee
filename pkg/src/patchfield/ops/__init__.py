from .kernels import backend_name
from .transforms import (
    AffineParams,
    CropSpec,
    crop_resize,
    crop_resize_vjp,
    dct_lowpass,
    dct_lowpass_vjp,
    gaussian_blur,
    warp_affine,
    warp_affine_vjp,
)

__all__ = [
    "AffineParams",
    "CropSpec",
    "backend_name",
    "crop_resize",
    "crop_resize_vjp",
    "dct_lowpass",
    "dct_lowpass_vjp",
    "gaussian_blur",
    "warp_affine",
    "warp_affine_vjp",
]
