"""Gyroscope-driven motion deblurring and feature-detection evaluation.

The pipeline: integrate gyro rates into an orientation trajectory,
project it through the camera's rolling-shutter timing into a per-block
blur field, validate the field against image gradients, deblur with a
precomputed sparse Wiener kernel bank, and score feature detections for
repeatability.
"""

from .imu import (
    GyroSample,
    OrientationTrajectory,
    integrate_gyro,
    load_gyro_csv,
    orientation_at,
    save_gyro_csv,
    slerp,
)
from .evaluation import (
    Keypoint,
    circle_iou,
    estimate_homography_ransac,
    interpolate_tracks,
    load_homography,
    load_keypoints_csv,
    localization_error,
    normalize_homography,
    repeatability,
    save_homography,
    save_keypoints_csv,
    toy_detect,
)
from .blurfield import (
    BlurField,
    BlurVector,
    CameraRig,
    blur_vector_from_displacement,
    estimate_blur_field,
    load_camera_json,
    map_point_across_exposure,
    rectify_keypoints,
    row_start_time,
    save_camera_json,
    save_field_csv,
)
from .deconv import (
    BankFormatError,
    DeblurResult,
    InverseKernel,
    KernelBank,
    Psf1D,
    build_bank,
    build_psf_1d,
    deblur_image,
    load_bank,
    rasterize_kernel_2d,
    save_bank,
    wiener_inverse_1d,
)
from .imaging import (
    convolve_sparse,
    frequency_wiener_reference,
    load_image,
    motion_psf_2d,
    psnr,
    save_image,
    synth_blur,
)
from .validation import (
    ValidationConfig,
    directional_gradient_max,
    rotated_sobel,
    validate_field,
)

__version__ = "0.1.0"

__all__ = [
    "GyroSample",
    "OrientationTrajectory",
    "integrate_gyro",
    "orientation_at",
    "slerp",
    "load_gyro_csv",
    "save_gyro_csv",
    "Keypoint",
    "circle_iou",
    "estimate_homography_ransac",
    "interpolate_tracks",
    "load_homography",
    "load_keypoints_csv",
    "save_homography",
    "save_keypoints_csv",
    "localization_error",
    "normalize_homography",
    "repeatability",
    "toy_detect",
    "BlurField",
    "BlurVector",
    "CameraRig",
    "blur_vector_from_displacement",
    "estimate_blur_field",
    "map_point_across_exposure",
    "rectify_keypoints",
    "row_start_time",
    "load_camera_json",
    "save_camera_json",
    "save_field_csv",
    "BankFormatError",
    "DeblurResult",
    "InverseKernel",
    "KernelBank",
    "Psf1D",
    "build_bank",
    "build_psf_1d",
    "deblur_image",
    "load_bank",
    "save_bank",
    "rasterize_kernel_2d",
    "wiener_inverse_1d",
    "load_image",
    "save_image",
    "convolve_sparse",
    "motion_psf_2d",
    "psnr",
    "synth_blur",
    "frequency_wiener_reference",
    "ValidationConfig",
    "directional_gradient_max",
    "rotated_sobel",
    "validate_field",
]
