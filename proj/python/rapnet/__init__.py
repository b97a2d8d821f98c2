"""RAPNet pansharpening: receptive-field-adaptive convolution network."""

from ._core import (
    IoError,
    Network,
    NumericError,
    ShapeError,
    ValueError,  # noqa: A004 - mirrors the C++ exception name
    conv2d,
    ergas,
    full_res_metrics,
    q2n,
    rapconv,
    sam,
    scc,
    set_num_threads,
    synth_dataset,
    upsample_bilinear,
    wald_degrade,
)

__all__ = [
    "Network",
    "conv2d",
    "rapconv",
    "upsample_bilinear",
    "ergas",
    "sam",
    "scc",
    "q2n",
    "full_res_metrics",
    "wald_degrade",
    "synth_dataset",
    "set_num_threads",
    "ShapeError",
    "ValueError",
    "IoError",
    "NumericError",
]
