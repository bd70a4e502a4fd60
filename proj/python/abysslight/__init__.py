"""Removal of co-moving lighting and water effects from deep-sea image
sequences.

Planes are float64 numpy arrays of shape (height, width); frames add a
trailing channel axis when RGB. All radiance is linear, normalized so
sensor full scale is 1.0.
"""

from ._abysslight import (
    __version__,
    composite,
    consistency_error,
    downsample,
    enhance_sequence,
    estimate_scatter,
    integrate_backscatter,
    load_frame,
    load_scatter_field,
    max_threads,
    p_half,
    render_frame,
    render_sequence,
    required_window,
    save_frame,
    save_scatter_field,
    scale_invariant_rmse,
    set_max_threads,
    spatial_median,
    temporal_median,
    upsample,
)

__all__ = [
    "__version__",
    "composite",
    "consistency_error",
    "downsample",
    "enhance_sequence",
    "estimate_scatter",
    "integrate_backscatter",
    "load_frame",
    "load_scatter_field",
    "max_threads",
    "p_half",
    "render_frame",
    "render_sequence",
    "required_window",
    "save_frame",
    "save_scatter_field",
    "scale_invariant_rmse",
    "set_max_threads",
    "spatial_median",
    "temporal_median",
    "upsample",
]
