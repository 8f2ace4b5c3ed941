"""Camera-radar-temporal BEV fusion kernels (C++ core)."""

from ._crtbev import (
    GridSpec,
    __version__,
    azimuth_of_cell,
    azimuth_of_column,
    bev_footprint,
    cell_box_overlap_ratio,
    detect,
    generate_summary,
    make_targets,
    run_compare,
    warp,
)

__all__ = [
    "GridSpec",
    "__version__",
    "azimuth_of_cell",
    "azimuth_of_column",
    "bev_footprint",
    "cell_box_overlap_ratio",
    "detect",
    "generate_summary",
    "make_targets",
    "run_compare",
    "warp",
]
