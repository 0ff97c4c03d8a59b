"""Python bindings for the wavecomm community-detection pipeline."""

from ._core import (
    Error,
    __version__,
    affinity,
    cmd_cluster,
    cmd_decompose,
    cmd_detect,
    cmd_graph,
    cmd_report,
    cmd_spectrum,
    default_max_k,
    detect_communities,
    distances,
    eigendecompose,
    estimate_num_clusters,
    filters,
    infer_spectrum,
    laplacian,
    laplacian_score,
    load_dataset,
    select_features,
    spectral_cluster,
    synth_dataset,
    wavedec2,
    waverec2,
)

__all__ = [name for name in dir() if not name.startswith("_")]
