"""Clustering-based MIPS indexing with optimistic shard routing."""

from .core import (
    TopKResult,
    VectorSet,
    inner_product,
    l2_normalize,
    rank_descending,
    top_k,
    top_k_arrays,
)
from .datasets import (
    DataError,
    DatasetManifest,
    load_dataset,
    read_fvecs,
    read_raw_f32,
    write_fvecs,
)
from .evaluate import (
    GroundTruth,
    PredictionErrorTable,
    RecallCurve,
    default_ell_grid,
    emit_report,
    ground_truth,
    prediction_error,
    recall,
    recall_curve,
    shard_max_scores,
)
from .partition import (
    Partitioning,
    default_shard_count,
    extract_shard,
    fit_kmeans,
    load_partitioning,
    save_partitioning,
)
from .routers import (
    RouterModel,
    build_mean,
    build_normalized_mean,
    build_optimist,
    build_scann,
    build_subpartition,
    load_router,
    route,
    save_router,
    score,
    score_batch,
    score_optimist,
    score_optimist_gaussian,
)
from .sketch import (
    AssumptionDiagnostics,
    MaskedSketch,
    ShardMoments,
    SymmetricEigen,
    approximation_error,
    assumption_diagnostics,
    compute_moments,
    low_rank_sketch,
    masked_sketch,
    sketch_matrix,
    sketch_quadratic_form,
    symmetric_eigen,
)

__version__ = "0.1.0"
