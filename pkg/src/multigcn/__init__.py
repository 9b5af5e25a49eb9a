"""Multi-view graph learning: spectral fusion, manifold-ranking edge
augmentation, and semi-supervised node classification with a two-layer GCN."""

from .data import Dataset, DatasetError, SyntheticSpec, build_similarity_view, generate_synthetic, load_dataset, make_split, save_dataset
from .fusion import (
    EigensolverError,
    FusionConfig,
    ModifiedLaplacian,
    SpectralEmbedding,
    load_modified_laplacian,
    merge_views,
    multi_view_distance_sq,
    projection_distance_sq,
    save_modified_laplacian,
    spectral_embedding,
)
from .gcn import (
    GcnModel,
    LabeledSplit,
    TrainConfig,
    evaluate,
    forward,
    initial_model,
    load_model,
    loss_and_grads,
    save_model,
    train,
    write_history_csv,
)
from .graph import (
    GraphFormatError,
    MultiViewGraph,
    SparseSymGraph,
    degree_vector,
    load_edge_tsv,
    normalized_laplacian,
    renormalized_propagation,
    save_edge_tsv,
    union_views,
)
from .ranking import (
    MergedGraph,
    RankingConditionError,
    RankingConfig,
    augment_graph,
    export_merged_graph,
    manifold_rank,
    select_centroids,
    verify_augmentation,
)

__version__ = "0.1.0"
