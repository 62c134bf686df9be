"""Node clustering for heterophilous graphs via a learned asymmetric similarity.

The package trains twin feature maps whose inner products define an
asymmetric similarity graph, optimizes a weighted kernel-SVD objective with
node/edge reconstruction, and clusters nodes from the resulting embeddings.
A dense dual solver (SVD biclustering) serves as the exact oracle for the
trained model.
"""

from .graphio import AttributedGraph, PositionalEncoding, edge_homophily, \
    load_graph, random_walk_pe, symmetrize
from .model import EmbeddingPair, HenclerParams, ModelDims, SimilarityFactor, \
    decode_edge, decode_nodes, init_params, load_checkpoint, map_features, \
    project, save_checkpoint, sigma_values, similarity_matrix
from .loss import DegreePair, EdgeSample, compute_degrees, edge_rec_loss, \
    node_rec_loss, sample_edges, total_loss, wksvd_loss
from .dual import DualSolution, bicluster, center_dual, center_primal, \
    eigen_form_check, fenchel_young_check, stationarity_residual
from .evaluate import ClusterResult, assign_clusters, nmi, pairwise_f1
from .trainer import AdamState, RunRecord, TrainConfig, TrainingDiverged, \
    optimizer_step, train
from .linalg import frobenius_relerr, kmeans, thin_svd

__version__ = "0.1.0"
