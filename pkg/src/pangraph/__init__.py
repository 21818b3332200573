"""Path-integral graph convolution and pooling on plain numpy.

The package is organized as: graph containers (graph), the maximal-entropy
transition matrix (met), a reverse-mode tape (autograd), convolution/pooling
layers (layers), node-importance measures (centrality), a statistical-
mechanics point-pattern benchmark (pointpattern), dataset/checkpoint formats
(data_io), the training harness (trainer), and a CLI (cli).
"""

from .graph import (BatchedGraph, CsrGraph, CsrMatrix, GraphError,
                    batch_graphs, csr_from_edges, degrees, graph_from_edges,
                    induced_subgraph, spmm, spmm_transpose)
from .met import (MetMatrix, NormMode, SeriesWeights, adjacency_powers,
                  met_matrix, partition_vector, path_count,
                  weighted_power_series)
from .autograd import AutogradError, Tape, Value, finite_diff_check
from .layers import (LayerError, PanConvLayer, PanPoolLayer, PoolResult,
                     PoolVariant, cross_entropy_loss, global_readout,
                     met_on_tape, panconv_forward, pool_apply, pool_score,
                     pool_score_on_tape, topk_select)
from .centrality import (CentralityError, Measure, degree_centrality,
                         eigenvector_centrality, jacobi_eigh,
                         renormalized_power_diag, subgraph_centrality_exact,
                         subgraph_centrality_series, top_fraction)
from .pointpattern import (ClassSpec, FeatureMode, PatternKind, PointPattern,
                           PointPatternConfig, PointPatternError,
                           ThresholdGraphConfig, derive_seed, generate_dataset,
                           hd_pattern, metropolis_chain, min_periodic_distance,
                           pattern_to_graph, poisson_pattern, radius_for,
                           rsa_pattern, sample_node_count, simulate,
                           standard_classes, threshold_radius)
from .data_io import (DataError, Dataset, SplitSpec, load_dataset,
                      parse_tu_dataset, save_dataset, split_dataset,
                      split_manifest, standardize_features)
from .trainer import (AdamState, BlockConfig, ConfigError, ModelConfig,
                      OptimConfig, PanModel, RunReport, TaskKind,
                      TrainerError, adam_step, apply_override, build_model,
                      dataset_loss, evaluate, gradient_check,
                      load_checkpoint, load_config_file,
                      load_experiment_dataset, metrics_csv,
                      model_config_from_dict, model_config_to_dict,
                      optim_config_from_dict, run_experiment,
                      save_checkpoint, train_epoch)

__version__ = "0.1.0"
