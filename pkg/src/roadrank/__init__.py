"""Road-segment criticality ranking from OD flows and heterogeneous graph walks."""

__version__ = "0.1.0"

from .cascade import CascadeTrace, FailureSimConfig, ground_truth_table, importance_score, simulate_cascade
from .chain import ergodicity_check, joint_transition_matrix, propagation_operator, stationary_distribution
from .encoder import AmilPooling, EncoderConfig, Featurizer, SequenceEncoder, build_corpus_batch, collect_bags
from .metrics import RankingPair, diff, emd, kendall_tau, make_pair, metrics_report, ndcg_at_k
from .network import (
    DatasetBundle,
    DatasetError,
    OdFlow,
    RoadNetwork,
    TripPath,
    generate_random_dataset,
    load_dataset,
    save_dataset,
    validate_bundle,
)
from .ranking import RankingModel, TrainConfig, build_training_lists, kl_list_loss, predict_full_ranking, train
from .tripgraph import (
    AttributeGuidedGraph,
    NormalizedKernels,
    TripGraph,
    build_attribute_graph,
    build_attribute_graphs,
    build_trip_graph,
    derive_type_attributes,
    normalize_kernels,
)
from .walks import AliasSampler, AliasTable, WalkConfig, WalkCorpus, WalkToken, ag_step, build_sampler, run_walks, tg_step
