"""Phone category learning simulations over MFCC frame streams.

Two learner families share one frame-based data model: error-correction
learning (Widrow-Hoff and a temporal-difference variant) and memory-based
learning (exemplar storage with kNN voting).  The package also provides
the MFCC front end, Gaussian and session training regimes, evaluation
statistics, and Ward clustering with multiscale bootstrap support.
"""

from .corpus import (ARPABET_PHONES, FrameDataset, LabeledFrame,
                     PhoneInventory, PhoneSegment, default_inventory,
                     label_distribution, load_alignments, load_feature_table,
                     round_half_up, sample_vocabulary, split_train_test,
                     write_feature_table)
from .cluster import (Dendrogram, PhoneProfileMatrix, bootstrap_pvalues,
                      ecl_profiles, export_dendrogram, load_dendrogram_json,
                      mbl_profiles, ward_cluster, ward_linkage)
from .ecl import (EclConfig, ErrorCorrectionClassifier, TrialEvent,
                  WeightMatrix, activations, diversity, train_stream,
                  td_update, wh_update)
from .ecl import predict as ecl_predict
from .errors import (DataError, InventoryError, NumericOverflowError,
                     OrderingError, ParseError, PhoneLearnError,
                     UndefinedResultError)
from .evaluate import (PredictionRecord, SuccessTable, confusion_matrix,
                       export_tidy, kendall_tau_b, mad, predict_records,
                       read_tidy, session_summary, success_rates)
from .mbl import (ExemplarKnnClassifier, ExemplarStore, MblConfig,
                  VoteResult, knn, store)
from .mbl import predict as mbl_predict
from .mfcc import (AudioSegment, MfccConfig, add_deltas, extract_labeled_frames,
                   extract_mfcc, frame_count)
from .regimes import (GaussianConfig, Session, SessionConfig, build_session,
                      gaussian_generate, gaussian_scaling_series)
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "ARPABET_PHONES", "AudioSegment", "DataError", "Dendrogram", "EclConfig",
    "ErrorCorrectionClassifier", "ExemplarKnnClassifier", "ExemplarStore",
    "FrameDataset", "GaussianConfig", "InventoryError", "LabeledFrame",
    "MblConfig", "MfccConfig", "NumericOverflowError", "OrderingError",
    "ParseError", "PhoneInventory", "PhoneLearnError", "PhoneProfileMatrix",
    "PhoneSegment", "PredictionRecord", "Session", "SessionConfig",
    "SuccessTable", "TrialEvent", "UndefinedResultError", "VoteResult",
    "WeightMatrix", "activations", "add_deltas", "bootstrap_pvalues",
    "build_session", "confusion_matrix", "default_inventory", "derive_seed",
    "diversity", "ecl_predict", "ecl_profiles", "export_dendrogram",
    "export_tidy", "extract_labeled_frames", "extract_mfcc", "frame_count",
    "gaussian_generate", "gaussian_scaling_series", "kendall_tau_b", "knn",
    "label_distribution", "load_alignments", "load_dendrogram_json",
    "load_feature_table", "mad", "mbl_predict", "mbl_profiles",
    "predict_records", "read_tidy", "round_half_up", "sample_vocabulary",
    "session_summary",
    "split_train_test", "store", "success_rates", "td_update", "train_stream",
    "ward_cluster", "ward_linkage", "wh_update", "write_feature_table",
]
