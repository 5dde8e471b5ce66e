"""Online transfer learning from multiple homogeneous source domains."""

from .data import Dataset, load_dataset, save_dataset, split_target
from .hedge import EnsembleState, hedge_update, init_weights
from .offline import JdaConfig, OfflineArtifacts, offline_stage
from .pa import PAModel, pa_update, train_offline
from .runner import RunConfig, RunReport, run_homotl_oddm, run_trials
from .transform import TargetRunningStats, TransformMatrix, update_matrix

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_dataset", "save_dataset", "split_target",
    "EnsembleState", "hedge_update", "init_weights",
    "JdaConfig", "OfflineArtifacts", "offline_stage",
    "PAModel", "pa_update", "train_offline",
    "RunConfig", "RunReport", "run_homotl_oddm", "run_trials",
    "TargetRunningStats", "TransformMatrix", "update_matrix",
]
