"""remforge: 3D radio environment map construction from sparse, optimized samples.

The library synthesizes voxelized ground-truth receive-power fields from a
path-loss plus log-normal shadowing channel model, selects measurement
locations by a worst-case-variance greedy design, recovers the sparse
transmitter field with sparse Bayesian learning, and fills in shadow fading
at unsampled voxels with Gaussian-process regression.
"""

from remforge.grid import GridSpec, RemTensor, reshape_vector_to_tensor, voxel_center
from remforge.channel import (
    ChannelParams,
    Observations,
    ShadowModel,
    SourceField,
    build_dictionary,
    matern32,
    measure,
    path_loss,
    sample_shadow_field,
    synthesize_truth,
)
from remforge.sampling import (
    Dictionary,
    MeasurementPlan,
    greedy_select,
    mse_trace,
    pca_reduce,
    random_plan,
    wcev,
)
from remforge.sbl import SBLConfig, SBLState, sbl_recover
from remforge.gpr import GPState, ShadowPrediction, extract_shadow, fit, predict
from remforge.pipeline import RunResult, mae, reconstruct, run_once, sweep

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "RemTensor",
    "voxel_center",
    "reshape_vector_to_tensor",
    "ChannelParams",
    "SourceField",
    "ShadowModel",
    "Observations",
    "path_loss",
    "build_dictionary",
    "matern32",
    "sample_shadow_field",
    "synthesize_truth",
    "measure",
    "Dictionary",
    "MeasurementPlan",
    "pca_reduce",
    "wcev",
    "mse_trace",
    "greedy_select",
    "random_plan",
    "SBLConfig",
    "SBLState",
    "sbl_recover",
    "GPState",
    "ShadowPrediction",
    "extract_shadow",
    "fit",
    "predict",
    "RunResult",
    "reconstruct",
    "mae",
    "run_once",
    "sweep",
    "__version__",
]
