"""Time-homogeneous killed-diffusion generative modelling.

Forward noising is an h-transformed base diffusion started in the data;
backward generation runs the learned (or exact discrete) time reversal until
it first hits an estimated enlargement of the data support.  Conditioning,
anomaly scoring, and classification all reuse the same trained model.
"""
from .backend import engine_name
from .dataio import PointCloud, load_dataset, save_dataset
from .exact import ExactSample, build_exact_backward, hit_counts, sample_exact
from .errors import (
    CheckpointError,
    CoincidentPointsError,
    DriftOverflowError,
    EmptyDataError,
    GenerationFailedError,
    HitgenError,
    InitializationError,
    PreconditionError,
    QuadratureError,
)
from .generate import (
    GenerationBatch,
    GenerationResult,
    generate,
    generate_many,
    init_unconditional,
)
from .htransform import (
    Bridge,
    ConstantH,
    DiscreteBackward,
    HSpec,
    LearnedBackward,
    SphereHit,
    drift,
    h_value,
    posterior_endpoint_law,
)
from .io import load_checkpoint, save_checkpoint
from .kernels import (
    GreenKernel,
    ProcessSpec,
    bessel_log_I,
    bessel_log_K,
    bessel_ratio_I,
    brownian_kernel,
    grad_log_green,
    log_green,
    ou_kernel,
)
from .score import ScoreParams, TrainConfig, dsm_loss, score_eval, train
from .sde import KillRule, Path, last_exit_index, simulate, simulate_batch
from .support import SupportEstimate, build as build_support
from .tasks import anomaly_score, calibrate_threshold, class_posterior, classify

__version__ = "0.1.0"
