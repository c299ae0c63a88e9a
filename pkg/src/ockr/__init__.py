"""One-class multiple-kernel fusion regression toolkit.

Train sparse client-specific novelty detectors from bona fide samples only,
score multi-view feature packs, and evaluate with ISO-style PAD metrics.
"""

__version__ = "0.1.0"

from .errors import NumericalError, OckrError, PackFormatError, PreconditionError, ProtocolError
from .featurestore import (
    FeaturePack,
    FeatureRow,
    RowMeta,
    ViewId,
    VideoFrames,
    iter_videos,
    pack_digest,
    read_pack,
    select,
    write_pack,
)
from .kernels import (
    FusedKernelConfig,
    KernelMatrix,
    KernelParams,
    build_fused_gram,
    fit_bandwidth,
    fit_view_bandwidths,
    fused_cross_kernel,
    fused_cross_matrix,
    gaussian_kernel,
)
from .metrics import EvalReport, LabeledScore, apcer_bpcer, auc, eer, evaluate, far_frr, hter
from .models import (
    GLOBAL_CLIENT_ID,
    Calibration,
    ClientModel,
    ModelBundle,
    load_bundle,
    save_bundle,
    train_client,
)
from .regression import (
    DenseSolution,
    FisherDiagnostics,
    SparseSolution,
    fisher_diagnostics,
    lasso_objective,
    solve_dense,
    solve_lars_path,
)
from .scoring import (
    ScoreRecord,
    decide,
    fit_calibration,
    frame_scores,
    probabilistic_scores,
    quantile_threshold,
    score_frame,
    score_video,
)
from .synth import PaisSpec, SynthSpec, generate, spec_from_dict

__all__ = [name for name in dir() if not name.startswith("_")]
