"""Epistemic-state intensity modeling from facial feature time series.

The pipeline: landmark geometry -> 12 feature channels -> MIC-weighted
windowed temporal features -> region classifier gating per-region
epsilon-SVR regressors -> continuous rating predictions scored by
Pearson correlation under session-level cross-validation.
"""

__version__ = "0.1.0"

from .dataset import (
    CHANNELS,
    DEFAULT_WINDOWS,
    REGION_ORDER,
    AnnotationTrace,
    Coupling,
    FeatureSeries,
    RegionLabel,
    RegionLabels,
    Segment,
    Session,
    State,
    SynthConfig,
    load_session,
    parse_region,
    parse_state,
    synth_session,
    write_session,
)
from .errors import InputError, NumericError, PipelineError
from .regions import (
    ForestParams,
    RegionClassifier,
    classify_region,
    label_regions,
    region_roc,
    train_region_classifier,
)
from .regress import (
    Regressor,
    StateModel,
    StateModelConfig,
    SvrParams,
    UngatedModel,
    load_model,
    predict_state,
    train_state_model,
    train_svr,
    train_ungated_model,
)
from .benchmark import (
    BenchmarkConfig,
    ablation_trial,
    benchmark_model_config,
    benchmark_session,
    benchmark_sessions,
    classifier_trial,
    sweep_session,
    sweep_sessions,
    sweep_trial,
)
from .evaluation import (
    DEFAULT_SWEEP,
    EvalReport,
    ablate_regions,
    coerr,
    fold_assignment,
    kfold_cv,
    window_sweep,
)
from .stats import MicMatrix, MicParams, mic, mic_matrix, pearson
from .temporal import (
    DesignMatrix,
    WindowConfig,
    build_design_matrix,
    event_velocity,
    events,
    velocity,
    weight_features,
)

__all__ = [name for name in dir() if not name.startswith("_")]
