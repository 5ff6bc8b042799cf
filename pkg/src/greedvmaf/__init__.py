"""Frame-rate-aware full-reference video quality assessment.

Fuses temporal/spatial entropic-difference features with VIF and DLM and
maps them to quality scores through a support vector regressor.
"""

from .bandpass import FilterBankSpec, SubbandSequence, spatial_ms_filter, temporal_wavelet_packet
from .evaluate import (
    DatasetManifest,
    ExperimentReport,
    ManifestRow,
    SplitSpec,
    all_content_splits,
    correlations,
    logistic_fit,
    psnr,
    run_all_splits,
    run_experiment,
    split_by_content,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    extract_feature_vector,
    feature_names_for,
    read_feature_csv,
    write_feature_csv,
)
from .ggd import (
    GGDParams,
    apply_neural_noise,
    fit_ggd_from_moments,
    fit_ggd_kurtosis_match,
    ggd_entropy,
    ggd_kurtosis,
)
from .greed import (
    EntropyMap,
    GreedConfig,
    GreedFeatures,
    extract_greed_features,
    scaled_entropy_map,
    sgreed,
    tgreed_subband,
)
from .svr import Hyperparams, SvrModel, grid_search, load_model, predict, save_model, train_svr
from .video import (
    VideoSequence,
    downscale,
    load_raw_yuv,
    load_y4m,
    temporal_subsample,
    temporal_upsample_duplicate,
    write_y4m,
)
from .vmaf_spatial import VmafSpatialFeatures, dlm, extract_vmaf_spatial, vif_per_scale

__version__ = "0.1.0"
