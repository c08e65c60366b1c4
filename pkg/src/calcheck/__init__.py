"""calcheck: accept/reject calibration checks for probabilistic forecasters.

A four-slot pipeline, each slot independently swappable:

* model & data (:mod:`calcheck.dist`) - what the forecaster emits;
* metric (:mod:`calcheck.metric`) - coverage counts, PIT samples,
  variance bins, half-plane probes;
* hypothesis (:class:`calcheck.hyptest.HypothesisSpec`) - two-sided,
  one-sided over-confidence-only, with an optional tolerance margin;
* testing (:mod:`calcheck.hyptest`, :mod:`calcheck.seqtest`) - exact
  Binomial and KS tests offline, anytime-valid e-value monitors online.

Every recipe ends in a single accept/reject decision.
"""

__version__ = "0.1.0"

from .dist import (
    GaussianPrediction,
    MvGaussianPrediction,
    ParametricPrediction,
    ParticleCloudPrediction,
    PredictionRecord,
    PredictionSetProvider,
    centered_interval,
    ellipsoid_contains,
    exponential_prediction,
    gamma_prediction,
    mahalanobis_sq,
    moment_match_gaussian,
    project_particles,
    student_t_prediction,
    weighted_quantile,
)
from .errors import (
    CalcheckError,
    ConfigError,
    DataError,
    InvalidDistributionError,
    UnsupportedMetricError,
)
from .hyptest import (
    ONE_SIDED,
    TWO_SIDED,
    HypothesisSpec,
    TestReport,
    binom_lower_quantile,
    binom_p_value,
    binom_test,
    bonferroni,
    coverage_binomial_report,
    holm,
    ks_critical,
    ks_p_value,
    ks_statistic,
    ks_test,
)
from .metric import (
    CoverageCurve,
    HalfPlaneProbe,
    LevelGrid,
    PitSample,
    VarianceBins,
    coverage_counts,
    ecdf_eval,
    fold,
    halfplane_coverage,
    halfplane_delta,
    pit,
    probe_coverage_counts,
    sample_probes,
    variance_bin,
)
from .seqtest import (
    EValueConfig,
    MartingaleState,
    average_evalues,
    lr_evalue,
    monitor_step_gaussian,
    monitor_step_halfplane,
)
from .sim import (
    DriftSweepReport,
    RobotSimConfig,
    WeatherSimConfig,
    drift_sweep,
    run_robot_sim,
    run_weather_oracle,
    run_weather_sim,
)
