"""Lifetime versus classification-accuracy analysis for CSMA sensor networks."""

from wsn_tradeoff.topology import (
    ActivityState,
    CapacityError,
    Graph,
    InvalidLayoutError,
    SensorLayout,
    build_nn_graph,
    enumerate_states,
    is_independent,
    read_layout_csv,
)
from wsn_tradeoff.gmrf import (
    ConstantDecay,
    ExponentialDecay,
    IIDDecay,
    MeasurementModel,
    ModelError,
    UnsupportedStructureError,
    build_model,
    mahalanobis_sq,
    mahalanobis_sq_closed_full,
)
from wsn_tradeoff.csma import (
    BackoffConfig,
    CsmaAnalysis,
    EnergyBudget,
    analyze,
    chain3_closed_forms,
    expected_active,
    indep_closed_forms,
    lifetimes,
    mean_training_samples,
    stationary_distribution,
    throughput,
    training_samples,
)
from wsn_tradeoff.accuracy import (
    AccuracyBreakdown,
    bayes_accuracy,
    norm_cdf,
    raudys_accuracy,
    state_weighted_accuracy,
)

__version__ = "0.1.0"
