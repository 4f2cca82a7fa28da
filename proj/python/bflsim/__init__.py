"""Byzantine-robust federated learning simulator."""

from ._bflsim import (
    AggWeights,
    BflError,
    ConfigError,
    DefenseConfigError,
    DimensionError,
    ExperimentConfig,
    InsufficientPopulationError,
    NumericError,
    StageError,
    aggregate_baseline,
    clip_and_signal,
    coordinate_extremes,
    coordinate_median,
    coordinate_trimmed_mean,
    craft_attack,
    defend,
    derive_fused,
    fedavg,
    filter_benign,
    krum_select,
    mean,
    run_experiment,
    run_sweep,
    select_best,
    threshold_free_betas,
    trust_scores,
    update_weights,
    winsorize,
)


def final_test_error(history):
    """Test error of the last evaluated round, or None."""
    for record in reversed(history):
        if record["test_error"] is not None:
            return record["test_error"]
    return None


__all__ = [name for name in dir() if not name.startswith("_")]
