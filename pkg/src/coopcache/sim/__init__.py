"""Trace ingestion, replay of caching strategies, and experiment runs."""

from coopcache.sim.trace import (
    EncounterTrace,
    IntervalizedTrace,
    generate_bernoulli_trace,
    intervalize,
    read_trace_csv,
    write_trace_csv,
)
from coopcache.sim.replay import DIRECT, INDIRECT, copcash, replay, target_set
from coopcache.sim.experiment import (
    CostReport,
    ExperimentConfig,
    estimate_layered,
    estimate_probabilities,
    expectation_deviation,
    run_experiment,
    select_groups,
)
