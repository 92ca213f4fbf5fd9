"""Active Bayesian causal inference over nonlinear additive Gaussian-noise SCMs."""

from .design import DesignConfig, DesignOutcome, design_experiment, optimize_value
from .dibs import (
    DibsConfig,
    GraphPosterior,
    edge_probs,
    init_particles,
    resample_particles,
    sample_posterior,
    svgd_fit,
    weighted_expectation,
)
from .gp import GammaPrior, GpHyperParams, GpPriorConfig, GpState, fit_map_hyperparams
from .graphs import CycleError, Dag, GraphGenConfig, sample_graph, shd, topological_order
from .harness import (
    RunConfig,
    fixed_graph_preset,
    load_config,
    preset,
    run,
    save_config,
    sweep,
)
from .likelihood import MechanismCache
from .metrics import EvalFixture, MetricConfig, auprc, avg_ikld, build_fixture, eshd, query_kld
from .roots import RootState, expected_log_variance, log_marginal_likelihood, posterior_update
from .scm import (
    Batch,
    Dataset,
    GroundTruthScm,
    InterventionSpec,
    ScmPriorConfig,
    sample_batch,
    sample_ground_truth,
)
from .utilities import (
    CD_CML_BUDGET,
    CR_BUDGET,
    FrozenSamples,
    McBudget,
    QuerySpec,
    UtilityEvaluator,
    UtilityValue,
    freeze_samples,
)

__version__ = "0.1.0"
