"""Priority-aware mask-and-replace categorical diffusion over token sequences.

The package splits into: corpus handling and synthetic generators
(:mod:`priodiff.corpus`), codebook quantization with an orthogonality penalty
(:mod:`priodiff.quantizer`), per-token priority scores from corpus entropy or
a learned ordering agent (:mod:`priodiff.priority`), corruption schedules with
priority modulation (:mod:`priodiff.schedule`), the diffusion kernel itself
(:mod:`priodiff.diffusion`), desk-scale denoisers and generation
(:mod:`priodiff.denoiser`), and brute-force verification suites
(:mod:`priodiff.verify`).
"""

__version__ = "0.1.0"

from .corpus import (
    ContinuousSequence,
    CorpusStats,
    TokenSequence,
    count_frequencies,
    load_corpus,
    save_corpus,
    synth_cluster_corpus,
    synth_grammar_corpus,
)
from .denoiser import (
    Denoiser,
    OracleDenoiser,
    TabularDenoiser,
    TabularTrainConfig,
    UniformDenoiser,
    generate,
    generate_with_trace,
    stabilization_steps,
    train_tabular,
)
from .diffusion import (
    VlbReport,
    build_transition_matrix,
    categorical_kl,
    forward_marginal,
    posterior,
    reverse_step,
    sample_forward,
    sample_trajectory,
    vlb,
)
from .priority import (
    EpisodeTrace,
    OrderingAgentConfig,
    OrderingPolicy,
    PriorityScores,
    SeparableDecoder,
    dynamic_scores,
    greedy_order_oracle,
    rollout,
    static_scores,
    token_entropy,
    train_ordering_agent,
    uniform_scores,
)
from .quantizer import (
    Codebook,
    ToyVqConfig,
    ToyVqModel,
    UsageReport,
    VqLossReport,
    l2_normalize,
    orth_reg,
    quantize,
    train_toy_vq,
    usage_report,
    vq_losses,
)
from .schedule import (
    ScheduleTable,
    apply_priority,
    linear_base_schedule,
    per_step_from_cumulative,
)
from .verify import CheckResult, run_desk_suite, run_paper_smoke

__all__ = [
    "__version__",
    "ContinuousSequence", "CorpusStats", "TokenSequence",
    "count_frequencies", "load_corpus", "save_corpus",
    "synth_cluster_corpus", "synth_grammar_corpus",
    "Denoiser", "OracleDenoiser", "TabularDenoiser", "TabularTrainConfig",
    "UniformDenoiser", "generate", "generate_with_trace",
    "stabilization_steps", "train_tabular",
    "VlbReport", "build_transition_matrix", "categorical_kl",
    "forward_marginal", "posterior", "reverse_step", "sample_forward",
    "sample_trajectory", "vlb",
    "EpisodeTrace", "OrderingAgentConfig", "OrderingPolicy", "PriorityScores",
    "SeparableDecoder", "dynamic_scores", "greedy_order_oracle", "rollout",
    "static_scores", "token_entropy", "train_ordering_agent", "uniform_scores",
    "Codebook", "ToyVqConfig", "ToyVqModel", "UsageReport", "VqLossReport",
    "l2_normalize", "orth_reg", "quantize", "train_toy_vq", "usage_report",
    "vq_losses",
    "ScheduleTable", "apply_priority", "linear_base_schedule",
    "per_step_from_cumulative",
    "CheckResult", "run_desk_suite", "run_paper_smoke",
]
