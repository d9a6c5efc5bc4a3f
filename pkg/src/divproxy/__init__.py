"""Diversity of repeated LLM responses as a proxy for failure probability.

Quantifies the disagreement among m sampled responses to one prompt (entropy,
Gini impurity, mean centroid distance), selects prompts by minimum diversity,
builds calibration curves of failure probability against each measure, and
trains a small MLP to predict failures from the measures.
"""

from .answers import (
    GroundTruth,
    TaskType,
    generate_ll_task,
    grade,
    multiple_choice,
    normalize,
    numeric_task,
    text_concat_task,
)
from .embedding import (
    DeterministicEmbedder,
    HttpEmbedder,
    centroid,
    embed_batch,
    mean_centroid_distance,
)
from .errors import (
    CacheMissError,
    DataError,
    DivproxyError,
    ProtocolError,
    ProviderError,
    TrainingDivergenceError,
    TransportError,
    UsageError,
)
from .measures import (
    NO_ANSWER,
    Answer,
    DiversityReport,
    SampleBatch,
    answer_of,
    diversity_report,
    element_distribution,
    entropy,
    gini,
    majority_vote,
)
from .prompts import PromptSpec, build_cot_prompts, build_fewshot_prompts, render_prompt
from .providers import (
    CachingProvider,
    HttpChatProvider,
    Question,
    ResponseCache,
    RetryPolicy,
    SamplingConfig,
    SimulatorConfig,
    SimulatorProvider,
    sample,
    simulate_response,
)
from .selection import SelectionResult, SweepReport, select_prompt, selection_sweep

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Answer",
    "CacheMissError",
    "CachingProvider",
    "DataError",
    "DeterministicEmbedder",
    "DiversityReport",
    "DivproxyError",
    "GroundTruth",
    "HttpChatProvider",
    "HttpEmbedder",
    "NO_ANSWER",
    "PromptSpec",
    "ProtocolError",
    "ProviderError",
    "Question",
    "ResponseCache",
    "RetryPolicy",
    "SampleBatch",
    "SamplingConfig",
    "SelectionResult",
    "SimulatorConfig",
    "SimulatorProvider",
    "SweepReport",
    "TaskType",
    "TrainingDivergenceError",
    "TransportError",
    "UsageError",
    "answer_of",
    "build_cot_prompts",
    "build_fewshot_prompts",
    "centroid",
    "diversity_report",
    "element_distribution",
    "embed_batch",
    "entropy",
    "generate_ll_task",
    "gini",
    "grade",
    "majority_vote",
    "mean_centroid_distance",
    "multiple_choice",
    "normalize",
    "numeric_task",
    "render_prompt",
    "sample",
    "select_prompt",
    "selection_sweep",
    "simulate_response",
    "text_concat_task",
]
