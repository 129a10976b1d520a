"""Human-in-the-loop thematic analysis of text corpora with chat-completion LLMs.

The package covers the initial-coding and theme-searching phases of thematic
analysis plus deductive classification against the discovered themes, with
expert feedback loops, full prompt/response auditing, resumable runs, and
recall@k evaluation.
"""

from .batching import (
    Batch,
    HeuristicCounter,
    TokenBudget,
    TokenCounter,
    count_tokens,
    pack_batches,
    pack_items,
    truncate_to_fit,
)
from .config import RunConfig, parse_config_text
from .errors import (
    ApprovalRequiredError,
    BackendError,
    ConfigError,
    ContextOverflowError,
    DataError,
    DigestMismatchError,
    RateLimitError,
    StageValidationError,
    StoreError,
    StoreLockedError,
    StructuredOutputError,
    ThemekitError,
    TransportError,
)
from .evaluation import (
    MappingMatrix,
    QualityTally,
    RecallReport,
    ThemeRecall,
    flows_to_csv,
    recall_at_k,
    render_recall_text,
    render_tally_text,
    tally_quality,
    theme_mapping,
)
from .gateway import (
    CompletionRequest,
    CompletionResponse,
    Gateway,
    HttpBackend,
    MemoryAuditSink,
    ScriptedBackend,
    StructuredCompletion,
)
from .mock import KeywordScenario
from .model import (
    AnalysisContext,
    DataPoint,
    Dataset,
    GenerationParams,
    InitialCode,
    PotentialTheme,
    QualityAnnotation,
    Theme,
    ThemeAssignment,
    ThemeSet,
    Verdict,
    dump_dataset,
    load_dataset,
    normalize_label,
    parse_dataset,
    validate_theme_set,
)
from .pipeline import Feedback, PipelineConfig, Runner, apply_feedback, select_carry_labels
from .prompts import (
    GeneralResources,
    PromptTemplate,
    TemplateSet,
    build_classification_prompt,
    build_coding_prompt,
    build_collation_prompt,
    build_merge_prompt,
    parse_batch_items,
)
from .store import RunRecord, RunStore, StageState, list_runs, open_or_create
from .synth import DEFAULT_THEME_KEYWORDS, generate_corpus, keyword_map

__version__ = "0.1.0"
