"""Duplicate-report detection from screenshots and textual descriptions.

The pipeline extracts four features per report (image structure, image
color, TF-IDF, averaged word embeddings), fuses their cosine similarities
into screenshot/textual/total scores, and ranks duplicate candidates with a
hierarchical two-class algorithm. The package also ships the evaluation
stack (recall@k, MAP, MRR, Mann-Whitney U, Cliff's delta, leave-one-out
threshold tuning) and a seeded synthetic-corpus generator used as the
end-to-end oracle.
"""

from .corpus import (
    Assessment,
    Corpus,
    CorpusStats,
    GroundTruth,
    Project,
    Report,
    corpus_stats,
    ground_truth,
    ground_truth_from_labels,
    load_corpus,
)
from .errors import (
    ConfigurationError,
    CorpusFormatError,
    EvaluationError,
    GeneratorSpecError,
    ImageDecodeError,
    ResourceFormatError,
    SetuError,
    StoreError,
    StoreVersionError,
    ValidationError,
)
from .evaluation import (
    MetricsReport,
    PreparedProject,
    QueryEval,
    StatTestResult,
    TuningResult,
    average_precision,
    bonferroni,
    cliffs_delta,
    default_threshold_grid,
    evaluate_project,
    improvement,
    interpret_cliffs_delta,
    leave_one_out,
    mann_whitney_exact,
    mann_whitney_normal,
    mann_whitney_one_tailed,
    recall_at_k,
    reciprocal_rank,
    tune_threshold,
)
from .images import (
    DESCRIPTOR_VERSION,
    RasterImage,
    blank_descriptor,
    color_descriptor,
    decode_image,
    structure_descriptor,
)
from .ranker import Combiner, QueryResult, RankedEntry, rank_duplicates
from .similarity import (
    FeatureBundle,
    FeatureMask,
    SimilarityScores,
    compute_project_scores,
    cosine,
    score_pair,
    sparse_cosine,
)
from .store import (
    FeatureStore,
    Resources,
    build_store,
    featurize_project,
    load_store,
    save_store,
)
from .synthgen import GeneratedCorpus, GeneratorSpec, generate_corpus, render_layout
from .text import (
    EmbeddingTable,
    Segmenter,
    TfIdfModel,
    build_tfidf_model,
    embed_report,
    load_embeddings,
    load_stopwords,
    load_synonyms,
    normalize,
    tfidf_vector,
    tokenize,
)

__version__ = "0.1.0"
