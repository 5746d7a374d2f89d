"""Exception types shared across the package."""


class SetuError(Exception):
    """Base class for all package-specific errors."""


class CorpusFormatError(SetuError):
    """A corpus record file or manifest could not be parsed."""


class ValidationError(SetuError):
    """Parsed input violates a corpus invariant (duplicate ids, missing images, ...)."""


class ResourceFormatError(SetuError):
    """A resource file (stopwords, synonyms, embeddings) is malformed."""


class ImageDecodeError(SetuError):
    """A screenshot byte stream is not a decodable PNG/JPEG."""


class ConfigurationError(SetuError):
    """An invalid combiner/mask configuration was requested."""


class EvaluationError(SetuError):
    """Evaluation preconditions not met (empty ground truth, no eligible queries, ...)."""


class StoreError(SetuError):
    """A feature store file is corrupt or truncated."""


class StoreVersionError(StoreError):
    """A feature store was produced under an incompatible version or dimension."""


class GeneratorSpecError(SetuError):
    """A synthetic-corpus spec is invalid or infeasible."""
