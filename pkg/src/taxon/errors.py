"""Exception hierarchy shared across the taxon library and services."""


class TaxonError(Exception):
    """Base class for all taxon errors."""


# -- tokenization ------------------------------------------------------------

class NoParseableTimestamps(TaxonError):
    """No line in the snippet yielded a parseable timestamp."""


# -- feature extraction ------------------------------------------------------

class EmptyCorpus(TaxonError):
    """Vocabulary construction found no retainable tokens."""


# -- models ------------------------------------------------------------------

class MissingClass(TaxonError):
    """A declared label has zero training examples."""


class NonFinite(TaxonError):
    """Training loss became NaN or infinite."""


class DimensionMismatch(TaxonError):
    """Feature vector dimension does not match the model's."""


# -- pipeline ----------------------------------------------------------------

class ClassTooSmall(TaxonError):
    """A class cannot yield both a train and a test member."""


class LabelMismatch(TaxonError):
    """Evaluation data contains labels unknown to the artifact."""


class VersionUnsupported(TaxonError):
    """Artifact format version is not readable by this build."""


class DigestMismatch(TaxonError):
    """Artifact payload does not match its recorded digest."""


# -- services ----------------------------------------------------------------

class PayloadMalformed(TaxonError):
    """Whole ingestion batch is unparseable."""


class DatasetTooSmall(TaxonError):
    """Stored data cannot satisfy the train/test split preconditions."""


class Busy(TaxonError):
    """A training job is running and the queue is full."""


class UnknownDataset(TaxonError):
    """Referenced dataset id does not exist."""


class UnknownExample(TaxonError):
    """Referenced example id does not exist."""


class UnknownLabel(TaxonError):
    """Label is not in the pinned set and label creation is disabled."""


class NoModelYet(TaxonError):
    """No training job has succeeded yet."""


class NoModelLoaded(TaxonError):
    """Classification requested before any pipeline was loaded."""


class FetchFailed(TaxonError):
    """A URI input could not be retrieved."""


class UnknownRecord(TaxonError):
    """Referenced classification record does not exist."""


class InputUnavailable(TaxonError):
    """Stored record retains no re-classifiable input."""


# -- configuration -----------------------------------------------------------

class ConfigError(TaxonError):
    """Base class for configuration failures."""


class UnknownKey(ConfigError):
    """Config file or flags contain a key taxon does not define."""


class TypeMismatch(ConfigError):
    """Config value cannot be coerced to the declared type."""


class ConstraintViolation(ConfigError):
    """Config values are individually valid but jointly inconsistent."""
