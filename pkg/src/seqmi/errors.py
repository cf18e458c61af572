"""Exception hierarchy shared by every seqmi module.

Two branches matter for the CLI exit-code contract: InputError maps to exit
code 2 (bad user-supplied values or files), ComputationError maps to exit
code 1 (the math itself failed). Everything inherits SeqmiError so callers
can catch the whole family at once.
"""

from __future__ import annotations


class SeqmiError(Exception):
    """Base class for all seqmi errors."""


class InputError(SeqmiError):
    """Invalid user-supplied argument, file, or record."""


class ComputationError(SeqmiError):
    """A numerically or structurally impossible computation."""


# --- gaussian-hierarchy ---

class LayerCapExceeded(InputError):
    """Requested layer count exceeds the configured memory-guard cap."""


class NotPositiveDefinite(ComputationError):
    """Covariance failed its Cholesky validation after construction."""


class SplitOutOfRange(InputError):
    """Bipartite split index outside 1..L-1."""


class IndexOutOfRange(InputError):
    """Position index outside 1..L."""


class PrefixLengthMismatch(InputError):
    """Conditioning prefix length does not equal position - 1."""


class NonPositiveStd(InputError):
    """A supplied standard deviation is zero or negative."""


class InvalidMixing(InputError):
    """gamma/rho violate the unit-variance constraint 3*gamma^2 + rho^2 = 1."""


# --- entropy-estimators ---

class NonPositiveArgument(InputError):
    """digamma requires a strictly positive argument."""


class ZeroCount(InputError):
    """Grassberger G(n) requires n >= 1."""


class EmptyTable(InputError):
    """Entropy of an empty count table is undefined."""


# --- ngram-counter ---

class EmptyCorpus(InputError):
    """Corpus contains no documents."""


class MalformedDocument(InputError):
    """Document holds invalid token ids (or is empty)."""


class SegmentTooShort(InputError):
    """A segment shorter than 2 tokens cannot yield a leading pair."""


# --- mi-estimators ---

class MissingUnigrams(InputError):
    """Pooled two-point estimation needs a unigram table."""


class SampleSetMismatch(InputError):
    """Record sets do not cover the same sample_ids."""


class LengthMismatch(InputError):
    """Records or curves disagree on lengths."""


class NonFiniteLogProb(InputError):
    """A log-probability that poisons the estimate (-inf or NaN)."""


class BadWindow(InputError):
    """Smoothing window must be odd, >= 1, and <= curve length."""


# --- scaling-fit ---

class TooFewPoints(InputError):
    """Not enough series points for the requested fit."""


class NonPositiveValue(InputError):
    """Log-log fitting requires strictly positive y values."""


class DegenerateSeries(InputError):
    """Series carries no usable variation for this fit."""


# --- logprob-io ---

class FixedPointInShuffle(InputError):
    """A shuffled record pairs a sample with itself."""


class TooFewSamples(InputError):
    """Derangements need at least 2 samples."""


class InconsistentSplit(InputError):
    """Records for one sample_id disagree on (ell, L)."""


class RecordSchemaError(InputError):
    """A record file failed schema validation."""


# --- warnings ---

class EmptyResultWarning(UserWarning):
    """An operation legitimately produced an empty result."""


class DegenerateSeriesWarning(UserWarning):
    """Model comparison could not separate the candidates."""
