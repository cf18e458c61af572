"""Exception hierarchy.

InputError covers anything wrong with what the caller handed us (bad flags,
malformed files, corpora too small to sample from, unresolvable model ids)
and maps to exit code 2 at the CLI. ComputationError covers failures inside
a well-posed run, currently just out-of-memory during inference, and maps
to exit code 1.
"""

__all__ = [
    "ComputationError",
    "ExtractorError",
    "InputError",
    "InsufficientCorpus",
    "ModelLoadFailure",
    "OutOfMemory",
]


class ExtractorError(Exception):
    """Base class for errors raised by this package."""


class InputError(ExtractorError):
    """The inputs cannot be processed as given."""


class InsufficientCorpus(InputError):
    """The corpus has fewer eligible spans than the requested sample count."""


class ModelLoadFailure(InputError):
    """A model or tokenizer id could not be resolved to a working instance."""


class ComputationError(ExtractorError):
    """A well-posed run failed while executing."""


class OutOfMemory(ComputationError):
    """Inference exceeded available memory; retry with a smaller batch."""
