"""Exception hierarchy shared across the pipeline.

The CLI maps these to exit codes: pipeline errors exit 2, provider
errors exit 3. Plain ``OSError`` is used for file I/O failures.
"""


class ZoomerError(Exception):
    """Base class for all pipeline errors."""


# geometry
class LocalBoxOutOfPatch(ZoomerError):
    """A patch-local box extends beyond the patch it was detected on."""


# keyterms
class EmptyPrompt(ZoomerError):
    """Prompt is empty after whitespace trimming."""


class NoTermsFound(ZoomerError):
    """Every prompt token was filtered out; caller decides the fallback."""


# emphasizer
class ImageTooSmall(ZoomerError):
    """Image cannot be divided into the requested patch grid."""


class DetectorUnavailable(ZoomerError):
    """Detector endpoint unreachable after the configured retries."""


class DetectorProtocolError(ZoomerError):
    """Detector answered with a non-200 status or a malformed body."""


# composer
class NoRegions(ZoomerError):
    """Spatial composition requires at least one region."""


class DegenerateBox(ZoomerError):
    """Box rasterizes to an empty pixel rectangle."""


# budget
class BudgetTooSmall(ZoomerError):
    """No plan fits the token budget, even at low detail."""


# mllm
class ProviderFailure(ZoomerError):
    """Base for errors raised while talking to an MLLM provider."""


class UnsupportedProvider(ProviderFailure):
    pass


class EmptyPlan(ProviderFailure):
    """Request construction rejected a plan with no images."""


class PayloadTooLarge(ProviderFailure):
    """Payload exceeds the provider's size or image-count cap."""


class AuthError(ProviderFailure):
    """Provider rejected the credentials."""


class RateLimited(ProviderFailure):
    """Still rate-limited after exhausting retries."""


class ProviderError(ProviderFailure):
    """Provider returned a non-retryable error response."""

    def __init__(self, status: int, body: str = ""):
        self.status = status
        self.body = body[:200]
        super().__init__(f"provider returned {status}: {self.body}")


class MissingGroundTruth(ProviderFailure):
    """Mock provider asked to answer a record without ground truth."""


# harness
class EmptyDataset(ZoomerError):
    """Benchmark dataset contains no records."""
