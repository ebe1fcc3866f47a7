"""Exception hierarchy shared across the engine.

Everything raised on purpose derives from FeedbackLensError so callers
(service layer, CLI) can map domain failures to exit code 1 / HTTP 4xx
without catching bare Exception.
"""

from __future__ import annotations


class FeedbackLensError(Exception):
    """Base class for all domain errors."""


# --- record store ---------------------------------------------------------

class DuplicateId(FeedbackLensError):
    pass


class MissingField(FeedbackLensError):
    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class UndecodableStream(FeedbackLensError):
    pass


class UnknownId(FeedbackLensError):
    pass


class UnknownDimension(FeedbackLensError):
    pass


class LabelNotInSet(FeedbackLensError):
    pass


# --- llm gateway -----------------------------------------------------------

class GatewayError(FeedbackLensError):
    pass


class CassetteMiss(GatewayError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class ProviderError(GatewayError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned {status}: {body[:200]}")
        self.status = status
        self.body = body


class GatewayTimeout(GatewayError):
    pass


# --- embedding index -------------------------------------------------------

class DimensionMismatch(FeedbackLensError):
    pass


class ZeroVector(FeedbackLensError):
    pass


class IndexFinalized(FeedbackLensError):
    pass


# --- classification --------------------------------------------------------

class EmptyPool(FeedbackLensError):
    pass


class UnparseableLabel(FeedbackLensError):
    def __init__(self, completion: str, labels: tuple[str, ...]):
        super().__init__(
            f"completion contains no label from {list(labels)}: {completion[:120]!r}"
        )
        self.completion = completion
        self.labels = labels


# --- topic modeling ---------------------------------------------------------

class EmptyTopicOutput(FeedbackLensError):
    pass


class IncompleteReview(FeedbackLensError):
    def __init__(self, missing: list[str]):
        super().__init__(f"decisions missing for {len(missing)} topics: {missing[:5]}")
        self.missing = missing


# --- qa agent ---------------------------------------------------------------

class PlanParseError(FeedbackLensError):
    pass


class DependencyUnmet(FeedbackLensError):
    pass


class ReplanBudgetExhausted(FeedbackLensError):
    pass


class NoCodeBlock(FeedbackLensError):
    pass


class AttemptsExhausted(FeedbackLensError):
    pass


class DuplicatePlugin(FeedbackLensError):
    pass


# --- executors ---------------------------------------------------------------

class SnapshotMissing(FeedbackLensError):
    pass


class PluginLoadError(FeedbackLensError):
    pass


class ExecutorUnavailable(FeedbackLensError):
    pass
