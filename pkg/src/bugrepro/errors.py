"""Exception hierarchy shared by the pipeline stages."""

from __future__ import annotations


class BugReproError(Exception):
    """Base class for every error raised by this package."""


# corpus


class CorpusError(BugReproError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, line: int, cause: str):
        super().__init__(f"line {line}: {cause}")
        self.line = line
        self.cause = cause


class DuplicateFaultId(CorpusError):
    def __init__(self, project: str, bug_id: str):
        super().__init__(f"duplicate fault id {project}-{bug_id}")
        self.project = project
        self.bug_id = bug_id


class EmptyCorpus(CorpusError):
    pass


# generation


class ProviderError(BugReproError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class RateLimited(ProviderError):
    def __init__(self, retry_after: float | None = None):
        super().__init__(f"rate limited (retry after {retry_after}s)")
        self.retry_after = retry_after


class MalformedProviderReply(ProviderError):
    pass


class ReplayMiss(ProviderError):
    def __init__(self, digest: str, index: int):
        super().__init__(f"no replay entry for {digest} (sample {index})")
        self.digest = digest
        self.index = index


# extraction


class NoCodeFound(BugReproError):
    pass


# harness


class AdapterError(BugReproError):
    pass


class CheckoutFailed(AdapterError):
    pass


class BaselineCompileFailed(AdapterError):
    pass


class BaselineTimedOut(AdapterError):
    pass


class InfrastructureError(AdapterError):
    def __init__(self, log: str):
        super().__init__(log.strip().splitlines()[-1] if log.strip() else "infrastructure error")
        self.log = log


class InjectionCollision(AdapterError):
    pass


# classification / metrics


class InconsistentOutcome(BugReproError):
    pass


class RerunRequired(BugReproError):
    """An infrastructure failure must be retried before it can be classified."""


class MissingProject(BugReproError):
    def __init__(self, key):
        super().__init__(f"result {key} names a project absent from the corpus")
        self.key = key


# run store / cli


class ConfigError(BugReproError):
    pass


class ConfigMismatch(ConfigError):
    pass


class StageOrderError(BugReproError):
    pass


class StageFailed(BugReproError):
    """A stage finished with per-item failures; partial results are kept."""


class ProviderStageFailed(StageFailed):
    pass


class AdapterStageFailed(StageFailed):
    pass
