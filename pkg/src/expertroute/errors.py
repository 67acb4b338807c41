"""Exception hierarchy shared across the package.

Everything derives from :class:`ExpertRouteError`; the CLI maps
:class:`ConfigError` to exit code 2 and every other subclass to exit code 1.
"""

from __future__ import annotations


class ExpertRouteError(Exception):
    """Base class for all package errors."""


class ConfigError(ExpertRouteError):
    pass


# taxonomy


class UnknownDepartment(ExpertRouteError, ValueError):
    def __init__(self, label: str) -> None:
        super().__init__(f"unknown department label: {label!r}")
        self.label = label


class UnknownDifficulty(ExpertRouteError, ValueError):
    def __init__(self, label: str) -> None:
        super().__init__(f"unknown difficulty label: {label!r}")
        self.label = label


class InvalidRecord(ExpertRouteError, ValueError):
    pass


# backends and parsing


class BackendError(ExpertRouteError):
    """A backend call failed. ``backend_id`` names the offending backend."""

    def __init__(self, backend_id: str, message: str = "") -> None:
        super().__init__(f"{backend_id}: {message}" if message else backend_id)
        self.backend_id = backend_id


class BackendTimeout(BackendError):
    pass


class TransportError(BackendError):
    pass


class ScenarioExhausted(BackendError):
    """A scripted backend was asked for a step it has no reply for."""


class BackendUnavailable(BackendError):
    pass


class MissingBinding(ExpertRouteError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing template binding: {self.name}"


class ParseFailure(ExpertRouteError, ValueError):
    def __init__(self, raw: str, reason: str = "") -> None:
        super().__init__(reason or "could not parse backend output")
        self.raw = raw


# expertise table


class LabelerUnavailable(ExpertRouteError):
    pass


class LabelParseFailure(ExpertRouteError):
    def __init__(self, query_id: str, attempts: int) -> None:
        super().__init__(f"labeler output unparseable for {query_id} after {attempts} attempts")
        self.query_id = query_id
        self.attempts = attempts


class EmptyCorpus(ExpertRouteError):
    pass


class FormatVersionMismatch(ExpertRouteError):
    pass


class CorruptTable(ExpertRouteError):
    pass


# recruitment and collaboration


class EmptyTable(ExpertRouteError):
    pass


class ClassificationFailure(ExpertRouteError):
    def __init__(self, query_id: str, reason: str = "") -> None:
        super().__init__(f"could not classify {query_id}" + (f": {reason}" if reason else ""))
        self.query_id = query_id


class MissingScore(ExpertRouteError, KeyError):
    def __init__(self, backend_id: str) -> None:
        super().__init__(backend_id)
        self.backend_id = backend_id

    def __str__(self) -> str:
        return f"no expertise score for backend {self.backend_id!r}"


class AllAgentsFailed(ExpertRouteError):
    pass


# datasets and metrics


class SchemaViolation(ExpertRouteError, ValueError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class NoGoldLabels(ExpertRouteError, ValueError):
    pass
