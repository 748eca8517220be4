"""Exception types shared across the toolkit."""

from __future__ import annotations


class WorkflowError(Exception):
    """Base class for every error raised by wfkit."""


class CyclicGraph(WorkflowError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("graph contains a cycle: " + " -> ".join(map(str, self.cycle)))


class InvalidGraph(WorkflowError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CodecError(WorkflowError):
    """Base for parse failures in either surface syntax."""


class MalformedJson(CodecError):
    pass


class SchemaError(CodecError):
    pass


class CodeSyntaxError(CodecError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UseBeforeDef(CodeSyntaxError):
    pass


class DuplicateDef(CodeSyntaxError):
    pass


class CorruptRecord(WorkflowError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class GoldNotInKb(WorkflowError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("gold node types missing from KB: " + ", ".join(self.missing))


class GroupTooSmall(WorkflowError):
    pass


class NonPositiveRatio(WorkflowError):
    pass


class BudgetExceeded(WorkflowError):
    def __init__(self, result):
        self.result = result
        super().__init__(f"MCIS search budget exhausted (best size {result.size})")


class EmptyCorpus(WorkflowError):
    pass


class EmptyText(WorkflowError):
    pass


class ProviderUnavailable(WorkflowError):
    pass


class ProviderMismatch(WorkflowError):
    pass


class ConfigError(WorkflowError):
    pass
