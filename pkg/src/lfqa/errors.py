"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`LfqaError`, so callers
(the CLI in particular) can map whole families onto exit codes.
"""

from __future__ import annotations


class LfqaError(Exception):
    """Base class for all package errors."""


# -- logical form language ---------------------------------------------------


class LogicalFormError(LfqaError):
    """Base class for logical-form parse errors. Carries a byte offset."""

    def __init__(self, message: str, offset: int | None = None, step: int | None = None):
        self.message = message
        self.offset = offset
        self.step = step
        super().__init__(self._render())

    def _render(self) -> str:
        parts = []
        if self.step is not None:
            parts.append(f"step {self.step}")
        if self.offset is not None:
            parts.append(f"offset {self.offset}")
        where = f" ({', '.join(parts)})" if parts else ""
        return f"{self.message}{where}"

    def at_step(self, step: int) -> "LogicalFormError":
        self.step = step
        self.args = (self._render(),)
        return self

    def __str__(self) -> str:
        return self._render()


class LFSyntaxError(LogicalFormError):
    """Malformed logical-form text."""

    def __init__(self, message: str, offset: int | None = None, step: int | None = None,
                 expected: str | None = None):
        self.expected = expected
        super().__init__(message, offset, step)


class UnknownFunction(LogicalFormError):
    pass


class UnknownOp(LogicalFormError):
    pass


class UnboundPlaceholder(LfqaError):
    def __init__(self, n: int):
        self.n = n
        super().__init__(f"placeholder #{n} has no binding")


# -- protocol (special-token) violations --------------------------------------


class ProtocolError(LfqaError):
    """A completion did not follow the expected tag protocol."""

    def __init__(self, message: str, raw_text: str | None = None):
        self.raw_text = raw_text
        super().__init__(message)


class MismatchError(ProtocolError):
    """A StepN line without its ActionN partner (or the reverse)."""


# -- plan validation -----------------------------------------------------------


class PlanValidationError(LfqaError):
    def __init__(self, message: str, step: int | None = None, alias: str | None = None):
        self.step = step
        self.alias = alias
        super().__init__(message)


class DuplicateAlias(PlanValidationError):
    def __init__(self, alias: str, step: int | None = None):
        super().__init__(f"alias {alias} defined more than once", step, alias)


class MisplacedOutput(PlanValidationError):
    def __init__(self, step: int):
        super().__init__(f"Output at step {step} is not the last step", step)


class UnboundReference(PlanValidationError):
    def __init__(self, step: int | None, alias: str):
        super().__init__(f"step {step} references undefined {alias}", step, alias)


class ForwardReference(UnboundReference):
    """The alias exists but belongs to the same or a later step."""

    def __init__(self, step: int, alias: str):
        PlanValidationError.__init__(self, f"step {step} references {alias} before it is defined", step, alias)


class DecompositionError(LfqaError):
    def __init__(self, cause: Exception, attempts: int = 1):
        self.cause = cause
        self.attempts = attempts
        super().__init__(f"decomposition failed after {attempts} attempt(s): "
                         f"{type(cause).__name__}: {cause}")


# -- llm client ----------------------------------------------------------------


class TransportError(LfqaError):
    """Network-level failure talking to the chat backend."""


class RequestTimeout(TransportError):
    pass


class FixtureMissing(TransportError):
    """Scripted client has no canned completion for a request."""

    def __init__(self, fingerprint: str, seed: int | None):
        self.fingerprint = fingerprint
        self.seed = seed
        super().__init__(f"no scripted completion for fingerprint {fingerprint[:16]}... (seed={seed})")


class CapabilityError(LfqaError):
    """Backend cannot provide what was asked for (e.g. token logprobs)."""


# -- boundary ------------------------------------------------------------------


class EmptySequence(LfqaError, ValueError):
    pass


# -- executors -----------------------------------------------------------------


class ExpressionError(LfqaError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (offset {offset})")


class DivisionByZero(ExpressionError, ZeroDivisionError):
    def __init__(self, offset: int | None = None):
        super().__init__("division by zero", offset)


class ChoiceViolation(LfqaError):
    def __init__(self, answer: str, candidates: list[str]):
        self.answer = answer
        self.candidates = candidates
        super().__init__(f"choice answer {answer!r} matches no candidate")


# -- retriever / datasets -------------------------------------------------------


class FormatError(LfqaError):
    def __init__(self, line: int, message: str = "malformed record"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateId(LfqaError):
    def __init__(self, id: str, line: int | None = None):
        self.id = id
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate id {id!r}{where}")


class EmptyCorpus(LfqaError):
    pass


class IndexFormatError(LfqaError):
    pass


# -- evaluation ----------------------------------------------------------------


class IdMismatch(LfqaError):
    pass


class LengthMismatch(LfqaError, ValueError):
    pass


class ConfigError(LfqaError, ValueError):
    pass
