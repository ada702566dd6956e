"""Structured errors raised by the certifier."""


class CertError(Exception):
    """Base error carrying a machine-readable ``code``.

    ``code`` is a short kebab-case tag such as ``"coincident-points"``;
    ``details`` holds whatever diagnostics the raising site found useful.
    """

    def __init__(self, code, message="", **details):
        self.code = code
        self.details = details
        super().__init__(f"{code}: {message}" if message else code)


class ParseError(CertError):
    """Syntax error in a curvature expression."""

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        exp = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__("syntax-error", f"{message} at offset {offset}{exp}",
                         offset=offset, expected=self.expected)


class DomainError(CertError):
    """Evaluation left the domain of an operation (log of 0, 1/0, ...)."""

    def __init__(self, node, message):
        self.node = node
        super().__init__("domain-error", f"{message} in {node}", node=node)


class StageError(CertError):
    """Wraps an error with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        code = getattr(cause, "code", "error")
        CertError.__init__(self, code, f"[{stage}] {cause}", stage=stage)
