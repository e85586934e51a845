"""Exception hierarchy. Every error carries a stable ``code`` token."""


class UsageModelError(Exception):
    code = "E_GENERIC"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def __str__(self):
        return f"{self.code}: {self.args[0]}"


class ModelError(UsageModelError):
    """Invalid model content or a reference to something the model lacks."""

    code = "E_INVALID"


class ParseError(UsageModelError):
    """A model document could not be turned into a valid model."""

    code = "E_PARSE"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        msg = f"{len(self.diagnostics)} error(s)"
        if first is not None:
            msg += f"; first: {first.code} at {first.path}: {first.message}"
        super().__init__(msg, first.code if first is not None else None)


class InfeasibleError(UsageModelError):
    code = "E_INFEASIBLE"


class TooLargeError(UsageModelError):
    code = "E_TOO_LARGE"

    def __init__(self, message, limit=None, reached=None):
        super().__init__(message)
        self.limit = limit
        self.reached = reached


class MergeScopeError(UsageModelError):
    code = "E_MERGE_SCOPE"


class StallError(UsageModelError):
    code = "E_STALL"


class ShapeError(UsageModelError, ValueError):
    code = "E_SHAPE"
