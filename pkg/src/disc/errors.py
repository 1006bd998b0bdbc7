"""Exception hierarchy shared by every compiler stage and the executor."""


class DiscError(Exception):
    """Base class; ``kind`` is the machine-parsable class name printed by the CLI."""

    kind = "DiscError"


class GraphParseError(DiscError):
    kind = "GraphParseError"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class GraphValidationError(DiscError):
    kind = "GraphValidationError"

    def __init__(self, message: str, node: str | None = None, rule: str | None = None):
        prefix = f"node {node}: " if node else ""
        super().__init__(f"{prefix}{message}")
        self.node = node
        self.rule = rule


class UnsupportedOpError(DiscError):
    kind = "UnsupportedOpError"


class ContradictionError(DiscError):
    """Two distinct constants were forced into one dimension class."""

    kind = "ContradictionError"


class UnbindableSymbolError(DiscError):
    kind = "UnbindableSymbolError"


class NotStaticError(DiscError):
    kind = "NotStaticError"


class PassError(DiscError):
    kind = "PassError"

    def __init__(self, pass_name: str, diagnostics):
        self.pass_name = pass_name
        self.diagnostics = list(diagnostics)
        super().__init__(f"pass {pass_name} failed: " + "; ".join(str(d) for d in self.diagnostics))


class CodegenError(DiscError):
    kind = "CodegenError"


class CompileError(DiscError):
    """Wraps any failure inside the end-to-end pipeline with the stage that raised it."""

    kind = "CompileError"

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {type(cause).__name__}: {cause}")


class ExecutionError(DiscError):
    """Runtime failure while executing a plan or the eager oracle."""

    kind = "ExecutionError"


class ShapeMismatchError(ExecutionError):
    kind = "ShapeMismatchError"


class PlanFormatError(DiscError):
    kind = "PlanFormatError"
