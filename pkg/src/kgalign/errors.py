"""Exception types shared across the package.

Plain argument validation raises the builtin ValueError; everything that
carries domain meaning (file parsing, graph structure, tensor shapes,
numerical breakdown) gets a dedicated class so the CLI can map errors to
stable exit codes.
"""


class KgAlignError(Exception):
    """Base class for package-specific errors."""

    code = "error"


class ParseError(KgAlignError):
    """Malformed line in an input file."""

    code = "parse"

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class StructuralError(KgAlignError):
    """Graph data violates a structural invariant (dangling ids, duplicates...)."""

    code = "structural"


class ShapeError(KgAlignError):
    """Tensor operands have incompatible shapes."""

    code = "shape"


class ConfigError(KgAlignError):
    """Invalid or inconsistent configuration."""

    code = "config"


class NumericalError(KgAlignError):
    """A non-finite value appeared during computation."""

    code = "numerical"
