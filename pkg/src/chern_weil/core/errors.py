from typing import Optional


class ChernWeilError(ValueError):
    """Root of all engine errors. `module` names the originating module."""
    module = "core"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class SymbolicError(ChernWeilError):
    module = "symexpr"


class ExpressionSyntaxError(SymbolicError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
        self.text = text


class EvaluationError(SymbolicError):
    pass


class GeometryError(ChernWeilError):
    module = "geometry"


class FormError(ChernWeilError):
    module = "forms"


class BundleError(ChernWeilError):
    module = "bundle"


class ConnectionFormError(ChernWeilError):
    module = "connection"


class SeriesError(ChernWeilError):
    module = "series"


class CharClassError(ChernWeilError):
    module = "charclass"


class GluingConflictError(CharClassError):
    pass


class QuadratureError(ChernWeilError):
    module = "quadrature"


class ScenarioError(ChernWeilError):
    module = "cli"

    def __init__(self, message: str, line: Optional[int] = None, section: Optional[str] = None):
        where = []
        if section:
            where.append(f"section [{section}]")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.section = section
