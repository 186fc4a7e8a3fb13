"""Exception hierarchy shared by all pipeline stages."""


class MPLError(Exception):
    """Base class for domain errors (CLI exit status 1)."""


class GraphParseError(MPLError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{message}{where}")


class StructuralError(MPLError):
    """A node violates the nesting rules of the artifact graph."""


class ExtractionError(MPLError):
    def __init__(self, message, member=None):
        self.member = member
        super().__init__(message)


class BindingError(MPLError):
    pass


class PreconditionError(MPLError):
    pass


class PlatformError(MPLError):
    pass


class ConditionSyntaxError(MPLError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class FeatureModelError(MPLError):
    pass


class CapacityError(MPLError):
    pass


class StageError(MPLError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
