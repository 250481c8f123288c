"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all attrilens errors."""


class ShapeMismatch(ToolkitError):
    pass


class DtypeMismatch(ToolkitError):
    pass


class UnsupportedDtype(ToolkitError):
    pass


class TraceMismatch(ToolkitError):
    pass


class FormatError(ToolkitError):
    """Malformed on-disk data; `offset` is the byte position of the defect."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnsupportedLayerForRule(ToolkitError):
    pass


class UnmappedLayer(ToolkitError):
    def __init__(self, name: str):
        super().__init__(f"no rule mapped for layer {name!r}")
        self.name = name


class InvalidBounds(ToolkitError):
    pass


class OrphanBatchNorm(ToolkitError):
    def __init__(self, name: str):
        super().__init__(
            f"batch-norm layer {name!r} does not directly follow a linear or conv layer"
        )
        self.name = name


class UnknownComposite(ToolkitError):
    pass


class UnserializableInput(ToolkitError):
    pass


class TaskTypeViolation(ToolkitError):
    pass


class ArityMismatch(ToolkitError):
    pass


class CacheCorrupt(ToolkitError):
    pass


class BadK(ToolkitError):
    pass


class AsymmetricInput(ToolkitError):
    pass


class NotSymmetric(ToolkitError):
    pass


class NoConvergence(ToolkitError):
    def __init__(self, sweeps: int):
        super().__init__(f"eigensolver did not converge within {sweeps} sweeps")
        self.sweeps = sweeps


class PerplexityTooLarge(ToolkitError):
    pass


class SingleCluster(ToolkitError):
    pass


class ManifestError(ToolkitError):
    def __init__(self, field: str, detail: str = ""):
        msg = f"invalid project manifest field {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.field = field


class StoreInconsistent(ToolkitError):
    pass


class SchemaError(ToolkitError):
    def __init__(self, field: str, detail: str = ""):
        msg = f"invalid selection field {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.field = field


class IndexOutOfRange(ToolkitError):
    pass


class BindError(ToolkitError):
    pass


class TaskFailed(ToolkitError):
    """A pipeline task's processor raised; carries the task path."""

    def __init__(self, path: str, cause: BaseException):
        super().__init__(f"task {path!r} failed: {cause}")
        self.path = path
