class ValidationError(ValueError):
    """Raised when inputs violate a shape, range or format contract."""


class TensorFormatError(ValidationError):
    """Malformed tensor container. ``code`` identifies the failure kind."""

    BAD_MAGIC = "bad magic"
    BAD_VERSION = "bad version"
    BAD_DTYPE = "bad dtype"
    TRUNCATED = "truncated"

    def __init__(self, code, detail=""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)
