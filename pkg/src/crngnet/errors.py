"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input (schema, ids, dimensions)."""


class ResourceLimitError(RuntimeError):
    """An enumeration would exceed its desk-scale guard."""

    def __init__(self, what: str, bits: float, limit: float):
        super().__init__(f"{what}: needs {bits:.1f} bits of enumeration, guard is {limit:g}")
        self.what = what
        self.bits = bits
        self.limit = limit


class InvariantError(AssertionError):
    """An internal consistency check failed."""
