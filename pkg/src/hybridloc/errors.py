"""Exception hierarchy shared across the package."""


class HybridLocError(Exception):
    """Base class for every error raised by hybridloc."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidArgument(HybridLocError, ValueError):
    pass


class OutOfArea(HybridLocError):
    """A point falls outside the grid bounds."""


class InvalidCell(HybridLocError):
    pass


class UnusableCell(HybridLocError):
    """The cell has too little training weight to be queried."""


class NotFinalized(HybridLocError):
    pass


class NoOverlap(HybridLocError):
    """A scan shares no access point with the cell(s) being scored."""


class EmptyFingerprint(HybridLocError):
    pass


class LoadError(HybridLocError):
    """Base class for fingerprint file decoding failures."""


class UnsupportedVersion(LoadError):
    pass


class MalformedRecord(LoadError):
    pass


class ChecksumMismatch(LoadError):
    """Trailer record count disagrees with the records read."""
