"""Exception hierarchy shared by the service, the SDK and the CLI."""

from __future__ import annotations


class PrivScanError(Exception):
    """Base class for every error raised by this package."""


# taxonomy
class SchemaError(PrivScanError):
    pass


class TaxonomyReferenceError(SchemaError):
    """A lexicon or template key names a data type that was never declared."""


class DuplicateIdError(SchemaError):
    pass


# policy ingest
class InvalidUrlError(PrivScanError):
    pass


class FetchError(PrivScanError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class CacheIoError(PrivScanError):
    pass


# detection / presentation
class TemplateLargerThanScreenError(PrivScanError):
    pass


class EmptyDetectionsError(PrivScanError):
    pass


# images
class NotAPngError(PrivScanError):
    pass


class CorruptImageError(PrivScanError):
    pass


# client
class InsetsExceedImageError(PrivScanError):
    pass


class CaptureTooLargeError(PrivScanError):
    pass


class BusyError(PrivScanError):
    """A scan was triggered while another one is still active."""


class ImageSaveError(PrivScanError):
    pass


class BenchAbortedError(PrivScanError):
    pass
