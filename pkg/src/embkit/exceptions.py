"""Exception hierarchy.

Every error carries an optional ``file`` and ``row`` so the CLI can report
the offending location on a single line.
"""


class EmbkitError(ValueError):
    def __init__(self, message="", *, file=None, row=None):
        super().__init__(message)
        self.message = message
        self.file = None if file is None else str(file)
        self.row = row

    @property
    def code(self):
        return type(self).__name__

    def __str__(self):
        parts = [self.message] if self.message else []
        if self.file is not None:
            parts.append(f"file={self.file}")
        if self.row is not None:
            parts.append(f"row={self.row}")
        return " ".join(parts)


class ZeroVector(EmbkitError):
    pass


class DimensionMismatch(EmbkitError):
    pass


class AntipodalPair(EmbkitError):
    pass


class EmptySet(EmbkitError):
    pass


class InvalidParameter(EmbkitError):
    pass


class NeedTwoIdentities(EmbkitError):
    pass


class KTooLarge(EmbkitError):
    pass


class EmptyClass(EmbkitError):
    pass


class InsufficientImpostors(EmbkitError):
    def __init__(self, message="", *, required=None, **kw):
        super().__init__(message, **kw)
        self.required = required


class EmptyFold(EmbkitError):
    pass


class FoldCountMismatch(EmbkitError):
    pass


class IndexOutOfRange(EmbkitError):
    pass


class BadMagic(EmbkitError):
    pass


class TruncatedFile(EmbkitError):
    pass


class NaNPayload(EmbkitError):
    pass


class DuplicateRow(EmbkitError):
    pass


class BadManifest(EmbkitError):
    pass


class ConfigError(EmbkitError):
    pass


class OutputExists(EmbkitError):
    pass
