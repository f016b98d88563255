"""Typed errors raised by the codec.

Everything derives from :class:`CodecError`, so callers (and the fuzz suite)
can catch one base class and be sure nothing else escapes.
"""


class CodecError(Exception):
    pass


# model container / model invariants
class InvalidModel(CodecError):
    pass


class BadMagic(CodecError):
    pass


class MalformedHeader(CodecError):
    pass


class TruncatedBlob(CodecError):
    pass


class NonFiniteValue(CodecError):
    pass


class DuplicateLayerName(InvalidModel):
    pass


# numeric stages
class NonFiniteInput(CodecError):
    pass


class EmptyInput(CodecError):
    pass


class ConfigError(CodecError):
    pass


class IndexOutOfRange(CodecError):
    pass


class WrongKind(CodecError):
    pass


class ArrangementMismatch(CodecError):
    pass


# compressed container
class UnsupportedVersion(CodecError):
    pass


class TruncatedRecord(CodecError):
    pass


class PayloadLengthMismatch(CodecError):
    pass


class MalformedRecord(CodecError):
    pass


class ZeroCompressedSize(CodecError):
    pass


# toy inference / harness
class ShapeMismatch(CodecError):
    pass


class UnknownLayer(CodecError):
    pass


class GraphSyntaxError(CodecError):
    pass


class EmptyDataset(CodecError):
    pass


class NotBracketed(CodecError):
    pass


def with_layer(exc, layer):
    """Return a copy of ``exc`` (same type) whose message names ``layer``."""
    new = type(exc)(f"layer {layer!r}: {exc}")
    new.layer = layer
    return new
