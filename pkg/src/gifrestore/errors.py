"""Exception hierarchy shared by the codec, the restoration engine and the CLI."""


class GifError(Exception):
    """Base class for GIF container problems."""


class GifFormatError(GifError):
    """Malformed header or block structure."""


class GifTruncatedError(GifError):
    """The byte stream ended before the data it announced."""


class LzwError(GifError):
    """Invalid code in an LZW image data stream."""


class ConfigError(ValueError):
    """Inconsistent or invalid configuration."""


class PaletteMismatchError(ValueError):
    """An image contains colors that are not members of the given palette."""


class ImageFormatError(ValueError):
    """A frame file that cannot be parsed as an image."""
