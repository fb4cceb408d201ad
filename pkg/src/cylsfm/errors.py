"""Exception types shared across the package."""


class CylSfmError(Exception):
    """Base class for all errors raised by cylsfm."""


class DegenerateRay(CylSfmError):
    """A point lies on (or too close to) the cylinder axis; azimuth undefined."""


class BadPad(CylSfmError):
    """Requested wrap padding exceeds the image width."""


class ShapeMismatch(CylSfmError):
    """Array shapes are inconsistent with the operation's contract."""


class EmptyMask(CylSfmError):
    """No valid pixel remains to average over."""


class NonPositiveDepth(CylSfmError):
    """Depth values must be strictly positive."""


class LengthMismatch(CylSfmError):
    """Paired sequences have different lengths."""


class Diverged(CylSfmError):
    """Optimization produced a non-finite loss or parameters."""


class CoverageGap(CylSfmError):
    """A panorama ray projects outside every cube face."""


class BadFov(CylSfmError):
    """Field of view must lie in (0, 360]."""


class TooFewFrames(CylSfmError):
    """Not enough frames to build a snippet sequence."""


class EyeInsideGeometry(CylSfmError):
    """Stereo eye radius reaches or exceeds the nearest scene geometry."""
