"""Exception hierarchy shared across the package."""


class MuscleSegError(Exception):
    """Base class for every error raised by muscleseg."""


# --- volume io -------------------------------------------------------------

class NiftiError(MuscleSegError, ValueError):
    pass


class BadMagic(NiftiError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class UnsupportedDims(NiftiError):
    pass


class Truncated(NiftiError):
    pass


class NonFinite(NiftiError):
    pass


class RangeOverflow(NiftiError):
    pass


class InvalidDtype(NiftiError):
    pass


class InvalidGeometry(MuscleSegError, ValueError):
    pass


class GeometryMismatch(MuscleSegError, ValueError):
    pass


# --- preprocessing ---------------------------------------------------------

class InvalidSize(MuscleSegError, ValueError):
    pass


class SliceCountMismatch(MuscleSegError, ValueError):
    pass


# --- curation --------------------------------------------------------------

class DuplicateSeriesId(MuscleSegError, ValueError):
    pass


class EmptyCohort(MuscleSegError, ValueError):
    pass


# --- metrics / analysis ----------------------------------------------------

class InvalidThreshold(MuscleSegError, ValueError):
    pass


class EmptyInput(MuscleSegError, ValueError):
    pass


class TooFewMaps(MuscleSegError, ValueError):
    pass


class NonPositiveHeight(MuscleSegError, ValueError):
    pass


class TooFewPoints(MuscleSegError, ValueError):
    pass


class ConstantInput(MuscleSegError, ValueError):
    pass


class AllZeroDifferences(MuscleSegError, ValueError):
    pass


class InvalidConfig(MuscleSegError, ValueError):
    pass
