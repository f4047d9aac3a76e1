"""Exception hierarchy.

Every error raised deliberately by the library derives from
:class:`SphereAugError`, which is also a :class:`ValueError` so callers that
only care about bad input can catch that.
"""
from __future__ import annotations


class SphereAugError(ValueError):
    """Base class for library errors."""


class ZeroNorm(SphereAugError):
    pass


class DegeneratePlane(SphereAugError):
    """Two mean directions do not define a rotation plane.

    ``parallel`` is True when the directions coincide (identity is the
    continuous limit) and False when they are antipodal.
    """

    def __init__(self, message: str, parallel: bool = False):
        super().__init__(message)
        self.parallel = parallel


class DimensionMismatch(SphereAugError):
    pass


class InsufficientSamples(SphereAugError):
    pass


class InsufficientClasses(SphereAugError):
    pass


class MissingCenter(SphereAugError):
    pass


class EmptyClass(SphereAugError):
    pass


class UnknownClass(SphereAugError):
    pass


class ZeroWithinScatter(SphereAugError):
    pass


class NoEligibleTarget(SphereAugError):
    pass


class NoTailClasses(SphereAugError):
    pass


class NonFinite(SphereAugError):
    pass


class NoValidTriplets(SphereAugError):
    pass


class EmptyTestSet(SphereAugError):
    pass


class NoPositivePairs(EmptyTestSet):
    pass


class InfeasibleSeparation(SphereAugError):
    pass


class SchemaMismatch(SphereAugError):
    pass


class ConfigError(SphereAugError):
    pass
