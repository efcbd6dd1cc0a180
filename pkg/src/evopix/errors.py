"""Exception types raised by the public API.

Everything derives from ValueError so callers that do not care about the
distinction can catch broadly.
"""


class EvopixError(ValueError):
    """Base class for all evopix errors."""


# --- architecture parsing / network construction ---
class UnknownToken(EvopixError):
    pass


class MissingSoftmaxTerminal(EvopixError):
    pass


class NonPositiveExtent(EvopixError):
    pass


class EvenKernel(EvopixError):
    pass


class ShapeUnderflow(EvopixError):
    pass


class ShapeMismatch(EvopixError):
    pass


class EmptyDataset(EvopixError):
    pass


# --- optimizers / training ---
class LengthMismatch(EvopixError):
    pass


# --- CMA-ES ---
class BadDimension(EvopixError):
    pass


class PopulationSizeMismatch(EvopixError):
    pass


class NonFiniteFitness(EvopixError):
    pass


class NoHistory(EvopixError):
    pass


class EigenFailure(Warning):
    """Eigendecomposition failed; a diagonal repair was applied."""


# --- perturbations ---
class TooManyPixels(EvopixError):
    pass


class ClassRowOverflow(EvopixError):
    pass


class ClassCountMismatch(EvopixError):
    pass


class SizeMismatch(EvopixError):
    pass


# --- dataset files ---
class BadMagic(EvopixError):
    pass


class CountMismatch(EvopixError):
    pass


class TruncatedFile(EvopixError):
    pass


# --- analysis ---
class ArchitectureMismatch(EvopixError):
    pass
