"""Exception types shared across the qwzmem modules.

Every domain failure raises one of these instead of a bare ValueError so
that callers (and the CLI exit-code mapping) can tell configuration
mistakes apart from genuine physical edge cases such as a closed gap.
"""


class QwzmemError(Exception):
    """Base class for all library-specific errors."""


class ConfigError(QwzmemError):
    """Invalid run configuration (bad key, out-of-range value, missing file)."""


class GaugeSingularity(QwzmemError):
    """A gauge eigenvector formula degenerates at one or more grid nodes.

    Carries the offending nodes as a list of (i, j) grid indices.
    """

    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = list(nodes) if nodes is not None else []


class CriticalMass(QwzmemError):
    """The mass parameter sits on a gap-closing point where the requested
    quantity is undefined."""


class SingularField(QwzmemError):
    """A link overlap used for the discrete connection is numerically zero."""


class SingularPlaquette(QwzmemError):
    """A plaquette Wilson loop contains a numerically zero link."""


class UndefinedPhaseOnLoop(QwzmemError):
    """The transition phase is undefined on at least one loop sample."""


class GapClosed(QwzmemError):
    """The post-quench gap vanishes at the probe momentum."""


class InsufficientCycles(QwzmemError):
    """Fewer vorticity flips were observed than needed for a period estimate."""


class UnmatchedFlip(QwzmemError):
    """A vorticity flip has no nearby Loschmidt sign change to pair with."""


class AmbiguousBranch(QwzmemError):
    """Both branch candidates of the inverted period law are admissible."""
