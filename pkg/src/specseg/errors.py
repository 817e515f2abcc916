"""Exception types shared across the package."""


class SpecsegError(Exception):
    """Base class for all package-specific errors."""


class FormatError(SpecsegError, ValueError):
    """A file does not conform to its expected on-disk layout."""


class CapacityError(SpecsegError, ValueError):
    """Declared dimensions exceed what this build is willing to allocate."""


class DataError(SpecsegError, ValueError):
    """Values violate a data invariant (non-finite, out of range)."""


class ShapeError(SpecsegError, ValueError):
    """Operands have incompatible dimensions."""


class DegenerateFeatureError(SpecsegError, ValueError):
    """A feature row has zero norm and cannot be direction-normalized."""


class DegenerateGraphError(SpecsegError, ValueError):
    """The affinity graph contains an isolated node."""


class SolverError(SpecsegError, RuntimeError):
    """A solver failed to reach the requested accuracy."""


class DescriptorError(SpecsegError, ValueError):
    """A segment descriptor cannot be assembled from the available inputs."""


class ManifestError(SpecsegError, ValueError):
    """A dataset manifest is malformed."""


class ConfigError(SpecsegError, ValueError):
    """A configuration file or parameter value is invalid."""
