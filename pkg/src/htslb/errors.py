"""Exception hierarchy. Every error raised on purpose by the package derives from HtslbError."""


class HtslbError(Exception):
    pass


class InvalidParameter(HtslbError, ValueError):
    """A configuration value lies outside its domain."""


class InfeasibleScaling(HtslbError, ValueError):
    """The capacity slack leaves no positive arrival rate."""


class InfeasibleMoments(HtslbError, ValueError):
    """No pmf on the requested support has the requested mean and variance."""


class InvalidSpec(HtslbError, ValueError):
    pass


class InvalidPolicyParams(HtslbError, ValueError):
    pass


class DegenerateLimit(HtslbError, ValueError):
    """The limiting exponential would have zero mean."""


class DivergenceGuard(HtslbError, RuntimeError):
    """A queue crossed the configured ceiling during simulation."""


class NonConvergence(HtslbError, RuntimeError):
    pass


class EmptySample(HtslbError, ValueError):
    pass


class DuplicateSeeds(HtslbError, ValueError):
    pass


class DuplicateN(HtslbError, ValueError):
    pass
