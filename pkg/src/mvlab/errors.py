"""Exception types shared across the package."""


class ContractError(ValueError):
    """A precondition of an operation was violated (bad shapes, sizes, arguments)."""


class BlowUpError(RuntimeError):
    """A trajectory left the finite region: NaN/inf or |x| above the blow-up threshold."""

    def __init__(self, message, *, step=None, particle=None, time=None, system=None):
        super().__init__(message)
        self.step = step
        self.particle = particle
        self.time = time
        self.system = system


class NonFiniteCoefficientError(BlowUpError):
    """A coefficient or generator term evaluated to a non-finite value."""

    def __init__(self, message, *, time=None, x=None, component=None, term=None):
        super().__init__(message, time=time)
        self.x = x
        self.component = component
        self.term = term
