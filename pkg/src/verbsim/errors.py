"""Exception hierarchy for the simulated Verbs stack."""


class VerbsError(Exception):
    """Base class for every error raised by verbsim."""


class UnknownProfile(VerbsError, KeyError):
    pass


class DeviceUarExhausted(VerbsError):
    """The NIC has no UAR pages left for a new context or thread domain."""


class DynamicUarLimit(VerbsError):
    """A context already holds the maximum number of dynamically allocated UARs."""


class IndependentPathLimit(VerbsError):
    """A context already holds the maximum number of sharing=1 thread domains."""


class QpLimitExceeded(VerbsError):
    pass


class CqLimitExceeded(VerbsError):
    pass


class CrossCtxAssociation(VerbsError):
    """Objects from different device contexts were combined."""


class EmptyRange(VerbsError, ValueError):
    pass


class QpDepthExceeded(VerbsError):
    pass


class UnregisteredAddress(VerbsError):
    """A payload address is not covered by any MR of the QP's protection domain."""


class InlineTooLarge(VerbsError, ValueError):
    pass


class InvalidBatch(VerbsError, ValueError):
    """A post batch violates a submission rule (empty list, illegal BlueFlame)."""


class SignalingViolation(VerbsError):
    """More consecutive unsignaled WQEs than the send queue can hold."""


class InfeasiblePlan(VerbsError):
    def __init__(self, violations):
        self.violations = list(violations)
        kinds = ", ".join(v.kind for v in self.violations)
        super().__init__(f"plan violates device limits: {kinds}")
