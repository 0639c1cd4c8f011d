"""Exception hierarchy shared by the library and the simulator."""


class TrustGossipError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(TrustGossipError, ValueError):
    pass


class DecodeError(TrustGossipError, ValueError):
    pass


class ConnectRefusedError(TrustGossipError):
    """A peer's certificate was rejected while connecting in permissioned mode."""


class IncompatibleProtocolsError(TrustGossipError):
    """The two peers share no attestation protocol."""


class UnauthorisedError(TrustGossipError):
    pass


class RevokedError(TrustGossipError):
    pass


class EpochOutOfRangeError(TrustGossipError):
    pass


class StaleKeyError(TrustGossipError):
    pass


class DegenerateGraphError(TrustGossipError):
    pass
