"""Exception hierarchy shared by all partstore modules."""


class PartstoreError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(PartstoreError, ValueError):
    pass


# crypto
class AuthenticationFailure(PartstoreError):
    """Symmetric ciphertext failed its integrity check."""


class DecryptionFailure(PartstoreError):
    """Asymmetric ciphertext could not be opened with the given private key."""


# secret sharing
class InvalidSpec(PartstoreError, ValueError):
    pass


class CapacityExceeded(PartstoreError, ValueError):
    pass


class InvalidRate(PartstoreError, ValueError):
    pass


class InsufficientShares(PartstoreError):
    pass


class DuplicateShareIndex(PartstoreError):
    pass


class SchemeMismatch(PartstoreError):
    pass


# protocol
class MissingPeerKey(PartstoreError):
    def __init__(self, peer):
        super().__init__(f"no registered public keys for peer {peer!r}")
        self.peer = peer


class NoPeers(PartstoreError):
    pass


class OwnershipRejected(PartstoreError):
    pass


class UnknownUser(PartstoreError):
    pass


class ConfirmationRejected(PartstoreError):
    pass


class NotAPeer(PartstoreError):
    pass


class ReconstructionCorrupt(PartstoreError):
    """A reconstructed secret failed authenticated decryption (bad or forged shares)."""


class InvalidState(PartstoreError):
    pass
