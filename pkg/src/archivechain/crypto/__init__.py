"""Hashing and digital signatures shared by the ledger, guard, CA, and node.

The hash is fixed (512-bit, 64-byte digests); signature schemes dispatch on
a scheme id so the default curve can be swapped without touching callers.
Message bytes passed to sign/verify are always a canonical binary encoding
produced by the ledger or CA modules, never a display form.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ec
from .streebog import DIGEST_SIZE, streebog512

ZERO_DIGEST = bytes(DIGEST_SIZE)

MIN_ENTROPY_BYTES = 64
PRIVATE_KEY_BYTES = ec.COORD_BYTES
PUBLIC_KEY_BYTES = ec.PUBLIC_KEY_BYTES

DEFAULT_SCHEME = ec.CURVE_ID


class CryptoError(Exception):
    """Base error for key handling problems."""


class InsufficientEntropy(CryptoError):
    """keygen needs at least MIN_ENTROPY_BYTES of entropy."""


class InvalidKey(CryptoError):
    """Key material rejected by a signature scheme."""


class UnknownScheme(CryptoError):
    """No signature scheme registered under this id."""


def digest(message: bytes) -> bytes:
    """64-byte hash of arbitrary message bytes (empty input allowed)."""
    return streebog512(message)


@dataclass(frozen=True)
class SignatureValue:
    """Signature bytes tagged with the scheme that produced them."""

    bytes: bytes
    scheme_id: str = DEFAULT_SCHEME

    def to_bytes(self) -> bytes:
        ident = self.scheme_id.encode("ascii")
        if len(ident) > 255:
            raise ValueError("scheme id too long")
        return bytes([len(ident)]) + ident + self.bytes

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SignatureValue":
        if not raw:
            raise ValueError("empty signature encoding")
        n = raw[0]
        if len(raw) < 1 + n:
            raise ValueError("truncated signature encoding")
        return cls(bytes=raw[1 + n :], scheme_id=raw[1 : 1 + n].decode("ascii"))


@dataclass(frozen=True)
class KeyPair:
    """Private scalar plus the matching public point, bound to a curve id."""

    private_key: int
    public_key: tuple[int, int]
    curve_id: str = DEFAULT_SCHEME

    def public_bytes(self) -> bytes:
        x, y = self.public_key
        return x.to_bytes(ec.COORD_BYTES, "big") + y.to_bytes(ec.COORD_BYTES, "big")

    def private_bytes(self) -> bytes:
        return self.private_key.to_bytes(PRIVATE_KEY_BYTES, "big")

    @classmethod
    def from_private_bytes(
        cls, raw: bytes, scheme_id: str = DEFAULT_SCHEME
    ) -> "KeyPair":
        if len(raw) != PRIVATE_KEY_BYTES:
            raise InvalidKey(f"private key must be {PRIVATE_KEY_BYTES} bytes")
        scheme = get_scheme(scheme_id)
        private = int.from_bytes(raw, "big")
        if not 0 < private < ec.Q:
            raise InvalidKey("private scalar out of range")
        return cls(private, scheme.public_point(private), scheme_id)


_SCHEMES: dict[str, ec.EcScheme] = {ec.CURVE_ID: ec.EcScheme()}


def get_scheme(scheme_id: str) -> ec.EcScheme:
    try:
        return _SCHEMES[scheme_id]
    except KeyError:
        raise UnknownScheme(scheme_id) from None


def keygen(entropy: bytes, scheme_id: str = DEFAULT_SCHEME) -> KeyPair:
    """Derive a keypair from caller-supplied entropy (>= 64 bytes)."""
    if len(entropy) < MIN_ENTROPY_BYTES:
        raise InsufficientEntropy(
            f"need at least {MIN_ENTROPY_BYTES} bytes of entropy, got {len(entropy)}"
        )
    scheme = get_scheme(scheme_id)
    private = scheme.derive_private(entropy)
    return KeyPair(private, scheme.public_point(private), scheme_id)


def sign(keypair: KeyPair, message: bytes) -> SignatureValue:
    scheme = get_scheme(keypair.curve_id)
    try:
        raw = scheme.sign(keypair.private_key, message)
    except ec.InvalidKey as exc:
        raise InvalidKey(str(exc)) from None
    return SignatureValue(bytes=raw, scheme_id=keypair.curve_id)


def verify(public_key: bytes, message: bytes, sig: SignatureValue) -> bool:
    """True iff sig was produced over exactly these bytes by the paired key.

    Malformed inputs yield False, never an exception.
    """
    try:
        scheme = get_scheme(sig.scheme_id)
    except UnknownScheme:
        return False
    try:
        return scheme.verify(public_key, message, sig.bytes)
    except (ValueError, TypeError):
        return False
