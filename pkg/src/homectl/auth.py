"""Expiring-salt challenge handshake and per-request credential hashing.

Flow: a client that knows the special code asks for a magic number; the
server answers with the magic sealed under a keystream only configured
clients can derive.  Every later request carries
``SHA-256(username:password:magic_hex)`` and validates only while the magic
is unexpired.  Nothing password-shaped ever crosses the wire.

The XOR sealing and the recoverable credential vault are deliberately
minimal: adequate for a desk-scale deployment on a trusted LAN, NOT a
substitute for transport security.  The scheme itself forces the server to
keep password-equivalent material; it is stored sealed under a local salt
and that limitation is documented in the README.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable

__all__ = [
    "DEFAULT_TTL",
    "AuthRefused",
    "MagicSession",
    "Verdict",
    "Authenticator",
    "CredentialVault",
    "compute_credential_hash",
    "seal_magic",
    "unseal_magic",
    "constant_time_equal",
]

DEFAULT_TTL = 300.0  # seconds a magic number stays valid

MAGIC_BYTES = 16  # 128-bit magic
MAGIC_HEX_LEN = MAGIC_BYTES * 2


class AuthRefused(Exception):
    """Handshake refused; the wire layer renders this as a generic error."""


class Verdict(str, Enum):
    ALLOW = "allow"
    DENY_EXPIRED = "deny_expired"
    DENY_BAD_HASH = "deny_bad_hash"
    DENY_UNKNOWN = "deny_unknown"


@dataclass(frozen=True)
class MagicSession:
    client_id: str
    magic_hex: str
    issued_at: float
    ttl: float = DEFAULT_TTL

    def expired(self, now: float) -> bool:
        return now - self.issued_at > self.ttl


def _sha256_hex(data: str) -> str:
    return hashlib.sha256(data.encode("utf-8")).hexdigest()


def _keystream(key: bytes, length: int) -> bytes:
    """Counter-mode SHA-256 expansion of ``key`` to ``length`` bytes."""
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(key + counter.to_bytes(4, "big")).digest())
        counter += 1
    return bytes(out[:length])


def _xor(data: bytes, stream: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(data, stream))


def constant_time_equal(a: str, b: str) -> bool:
    """Equality that scans the full length regardless of where a mismatch
    occurs, so the comparison time leaks nothing about the digest."""
    if len(a) != len(b):
        return False
    diff = 0
    for x, y in zip(a, b):
        diff |= ord(x) ^ ord(y)
    return diff == 0


def compute_credential_hash(username: str, password: str, magic_hex: str) -> str:
    """Per-request credential digest salted by the current magic number."""
    if len(magic_hex) != MAGIC_HEX_LEN or any(
        c not in "0123456789abcdef" for c in magic_hex.lower()
    ):
        raise ValueError(f"magic must be {MAGIC_HEX_LEN} hex chars")
    return _sha256_hex(f"{username}:{password}:{magic_hex.lower()}")


def _seal_key(shared_secret: str, client_id: str) -> bytes:
    return hashlib.sha256(f"magic-seal|{shared_secret}|{client_id}".encode()).digest()


def seal_magic(magic_hex: str, shared_secret: str, client_id: str) -> str:
    """XOR the magic with a keystream only configured clients can derive."""
    stream = _keystream(_seal_key(shared_secret, client_id), MAGIC_BYTES)
    return _xor(bytes.fromhex(magic_hex), stream).hex()


def unseal_magic(sealed_hex: str, shared_secret: str, client_id: str) -> str:
    """Inverse of :func:`seal_magic` (XOR sealing is symmetric)."""
    if len(sealed_hex) != MAGIC_HEX_LEN:
        raise ValueError(f"sealed magic must be {MAGIC_HEX_LEN} hex chars")
    return seal_magic(sealed_hex, shared_secret, client_id)


class CredentialVault:
    """Recoverable credential storage sealed under a server-local salt.

    The expiring-salt scheme requires recomputing the salted digest, so a
    one-way hash cannot serve alone; the vault keeps the password XORed
    with a salt-derived keystream (recoverable, never plaintext at rest)
    next to a one-way verifier for direct password checks.
    """

    def __init__(self, storage_salt: str = "homectl-local-salt"):
        self._salt = storage_salt

    def _user_key(self, username: str) -> bytes:
        return hashlib.sha256(f"vault|{self._salt}|{username}".encode()).digest()

    def seal(self, username: str, password: str) -> str:
        raw = password.encode("utf-8")
        return _xor(raw, _keystream(self._user_key(username), len(raw))).hex()

    def unseal(self, username: str, sealed_hex: str) -> str:
        raw = bytes.fromhex(sealed_hex)
        return _xor(raw, _keystream(self._user_key(username), len(raw))).decode("utf-8")

    def verifier(self, username: str, password: str) -> str:
        return _sha256_hex(f"verify|{self._salt}|{username}|{password}")


class Authenticator:
    """Session table plus the verify gate every request passes through.

    ``secret_lookup`` resolves a username to its vault-sealed credential;
    the store provides it so users survive persistence round-trips.
    """

    def __init__(
        self,
        secret_lookup: Callable[[str], str | None],
        vault: CredentialVault,
        special_code: str,
        shared_secret: str,
        ttl: float = DEFAULT_TTL,
    ):
        self._secret_lookup = secret_lookup
        self._vault = vault
        self._special_code = special_code
        self._shared_secret = shared_secret
        self._ttl = ttl
        self._sessions: dict[str, MagicSession] = {}
        self._lock = threading.Lock()

    @property
    def ttl(self) -> float:
        return self._ttl

    def issue_magic(self, client_id: str, special_code: str, now: float) -> str:
        """Start a session and return the sealed magic for the wire.

        A wrong special code raises :class:`AuthRefused`; the wire layer
        collapses that into the same generic error as every other denial.
        """
        if not client_id:
            raise AuthRefused("missing client id")
        if special_code != self._special_code:
            raise AuthRefused("bad special code")
        magic_hex = secrets.token_bytes(MAGIC_BYTES).hex()
        with self._lock:
            self._sessions[client_id] = MagicSession(client_id, magic_hex, now, self._ttl)
        return seal_magic(magic_hex, self._shared_secret, client_id)

    def session_for(self, client_id: str) -> MagicSession | None:
        with self._lock:
            return self._sessions.get(client_id)

    def verify(self, client_id: str, username: str, presented_hash: str, now: float) -> Verdict:
        """Gatekeeper for every authenticated request.

        All outcomes are return values; the wire layer maps every deny to
        one indistinguishable error line.
        """
        with self._lock:
            session = self._sessions.get(client_id)
        if session is None:
            return Verdict.DENY_UNKNOWN
        sealed = self._secret_lookup(username)
        if sealed is None:
            return Verdict.DENY_UNKNOWN
        if session.expired(now):
            return Verdict.DENY_EXPIRED
        password = self._vault.unseal(username, sealed)
        expected = compute_credential_hash(username, password, session.magic_hex)
        if constant_time_equal(expected, presented_hash):
            return Verdict.ALLOW
        return Verdict.DENY_BAD_HASH
