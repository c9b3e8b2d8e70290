"""Ed25519 wallet keys and detached signatures over canonical bytes."""

from __future__ import annotations

import hashlib
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .canonical import canonical_bytes


class KeyPair:
    """An Ed25519 keypair.  Private bytes never leave this object."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        raw = private.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        self.public_hex: str = raw.hex()

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, root_seed: int, label: str) -> "KeyPair":
        """Deterministic keypair for reproducible simulations."""
        raw = hashlib.sha256(f"key/{root_seed}/{label}".encode("utf-8")).digest()
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def sign(self, message: bytes) -> str:
        return self._private.sign(message).hex()

    def sign_obj(self, obj: Any) -> str:
        return self.sign(canonical_bytes(obj))

    def __repr__(self) -> str:  # never expose private material
        return f"KeyPair(public={self.public_hex[:16]}...)"


def verify_signature(message: bytes, signature_hex: str, public_hex: str) -> bool:
    """True iff signature_hex is a valid detached signature by public_hex."""
    try:
        public = Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_hex))
        public.verify(bytes.fromhex(signature_hex), message)
        return True
    except (InvalidSignature, ValueError):
        return False


def verify_signature_obj(obj: Any, signature_hex: str, public_hex: str) -> bool:
    return verify_signature(canonical_bytes(obj), signature_hex, public_hex)
