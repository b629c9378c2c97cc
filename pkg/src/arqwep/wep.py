"""Classic WEP frame cryptography: RC4 keystream, CRC-32 ICV, frame encrypt/decrypt.

The encryption seed is ``iv (3 bytes, little-endian) || key (13 bytes)``.  The
seed IV and the IV carried in the frame header are separate arguments so the
same primitives serve both classic WEP (equal IVs) and ARQ-WEP, where the
header carries a fresh random IV while the keystream is seeded with the
accumulated one.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import InvalidSeedError, MalformedFrameError

IV_BITS = 24
IV_MASK = (1 << IV_BITS) - 1
KEY_BYTES = 13
ICV_BYTES = 4

_LEN = struct.Struct("<I")


def check_iv(iv: int) -> int:
    if not 0 <= iv <= IV_MASK:
        raise ValueError(f"IV out of 24-bit range: {iv!r}")
    return iv


def check_key(key: bytes) -> bytes:
    if len(key) != KEY_BYTES:
        raise ValueError(f"WEP-104 key must be {KEY_BYTES} bytes, got {len(key)}")
    return bytes(key)


def iv_to_bytes(iv: int) -> bytes:
    return check_iv(iv).to_bytes(3, "little")


def iv_from_bytes(data: bytes) -> int:
    if len(data) != 3:
        raise MalformedFrameError("IV field must be 3 bytes")
    return int.from_bytes(data, "little")


def crc32_icv(message: bytes) -> bytes:
    """IEEE CRC-32 of ``message`` as the 4-byte little-endian wire ICV."""
    return _LEN.pack(zlib.crc32(message) & 0xFFFFFFFF)


def rc4_ksa(seed: bytes) -> list[int]:
    """Key-scheduling: return the 256-entry permutation produced from ``seed``."""
    n = len(seed)
    if not 1 <= n <= 256:
        raise InvalidSeedError(f"RC4 seed must be 1..256 bytes, got {n}")
    s = list(range(256))
    j = 0
    for i in range(256):
        si = s[i]
        j = (j + si + seed[i % n]) & 0xFF
        s[i] = s[j]
        s[j] = si
    return s


def rc4_keystream(seed: bytes, length: int) -> bytes:
    s = rc4_ksa(seed)
    out = bytearray(length)
    i = j = 0
    for n in range(length):
        i = (i + 1) & 0xFF
        si = s[i]
        j = (j + si) & 0xFF
        sj = s[j]
        s[i] = sj
        s[j] = si
        out[n] = s[(si + sj) & 0xFF]
    return bytes(out)


def _xor(data: bytes, stream: bytes) -> bytes:
    n = len(data)
    return (int.from_bytes(data, "little") ^ int.from_bytes(stream, "little")).to_bytes(n, "little")


@dataclass(frozen=True)
class WepFrame:
    """The on-air unit: cleartext header IV plus RC4-encrypted ``message || ICV``."""

    header_iv: int
    ciphertext: bytes

    def __post_init__(self) -> None:
        check_iv(self.header_iv)
        if len(self.ciphertext) < ICV_BYTES:
            raise MalformedFrameError("ciphertext shorter than the 4-byte ICV")

    def to_bytes(self) -> bytes:
        """Trace wire layout: IV (3, LE) | ciphertext length (4, LE) | ciphertext."""
        return iv_to_bytes(self.header_iv) + _LEN.pack(len(self.ciphertext)) + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> WepFrame:
        frame, rest = cls.read(data)
        if rest:
            raise MalformedFrameError(f"{len(rest)} trailing bytes after frame")
        return frame

    @classmethod
    def read(cls, data: bytes) -> tuple[WepFrame, bytes]:
        """Parse one frame from the front of ``data``; return it and the remainder."""
        if len(data) < 7:
            raise MalformedFrameError("truncated frame header")
        iv = iv_from_bytes(data[:3])
        (n,) = _LEN.unpack_from(data, 3)
        body = data[7 : 7 + n]
        if len(body) != n:
            raise MalformedFrameError(f"declared ciphertext length {n}, have {len(body)}")
        return cls(iv, body), data[7 + n :]


def wep_encrypt(message: bytes, seed_iv: int, header_iv: int, key: bytes) -> WepFrame:
    plaintext = message + crc32_icv(message)
    stream = rc4_keystream(iv_to_bytes(seed_iv) + check_key(key), len(plaintext))
    return WepFrame(header_iv, _xor(plaintext, stream))


def wep_decrypt(frame: WepFrame, seed_iv: int, key: bytes) -> bytes | None:
    """Decrypt with the given seed IV; return the message, or None on ICV mismatch."""
    ct = frame.ciphertext
    if len(ct) < ICV_BYTES:
        raise MalformedFrameError("ciphertext shorter than the 4-byte ICV")
    plaintext = _xor(ct, rc4_keystream(iv_to_bytes(seed_iv) + check_key(key), len(ct)))
    message, icv = plaintext[:-ICV_BYTES], plaintext[-ICV_BYTES:]
    if crc32_icv(message) != icv:
        return None
    return message
