"""Independent reference implementations used as test oracles."""

import warnings

import pytest


def bitwise_crc32(data: bytes) -> int:
    """Bit-at-a-time reflected CRC-32 (poly 0xEDB88320), no lookup table."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def textbook_rc4(key: bytes):
    """Generator form of RC4, written straight from the algorithm description."""
    S = list(range(256))
    j = 0
    for i in range(256):
        j = (j + S[i] + key[i % len(key)]) % 256
        S[i], S[j] = S[j], S[i]
    i = j = 0
    while True:
        i = (i + 1) % 256
        j = (j + S[i]) % 256
        S[i], S[j] = S[j], S[i]
        yield S[(S[i] + S[j]) % 256]


def textbook_keystream(key: bytes, n: int) -> bytes:
    g = textbook_rc4(key)
    return bytes(next(g) for _ in range(n))


def library_rc4(key: bytes, n: int) -> bytes | None:
    """RC4 from the ``cryptography`` package (accepts 40..256-bit keys), or None if unavailable."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            from cryptography.hazmat.decrepit.ciphers.algorithms import ARC4
        except ImportError:
            try:
                from cryptography.hazmat.primitives.ciphers.algorithms import ARC4
            except ImportError:
                return None
        from cryptography.hazmat.primitives.ciphers import Cipher

        enc = Cipher(ARC4(key), mode=None).encryptor()
        return enc.update(bytes(n))


@pytest.fixture
def key13() -> bytes:
    return bytes.fromhex("0102030405060708090a0b0c0d")


# One line per acceptance criterion, collected by tests/test_acceptance.py.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
