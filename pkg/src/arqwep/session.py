"""ARQ-WEP sender and receiver state machines.

Every data frame carries a fresh random IV in its header, but the keystream is
seeded with ``v_e``: the XOR of the header IVs of all earlier frames Alice saw
acknowledged.  Bob keeps the matching sum ``v_d``.  Because Alice freezes
``v_e`` on a timeout, Bob can only ever be ahead of her by the one frame whose
ACK he does not know arrived, so two trial decryptions (with and without that
frame's IV) always suffice.

The encrypted plaintext of a data frame is ``AckHistory || message``; Bob uses
the history to drop frames whose ACKs Alice never received and to check that
his sum agrees with hers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

from .channel import STREAM_SENDER, ChannelRng, ChannelSet, ErasureTriple
from .errors import DesyncError, MalformedFrameError
from .keyshare import AckHistory
from .wep import IV_BITS, WepFrame, check_key, iv_from_bytes, iv_to_bytes, wep_decrypt, wep_encrypt

DEFAULT_RETRY_LIMIT = 7
INIT_FRAME_BYTES = 42
INIT_SUBTYPE = 0xA1


class Cipher(Protocol):
    def encrypt(self, plaintext: bytes, seed_iv: int, header_iv: int): ...

    def decrypt(self, frame, seed_iv: int) -> bytes | None: ...


class WepCipher:
    """Real RC4/CRC-32 WEP encryption under a fixed 104-bit key."""

    def __init__(self, key: bytes):
        self.key = check_key(key)

    def encrypt(self, plaintext: bytes, seed_iv: int, header_iv: int) -> WepFrame:
        return wep_encrypt(plaintext, seed_iv, header_iv, self.key)

    def decrypt(self, frame: WepFrame, seed_iv: int) -> bytes | None:
        return wep_decrypt(frame, seed_iv, self.key)


class SealedFrame(NamedTuple):
    header_iv: int
    plaintext: bytes
    seed_iv: int


class IdealCipher:
    """Idealised stand-in for WEP used by large simulations.

    Decryption succeeds exactly when the trial seed equals the encryption
    seed, i.e. RC4/CRC-32 without the 2^-32 false-accept floor.
    """

    def encrypt(self, plaintext: bytes, seed_iv: int, header_iv: int) -> SealedFrame:
        return SealedFrame(header_iv, plaintext, seed_iv)

    def decrypt(self, frame: SealedFrame, seed_iv: int) -> bytes | None:
        return frame.plaintext if frame.seed_iv == seed_iv else None


@dataclass(frozen=True)
class InitFrame:
    """Unencrypted initialization frame: a subtype byte and a header IV, nothing else."""

    header_iv: int

    def to_bytes(self) -> bytes:
        return bytes([INIT_SUBTYPE]) + iv_to_bytes(self.header_iv)

    @classmethod
    def from_bytes(cls, data: bytes) -> InitFrame:
        if len(data) != 4 or data[0] != INIT_SUBTYPE:
            raise MalformedFrameError("not an initialization frame")
        return cls(iv_from_bytes(data[1:]))


class _Outgoing:
    __slots__ = ("header_iv", "message", "attempts")

    def __init__(self, header_iv: int, message: bytes):
        self.header_iv = header_iv
        self.message = message
        self.attempts = 0


class SenderState:
    """Alice: keeps ``v_e``, the ACK history and the frame awaiting feedback."""

    def __init__(self, key: bytes, rng: ChannelRng, cipher: Cipher | None = None,
                 retry_limit: int = DEFAULT_RETRY_LIMIT):
        if retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        self.key = check_key(key)
        self.cipher = cipher if cipher is not None else WepCipher(self.key)
        self.retry_limit = retry_limit
        self.v_e = 0
        self.seq = 0
        self.history = AckHistory()
        self.abandoned = 0
        self.last_seed_iv: int | None = None
        self._rng = rng
        self._current: _Outgoing | None = None

    @property
    def effective_iv(self) -> int:
        return self.v_e

    @property
    def retransmission_pending(self) -> bool:
        return self._current is not None

    @property
    def last_header_iv(self) -> int | None:
        return None if self._current is None else self._current.header_iv

    def draw_iv(self) -> int:
        return self._rng.getrandbits(IV_BITS)

    def fold(self, ivs) -> None:
        """XOR acknowledged initialization IVs into ``v_e``."""
        for iv in ivs:
            self.v_e ^= iv

    def encrypt_next(self, message: bytes | None = None):
        """Build the next transmission attempt.

        A new ``message`` starts a new data frame with a fresh header IV; with
        ``message=None`` the pending frame is retransmitted under the same IV.
        """
        cur = self._current
        if cur is None:
            if message is None:
                raise ValueError("no pending frame to retransmit")
            cur = self._current = _Outgoing(self.draw_iv(), message)
        elif message is not None:
            raise ValueError("previous frame is still awaiting feedback")
        cur.attempts += 1
        self.last_seed_iv = self.v_e
        return self.cipher.encrypt(self.history.encode() + cur.message, self.v_e, cur.header_iv)

    def feedback(self, acked: bool) -> bool:
        """Apply ACK (Q=1) or timeout (Q=0) for the last attempt; True once the frame is finished."""
        cur = self._current
        if cur is None:
            raise RuntimeError("feedback without an outstanding frame")
        self.history.record(acked)
        seq = self.seq
        self.seq += 1
        if acked:
            self.v_e ^= cur.header_iv
            self.history.flush_to(seq)
            self._current = None
            return True
        if cur.attempts >= self.retry_limit:
            self.abandoned += 1
            self._current = None
            return True
        return False


class ReceiveResult(NamedTuple):
    message: bytes
    seq: int
    duplicate: bool
    seed_iv: int


class ReceiverState:
    """Bob: keeps the committed sum ``v_d`` and the one unconfirmed header IV."""

    def __init__(self, key: bytes, cipher: Cipher | None = None):
        self.key = check_key(key)
        self.cipher = cipher if cipher is not None else WepCipher(self.key)
        self.v_d = 0
        self.pending_iv: int | None = None
        self.pending_seq: int | None = None
        self.dropped = 0
        # per data-phase sequence number: seed that decrypted it / its header IV
        self._seed_at: dict[int, int] = {0: 0}
        self.received_ivs: dict[int, int] = {}

    @property
    def effective_iv(self) -> int:
        return self.v_d

    def fold(self, ivs) -> None:
        for iv in ivs:
            self.v_d ^= iv
        self._seed_at = {0: self.v_d}

    def try_decrypt(self, frame) -> ReceiveResult | None:
        """Trial-decrypt a data frame; None means drop (no ACK is sent)."""
        pending = self.pending_iv
        seed = None
        plaintext = None
        included = False
        if pending is not None:
            plaintext = self.cipher.decrypt(frame, self.v_d ^ pending)
            if plaintext is not None:
                seed, included = self.v_d ^ pending, True
        if plaintext is None:
            plaintext = self.cipher.decrypt(frame, self.v_d)
            if plaintext is None:
                self.dropped += 1
                return None
            seed = self.v_d
        history, message = AckHistory.decode(plaintext)
        seq = history.end

        if pending is not None and not included:
            # the pending frame's ACK was lost, so Alice never counted it
            self.received_ivs.pop(self.pending_seq, None)
        self._reconcile(history, seed)

        duplicate = pending is not None and not included and frame.header_iv == pending
        self.v_d = seed
        self.pending_iv = frame.header_iv
        self.pending_seq = seq
        self._seed_at[seq] = seed
        self.received_ivs[seq] = frame.header_iv
        return ReceiveResult(message, seq, duplicate, seed)

    def _reconcile(self, history: AckHistory, seed: int) -> None:
        base = history.base_seq
        if base not in self._seed_at:
            raise DesyncError(f"history base {base} precedes the receiver's window")
        expect = self._seed_at[base]
        for s in range(base, history.end):
            if history.get(s):
                iv = self.received_ivs.get(s)
                if iv is None:
                    raise DesyncError(f"sender counts frame {s} that the receiver never decrypted")
                expect ^= iv
            else:
                self.received_ivs.pop(s, None)
        if expect != seed:
            raise DesyncError("ACK history does not reproduce the decryption IV")
        for table in (self._seed_at, self.received_ivs):
            for s in [s for s in table if s < base]:
                del table[s]


def effective_iv(state: SenderState | ReceiverState) -> int:
    return state.effective_iv


class InitRecord(NamedTuple):
    header_iv: int
    triple: ErasureTriple
    received: bool


@dataclass
class InitPhaseResult:
    k_i: int
    records: list[InitRecord]
    report_attempts: int

    @property
    def acked_ivs(self) -> list[int]:
        return [r.header_iv for r in self.records if r.received]


def run_init_phase(sender: SenderState, receiver: ReceiverState, channels: ChannelSet,
                   n_init: int) -> InitPhaseResult:
    """Send ``n_init`` cleartext initialization frames as one burst.

    Each frame occupies its own slot and is sent once.  Bob then answers with a
    bitmap of the frames he received (the custom NACK), repeated until it gets
    through, so both ends fold exactly the IVs Bob received.
    """
    if n_init < 0:
        raise ValueError("n_init must be >= 0")
    records = []
    for _ in range(n_init):
        iv = sender.draw_iv()
        triple = channels.next_slot()
        records.append(InitRecord(iv, triple, channels.to_bob(triple)))
    attempts = 0
    if n_init:
        while True:
            attempts += 1
            if channels.to_alice(channels.next_slot()):
                break
    result = InitPhaseResult(sum(r.received for r in records), records, attempts)
    ivs = result.acked_ivs
    sender.fold(ivs)
    receiver.fold(ivs)
    return result


def new_pair(key: bytes, seed: int, cipher: Cipher | None = None,
             retry_limit: int = DEFAULT_RETRY_LIMIT) -> tuple[SenderState, ReceiverState]:
    """A fresh sender/receiver pair sharing ``key``; the sender draws IVs from stream ``(seed, SENDER)``."""
    rng = ChannelRng(seed, STREAM_SENDER)
    cipher = cipher if cipher is not None else WepCipher(key)
    return SenderState(key, rng, cipher, retry_limit), ReceiverState(key, cipher)
