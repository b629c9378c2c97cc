"""ARQ key sharing with modulo-2 distillation.

Alice sends frames of ``n1`` uniformly random bits.  Frames Bob acknowledges
(and whose ACK reaches Alice) are kept; a timed-out frame is discarded and a
fresh random frame takes its place.  The key is the XOR of the first ``k``
accepted frames.

Lost ACKs would leave Bob holding a frame Alice discarded.  Every frame
therefore carries Alice's ACK/NACK history since the last flush, and Bob
reconciles his accepted set against it.  In the ``rich_feedback`` variant
Bob's ACK instead repeats every reception Alice has not yet confirmed, so no
received frame is ever wasted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .channel import ChannelRng
from .errors import DesyncError, IncompleteKeyError, MalformedFrameError, ProtocolCompleteError

MAX_HISTORY = 255
DEFAULT_N1 = 24

_HDR = struct.Struct("<IB")


@dataclass
class AckHistory:
    """ACK (1) / NACK (0) bits for sequence numbers ``base_seq .. base_seq+len(bits)-1``."""

    base_seq: int = 0
    bits: list[bool] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.base_seq + len(self.bits)

    def record(self, acked: bool) -> None:
        if len(self.bits) >= MAX_HISTORY:
            raise DesyncError(f"more than {MAX_HISTORY} outstanding ACK/NACK entries")
        self.bits.append(bool(acked))

    def flush_to(self, seq: int) -> None:
        """Drop entries before ``seq``; the peer is known to hold them."""
        if seq < self.base_seq:
            return
        del self.bits[: seq - self.base_seq]
        self.base_seq = seq

    def get(self, seq: int) -> bool:
        return self.bits[seq - self.base_seq]

    def copy(self) -> AckHistory:
        return AckHistory(self.base_seq, list(self.bits))

    def encode(self) -> bytes:
        n = len(self.bits)
        bitmap = 0
        for i, b in enumerate(self.bits):
            if b:
                bitmap |= 1 << i
        return _HDR.pack(self.base_seq, n) + bitmap.to_bytes((n + 7) // 8, "little")

    @classmethod
    def decode(cls, data: bytes) -> tuple[AckHistory, bytes]:
        """Parse a history from the front of ``data``; return it and the remainder."""
        if len(data) < _HDR.size:
            raise MalformedFrameError("truncated ACK history")
        base, n = _HDR.unpack_from(data)
        nbytes = (n + 7) // 8
        raw = data[_HDR.size : _HDR.size + nbytes]
        if len(raw) != nbytes:
            raise MalformedFrameError("truncated ACK history bitmap")
        bitmap = int.from_bytes(raw, "little")
        return cls(base, [bool(bitmap >> i & 1) for i in range(n)]), data[_HDR.size + nbytes :]


@dataclass(frozen=True)
class KeyFrame:
    seq: int
    payload: int
    history: AckHistory


@dataclass(frozen=True)
class KeyAccumulator:
    k: int
    acc: int = 0
    count: int = 0


def accumulate(acc: KeyAccumulator, payload: int) -> KeyAccumulator:
    if acc.count >= acc.k:
        raise ProtocolCompleteError("accumulator already holds k frames")
    return KeyAccumulator(acc.k, acc.acc ^ payload, acc.count + 1)


def distill_key(acc: KeyAccumulator) -> int:
    if acc.count != acc.k:
        raise IncompleteKeyError(f"{acc.count} of {acc.k} frames accepted")
    return acc.acc


def _xor_first_k(frames: dict[int, int], k: int) -> int:
    key = 0
    for seq in sorted(frames)[:k]:
        key ^= frames[seq]
    return key


class KeyShareAlice:
    def __init__(self, k: int, rng: ChannelRng, n1: int = DEFAULT_N1, rich_feedback: bool = False):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= n1 <= 128:
            raise ValueError("n1 must be in 1..128")
        self.k = k
        self.n1 = n1
        self.rich_feedback = rich_feedback
        self._rng = rng
        self.seq = 0
        self.history = AckHistory()
        self.acc = KeyAccumulator(k)
        self.outstanding: KeyFrame | None = None
        self._unconfirmed: dict[int, int] = {}
        self._accepted: dict[int, int] = {}

    @property
    def accepted_count(self) -> int:
        return len(self._accepted) if self.rich_feedback else self.acc.count

    @property
    def done(self) -> bool:
        return self.accepted_count >= self.k

    @property
    def accepted_seqs(self) -> list[int]:
        return sorted(self._accepted)[: self.k]

    def next_frame(self) -> KeyFrame:
        """Draw a fresh uniform payload for the next transmission attempt."""
        if self.done:
            raise ProtocolCompleteError("key already complete")
        frame = KeyFrame(self.seq, self._rng.getrandbits(self.n1), self.history.copy())
        self.outstanding = frame
        self.seq += 1
        return frame

    def feedback(self, acked: bool, ack_seqs: tuple[int, ...] = ()) -> None:
        """Apply the ACK/timeout outcome of the outstanding frame.

        ``ack_seqs`` is only used with rich feedback: the sequence numbers of
        every reception Bob reports, including ones whose earlier ACKs were lost.
        """
        frame = self.outstanding
        if frame is None:
            raise RuntimeError("feedback without an outstanding frame")
        self.outstanding = None
        if self.rich_feedback:
            self._unconfirmed[frame.seq] = frame.payload
            if acked:
                for s in ack_seqs:
                    if s not in self._unconfirmed and s not in self._accepted:
                        raise DesyncError(f"ACK names unknown frame {s}")
                    if s in self._unconfirmed:
                        self._accepted[s] = self._unconfirmed.pop(s)
                # anything older than the acked frame that Bob did not report was lost
                for s in [s for s in self._unconfirmed if s <= frame.seq]:
                    del self._unconfirmed[s]
            self.history.record(acked)
            if acked:
                self.history.flush_to(frame.seq)
            return
        self.history.record(acked)
        if acked:
            self.acc = accumulate(self.acc, frame.payload)
            self._accepted[frame.seq] = frame.payload
            self.history.flush_to(frame.seq)

    def distill(self) -> int:
        if self.rich_feedback:
            if not self.done:
                raise IncompleteKeyError(f"{self.accepted_count} of {self.k} frames accepted")
            return _xor_first_k(self._accepted, self.k)
        return distill_key(self.acc)


class KeyShareBob:
    def __init__(self, k: int, rich_feedback: bool = False):
        self.k = k
        self.rich_feedback = rich_feedback
        self.confirmed = KeyAccumulator(k)
        self._confirmed_seqs: set[int] = set()
        self._all_confirmed: list[int] = []
        self.tentative: tuple[int, int] | None = None
        self._received: dict[int, int] = {}
        self._reported: set[int] = set()

    @property
    def accepted_seqs(self) -> list[int]:
        if self.rich_feedback:
            return sorted(self._received)[: self.k]
        seqs = list(self._all_confirmed)
        if self.tentative is not None:
            seqs.append(self.tentative[0])
        return seqs

    @property
    def accepted_count(self) -> int:
        if self.rich_feedback:
            return len(self._received)
        return self.confirmed.count + (self.tentative is not None)

    def resync_on_history(self, history: AckHistory) -> None:
        """Correct the accepted set to exactly the frames Alice marked ACKed."""
        if self.rich_feedback:
            for s in range(history.base_seq, history.end):
                if history.get(s):
                    self._reported.add(s)
            return
        if self.tentative is not None:
            seq, payload = self.tentative
            if not history.base_seq <= seq < history.end:
                raise DesyncError(f"history [{history.base_seq}, {history.end}) does not cover frame {seq}")
            if history.get(seq):
                self.confirmed = accumulate(self.confirmed, payload)
                self._confirmed_seqs.add(seq)
                self._all_confirmed.append(seq)
            self.tentative = None
        for s in range(history.base_seq, history.end):
            if history.get(s) != (s in self._confirmed_seqs):
                raise DesyncError(f"history disagrees with receiver on frame {s}")
        self._confirmed_seqs = {s for s in self._confirmed_seqs if s >= history.base_seq}

    def receive(self, frame: KeyFrame) -> tuple[int, ...]:
        """Accept a delivered frame; returns the sequence numbers the ACK reports."""
        self.resync_on_history(frame.history)
        if self.rich_feedback:
            self._received[frame.seq] = frame.payload
            return tuple(s for s in sorted(self._received) if s not in self._reported)
        if self.confirmed.count >= self.k:
            raise ProtocolCompleteError("receiver already holds k confirmed frames")
        self.tentative = (frame.seq, frame.payload)
        return (frame.seq,)

    def distill(self) -> int:
        if self.rich_feedback:
            if len(self._received) < self.k:
                raise IncompleteKeyError(f"{len(self._received)} of {self.k} frames received")
            return _xor_first_k(self._received, self.k)
        if self.tentative is None:
            return distill_key(self.confirmed)
        return distill_key(accumulate(self.confirmed, self.tentative[1]))
