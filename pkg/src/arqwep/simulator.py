"""Monte Carlo engine: ARQ-WEP sessions and key-share sessions with a passive eavesdropper.

Eve sniffs every transmission through her own erasure channel and hears the
ACK/timeout outcome of each attempt.  She sums the header IVs of the frames
she saw acknowledged, exactly as Alice does, and is blind for the rest of the
session once any acknowledged frame escaped her.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import analysis
from .channel import ChannelRng, ChannelSet, FadingModel, STREAM_SENDER
from .errors import ArqWepError, DesyncError, EventOrderError, MalformedFrameError
from .keyshare import DEFAULT_N1, KeyShareAlice, KeyShareBob
from .session import (
    DEFAULT_RETRY_LIMIT,
    INIT_FRAME_BYTES,
    INIT_SUBTYPE,
    IdealCipher,
    InitFrame,
    ReceiverState,
    SenderState,
    WepCipher,
    run_init_phase,
)
from .wep import KEY_BYTES, WepFrame, wep_decrypt

EVE_MODES = ("capture", "iv")
CIPHERS = ("ideal", "wep")

TRIAL_COLUMNS = (
    "experiment_id", "k_i", "trial", "useful_frames", "frames_tx", "frames_acked",
    "overhead_ratio", "blind_at_frame", "seed",
)
SUMMARY_COLUMNS = (
    "experiment_id", "n_init", "trials", "mean_k_i", "mean_useful", "stderr_useful",
    "min_useful", "max_useful", "mean_bound",
)

EVE_SPOT_DECRYPTS = 100
# trace records: init frames are self-tagged by their subtype byte, data frames get this tag
TRACE_DATA_TAG = 0x08


# --- eavesdropper -----------------------------------------------------------

class FrameSeen(NamedTuple):
    frame_id: int
    header_iv: int
    data: bool = True


class FrameErased(NamedTuple):
    frame_id: int
    data: bool = True


class AckSeen(NamedTuple):
    frame_id: int


class TimeoutSeen(NamedTuple):
    frame_id: int


class FeedbackMissed(NamedTuple):
    frame_id: int


class EveState:
    """Eve's running reconstruction of Alice's encryption IV.

    ``useful_count`` counts data frames Eve captured while she could still
    compute their seed IV; ``computable_count`` counts data frames whose seed
    IV she could compute whether or not she captured them.
    """

    def __init__(self, v_eve: int = 0):
        self.v_eve = v_eve
        self.blind = False
        self.blind_at: int | None = None
        self.useful_count = 0
        self.computable_count = 0
        self._outstanding: dict[int, int | None] = {}
        self._last_id = -1
        self._counted = -1
        self._unsure: int | None = None

    def _resolve_unsure(self, next_id: int) -> None:
        # a missed ACK/timeout is inferred from whether the next attempt is a retransmission
        fid = self._unsure
        self._unsure = None
        if fid is not None and next_id != fid:
            self.ack(fid)

    def frame(self, frame_id: int, header_iv: int | None, data: bool = True) -> None:
        """One transmission attempt; ``header_iv`` is None if Eve's radio erased it."""
        if frame_id < self._last_id:
            raise EventOrderError(f"frame {frame_id} after frame {self._last_id}")
        self._resolve_unsure(frame_id)
        new = frame_id != self._last_id
        if data and new:
            # Alice moved on: anything still outstanding was abandoned
            self._outstanding.clear()
        self._last_id = frame_id
        known = self._outstanding.get(frame_id)
        self._outstanding[frame_id] = header_iv if header_iv is not None else known
        if data and not self.blind:
            if new:
                self.computable_count += 1
            if header_iv is not None and self._counted != frame_id:
                self._counted = frame_id
                self.useful_count += 1

    def ack(self, frame_id: int) -> None:
        if frame_id not in self._outstanding:
            raise EventOrderError(f"ACK for frame {frame_id} that is not outstanding")
        iv = self._outstanding.pop(frame_id)
        if iv is None:
            if not self.blind:
                self.blind = True
                self.blind_at = frame_id
        else:
            self.v_eve ^= iv

    def timeout(self, frame_id: int, final: bool = False) -> None:
        if frame_id not in self._outstanding:
            raise EventOrderError(f"timeout for frame {frame_id} that is not outstanding")
        if final:
            del self._outstanding[frame_id]

    def missed_feedback(self, frame_id: int) -> None:
        if frame_id not in self._outstanding:
            raise EventOrderError(f"feedback for frame {frame_id} that is not outstanding")
        self._unsure = frame_id

    def finish(self) -> None:
        self._resolve_unsure(-2)


def eve_observe(eve: EveState, event) -> EveState:
    """Apply one observed event to ``eve`` (in place) and return it."""
    if isinstance(event, FrameSeen):
        eve.frame(event.frame_id, event.header_iv, event.data)
    elif isinstance(event, FrameErased):
        eve.frame(event.frame_id, None, event.data)
    elif isinstance(event, AckSeen):
        eve.ack(event.frame_id)
    elif isinstance(event, TimeoutSeen):
        eve.timeout(event.frame_id)
    elif isinstance(event, FeedbackMissed):
        eve.missed_feedback(event.frame_id)
    else:
        raise EventOrderError(f"unknown event {event!r}")
    return eve


# --- ARQ-WEP sessions -------------------------------------------------------

@dataclass(frozen=True)
class SessionConfig:
    model: FadingModel
    n_data: int
    n_init: int = 0
    seed: int = 0
    retry_limit: int = DEFAULT_RETRY_LIMIT
    cipher: str = "ideal"
    payload_bytes: int = 16
    data_frame_bytes: int = 1500
    eve_mode: str = "capture"
    eve_feedback_erasure: float = 0.0
    key: bytes | None = None
    audit: bool = True
    trace: bool = False

    def __post_init__(self) -> None:
        if self.n_data < 0 or self.n_init < 0:
            raise ValueError("frame counts must be >= 0")
        if self.cipher not in CIPHERS:
            raise ValueError(f"cipher must be one of {CIPHERS}")
        if self.eve_mode not in EVE_MODES:
            raise ValueError(f"eve_mode must be one of {EVE_MODES}")
        if self.trace and self.cipher != "wep":
            raise ValueError("frame traces need the wep cipher")
        if self.key is not None and len(self.key) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes")


@dataclass
class SessionMetrics:
    seed: int
    n_init: int
    k_i: int = 0
    useful_frames_at_eve: int = 0
    iv_computable_frames: int = 0
    eve_mode: str = "capture"
    frames_tx: int = 0
    frames_acked: int = 0
    frames_delivered: int = 0
    frames_abandoned: int = 0
    frames_dropped: int = 0
    init_report_attempts: int = 0
    overhead_ratio: float = 0.0
    blind_at_frame: int = -1
    sync_violations: int = 0
    eve_collisions: int = 0
    eve_blind_frames: int = 0
    eve_decrypt_attempts: int = 0
    eve_decrypt_successes: int = 0
    bob_key_ok: bool = True
    aborted: str = ""
    trace: bytes = b""

    @property
    def useful_frames(self) -> int:
        """The useful-frame count selected by the Eve mode."""
        return self.useful_frames_at_eve if self.eve_mode == "capture" else self.iv_computable_frames

    @property
    def k(self) -> int:
        """Total frames Bob received and Alice counted (initialization plus data)."""
        return self.k_i + self.frames_acked


def session_key(seed: int) -> bytes:
    return ChannelRng(seed, 6).getrandbits(8 * KEY_BYTES).to_bytes(KEY_BYTES, "little")


def run_session(config: SessionConfig) -> SessionMetrics:
    """One ARQ-WEP session: initialization burst, then ``n_data`` data frames."""
    key = config.key or session_key(config.seed)
    cipher = WepCipher(key) if config.cipher == "wep" else IdealCipher()
    sender = SenderState(key, ChannelRng(config.seed, STREAM_SENDER), cipher, config.retry_limit)
    receiver = ReceiverState(key, cipher)
    ch = ChannelSet(config.model, config.seed, config.eve_feedback_erasure)
    m = SessionMetrics(config.seed, config.n_init, eve_mode=config.eve_mode)
    eve = EveState()
    trace = bytearray() if config.trace else None

    init = run_init_phase(sender, receiver, ch, config.n_init)
    m.k_i = init.k_i
    m.init_report_attempts = init.report_attempts
    for fid, rec in enumerate(init.records):
        heard = ch.to_eve(rec.triple)
        eve.frame(fid, rec.header_iv if heard else None, data=False)
        if trace is not None:
            trace += InitFrame(rec.header_iv).to_bytes()
    # Bob's custom NACK bitmap goes out in the clear; Eve reads it once it gets through.
    for fid, rec in enumerate(init.records):
        if rec.received:
            eve.ack(fid)
        else:
            eve.timeout(fid, final=True)
    if eve.blind:
        m.blind_at_frame = eve.blind_at + 1

    model_draw = config.model.draw
    slot_rng = ch.slot_rng
    ab = ch.ab_rng.random
    ae = ch.ae_rng.random
    ba = ch.ba_rng.random
    perfect_eve_feedback = config.eve_feedback_erasure == 0.0
    audit = config.audit
    spot = config.cipher == "wep" and audit
    payload_bytes = config.payload_bytes
    payload_rng = ChannelRng(config.seed, 7)
    n_init = config.n_init
    tx = acked_frames = delivered = dropped = violations = 0

    try:
        for d in range(config.n_data):
            fid = n_init + d
            if config.cipher == "wep":
                message = payload_rng.getrandbits(8 * payload_bytes).to_bytes(payload_bytes, "little")
            else:
                message = b""
            if audit and eve.blind:
                m.eve_blind_frames += 1
                if eve.v_eve == sender.v_e:
                    m.eve_collisions += 1
            while True:
                triple = model_draw(slot_rng)
                frame = sender.encrypt_next(message)
                message = None
                seed_used = sender.v_e
                tx += 1
                if trace is not None:
                    trace.append(TRACE_DATA_TAG)
                    trace += frame.to_bytes()
                heard = ae() >= triple.gamma_ae
                eve.frame(fid, frame.header_iv if heard else None)
                if spot and heard and eve.blind and m.eve_decrypt_attempts < EVE_SPOT_DECRYPTS:
                    m.eve_decrypt_attempts += 1
                    if wep_decrypt(frame, eve.v_eve, key) is not None:
                        m.eve_decrypt_successes += 1
                ack = False
                if ab() >= triple.gamma_ab:
                    res = receiver.try_decrypt(frame)
                    if res is None:
                        dropped += 1
                    else:
                        if res.seed_iv != seed_used:
                            violations += 1
                        if not res.duplicate:
                            delivered += 1
                        ack = ba() >= triple.gamma_ba
                finished = sender.feedback(ack)
                if perfect_eve_feedback or ch.eve_hears_feedback():
                    if ack:
                        eve.ack(fid)
                    else:
                        eve.timeout(fid)
                else:
                    eve.missed_feedback(fid)
                if finished:
                    acked_frames += ack
                    break
            if eve.blind and m.blind_at_frame < 0:
                m.blind_at_frame = eve.blind_at + 1
    except DesyncError as exc:
        m.aborted = f"desync: {exc}"
    eve.finish()
    if eve.blind and m.blind_at_frame < 0:
        m.blind_at_frame = eve.blind_at + 1

    m.frames_tx = tx
    m.frames_acked = acked_frames
    m.frames_delivered = delivered
    m.frames_dropped = dropped
    m.frames_abandoned = sender.abandoned
    m.sync_violations = violations
    m.useful_frames_at_eve = eve.useful_count
    m.iv_computable_frames = eve.computable_count
    init_bytes = config.n_init * INIT_FRAME_BYTES
    total = init_bytes + tx * config.data_frame_bytes
    m.overhead_ratio = init_bytes / total if total else 0.0
    m.bob_key_ok = not m.aborted and violations == 0 and dropped == 0
    if trace is not None:
        m.trace = bytes(trace)
    return m


# --- experiments ------------------------------------------------------------

def trial_seed(master_seed: int, n_init: int, trial: int) -> int:
    words = np.random.SeedSequence([master_seed, n_init, trial]).generate_state(2, np.uint32)
    return int(words[0]) | int(words[1]) << 32


@dataclass
class PointSummary:
    n_init: int
    trials: int
    mean_k_i: float
    mean_useful: float
    stderr_useful: float
    min_useful: int
    max_useful: int
    mean_bound: float


@dataclass
class ExperimentResult:
    experiment_id: str
    metrics: dict[int, list[SessionMetrics]] = field(default_factory=dict)
    summary: list[PointSummary] = field(default_factory=list)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for n_init, runs in self.metrics.items():
            for t, m in enumerate(runs):
                w.writerow([self.experiment_id, m.k_i, t, m.useful_frames, m.frames_tx, m.frames_acked,
                            f"{m.overhead_ratio:.9g}", m.blind_at_frame, m.seed])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for p in self.summary:
            w.writerow([self.experiment_id, p.n_init, p.trials, f"{p.mean_k_i:.6f}", f"{p.mean_useful:.6f}",
                        f"{p.stderr_useful:.6f}", p.min_useful, p.max_useful, f"{p.mean_bound:.6f}"])
        return buf.getvalue()


def summarize(n_init: int, runs: Sequence[SessionMetrics], model: FadingModel) -> PointSummary:
    useful = [m.useful_frames for m in runs]
    p = analysis._capture_prob(model)
    bounds = [analysis.eve_useful_frames_bound(p, m.k_i, m.k) for m in runs]
    se = statistics.stdev(useful) / math.sqrt(len(useful)) if len(useful) > 1 else 0.0
    return PointSummary(n_init, len(runs), statistics.fmean(m.k_i for m in runs), statistics.fmean(useful), se,
                        min(useful), max(useful), statistics.fmean(bounds))


def run_experiment(base: SessionConfig, trials: int, n_init_sweep: Sequence[int], master_seed: int,
                   experiment_id: str = "experiment", jobs: int = 1) -> ExperimentResult:
    """Independent seeded trials at each initialization-burst size."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    configs = [
        replace(base, n_init=n, seed=trial_seed(master_seed, n, t), trace=False)
        for n in n_init_sweep for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_session, configs, chunksize=max(1, len(configs) // (4 * jobs))))
    else:
        results = [run_session(c) for c in configs]
    out = ExperimentResult(experiment_id)
    for i, n in enumerate(n_init_sweep):
        runs = results[i * trials : (i + 1) * trials]
        out.metrics[n] = runs
        out.summary.append(summarize(n, runs, base.model))
    return out


# --- key-share sessions -----------------------------------------------------

class KeyShareResult(NamedTuple):
    alice_key: int
    bob_key: int
    eve_key: int
    eve_blind: bool
    trials: int

    @property
    def outage(self) -> bool:
        """Secrecy outage: Eve captured every accepted frame."""
        return not self.eve_blind


def run_keyshare_session(model: FadingModel, k: int, seed: int, n1: int = DEFAULT_N1,
                         rich_feedback: bool = False, transcript: list | None = None) -> KeyShareResult:
    """One complete key agreement over the channel, with Eve listening."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ch = ChannelSet(model, seed)
    alice = KeyShareAlice(k, ChannelRng(seed, STREAM_SENDER), n1, rich_feedback)
    bob = KeyShareBob(k, rich_feedback)
    captured: dict[int, int] = {}
    trials = 0
    draw, slot_rng = model.draw, ch.slot_rng
    ab, ae, ba = ch.ab_rng.random, ch.ae_rng.random, ch.ba_rng.random
    while not alice.done:
        triple = draw(slot_rng)
        frame = alice.next_frame()
        trials += 1
        heard = ae() >= triple.gamma_ae
        if heard:
            captured[frame.seq] = frame.payload
        ack = False
        ack_seqs: tuple[int, ...] = ()
        got = ab() >= triple.gamma_ab
        if got:
            ack_seqs = bob.receive(frame)
            ack = ba() >= triple.gamma_ba
        alice.feedback(ack, ack_seqs)
        if transcript is not None:
            transcript.append((frame.seq, frame.payload, got, ack, heard))
    accepted = alice.accepted_seqs
    if bob.accepted_seqs[: len(accepted)] != accepted and not rich_feedback:
        raise DesyncError("receiver and sender disagree on the accepted frames")
    eve_key = 0
    blind = False
    for s in accepted:
        if s in captured:
            eve_key ^= captured[s]
        else:
            blind = True
    return KeyShareResult(alice.distill(), bob.distill(), eve_key, blind, trials)


@dataclass
class KeyShareBatch:
    sessions: int
    outages: int
    mismatches: int
    eve_false_keys: int
    total_trials: int

    @property
    def outage_rate(self) -> float:
        return self.outages / self.sessions

    @property
    def mean_trials(self) -> float:
        return self.total_trials / self.sessions

    @property
    def keys_per_frame(self) -> float:
        return self.sessions / self.total_trials


def keyshare_seed(master_seed: int, index: int) -> int:
    words = np.random.SeedSequence([master_seed, 0x4B53, index]).generate_state(2, np.uint32)
    return int(words[0]) | int(words[1]) << 32


def run_keyshare_batch(model: FadingModel, k: int, sessions: int, master_seed: int, n1: int = DEFAULT_N1,
                       rich_feedback: bool = False) -> KeyShareBatch:
    outages = mismatches = eve_false = total = 0
    for i in range(sessions):
        r = run_keyshare_session(model, k, keyshare_seed(master_seed, i), n1, rich_feedback)
        outages += r.outage
        mismatches += r.alice_key != r.bob_key
        # a blind Eve landing on the true key means her missed payloads XOR to zero
        eve_false += r.eve_blind and r.eve_key == r.alice_key
        total += r.trials
    return KeyShareBatch(sessions, outages, mismatches, eve_false, total)


def read_trace(data: bytes) -> list[InitFrame | WepFrame]:
    """Split a session trace back into init frames and data frames."""
    frames: list[InitFrame | WepFrame] = []
    while data:
        tag = data[0]
        if tag == INIT_SUBTYPE:
            frames.append(InitFrame.from_bytes(data[:4]))
            data = data[4:]
        elif tag == TRACE_DATA_TAG:
            frame, data = WepFrame.read(data[1:])
            frames.append(frame)
        else:
            raise MalformedFrameError(f"unknown trace record tag {tag:#04x}")
    return frames


__all__ = [
    "AckSeen", "ArqWepError", "EveState", "ExperimentResult", "FeedbackMissed", "FrameErased", "FrameSeen",
    "KeyShareBatch", "KeyShareResult", "PointSummary", "SessionConfig", "SessionMetrics", "TimeoutSeen",
    "eve_observe", "run_experiment", "run_keyshare_batch", "run_keyshare_session", "run_session",
]
