import itertools
import math
import statistics
from collections import Counter
from functools import reduce
from operator import xor

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arqwep.channel import ChannelRng, ChannelSet, Deterministic, ErasureTriple, IndependentBeta
from arqwep.errors import DesyncError, MalformedFrameError
from arqwep.keyshare import AckHistory, KeyAccumulator, accumulate, distill_key
from arqwep.session import (
    INIT_SUBTYPE,
    IdealCipher,
    InitFrame,
    ReceiverState,
    SenderState,
    WepCipher,
    effective_iv,
    new_pair,
    run_init_phase,
)
from arqwep.simulator import SessionConfig, run_session
from arqwep.wep import wep_decrypt

KEY = bytes(range(1, 14))

ERASED, ACK_LOST, ACKED = "erased", "ack_lost", "acked"
OUTCOMES = (ERASED, ACK_LOST, ACKED)


class ScriptedRng:
    """Stands in for ChannelRng so tests choose the header IVs."""

    def __init__(self, values):
        self._values = iter(values)

    def getrandbits(self, bits):
        return next(self._values)


def det(gab=0.0, gae=0.0, gba=0.0):
    return Deterministic(ErasureTriple(gab, gae, gba))


# --- sender IV update ----------------------------------------------------------

def test_first_frame_uses_zero_seed():
    alice = SenderState(KEY, ScriptedRng([0x123456]))
    frame = alice.encrypt_next(b"m")
    assert alice.last_seed_iv == 0
    assert wep_decrypt(frame, 0, KEY) is not None


def test_acked_header_iv_enters_next_seed():
    alice = SenderState(KEY, ScriptedRng([0xABCDEF, 0x111111]))
    alice.encrypt_next(b"a")
    alice.feedback(True)
    frame = alice.encrypt_next(b"b")
    assert alice.last_seed_iv == 0xABCDEF
    assert frame.header_iv == 0x111111


def test_timeout_leaves_seed_unchanged():
    alice = SenderState(KEY, ScriptedRng([0xABCDEF, 0x111111]))
    alice.encrypt_next(b"a")
    assert not alice.feedback(False)
    frame = alice.encrypt_next()
    assert alice.last_seed_iv == 0
    assert frame.header_iv == 0xABCDEF  # a retransmission keeps its header IV


def test_retry_limit_abandons_frame():
    alice = SenderState(KEY, ScriptedRng([1, 2]), retry_limit=2)
    alice.encrypt_next(b"a")
    assert not alice.feedback(False)
    alice.encrypt_next()
    assert alice.feedback(False)
    assert alice.abandoned == 1
    assert not alice.retransmission_pending
    assert alice.encrypt_next(b"b").header_iv == 2


def test_sender_misuse_raises():
    alice = SenderState(KEY, ScriptedRng([1]))
    with pytest.raises(ValueError):
        alice.encrypt_next()
    alice.encrypt_next(b"x")
    with pytest.raises(ValueError):
        alice.encrypt_next(b"y")


def test_plaintext_starts_with_history():
    alice = SenderState(KEY, ScriptedRng([5, 6]))
    alice.encrypt_next(b"a")
    alice.feedback(False)
    frame = alice.encrypt_next()
    plain = wep_decrypt(frame, 0, KEY)
    history, message = AckHistory.decode(plain)
    assert (history.base_seq, history.bits, message) == (0, [False], b"a")


# --- receiver trial decryption ---------------------------------------------------

def test_in_sync_first_candidate():
    alice, bob = new_pair(KEY, seed=1)
    for i in range(20):
        frame = alice.encrypt_next(bytes([i]))
        res = bob.try_decrypt(frame)
        assert res.message == bytes([i]) and not res.duplicate
        alice.feedback(True)
        assert bob.v_d ^ bob.pending_iv == alice.v_e


def test_lost_ack_decrypts_on_second_candidate():
    alice, bob = new_pair(KEY, seed=2)
    f0 = alice.encrypt_next(b"zero")
    assert bob.try_decrypt(f0).message == b"zero"
    alice.feedback(False)  # Bob's ACK erased
    f1 = alice.encrypt_next()  # retransmission
    # the include-candidate is stale
    assert wep_decrypt(f1, bob.v_d ^ bob.pending_iv, KEY) is None
    res = bob.try_decrypt(f1)
    assert res.message == b"zero"
    assert res.duplicate
    assert res.seed_iv == alice.last_seed_iv == 0
    alice.feedback(True)
    f2 = alice.encrypt_next(b"two")
    res = bob.try_decrypt(f2)
    assert res.seed_iv == alice.last_seed_iv == f0.header_iv


def test_two_consecutive_ack_losses_converge():
    alice, bob = new_pair(KEY, seed=3)
    f = alice.encrypt_next(b"m")
    bob.try_decrypt(f)
    alice.feedback(False)
    bob.try_decrypt(alice.encrypt_next())
    alice.feedback(False)
    res = bob.try_decrypt(alice.encrypt_next())
    assert res is not None and res.duplicate
    alice.feedback(True)
    nxt = alice.encrypt_next(b"n")
    assert bob.try_decrypt(nxt).seed_iv == alice.v_e == f.header_iv


def test_double_failure_drops():
    alice, bob = new_pair(KEY, seed=4)
    bob.v_d = 0x5A5A5A
    assert bob.try_decrypt(alice.encrypt_next(b"x")) is None
    assert bob.dropped == 1


def test_sender_ahead_of_receiver_drops():
    alice, bob = new_pair(KEY, seed=5)
    alice.encrypt_next(b"a")
    alice.feedback(True)  # Alice counts frame 0, which Bob never saw
    assert bob.try_decrypt(alice.encrypt_next(b"b")) is None


def test_history_contradiction_is_fatal():
    cipher = IdealCipher()
    bob = ReceiverState(KEY, cipher)
    # decryptable under Bob's seed, but claims an ACK for a frame Bob never decrypted
    forged = cipher.encrypt(AckHistory(0, [True]).encode() + b"x", 0, 0x777777)
    with pytest.raises(DesyncError):
        bob.try_decrypt(forged)


def oracle_run(pattern, retry_limit):
    """Brute-force model of both parties, independent of the state machines.

    Alice's seed is the XOR of the header IVs of ACKed attempts; Bob hands a
    message up once per data frame, the first time it reaches him.
    """
    iv_of_frame = {}
    frame_no = 0
    attempts = 0
    v_e = 0
    seeds, fresh = [], []
    seen = set()
    for outcome in pattern:
        iv_of_frame.setdefault(frame_no, 0x100000 + frame_no)
        seeds.append(v_e)
        attempts += 1
        if outcome != ERASED:
            fresh.append(frame_no not in seen)
            seen.add(frame_no)
        else:
            fresh.append(None)
        if outcome == ACKED:
            v_e ^= iv_of_frame[frame_no]
        if outcome == ACKED or attempts >= retry_limit:
            frame_no += 1
            attempts = 0
    return seeds, fresh, v_e


def machine_run(pattern, retry_limit):
    ivs = [0x100000 + i for i in range(len(pattern) + 1)]
    alice = SenderState(KEY, ScriptedRng(ivs), WepCipher(KEY), retry_limit)
    bob = ReceiverState(KEY, WepCipher(KEY))
    frame_no = 0
    seeds, fresh = [], []
    for outcome in pattern:
        msg = None if alice.retransmission_pending else b"frame-%d" % frame_no
        frame = alice.encrypt_next(msg)
        seeds.append(alice.last_seed_iv)
        got = None
        if outcome != ERASED:
            res = bob.try_decrypt(frame)
            assert res is not None, "delivered frame dropped"
            assert res.seed_iv == alice.last_seed_iv
            assert res.message == b"frame-%d" % frame_no
            got = not res.duplicate
        fresh.append(got)
        if alice.feedback(outcome == ACKED):
            frame_no += 1
    return seeds, fresh, alice.v_e, bob


@pytest.mark.parametrize("retry_limit", [1, 2, 3, 7])
def test_exhaustive_patterns_match_oracle(retry_limit):
    checked = 0
    for length in range(1, 5):
        for pattern in itertools.product(OUTCOMES, repeat=length):
            seeds, fresh, v_e, bob = machine_run(pattern, retry_limit)
            o_seeds, o_fresh, o_v_e = oracle_run(pattern, retry_limit)
            assert seeds == o_seeds, pattern
            assert fresh == o_fresh, pattern
            assert v_e == o_v_e, pattern
            # Bob's committed sum trails Alice by at most the one unconfirmed IV
            assert v_e in (bob.v_d, bob.v_d ^ (bob.pending_iv or 0)), pattern
            checked += 1
    assert checked == 3 + 9 + 27 + 81


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 0.6), st.floats(0, 0.3), st.integers(1, 7), st.integers(0, 2**32))
def test_randomized_sessions_never_violate_sync(gab, gba, retry, seed):
    m = run_session(SessionConfig(det(gab, 0.1, gba), n_data=300, seed=seed, retry_limit=retry))
    assert not m.aborted
    assert m.sync_violations == 0
    assert m.frames_dropped == 0


def test_wep_sessions_never_violate_sync():
    for seed in range(4):
        m = run_session(SessionConfig(det(0.2, 0.1, 0.3), n_data=1500, seed=seed, cipher="wep"))
        assert (m.aborted, m.sync_violations, m.frames_dropped) == ("", 0, 0)
        # every ACKed frame was delivered; abandoned frames may have been delivered too
        assert m.frames_delivered >= m.frames_acked


def test_delivery_rate_matches_forward_erasure():
    gab = 0.2
    m = run_session(SessionConfig(det(gab, 0.1, 0.0), n_data=20_000, seed=9))
    rate = m.frames_delivered / m.frames_tx
    assert abs(rate - (1 - gab)) <= 3 * math.sqrt(gab * (1 - gab) / m.frames_tx)


# --- initialization frames ---------------------------------------------------------

def test_init_frame_layout():
    f = InitFrame(0x0A0B0C)
    assert f.to_bytes() == bytes([INIT_SUBTYPE, 0x0C, 0x0B, 0x0A])
    assert InitFrame.from_bytes(f.to_bytes()) == f
    with pytest.raises(MalformedFrameError):
        InitFrame.from_bytes(b"\x08\x00\x00\x00")


def test_init_frames_do_not_depend_on_key():
    def burst(key):
        alice, bob = new_pair(key, seed=6, cipher=IdealCipher())
        res = run_init_phase(alice, bob, ChannelSet(det(0.3), 6), 50)
        return [InitFrame(r.header_iv).to_bytes() for r in res.records]

    assert burst(bytes(13)) == burst(b"\xff" * 13)


def test_no_init_frames_leave_zero():
    alice, bob = new_pair(KEY, seed=1)
    res = run_init_phase(alice, bob, ChannelSet(det(0.5), 1), 0)
    assert res.k_i == 0 and alice.v_e == bob.v_d == 0


def test_lossless_init_counts_every_frame():
    alice, bob = new_pair(KEY, seed=2)
    res = run_init_phase(alice, bob, ChannelSet(det(0.0), 2), 37)
    assert res.k_i == 37
    assert alice.v_e == bob.v_d == reduce(xor, (r.header_iv for r in res.records))


def test_init_phase_mean_received():
    n_init, gab, trials = 1000, 0.01, 1000
    counts = []
    for t in range(trials):
        alice, bob = new_pair(KEY, seed=t, cipher=IdealCipher())
        counts.append(run_init_phase(alice, bob, ChannelSet(det(gab, 0.02, 0.01), t), n_init).k_i)
        assert alice.v_e == bob.v_d
    sigma = math.sqrt(n_init * gab * (1 - gab) / trials)
    assert abs(statistics.fmean(counts) - n_init * (1 - gab)) <= 3 * sigma


def test_init_then_data_stays_in_sync():
    m = run_session(SessionConfig(IndependentBeta((1, 9), (1, 20), (1, 9)), n_data=2000, n_init=200, seed=3,
                                  cipher="wep"))
    assert m.k_i > 0 and not m.aborted and m.sync_violations == 0


# --- effective IV --------------------------------------------------------------------

def test_effective_iv_fresh_session():
    alice, bob = new_pair(KEY, seed=0)
    assert effective_iv(alice) == effective_iv(bob) == 0


@given(st.lists(st.integers(0, 2**24 - 1), min_size=1, max_size=20))
def test_effective_iv_is_xor_and_matches_distillation(ivs):
    alice, bob = new_pair(KEY, seed=0, cipher=IdealCipher())
    alice.fold(ivs)
    bob.fold(ivs)
    acc = reduce(accumulate, ivs, KeyAccumulator(len(ivs)))
    assert effective_iv(alice) == effective_iv(bob) == reduce(xor, ivs) == distill_key(acc)


def test_effective_iv_after_three_acks():
    a, b, c = 0x0F0000, 0x00F000, 0x000F0F
    alice = SenderState(KEY, ScriptedRng([a, b, c]), IdealCipher())
    for _ in range(3):
        alice.encrypt_next(b"")
        alice.feedback(True)
    assert effective_iv(alice) == a ^ b ^ c


def test_header_iv_birthday_collisions():
    n = 10_000
    trials = 30
    expected = n * (n - 1) / 2 / 2**24
    totals = []
    for t in range(trials):
        alice = SenderState(KEY, ChannelRng(t, 4), IdealCipher())
        counts = Counter(alice.draw_iv() for _ in range(n))
        totals.append(sum(c * (c - 1) // 2 for c in counts.values()))
    # pair collisions are close to Poisson(expected)
    assert abs(statistics.fmean(totals) - expected) <= 3 * math.sqrt(expected / trials)
