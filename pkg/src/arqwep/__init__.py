"""ARQ-WEP: WEP with IVs concealed through ARQ-based key sharing, plus its simulator."""

from .analysis import (
    attack_time_estimate,
    eve_equivalent_erasure,
    eve_useful_frames_bound,
    expected_trials,
    key_rate,
    noisy_feedback_capacity_rate,
    secrecy_outage,
    secret_key_capacity,
)
from .channel import ChannelRng, CorrelatedMixture, Deterministic, ErasureTriple, IndependentBeta
from .session import ReceiverState, SenderState, run_init_phase
from .simulator import SessionConfig, run_experiment, run_keyshare_session, run_session
from .wep import WepFrame, crc32_icv, rc4_keystream, wep_decrypt, wep_encrypt

__version__ = "0.1.0"
