"""Closed-form secrecy, rate and eavesdropper-yield expressions.

Expectations are taken over a :class:`~arqwep.channel.FadingModel`: exact
weighted sums for deterministic and mixture models, Gauss-Jacobi quadrature
for Beta marginals.  :func:`monte_carlo_expectation` gives an independent
sample-mean estimate of the same quantities.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .channel import ErasureTriple, FadingModel
from .errors import DivergentExpectationError

ATTACK_FRAMES_NEEDED = 1_500_000
BASELINE_ATTACK_MINUTES = 10.0

SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0
SECONDS_PER_YEAR = 365.25 * SECONDS_PER_DAY


@dataclass(frozen=True)
class RateReport:
    formula: str
    value: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.value < 0 and not math.isinf(self.value):
            raise ValueError(f"{self.formula}: negative value {self.value}")


def secret_key_capacity(model: FadingModel) -> float:
    """Key capacity with noiseless feedback: E[(1 - g_ab) g_ae]."""
    return model.expect(lambda ab, ae, ba: (1.0 - ab) * ae)


def eve_equivalent_erasure(triple: ErasureTriple) -> float:
    """Erasure probability at Eve in the equivalent feedback-free wiretap channel."""
    gab, gae, _ = triple
    return gae * (1.0 - gab)


def noisy_feedback_capacity_rate(model: FadingModel) -> float:
    """Achievable key rate when lost ACKs waste the frame: E[(1-g_ab)(1-g_ba) g_ae]."""
    return model.expect(lambda ab, ae, ba: (1.0 - ab) * (1.0 - ba) * ae)


def secrecy_outage(model: FadingModel, k: int) -> float:
    """Probability Eve captures all ``k`` accepted frames, (E[1 - g_ae])^k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return model.expect(lambda ab, ae, ba: 1.0 - ae) ** k


def secrecy_outage_given(gamma_ae: Iterable[float]) -> float:
    """Outage conditioned on a realization of Eve's per-frame erasure probabilities."""
    out = 1.0
    n = 0
    for g in gamma_ae:
        out *= 1.0 - g
        n += 1
    if n == 0:
        raise ValueError("need at least one frame")
    return out


def _inverse_moment(model: FadingModel, with_feedback_loss: bool) -> float:
    links = ("ab", "ba") if with_feedback_loss else ("ab",)
    for link in links:
        if not model.inverse_moment_finite(link):
            raise DivergentExpectationError(f"E[1/(1-gamma_{link})] diverges for this model")
    return model.expect_inverse(links)


def expected_trials(model: FadingModel, k: int, with_feedback_loss: bool = False) -> float:
    """Mean ARQ attempts to get ``k`` frames accepted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return k * _inverse_moment(model, with_feedback_loss)


def key_rate(model: FadingModel, k: int, with_feedback_loss: bool = False) -> float:
    """Keys per transmitted frame, 1 / expected_trials."""
    return 1.0 / expected_trials(model, k, with_feedback_loss)


def _capture_prob(model_or_p: FadingModel | float) -> float:
    if isinstance(model_or_p, FadingModel):
        return model_or_p.expect(lambda ab, ae, ba: 1.0 - ae)
    return float(model_or_p)


def eve_useful_frames_bound(model_or_p: FadingModel | float, k_i: int, k: int) -> float:
    """Expected data frames Eve can exploit: sum of p^j for j = k_i+1..k.

    ``model_or_p`` is a fading model or directly p = E[1 - g_ae], Eve's
    per-frame capture probability.
    """
    if not 0 <= k_i <= k:
        raise ValueError(f"need 0 <= k_i <= k, got k_i={k_i}, k={k}")
    p = _capture_prob(model_or_p)
    q = 1.0 - p
    if q == 0.0:
        return float(k - k_i)
    return (p ** (k_i + 1) - p ** (k + 1)) / q


def eve_useful_frames_sum(p: float, k_i: int, k: int) -> float:
    """Brute-force term-by-term version of :func:`eve_useful_frames_bound`."""
    return math.fsum(p**j for j in range(k_i + 1, k + 1))


def eve_useful_frames_variance(p: float, k_i: int, k: int) -> float:
    """Variance of the useful-frame count when each accepted frame is captured w.p. p.

    The count U satisfies P(U >= u) = p^(k_i+u) for 1 <= u <= k-k_i, so
    E[U^2] = sum (2u-1) p^(k_i+u).
    """
    if p >= 1.0:
        return 0.0
    n = k - k_i
    if n <= 0:
        return 0.0
    u = np.arange(1, n + 1, dtype=float)
    terms = np.exp((k_i + u) * math.log(p)) if p > 0 else np.zeros(n)
    mean = terms.sum()
    second = ((2.0 * u - 1.0) * terms).sum()
    return float(max(second - mean * mean, 0.0))


@dataclass(frozen=True)
class AttackTime:
    seconds: float
    sessions_needed: float
    frame_rate: float
    assumptions: tuple[str, ...]

    @property
    def minutes(self) -> float:
        return self.seconds / 60.0

    @property
    def hours(self) -> float:
        return self.seconds / SECONDS_PER_HOUR

    @property
    def days(self) -> float:
        return self.seconds / SECONDS_PER_DAY

    @property
    def years(self) -> float:
        return self.seconds / SECONDS_PER_YEAR

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.seconds)

    def human(self) -> str:
        if self.unbounded:
            return "effectively unbounded"
        if self.seconds < SECONDS_PER_HOUR:
            return f"{self.minutes:.2f} minutes"
        if self.seconds < SECONDS_PER_DAY:
            return f"{self.hours:.2f} hours"
        if self.seconds < SECONDS_PER_YEAR:
            return f"{self.days:.2f} days"
        return f"{self.years:.2f} years" if self.years < 1e6 else f"{self.years:.3g} years"


def attack_time_estimate(useful_frames_per_session: float, session_frames: int,
                         baseline_minutes: float = BASELINE_ATTACK_MINUTES,
                         frames_needed: int = ATTACK_FRAMES_NEEDED) -> AttackTime:
    """Listening time for Eve to collect ``frames_needed`` usable frames.

    The traffic rate is calibrated so plain WEP (every frame usable) takes
    ``baseline_minutes``; sessions run back to back at that rate.
    """
    rate = frames_needed / (baseline_minutes * 60.0)
    assumptions = (
        f"constant frame rate {rate:g} frames/s (plain WEP collects {frames_needed} frames in {baseline_minutes:g} min)",
        f"sessions of {session_frames} data frames run back to back",
        "only the useful frames of each session count toward the attack",
    )
    if useful_frames_per_session <= 0:
        return AttackTime(math.inf, math.inf, rate, assumptions)
    sessions = frames_needed / useful_frames_per_session
    return AttackTime(sessions * session_frames / rate, sessions, rate, assumptions)


def init_frames_for_overhead(overhead: float, n_data: int, data_frame_bytes: int,
                             init_frame_bytes: int = 42) -> int:
    """Number of initialization frames giving ``overhead`` = init bytes / total bytes."""
    if not 0 <= overhead < 1:
        raise ValueError("overhead must be in [0, 1)")
    return round(overhead * n_data * data_frame_bytes / (init_frame_bytes * (1.0 - overhead)))


def monte_carlo_expectation(model: FadingModel, fn: Callable, n: int = 10**6,
                            seed: int = 0) -> tuple[float, float]:
    """Sample mean and its standard error of fn(g_ab, g_ae, g_ba) over ``n`` slot draws."""
    gen = np.random.default_rng(seed)
    ab, ae, ba = model.sample(n, gen)
    vals = np.broadcast_to(fn(ab, ae, ba), (n,)).astype(float)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def report_rows(model: FadingModel, k: int = 10, k_i: int = 0, n_data: int = 100_000) -> list[RateReport]:
    """Every closed form evaluated for one model, in a fixed order."""
    mean = model.mean()
    rows = [
        RateReport("capacity", secret_key_capacity(model), {}),
        RateReport("equivalent-erasure", eve_equivalent_erasure(mean), {"at": "mean triple"}),
        RateReport("noisy-rate", noisy_feedback_capacity_rate(model), {}),
        RateReport("outage", secrecy_outage(model, k), {"k": k}),
    ]
    for fb, name in ((False, "trials"), (True, "trials-fb")):
        try:
            rows.append(RateReport(name, expected_trials(model, k, fb), {"k": k}))
            rows.append(RateReport(name.replace("trials", "rate"), key_rate(model, k, fb), {"k": k}))
        except DivergentExpectationError:
            rows.append(RateReport(name, math.inf, {"k": k}))
            rows.append(RateReport(name.replace("trials", "rate"), 0.0, {"k": k}))
    bound = eve_useful_frames_bound(model, k_i, k_i + n_data)
    rows.append(RateReport("useful-bound", bound, {"k_i": k_i, "k": k_i + n_data}))
    rows.append(RateReport("attack-hours", attack_time_estimate(bound, n_data).hours, {"session_frames": n_data}))
    return rows


def _fmt_inputs(inputs: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in inputs.items())


def rows_to_csv(rows: Iterable[RateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["formula", "inputs", "value"])
    for r in rows:
        w.writerow([r.formula, _fmt_inputs(r.inputs), f"{r.value:.10g}"])
    return buf.getvalue()
