"""Block-erasure channel model for the Alice->Bob, Alice->Eve and Bob->Alice links.

Each time slot draws one :class:`ErasureTriple` from a :class:`FadingModel`.
Triples may be correlated across links but are i.i.d. across slots; the
individual erasure events inside a slot are independent coin flips.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import betaln, roots_jacobi

from .errors import ConfigurationError

LINKS = ("ab", "ae", "ba")

# Stream ids for ChannelRng; one independent stream per (link, trial).
STREAM_SLOT = 0
STREAM_AB = 1
STREAM_AE = 2
STREAM_BA = 3
STREAM_SENDER = 4
STREAM_EVE_FEEDBACK = 5

QUADRATURE_POINTS = 64


class ErasureTriple(NamedTuple):
    gamma_ab: float
    gamma_ae: float
    gamma_ba: float = 0.0

    def validate(self) -> ErasureTriple:
        for name, g in zip(LINKS, self):
            if not (0.0 <= g <= 1.0) or math.isnan(g):
                raise ConfigurationError(f"gamma_{name}={g!r} is not a probability")
        return self


class ChannelRng:
    """Seedable scalar random stream identified by ``(seed, stream)``.

    Identical ``(seed, stream)`` pairs reproduce identical sequences; distinct
    stream ids are statistically independent (derived via numpy SeedSequence).
    """

    __slots__ = ("seed", "stream", "_r", "random", "getrandbits")

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ConfigurationError("seed and stream must be non-negative")
        self.seed = seed
        self.stream = stream
        words = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stream]).generate_state(4, np.uint32)
        self._r = random.Random(int.from_bytes(words.tobytes(), "little"))
        # bound methods cached for hot loops
        self.random = self._r.random
        self.getrandbits = self._r.getrandbits

    def betavariate(self, a: float, b: float) -> float:
        return self._r.betavariate(a, b)

    def __repr__(self) -> str:
        return f"ChannelRng(seed={self.seed}, stream={self.stream})"


class FadingModel:
    """Joint distribution of the per-slot erasure probabilities."""

    kind: str

    def draw(self, rng: ChannelRng) -> ErasureTriple:
        raise NotImplementedError

    def expect(self, fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> float:
        """E[fn(gamma_ab, gamma_ae, gamma_ba)]; ``fn`` must accept numpy arrays."""
        raise NotImplementedError

    def sample(self, n: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def expect_inverse(self, links: tuple[str, ...]) -> float:
        """E[1 / prod(1 - gamma_link)] over the given links."""
        idx = [LINKS.index(link) for link in links]

        def fn(a, e, b):
            g = (a, e, b)
            out = 1.0
            for i in idx:
                out = out / (1.0 - g[i])
            return out

        return self.expect(fn)

    def inverse_moment_finite(self, link: str) -> bool:
        """Whether E[1/(1 - gamma_link)] is finite."""
        raise NotImplementedError

    def mean(self) -> ErasureTriple:
        return ErasureTriple(*(self.expect(lambda a, e, b, i=i: (a, e, b)[i]) for i in range(3)))


@dataclass(frozen=True)
class Deterministic(FadingModel):
    triple: ErasureTriple
    kind = "deterministic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "triple", ErasureTriple(*self.triple).validate())

    def draw(self, rng: ChannelRng) -> ErasureTriple:
        return self.triple

    def expect(self, fn) -> float:
        a, e, b = (np.float64(x) for x in self.triple)
        return float(fn(a, e, b))

    def sample(self, n, gen):
        return tuple(np.full(n, g) for g in self.triple)

    def inverse_moment_finite(self, link: str) -> bool:
        return getattr(self.triple, f"gamma_{link}") < 1.0


@dataclass(frozen=True)
class IndependentBeta(FadingModel):
    """Independent Beta(alpha, beta) marginals per link."""

    ab: tuple[float, float]
    ae: tuple[float, float]
    ba: tuple[float, float] | None = None
    kind = "beta"

    def __post_init__(self) -> None:
        for name in LINKS:
            params = getattr(self, name)
            if params is None:
                continue
            if len(params) != 2 or min(params) <= 0:
                raise ConfigurationError(f"beta parameters for link {name} must be two positive numbers")

    def draw(self, rng: ChannelRng) -> ErasureTriple:
        ba = rng.betavariate(*self.ba) if self.ba else 0.0
        return ErasureTriple(rng.betavariate(*self.ab), rng.betavariate(*self.ae), ba)

    def _nodes(self, params):
        if params is None:
            return np.array([0.0]), np.array([1.0])
        a, b = params
        # Gauss-Jacobi absorbs the x^(a-1) (1-x)^(b-1) weight exactly.
        t, w = roots_jacobi(QUADRATURE_POINTS, b - 1.0, a - 1.0)
        return (t + 1.0) / 2.0, w / w.sum()

    def expect_inverse(self, links: tuple[str, ...]) -> float:
        # Independent links factor, and for one link E[1/(1-X)] = B(a, b-1) / B(a, b)
        # (polynomial quadrature would converge slowly near the x = 1 singularity).
        out = 1.0
        for link in links:
            params = getattr(self, link)
            if params is None:
                continue
            a, b = params
            if b <= 1.0:
                return math.inf
            out *= math.exp(betaln(a, b - 1.0) - betaln(a, b))
        return out

    def expect(self, fn) -> float:
        xa, wa = self._nodes(self.ab)
        xe, we = self._nodes(self.ae)
        xb, wb = self._nodes(self.ba)
        A, E, B = np.meshgrid(xa, xe, xb, indexing="ij")
        W = wa[:, None, None] * we[None, :, None] * wb[None, None, :]
        return float(np.sum(W * np.broadcast_to(fn(A, E, B), A.shape)))

    def sample(self, n, gen):
        ba = gen.beta(*self.ba, size=n) if self.ba else np.zeros(n)
        return gen.beta(*self.ab, size=n), gen.beta(*self.ae, size=n), ba

    def inverse_moment_finite(self, link: str) -> bool:
        params = getattr(self, link)
        return params is None or params[1] > 1.0


@dataclass(frozen=True)
class CorrelatedMixture(FadingModel):
    """A latent shadowing state picks one of several erasure triples per slot."""

    weights: tuple[float, ...]
    triples: tuple[ErasureTriple, ...]
    kind = "mixture"

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.triples) or not self.triples:
            raise ConfigurationError("mixture needs one weight per triple")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigurationError(f"mixture weights must be non-negative and sum to 1: {self.weights}")
        triples = tuple(ErasureTriple(*t).validate() for t in self.triples)
        object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "_cum", tuple(np.cumsum(self.weights)))

    def draw(self, rng: ChannelRng) -> ErasureTriple:
        i = bisect.bisect_right(self._cum, rng.random())
        return self.triples[min(i, len(self.triples) - 1)]

    def expect(self, fn) -> float:
        # zero-weight atoms are skipped so they cannot contribute 0 * inf
        keep = [i for i, w in enumerate(self.weights) if w > 0]
        arr = np.array([self.triples[i] for i in keep], dtype=float)
        vals = np.broadcast_to(fn(arr[:, 0], arr[:, 1], arr[:, 2]), (len(arr),))
        return float(np.dot([self.weights[i] for i in keep], vals))

    def sample(self, n, gen):
        idx = gen.choice(len(self.triples), size=n, p=self.weights)
        arr = np.array(self.triples, dtype=float)[idx]
        return arr[:, 0], arr[:, 1], arr[:, 2]

    def inverse_moment_finite(self, link: str) -> bool:
        return all(
            getattr(t, f"gamma_{link}") < 1.0 for w, t in zip(self.weights, self.triples) if w > 0
        )


def draw_slot(model: FadingModel, rng: ChannelRng) -> ErasureTriple:
    return model.draw(rng)


def transmit(erasure_prob: float, rng: ChannelRng) -> bool:
    """One erasure-channel use: True if delivered."""
    return rng.random() >= erasure_prob


def feedback_delivered(triple: ErasureTriple, rng: ChannelRng) -> bool:
    """Whether Bob's ACK reaches Alice; a lost ACK looks like a timeout to her."""
    return rng.random() >= triple.gamma_ba


def model_from_dict(spec: dict) -> FadingModel:
    """Build a model from a parsed ``{kind: ..., ...}`` mapping."""
    kind = spec.get("kind")
    try:
        if kind == "deterministic":
            return Deterministic(ErasureTriple(spec["gamma_ab"], spec["gamma_ae"], spec.get("gamma_ba", 0.0)))
        if kind == "beta":
            return IndependentBeta(tuple(spec["ab"]), tuple(spec["ae"]), tuple(spec["ba"]) if spec.get("ba") else None)
        if kind == "mixture":
            return CorrelatedMixture(tuple(spec["weights"]), tuple(ErasureTriple(*t) for t in spec["triples"]))
    except KeyError as exc:
        raise ConfigurationError(f"{kind} model missing parameter {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigurationError(f"bad {kind} model parameters: {exc}") from None
    raise ConfigurationError(f"unknown fading model kind {kind!r}")


class ChannelSet:
    """One trial's channel: a fading model plus independent per-link streams."""

    def __init__(self, model: FadingModel, seed: int, eve_feedback_erasure: float = 0.0):
        if not 0.0 <= eve_feedback_erasure <= 1.0:
            raise ConfigurationError("eve_feedback_erasure must be a probability")
        self.model = model
        self.seed = seed
        self.slot_rng = ChannelRng(seed, STREAM_SLOT)
        self.ab_rng = ChannelRng(seed, STREAM_AB)
        self.ae_rng = ChannelRng(seed, STREAM_AE)
        self.ba_rng = ChannelRng(seed, STREAM_BA)
        self.eve_fb_rng = ChannelRng(seed, STREAM_EVE_FEEDBACK)
        self.eve_feedback_erasure = eve_feedback_erasure
        self.slots = 0

    def next_slot(self) -> ErasureTriple:
        self.slots += 1
        return self.model.draw(self.slot_rng)

    def to_bob(self, triple: ErasureTriple) -> bool:
        return self.ab_rng.random() >= triple.gamma_ab

    def to_eve(self, triple: ErasureTriple) -> bool:
        return self.ae_rng.random() >= triple.gamma_ae

    def to_alice(self, triple: ErasureTriple) -> bool:
        return self.ba_rng.random() >= triple.gamma_ba

    def eve_hears_feedback(self) -> bool:
        return self.eve_feedback_erasure == 0.0 or self.eve_fb_rng.random() >= self.eve_feedback_erasure
