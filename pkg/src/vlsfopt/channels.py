"""Channel models and their per-symbol information-density laws.

Three memoryless channels are supported:

* ``awgn``, parameterized by the signal-to-noise ratio, with Gaussian random
  codebooks. Its information density is continuous.
* ``bsc``, parameterized by the crossover probability, with uniform binary
  codebooks. Its information density lives on a two-point lattice per symbol.
* ``bec``, parameterized by the erasure probability. Treated as a lattice law
  in scaled units: each unerased symbol contributes one unit, each erased
  symbol contributes zero.

Everything downstream works with the centered per-block sum: the raw density
over ``n`` symbols equals ``n * shift`` plus a zero-origin random part. For
lattice laws the random part takes values ``step * k`` for integer counts
``k`` between 0 and ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutOfConvergenceRegion, UnsupportedLaw

VARIANTS = ("awgn", "bsc", "bec")

# Relative safety margin applied to the open convergence strip of the AWGN
# cumulant generating function; it only guards round-off at the boundary.
CONVERGENCE_MARGIN = 1e-9


@dataclass(frozen=True)
class ChannelModel:
    """A memoryless channel: a variant name plus its single real parameter.

    ``param`` is the SNR for ``awgn``, the crossover probability for ``bsc``,
    and the erasure probability for ``bec``.
    """

    variant: str
    param: float

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown channel variant {self.variant!r}; expected one of {VARIANTS}"
            )
        p = float(self.param)
        if self.variant == "awgn" and not p > 0.0:
            raise ValueError("awgn requires snr > 0")
        if self.variant == "bsc" and not 0.0 < p < 0.5:
            raise ValueError("bsc requires crossover probability in (0, 1/2)")
        if self.variant == "bec" and not 0.0 < p < 1.0:
            raise ValueError("bec requires erasure probability in (0, 1)")
        object.__setattr__(self, "param", p)

    def describe(self) -> str:
        name = {"awgn": "snr", "bsc": "delta", "bec": "delta"}[self.variant]
        return f"{self.variant}:{name}={self.param!r}"


@dataclass(frozen=True)
class Lattice:
    """Support geometry of a discrete per-symbol law: points ``origin + step * k``."""

    step: float
    origin: float


@dataclass(frozen=True)
class InfoDensityLaw:
    """Distribution summary of the per-symbol information density.

    ``shift`` is the deterministic per-symbol offset. ``lattice`` is ``None``
    for continuous laws; for lattice laws the per-symbol density equals
    ``lattice.origin + lattice.step * B`` where ``B`` is a Bernoulli success
    indicator, so over ``n`` symbols the centered sum is ``step`` times a
    binomial count.
    """

    channel: ChannelModel
    shift: float
    lattice: Lattice | None

    @property
    def is_lattice(self) -> bool:
        return self.lattice is not None


@dataclass(frozen=True)
class CgfValues:
    """Cumulant generating function of the centered n-symbol sum with derivatives."""

    K: float
    K1: float
    K2: float
    K3: float


@dataclass(frozen=True)
class Moments:
    """First three cumulants of the raw (uncentered) n-symbol density sum."""

    mean: float
    variance: float
    third_cumulant: float


def single_letter_law(channel: ChannelModel) -> InfoDensityLaw:
    """Build the per-symbol information-density law for a channel.

    AWGN with SNR ``p``: shift is ``log(1 + p) / 2`` and the centered part is
    continuous with variance ``p / (p + 1)`` per symbol.

    BSC with crossover ``d``: an agreeing symbol contributes
    ``log(2 * (1 - d))``, a flipped one ``log(2 * d)``, so the centered law
    sits on a lattice with origin ``log(2 * d)`` and step
    ``log((1 - d) / d)``, the step being taken with probability ``1 - d``.

    BEC with erasure ``d``: in scaled units an unerased symbol contributes one
    and an erased symbol zero, giving origin 0 and step 1 with success
    probability ``1 - d``.
    """
    if channel.variant == "awgn":
        return InfoDensityLaw(channel, 0.5 * math.log1p(channel.param), None)
    if channel.variant == "bsc":
        d = channel.param
        origin = math.log(2.0 * d)
        step = math.log((1.0 - d) / d)
        return InfoDensityLaw(channel, origin, Lattice(step, origin))
    # bec
    return InfoDensityLaw(channel, 0.0, Lattice(1.0, 0.0))


def success_prob(law: InfoDensityLaw) -> float:
    """Per-symbol probability that a lattice law takes its step."""
    if law.lattice is None:
        raise UnsupportedLaw("success_prob is defined for lattice laws only")
    return 1.0 - law.channel.param


def awgn_tilt_limit(channel: ChannelModel) -> float:
    """Boundary of the open convergence strip for the AWGN centered CGF."""
    p = channel.param
    return math.sqrt((p + 1.0) / p)


def cgf(law: InfoDensityLaw, s: float, n: float) -> CgfValues:
    """Evaluate the centered n-symbol CGF and its first three derivatives.

    For the AWGN law the CGF is ``-(n / 2) * log(1 - a * s^2)`` with
    ``a = p / (p + 1)``, valid on ``|s| < sqrt((p + 1) / p)``; evaluating at
    or beyond the boundary raises :class:`OutOfConvergenceRegion`.

    For a lattice law with step ``b`` and success probability ``p`` the CGF is
    ``n * log(q + p * exp(s * b))`` with ``q = 1 - p``, finite for every real
    tilt.
    """
    if law.lattice is None:
        p0 = law.channel.param
        limit = awgn_tilt_limit(law.channel)
        if abs(s) > limit * (1.0 - CONVERGENCE_MARGIN):
            raise OutOfConvergenceRegion(s, limit)
        a = p0 / (p0 + 1.0)
        q = 1.0 - a * s * s
        K = -(n / 2.0) * math.log1p(-a * s * s)
        K1 = n * a * s / q
        K2 = n * a * (1.0 + a * s * s) / (q * q)
        K3 = 2.0 * n * a * a * s * (3.0 + a * s * s) / (q * q * q)
        return CgfValues(K, K1, K2, K3)

    b = law.lattice.step
    p = success_prob(law)
    q = 1.0 - p
    # Tilted success probability g = p e^{sb} / (q + p e^{sb}), computed in
    # log space so large positive or negative tilts stay finite.
    log_qe = math.log(q)
    log_pe = math.log(p) + s * b
    log_mgf = _logaddexp(log_qe, log_pe)
    g = math.exp(log_pe - log_mgf)
    K = n * log_mgf
    K1 = n * b * g
    K2 = n * b * b * g * (1.0 - g)
    K3 = n * b * b * b * g * (1.0 - g) * (1.0 - 2.0 * g)
    return CgfValues(K, K1, K2, K3)


def moments(law: InfoDensityLaw, n: float) -> Moments:
    """Mean, variance, and third cumulant of the raw n-symbol density sum."""
    at_zero = cgf(law, 0.0, n)
    return Moments(n * law.shift + at_zero.K1, at_zero.K2, at_zero.K3)


def parse_channel_spec(text: str) -> ChannelModel:
    """Parse a compact channel description like ``awgn:snr=1.0`` or ``bsc:delta=0.11``.

    Raises ValueError on malformed input, an unknown variant, a wrong
    parameter name, or an out-of-range value.
    """
    head, sep, tail = text.strip().partition(":")
    head = head.lower()
    if not sep or head not in VARIANTS:
        raise ValueError(
            f"bad channel spec {text!r}; expected e.g. 'awgn:snr=1.0', "
            "'bsc:delta=0.11', or 'bec:delta=0.5'"
        )
    key, eq, value = tail.partition("=")
    expected = "snr" if head == "awgn" else "delta"
    if not eq or key.strip() != expected:
        raise ValueError(
            f"bad channel spec {text!r}; {head} takes a single parameter {expected!r}"
        )
    try:
        param = float(value)
    except ValueError as exc:
        raise ValueError(f"bad channel spec {text!r}: {value!r} is not a number") from exc
    return ChannelModel(head, param)


def _logaddexp(x: float, y: float) -> float:
    if x < y:
        x, y = y, x
    return x + math.log1p(math.exp(y - x))
