"""Saddlepoint evaluation of the information-density CDF.

The quantity of interest is ``P[S_n < gamma]``, the probability that the
accumulated information density over ``n`` symbols falls short of a decision
threshold. For the continuous (AWGN) law this is computed with a
Lugannani-Rice style tail formula driven by a closed-form tilt. For lattice
laws the centered sum equals ``step`` times a binomial count, the CDF is a
step function, and three evaluation modes are offered:

* ``Overshoot.LOWER`` evaluates the smooth interpolant at the query point
  itself, which sits at or below the true step value.
* ``Overshoot.UPPER`` evaluates one lattice step to the right, at or above
  the true value. Together the two modes bracket the exact CDF.
* ``Overshoot.EXACT_LATTICE`` evaluates at the right edge of the lattice cell
  containing the query, the point where the discrete tail formula directly
  approximates the true step value.

Dispatch between formulas is numerically motivated. Within ``eps_s`` standard
deviations of the mean the tail formula loses precision, so a central
expansion takes over: a plain normal value for the continuous law and a
continuity-corrected normal-plus-skew value for lattice laws, centered half a
step left of the evaluation point so hand-offs stay small. Exactly at the
mean a closed skew formula applies. The first two, the top lattice cell, and
the two bottom lattice cells are computed exactly from the binomial law, and
interior values are clamped to those exact boundaries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc as _np_erfc

from .channels import InfoDensityLaw, moments, success_prob
from .errors import LatticePointOutOfSupport, UnsupportedLaw

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Queries within this many lattice steps of a cell boundary (relative) are
# snapped onto the boundary before cell classification.
SNAP_REL = 1e-9

# A target within this many standard deviations of the mean (relative) takes
# the exact-mean skew formula.
MEAN_REL = 1e-9

# Width of the central band, in standard deviations, inside which the normal
# expansion replaces the tail formula. Kept well above round-off so the tail
# formula is never evaluated with a vanishing tilt.
DEFAULT_EPS_S = 0.1
MIN_EPS_S = 1e-6


class Overshoot(enum.Enum):
    """How a lattice CDF query treats the step structure of the law."""

    LOWER = "lower"
    UPPER = "upper"
    EXACT_LATTICE = "exact_lattice"


class Branch(enum.Enum):
    """Which formula produced a CDF value."""

    CONTINUOUS_LR = "continuous_lr"
    DISCRETE_LR = "discrete_lr"
    MEAN_GAUSSIAN = "mean_gaussian"
    MEAN_SKEW = "mean_skew_formula"


@dataclass(frozen=True)
class CdfQuery:
    """A single CDF evaluation request.

    ``gamma`` is the threshold in raw (unshifted) density units. ``n`` must be
    a positive integer; relaxed real blocklengths are served by
    :func:`cdf_value` instead. ``overshoot_mode`` is ignored for continuous
    laws.
    """

    law: InfoDensityLaw
    n: int
    gamma: float
    overshoot_mode: Overshoot = Overshoot.LOWER

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if not isinstance(self.overshoot_mode, Overshoot):
            raise ValueError("overshoot_mode must be an Overshoot member")


@dataclass(frozen=True)
class CdfResult:
    """Value and diagnostics of a saddlepoint CDF evaluation.

    ``saddlepoint``, ``w_hat``, and ``u_hat`` are NaN whenever the branch did
    not solve a tilt (central branches, exact lattice cells, degenerate
    queries). ``lattice_point`` is the unshifted right edge of the lattice
    cell the evaluation targeted, ``None`` for continuous laws. ``degenerate``
    flags queries outside the support, answered 0 or 1 exactly. ``clamped``
    flags interior values that were pulled back into the exact boundary
    envelope.
    """

    p: float
    saddlepoint: float
    branch: Branch
    lattice_point: float | None
    w_hat: float
    u_hat: float
    degenerate: bool = False
    clamped: bool = False


def _phi_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _phi_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) * _INV_SQRT2PI


def _logaddexp(x: float, y: float) -> float:
    if x < y:
        x, y = y, x
    return x + math.log1p(math.exp(y - x))


def _clamp(v: float, lo: float, hi: float) -> tuple[float, bool]:
    if v < lo:
        return lo, True
    if v > hi:
        return hi, True
    return v, False


def _snap_steps(u: float) -> float:
    r = round(u)
    if abs(u - r) <= SNAP_REL * max(1.0, abs(u)):
        return float(r)
    return u


def _check_eps_s(eps_s: float) -> None:
    if not MIN_EPS_S <= eps_s <= 1.0:
        raise ValueError(
            f"eps_s must lie in [{MIN_EPS_S}, 1.0]; got {eps_s!r}. Values below "
            "the floor would drive the tail formula into its removable singularity."
        )


def saddlepoint_awgn(law: InfoDensityLaw, n: float, gamma: float) -> float:
    """Closed-form tilt solving ``K'(s) = gamma - n * shift`` for the AWGN law.

    Uses the rationalized root ``2 g c / (n + sqrt(n^2 + 4 g^2 c))`` with
    ``g`` the centered target and ``c = (snr + 1) / snr``, which is exact at
    ``g = 0`` and stays strictly inside the convergence strip for every finite
    target.
    """
    if law.lattice is not None:
        raise UnsupportedLaw("saddlepoint_awgn requires the continuous AWGN law")
    p0 = law.channel.param
    gt = gamma - n * law.shift
    c = (p0 + 1.0) / p0
    return 2.0 * gt * c / (n + math.sqrt(n * n + 4.0 * gt * gt * c))


def saddlepoint_bsc(law: InfoDensityLaw, n: float, target: float) -> float:
    """Closed-form tilt for a two-point lattice law at a centered target.

    ``target`` is in centered units (the lattice part of the density sum) and
    must lie strictly inside ``(0, n * step)``; the end points have no finite
    tilt and raise :class:`LatticePointOutOfSupport`. Applies to both lattice
    channels since the erasure law is the same two-point family.
    """
    if law.lattice is None:
        raise UnsupportedLaw("saddlepoint_bsc requires a lattice law")
    b = law.lattice.step
    span = n * b
    if not 0.0 < target < span:
        raise LatticePointOutOfSupport(
            f"centered target {target!r} outside the open range (0, {span!r})"
        )
    p = success_prob(law)
    q = 1.0 - p
    theta = target / span
    return math.log(q * theta / (p * (1.0 - theta))) / b


def _continuous_detail(
    p0: float, shift: float, n: float, gamma: float, eps_s: float
) -> tuple[float, float, float, float, Branch, bool, bool]:
    gt = gamma - n * shift
    a = p0 / (p0 + 1.0)
    if abs(gt) < 1e-12:
        # Third cumulant vanishes at zero tilt, so the skew formula is exactly 1/2.
        return 0.5, 0.0, 0.0, math.nan, Branch.MEAN_SKEW, False, False
    z = gt / math.sqrt(n * a)
    if abs(z) <= eps_s:
        return _phi_cdf(z), math.nan, math.nan, math.nan, Branch.MEAN_GAUSSIAN, False, False
    c = (p0 + 1.0) / p0
    s = 2.0 * gt * c / (n + math.sqrt(n * n + 4.0 * gt * gt * c))
    as2 = a * s * s
    qq = 1.0 - as2
    K = -(n / 2.0) * math.log1p(-as2)
    K2 = n * a * (1.0 + as2) / (qq * qq)
    w = math.copysign(math.sqrt(max(2.0 * (s * gt - K), 0.0)), s)
    u = s * math.sqrt(K2)
    v = _phi_cdf(w) + _phi_pdf(w) * (1.0 / w - 1.0 / u)
    v, clamped = _clamp(v, 0.0, 1.0)
    return v, s, w, u, Branch.CONTINUOUS_LR, False, clamped


def _lattice_detail(
    b: float, p: float, n: float, u: float, eps_s: float
) -> tuple[float, float, float, float, Branch, bool, bool]:
    """Evaluate the lattice CDF interpolant at ``u`` lattice steps above origin.

    ``u`` must already be snapped; the value approximates ``P[B * b < u * b]``
    for the binomial step count ``B``, exactly on the bottom two cells, the
    top cell, and outside the support.
    """
    q = 1.0 - p
    nan = math.nan
    if u <= 0.0:
        return 0.0, nan, nan, nan, Branch.DISCRETE_LR, True, False
    if u > n:
        return 1.0, nan, nan, nan, Branch.DISCRETE_LR, True, False
    lnq = math.log(q)
    lnp = math.log(p)
    cell0 = math.exp(n * lnq)
    cell1 = cell0 + math.exp(math.log(n) + lnp + (n - 1.0) * lnq)
    top = -math.expm1(n * lnp)
    if u <= 1.0:
        return cell0, nan, nan, nan, Branch.DISCRETE_LR, False, False
    if u <= 2.0:
        return cell1, nan, nan, nan, Branch.DISCRETE_LR, False, False
    if u > n - 1.0:
        return top, nan, nan, nan, Branch.DISCRETE_LR, False, False
    ts = u * b
    nb = n * b
    mu = nb * p
    sig = math.sqrt(nb * b * p * q)
    if abs(ts - mu) < MEAN_REL * sig:
        k3 = n * b * b * b * p * q * (1.0 - 2.0 * p)
        c0 = k3 / (6.0 * sig * sig * sig) - b / (2.0 * sig)
        v = 0.5 + c0 * _INV_SQRT2PI
        v, clamped = _clamp(v, cell1, top)
        return v, 0.0, 0.0, nan, Branch.MEAN_SKEW, False, clamped
    x = (ts - 0.5 * b - mu) / sig
    if abs(x) <= eps_s:
        rho3 = (1.0 - 2.0 * p) / math.sqrt(n * p * q)
        v = _phi_cdf(x) - _phi_pdf(x) * (rho3 / 6.0) * (x * x - 1.0)
        v, clamped = _clamp(v, cell1, top)
        return v, nan, nan, nan, Branch.MEAN_GAUSSIAN, False, clamped
    # Above the half-step center the tail formula targets the cell's right
    # edge directly; below it the formula for the previous lattice point is
    # both better conditioned and more accurate.
    tt = ts if x > eps_s else ts - b
    theta = tt / nb
    s = math.log(q * theta / (p * (1.0 - theta))) / b
    lg = lnp + s * b
    lmgf = _logaddexp(lnq, lg)
    K = n * lmgf
    g = math.exp(lg - lmgf)
    root_k2 = math.sqrt(n * b * b * g * (1.0 - g))
    w = math.copysign(math.sqrt(max(2.0 * (s * tt - K), 0.0)), s)
    if x > eps_s:
        ucorr = (1.0 - math.exp(-b * s)) * root_k2 / b
    else:
        ucorr = math.expm1(b * s) * root_k2 / b
    v = _phi_cdf(w) + _phi_pdf(w) * (1.0 / w - 1.0 / ucorr)
    v, clamped = _clamp(v, cell1, top)
    return v, s, w, ucorr, Branch.DISCRETE_LR, False, clamped


def cdf_value(
    law: InfoDensityLaw,
    n: float,
    gamma: float,
    mode: Overshoot = Overshoot.LOWER,
    eps_s: float = DEFAULT_EPS_S,
) -> float:
    """Bare CDF value; accepts real-valued blocklengths for relaxed searches."""
    _check_eps_s(eps_s)
    if law.lattice is None:
        return _continuous_detail(law.channel.param, law.shift, n, gamma, eps_s)[0]
    b = law.lattice.step
    u0 = _snap_steps((gamma - n * law.lattice.origin) / b)
    if mode is Overshoot.LOWER:
        ue = u0
    elif mode is Overshoot.UPPER:
        ue = u0 + 1.0
    else:
        ue = math.ceil(u0)
    return _lattice_detail(b, success_prob(law), n, ue, eps_s)[0]


def cdf(query: CdfQuery, eps_s: float = DEFAULT_EPS_S) -> CdfResult:
    """Evaluate ``P[S_n < gamma]`` with full branch diagnostics."""
    _check_eps_s(eps_s)
    law = query.law
    n = float(query.n)
    if law.lattice is None:
        if query.overshoot_mode is Overshoot.EXACT_LATTICE:
            raise UnsupportedLaw("EXACT_LATTICE mode requires a lattice law")
        p, s, w, u, branch, deg, clamped = _continuous_detail(
            law.channel.param, law.shift, n, query.gamma, eps_s
        )
        return CdfResult(p, s, branch, None, w, u, deg, clamped)
    b = law.lattice.step
    u0 = _snap_steps((query.gamma - n * law.lattice.origin) / b)
    if query.overshoot_mode is Overshoot.LOWER:
        ue = u0
    elif query.overshoot_mode is Overshoot.UPPER:
        ue = u0 + 1.0
    else:
        ue = math.ceil(u0)
    p, s, w, u, branch, deg, clamped = _lattice_detail(
        b, success_prob(law), n, ue, eps_s
    )
    lattice_point = n * law.lattice.origin + math.ceil(ue) * b
    return CdfResult(p, s, branch, lattice_point, w, u, deg, clamped)


def mean_fallback(law: InfoDensityLaw, n: float, gamma: float) -> float:
    """Plain normal approximation ``Phi((gamma - mean) / sd)``.

    Intended for thresholds within the central band of the law; elsewhere the
    saddlepoint branches of :func:`cdf` are strictly more accurate.
    """
    m = moments(law, n)
    return _phi_cdf((gamma - m.mean) / math.sqrt(m.variance))


def lattice_cdf_at_steps(
    law: InfoDensityLaw, n: float, steps: np.ndarray, eps_s: float = DEFAULT_EPS_S
) -> np.ndarray:
    """Vectorized exact-cell values ``P[S_n < origin * n + j * step]`` for integer j.

    Mirrors the scalar lattice evaluator cell by cell; used by the feedback
    error floor and the exhaustive search, where thousands of cells are needed
    at once.
    """
    _check_eps_s(eps_s)
    if law.lattice is None:
        raise UnsupportedLaw("lattice_cdf_at_steps requires a lattice law")
    b = law.lattice.step
    p = success_prob(law)
    q = 1.0 - p
    j = np.asarray(steps, dtype=float)
    out = np.empty_like(j)

    lnq = math.log(q)
    lnp = math.log(p)
    cell0 = math.exp(n * lnq)
    cell1 = cell0 + math.exp(math.log(n) + lnp + (n - 1.0) * lnq)
    top = -math.expm1(n * lnp)

    out[j <= 0.0] = 0.0
    out[j > n] = 1.0
    out[(j > 0.0) & (j <= 1.0)] = cell0
    out[(j > 1.0) & (j <= 2.0)] = cell1
    out[(j > n - 1.0) & (j <= n)] = top

    interior = (j > 2.0) & (j <= n - 1.0)
    if not np.any(interior):
        return out
    ts = j[interior] * b
    nb = n * b
    mu = nb * p
    sig = math.sqrt(nb * b * p * q)

    vals = np.empty_like(ts)
    at_mean = np.abs(ts - mu) < MEAN_REL * sig
    if np.any(at_mean):
        k3 = n * b * b * b * p * q * (1.0 - 2.0 * p)
        c0 = k3 / (6.0 * sig * sig * sig) - b / (2.0 * sig)
        vals[at_mean] = 0.5 + c0 * _INV_SQRT2PI

    x = (ts - 0.5 * b - mu) / sig
    band = (~at_mean) & (np.abs(x) <= eps_s)
    if np.any(band):
        rho3 = (1.0 - 2.0 * p) / math.sqrt(n * p * q)
        xb = x[band]
        pdf = np.exp(-0.5 * xb * xb) * _INV_SQRT2PI
        vals[band] = _np_phi(xb) - pdf * (rho3 / 6.0) * (xb * xb - 1.0)

    tail = (~at_mean) & (np.abs(x) > eps_s)
    if np.any(tail):
        right = tail & (x > eps_s)
        left = tail & (x < -eps_s)
        for mask, shift_steps in ((right, 0.0), (left, 1.0)):
            if not np.any(mask):
                continue
            tt = ts[mask] - shift_steps * b
            theta = tt / nb
            s = np.log(q * theta / (p * (1.0 - theta))) / b
            lg = lnp + s * b
            lmgf = np.logaddexp(lnq, lg)
            K = n * lmgf
            g = np.exp(lg - lmgf)
            root_k2 = np.sqrt(n * b * b * g * (1.0 - g))
            w = np.copysign(np.sqrt(np.maximum(2.0 * (s * tt - K), 0.0)), s)
            if shift_steps == 0.0:
                ucorr = (1.0 - np.exp(-b * s)) * root_k2 / b
            else:
                ucorr = np.expm1(b * s) * root_k2 / b
            pdf = np.exp(-0.5 * w * w) * _INV_SQRT2PI
            vals[mask] = _np_phi(w) + pdf * (1.0 / w - 1.0 / ucorr)

    out[interior] = np.clip(vals, cell1, top)
    return out


def _np_phi(x: np.ndarray) -> np.ndarray:
    return 0.5 * _np_erfc(-x / _SQRT2)
