"""Ground-truth references and exhaustive searches.

Everything here is independent of the saddlepoint approximations in spirit:
the exact lattice CDF sums binomial mass in log space, the Monte Carlo
estimator simulates the density sum from its definition, and the exhaustive
schedule search enumerates candidate schedules directly. They exist to
validate the fast paths and to certify optimizer output.

The one deliberate exception is ``eps_fb``, the error floor of a
maximum-density final attempt: its production method evaluates the
random-coding union bound deterministically (an exact finite sum for the
lattice channels, a saddlepoint-density quadrature for AWGN), with a looser
threshold-split variant and a Monte Carlo estimator as cross-checks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc, gammaln, logsumexp, ndtr
from scipy.stats import binom

from ._types import CodeSpec, OptimizationResult, Rule, Schedule
from .channels import ChannelModel, InfoDensityLaw, moments, single_letter_law, success_prob
from .errors import EmptyGrid, Infeasible, UnsupportedLaw
from .saddlepoint import (
    DEFAULT_EPS_S,
    Overshoot,
    _snap_steps,
    cdf_value,
    lattice_cdf_at_steps,
)

EXACT_N_CAP = 100_000

# Fixed Monte Carlo block geometry. Blocks are seeded independently from the
# user seed, so estimates depend only on (seed, trials), never on the worker
# count; the column chunk width pins the draw order for the AWGN path.
_MC_BLOCK = 1 << 16
_MC_COLS = 64

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo budget: trial count, RNG seed, and worker threads."""

    trials: int
    seed: int
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass(frozen=True)
class McResult:
    """A Monte Carlo estimate with its binomial-style standard error."""

    p_hat: float
    std_err: float
    trials: int


@dataclass(frozen=True)
class SearchGrid:
    """Candidate ranges for the exhaustive search.

    Decoding instants are drawn from ``n_min..n_max`` with the given stride.
    ``gamma_grid`` lists candidate thresholds and is required for rule P1;
    rule P2 derives its threshold per final instant and ignores it.
    """

    n_min: int
    n_max: int
    stride: int = 1
    gamma_grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.stride < 1:
            raise ValueError("stride must be positive")
        if self.gamma_grid is not None:
            object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))


def exact_cdf_lattice(law: InfoDensityLaw, n: int, gamma: float) -> float:
    """Exact ``P[S_n < gamma]`` for a lattice law by log-space binomial summation.

    Accurate to better than 1e-12 relative error. Refuses blocklengths above
    ``EXACT_N_CAP`` where the term-by-term sum would get slow.
    """
    if law.lattice is None:
        raise UnsupportedLaw("exact_cdf_lattice requires a lattice law")
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")
    if n > EXACT_N_CAP:
        raise ValueError(f"exact lattice CDF is capped at n <= {EXACT_N_CAP}")
    b = law.lattice.step
    u = _snap_steps((gamma - n * law.lattice.origin) / b)
    jmax = math.ceil(u) - 1
    if jmax < 0:
        return 0.0
    if jmax >= n:
        return 1.0
    p = success_prob(law)
    k = np.arange(jmax + 1)
    logpmf = (
        gammaln(n + 1.0)
        - gammaln(k + 1.0)
        - gammaln(n - k + 1.0)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    return float(np.exp(logsumexp(logpmf)))


def _block_plan(trials: int) -> list[tuple[int, int]]:
    plan = []
    start = 0
    index = 0
    while start < trials:
        size = min(_MC_BLOCK, trials - start)
        plan.append((index, size))
        start += size
        index += 1
    return plan


def _block_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _run_blocks(fn, mc: McConfig) -> float:
    """Sum fn(index, size) over the block plan, optionally on worker threads."""
    plan = _block_plan(mc.trials)
    if mc.workers == 1 or len(plan) == 1:
        return float(sum(fn(i, m) for i, m in plan))
    with ThreadPoolExecutor(max_workers=mc.workers) as pool:
        return float(sum(pool.map(lambda im: fn(*im), plan)))


def mc_cdf(law: InfoDensityLaw, n: int, gamma: float, mc: McConfig) -> McResult:
    """Monte Carlo estimate of ``P[S_n < gamma]`` simulated from the definition.

    Lattice laws draw the binomial step count directly; the AWGN law draws
    codeword and noise symbols and accumulates the density sum, in fixed
    column chunks so results are reproducible for a given seed and trial
    count regardless of worker threads.
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")

    if law.lattice is not None:
        b = law.lattice.step
        origin = law.lattice.origin
        p = success_prob(law)

        def block(i: int, m: int) -> int:
            rng = _block_rng(mc.seed, i)
            counts = rng.binomial(n, p, size=m)
            return int(np.count_nonzero(n * origin + b * counts < gamma))

    else:
        p0 = law.channel.param
        shift = law.shift
        sd = math.sqrt(p0)

        def block(i: int, m: int) -> int:
            rng = _block_rng(mc.seed, i)
            acc = np.zeros(m)
            done = 0
            while done < n:
                w = min(_MC_COLS, n - done)
                x = rng.normal(scale=sd, size=(m, w))
                z = rng.standard_normal(size=(m, w))
                y = x + z
                acc += (0.5 * (y * y / (1.0 + p0) - z * z)).sum(axis=1)
                done += w
            return int(np.count_nonzero(n * shift + acc < gamma))

    hits = _run_blocks(block, mc)
    p_hat = hits / mc.trials
    std_err = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / mc.trials)
    return McResult(p_hat, std_err, mc.trials)


def _log_m_minus_one(m_size: float) -> float:
    if m_size < 2.0:
        raise ValueError("codebook size must be at least 2")
    return math.log(m_size - 1.0)


def eps_fb(
    channel: ChannelModel,
    n: float,
    m_size: float,
    method: str = "rcu",
    mc: McConfig | None = None,
    eps_s: float = DEFAULT_EPS_S,
) -> float:
    """Error floor of a forced maximum-density decision after ``n`` symbols.

    ``rcu`` (the production method) evaluates the random-coding union bound,
    the mean over received sequences of ``min(1, (M-1) * P[an independent
    codeword's density reaches the true one])``, deterministically: an exact
    finite sum for the lattice channels, and a quadrature of the confusion
    tail against the saddlepoint density of the true sum for AWGN.
    ``threshold_union`` minimizes, over an auxiliary threshold, the sum of
    the miss probability and a confusion union bound; it upper-bounds the
    ``rcu`` value and survives as a cheap structural cross-check. ``mc_rcu``
    estimates the same union bound by Monte Carlo and needs an ``mc``
    budget; it exists to validate the deterministic methods and is not used
    by searches.
    """
    canon = method.lower().replace("_", "").replace("-", "")
    if canon == "rcu":
        return _eps_fb_rcu(
            channel.variant, channel.param, float(n), float(m_size), float(eps_s)
        )
    if canon == "thresholdunion":
        return _eps_fb_threshold_union(
            channel.variant, channel.param, float(n), float(m_size), float(eps_s)
        )
    if canon == "mcrcu":
        if mc is None:
            raise ValueError("method 'mc_rcu' needs an McConfig")
        if not isinstance(n, int):
            raise ValueError("method 'mc_rcu' needs an integer blocklength")
        return eps_fb_mcrcu(channel, n, m_size, mc).p_hat
    raise ValueError(f"unknown eps_fb method {method!r}")


def _awgn_competitor_saddle(p0: float, n: float, v):
    """Closed-form tilt where the competitor CGF derivative equals ``v``.

    The density sum of a codeword drawn independently of the received
    sequence has per-symbol CGF ``-log(1 + 2 p0 s - p0 s^2) / 2`` once the
    ``n * shift`` offset is removed; its derivative equation is a quadratic
    in the tilt. This cancellation-free root is exact at the competitor
    mean ``v = -n p0`` (tilt 0) and stays strictly inside the convergence
    strip for every finite ``v``. Accepts scalars or arrays.
    """
    disc = np.sqrt(p0 * p0 * n * n + 4.0 * v * v * p0 * (p0 + 1.0))
    return 2.0 * (v + n * p0) / (p0 * (n - 2.0 * v) + disc)


def _awgn_independent_tail(p0: float, n: float, v) -> np.ndarray:
    """Right tail ``P[competitor density sum - n*shift >= v]`` for AWGN.

    Continuous Lugannani-Rice formula at the closed-form competitor
    saddlepoint. The arguments of interest sit far to the right of the
    competitor mean ``-n * p0``, where the formula is sharp; a 1/2 fallback
    covers the degenerate at-the-mean evaluation. Accepts scalars or
    arrays and always returns an array.
    """
    v = np.asarray(v, dtype=float)
    s = _awgn_competitor_saddle(p0, n, v)
    r = np.maximum(1.0 + 2.0 * p0 * s - p0 * s * s, 1e-300)
    K = -0.5 * n * np.log(r)
    k2 = n * (p0 / r + 2.0 * p0 * p0 * np.square(1.0 - s) / (r * r))
    w = np.sign(s) * np.sqrt(np.maximum(2.0 * (s * v - K), 0.0))
    u = s * np.sqrt(k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = ndtr(-w) - np.exp(-0.5 * w * w) * _INV_SQRT_2PI * (1.0 / w - 1.0 / u)
    q = np.where((np.abs(w) < 1e-14) | (np.abs(u) < 1e-14), 0.5, q)
    return np.clip(q, 0.0, 1.0)


@lru_cache(maxsize=1 << 17)
def _eps_fb_rcu(
    variant: str, param: float, n: float, m_size: float, eps_s: float
) -> float:
    if variant == "awgn":
        return _eps_fb_rcu_awgn(param, n, m_size, eps_s)
    return _eps_fb_rcu_lattice(variant, param, n, m_size)


def _eps_fb_rcu_lattice(variant: str, param: float, n: float, m_size: float) -> float:
    """Exact random-coding union bound for the lattice channels.

    Conditions on the count that parameterizes the received sequence: the
    BSC competitor must match at least as many received symbols as the
    transmitted codeword did, out of ``n`` fair coin flips; the BEC
    competitor must agree with every unerased position, probability
    ``2^-unerased``. Real ``n`` is supported smoothly through the gamma
    function; at integer ``n`` the sum is exact.
    """
    log_m1 = _log_m_minus_one(m_size)
    p = 1.0 - param
    k = np.arange(math.floor(n) + 1, dtype=float)
    logpmf = (
        gammaln(n + 1.0)
        - gammaln(k + 1.0)
        - gammaln(n - k + 1.0)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    if variant == "bsc":
        log_tail = np.zeros(k.size)
        with np.errstate(divide="ignore"):
            log_tail[1:] = np.log(betainc(k[1:], n - k[1:] + 1.0, 0.5))
    else:
        log_tail = -k * math.log(2.0)
    capped = np.minimum(log_m1 + log_tail, 0.0)
    return float(min(math.exp(logsumexp(logpmf + capped)), 1.0))


def _eps_fb_rcu_awgn(p0: float, n: float, m_size: float, eps_s: float) -> float:
    """Random-coding union bound for AWGN by saddlepoint-density quadrature.

    Splits the expectation at the point where ``(M-1)`` confusion tails
    saturate the min at 1: below it the contribution is the CDF of the true
    density sum, above it the competitor tail is integrated against the
    saddlepoint density of the true sum on a fixed grid. Both factors are
    closed-form, so the quadrature is deterministic and cheap.
    """
    log_m1 = _log_m_minus_one(m_size)
    channel = ChannelModel("awgn", p0)
    law = single_letter_law(channel)
    a = p0 / (p0 + 1.0)
    sigma = math.sqrt(n * a)
    grid = np.linspace(-12.0 * sigma, 10.0 * sigma, 1025)
    with np.errstate(divide="ignore"):
        log_union = log_m1 + np.log(_awgn_independent_tail(p0, n, grid))
    if log_union[-1] >= 0.0:
        return 1.0

    # Saturation point: where (M-1) confusion tails stop exceeding one. The
    # split error is second order in its placement, so the log-linear
    # crossing between the two bracketing grid nodes is plenty.
    idx = int(np.argmax(log_union <= 0.0))
    if idx == 0:
        v_star = float(grid[0])
        nodes = grid
        weights = np.exp(np.minimum(log_union, 0.0))
    else:
        lo, hi = float(log_union[idx - 1]), float(log_union[idx])
        frac = lo / (lo - hi) if math.isfinite(hi) else 0.0
        v_star = float(grid[idx - 1] + frac * (grid[idx] - grid[idx - 1]))
        nodes = np.concatenate(([v_star], grid[idx:]))
        weights = np.concatenate(([1.0], np.exp(log_union[idx:])))

    c = (p0 + 1.0) / p0
    s_hat = 2.0 * nodes * c / (n + np.sqrt(n * n + 4.0 * nodes * nodes * c))
    qd = 1.0 - a * s_hat * s_hat
    k2 = n * a * (1.0 + a * s_hat * s_hat) / (qd * qd)
    log_f = -0.5 * n * np.log(qd) - s_hat * nodes - 0.5 * np.log(2.0 * math.pi * k2)
    body = float(np.trapezoid(weights * np.exp(log_f), nodes))
    miss = cdf_value(law, n, v_star + n * law.shift, eps_s=eps_s)
    return float(min(miss + body, 1.0))


@lru_cache(maxsize=1 << 17)
def _eps_fb_threshold_union(
    variant: str, param: float, n: float, m_size: float, eps_s: float
) -> float:
    channel = ChannelModel(variant, param)
    law = single_letter_law(channel)
    log_m1 = _log_m_minus_one(m_size)

    if law.lattice is not None:
        j = np.arange(0, math.floor(n) + 1)
        miss = lattice_cdf_at_steps(law, n, j, eps_s)
        # Exact confusion tail per competing codeword: the probability that
        # a codeword drawn independently of the received word accumulates
        # density reaching lattice cell j. A BSC competitor matches each
        # received symbol with probability 1/2; a BEC competitor must match
        # every unerased symbol, which thins the unerased count into a
        # binomial with success odds (1-d) : 2d scaled by the match mass.
        if variant == "bsc":
            prefix_log = 0.0
            p_bar = 0.5
        else:
            prefix_log = n * math.log((1.0 + param) / 2.0)
            p_bar = (1.0 - param) / (1.0 + param)
        tail = np.ones(j.size)
        tail[1:] = betainc(j[1:].astype(float), n - j[1:] + 1.0, p_bar)
        with np.errstate(divide="ignore"):
            union = np.exp(np.minimum(log_m1 + prefix_log + np.log(tail), 0.0))
        return float(np.min(miss + union))

    m = moments(law, n)
    sd = math.sqrt(m.variance)
    p0 = channel.param
    shift = law.shift

    def total(gamma: float) -> float:
        tail = float(_awgn_independent_tail(p0, n, gamma - n * shift)[()])
        union = math.exp(min(log_m1 + math.log(tail), 0.0)) if tail > 0.0 else 0.0
        return cdf_value(law, n, gamma, eps_s=eps_s) + union

    return _golden_min(total, m.mean - 8.0 * sd, m.mean + 8.0 * sd, 1e-6 * max(sd, 1.0))


def _golden_min(fn, lo: float, hi: float, xtol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    invphi2 = 1.0 - invphi
    a, b = lo, hi
    h = b - a
    c = a + invphi2 * h
    d = a + invphi * h
    fc = fn(c)
    fd = fn(d)
    while h > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + invphi2 * h
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = fn(d)
    return min(fc, fd)


def eps_fb_mcrcu(
    channel: ChannelModel, n: int, m_size: float, mc: McConfig
) -> McResult:
    """Monte Carlo random-coding union bound for the forced final decision.

    Each trial draws a transmitted path, computes the true accumulated
    density, and bounds the probability that any of the ``M - 1`` independent
    competitors reaches at least that density: exactly for the lattice
    channels, via the saddlepoint tail of an independent codeword's density
    for AWGN.
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")
    log_m1 = _log_m_minus_one(m_size)
    law = single_letter_law(channel)

    if channel.variant == "bsc":
        p = success_prob(law)
        # P[competitor agreement >= a] for a = 0..n; a competitor matches the
        # received word in each position with probability 1/2.
        tail = binom.sf(np.arange(n + 1) - 1, n, 0.5)

        def block(i: int, m: int) -> np.ndarray:
            rng = _block_rng(mc.seed, i)
            agree = rng.binomial(n, p, size=m)
            vals = np.minimum(1.0, np.exp(np.minimum(log_m1 + np.log(tail[agree]), 0.0)))
            return np.array([vals.sum(), np.square(vals).sum(), m])

    elif channel.variant == "bec":
        p = success_prob(law)
        ln2 = math.log(2.0)

        def block(i: int, m: int) -> np.ndarray:
            rng = _block_rng(mc.seed, i)
            unerased = rng.binomial(n, p, size=m)
            expo = log_m1 - unerased * ln2
            vals = np.where(expo >= 0.0, 1.0, np.exp(np.minimum(expo, 0.0)))
            return np.array([vals.sum(), np.square(vals).sum(), m])

    else:
        p0 = channel.param
        sd = math.sqrt(p0)

        def block(i: int, m: int) -> np.ndarray:
            rng = _block_rng(mc.seed, i)
            acc = np.zeros(m)
            done = 0
            while done < n:
                cols = min(_MC_COLS, n - done)
                x = rng.normal(scale=sd, size=(m, cols))
                z = rng.standard_normal(size=(m, cols))
                y = x + z
                acc += (0.5 * (y * y / (1.0 + p0) - z * z)).sum(axis=1)
                done += cols
            tails = _awgn_independent_tail(p0, float(n), acc)
            with np.errstate(divide="ignore"):
                vals = np.exp(np.minimum(log_m1 + np.log(tails), 0.0))
            return np.array([vals.sum(), np.square(vals).sum(), m])

    plan = _block_plan(mc.trials)
    if mc.workers == 1 or len(plan) == 1:
        parts = [block(i, m) for i, m in plan]
    else:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            parts = list(pool.map(lambda im: block(*im), plan))
    total = np.sum(parts, axis=0)
    mean = total[0] / mc.trials
    var = max(total[1] / mc.trials - mean * mean, 0.0)
    std_err = math.sqrt(var / mc.trials)
    return McResult(float(mean), float(std_err), mc.trials)


def default_search_grid(
    channel: ChannelModel,
    spec: CodeSpec,
    rule: Rule,
    gamma_points: int = 200,
    gamma_span: float = 20.0,
    z_margin: float = 6.0,
) -> SearchGrid:
    """Build candidate ranges wide enough to contain the optimum.

    Thresholds for P1 span ``[log(M), log(M) + gamma_span]``. Blocklengths
    run from where the density mean sits ``z_margin`` deviations above the
    lowest threshold down to where it sits that far below the highest, the
    region outside which decoding instants cannot influence the objective
    beyond normal-tail mass.
    """
    law = single_letter_law(channel)
    m1 = moments(law, 1).mean
    s1 = math.sqrt(moments(law, 1).variance)
    log_m = spec.message_bits * math.log(2.0)
    gamma_lo = log_m
    gamma_hi = log_m + gamma_span

    def crossing(gamma: float, z: float) -> float:
        # Positive root in sqrt(n) of m1 * n - z * s1 * sqrt(n) - gamma = 0.
        disc = z * s1 + math.sqrt(z * z * s1 * s1 + 4.0 * m1 * gamma)
        root = disc / (2.0 * m1)
        return root * root

    n_min = max(1, math.floor(crossing(gamma_lo, -z_margin)))
    n_max = max(n_min + 1, math.ceil(crossing(gamma_hi, z_margin)))
    grid = None
    if rule is Rule.P1:
        grid = tuple(np.linspace(gamma_lo, gamma_hi, gamma_points))
    return SearchGrid(n_min, n_max, 1, grid)


def _cdf_row(
    law: InfoDensityLaw, n: int, gammas: np.ndarray, eps_s: float
) -> np.ndarray:
    """Exact-cell CDF values across a threshold grid for one blocklength."""
    if law.lattice is None:
        return np.array([cdf_value(law, n, g, eps_s=eps_s) for g in gammas])
    b = law.lattice.step
    u = (gammas - n * law.lattice.origin) / b
    r = np.round(u)
    u = np.where(np.abs(u - r) <= 1e-9 * np.maximum(1.0, np.abs(u)), r, u)
    return lattice_cdf_at_steps(law, n, np.ceil(u), eps_s)


def brute_force_search(
    channel: ChannelModel,
    spec: CodeSpec,
    rule: Rule,
    grid: SearchGrid | None = None,
    eps_s: float = DEFAULT_EPS_S,
) -> OptimizationResult:
    """Exhaustively search schedules over a grid; exact up to the grid itself.

    Supports up to three attempts. For each threshold (P1) or final instant
    (P2) the search exploits only one structural fact, that the objective is
    increasing in the final instant once the earlier instants are fixed, so
    the minimal feasible final instant is taken; everything else is
    enumerated. Ties prefer the smaller final instant, then lexicographically
    smaller instants.
    """
    t = spec.attempts
    if t > 3:
        raise ValueError("the exhaustive search supports at most 3 attempts")
    if grid is None:
        grid = default_search_grid(channel, spec, rule)
    ns = np.arange(grid.n_min, grid.n_max + 1, grid.stride, dtype=np.int64)
    if ns.size == 0:
        raise EmptyGrid("no candidate blocklengths in the search grid")
    law = single_letter_law(channel)
    eps = spec.epsilon
    m_size = spec.codebook_size
    log_m1 = _log_m_minus_one(m_size)
    nsf = ns.astype(float)
    evaluations = 0

    best: tuple[tuple, float, float] | None = None  # ((obj, nt, instants), gamma, residual)

    def consider(obj: float, instants: tuple[int, ...], gamma: float, residual: float) -> None:
        nonlocal best
        key = (obj, instants[-1], instants)
        if best is None or key < best[0]:
            best = (key, gamma, residual)

    if rule is Rule.P1:
        if not grid.gamma_grid:
            raise EmptyGrid("rule P1 needs a gamma grid for exhaustive search")
        gammas = np.asarray(grid.gamma_grid, dtype=float)
        union = np.exp(log_m1 - gammas)
        F = np.empty((ns.size, gammas.size))
        for i, n in enumerate(ns):
            F[i] = _cdf_row(law, int(n), gammas, eps_s)
        evaluations += F.size
        lower_tri = nsf[:, None] < nsf[None, :]

        for col in range(gammas.size):
            slack = eps - union[col]
            if slack < 0.0:
                continue
            fvals = F[:, col]
            feas = fvals <= slack
            if not feas.any():
                continue
            feas_ns = ns[feas]
            gamma = float(gammas[col])

            if t == 1:
                nt = int(feas_ns[0])
                resid = float(fvals[feas][0] + union[col] - eps)
                consider(float(nt), (nt,), gamma, resid)
                continue

            pos = np.searchsorted(feas_ns, ns + 1)
            has_nt = pos < feas_ns.size
            if not has_nt.any():
                continue
            nt_for = np.where(has_nt, feas_ns[np.minimum(pos, feas_ns.size - 1)], 0)
            resid_for = np.where(
                has_nt,
                F[np.searchsorted(ns, nt_for), col] + union[col] - eps,
                np.inf,
            )

            if t == 2:
                obj = np.where(has_nt, nsf + (nt_for - nsf) * fvals, np.inf)
                k = int(np.argmin(obj))
                ties = np.flatnonzero(obj == obj[k])
                for i1 in ties:
                    consider(
                        float(obj[i1]),
                        (int(ns[i1]), int(nt_for[i1])),
                        gamma,
                        float(resid_for[i1]),
                    )
                continue

            # t == 3: matrix over (first, second) instants; the final instant
            # is the minimal feasible one above the second.
            last_term = np.where(has_nt, (nt_for - nsf) * fvals, np.inf)
            mat = (
                nsf[:, None] * (1.0 - fvals[:, None])
                + nsf[None, :] * fvals[:, None]
                + last_term[None, :]
            )
            mat = np.where(lower_tri, mat, np.inf)
            kmin = np.unravel_index(np.argmin(mat), mat.shape)
            val = mat[kmin]
            if not np.isfinite(val):
                continue
            ties = np.argwhere(mat == val)
            for i1, i2 in ties:
                consider(
                    float(val),
                    (int(ns[i1]), int(ns[i2]), int(nt_for[i2])),
                    gamma,
                    float(resid_for[i2]),
                )

    else:
        fmode = (
            Overshoot.EXACT_LATTICE if law.lattice is not None else Overshoot.LOWER
        )
        for it, nt in enumerate(ns):
            floor = eps_fb(channel, int(nt), m_size, eps_s=eps_s)
            if floor >= eps:
                continue
            gamma = log_m1 - math.log(eps - floor)
            for _ in range(6):
                # Ulp guard: keep the reconstructed budget feasible in float
                # arithmetic, mirroring the optimizer's threshold solve.
                union = math.exp(log_m1 - gamma)
                if floor + union <= eps and floor <= eps - union:
                    break
                gamma = max(
                    gamma + max(abs(gamma), 1.0) * 1e-14,
                    log_m1 - math.log(eps - floor),
                )
            residual = floor + math.exp(log_m1 - gamma) - eps
            if t == 1:
                consider(float(nt), (int(nt),), gamma, residual)
                break  # objective equals nt, and nt only grows from here
            prev = nsf[:it]
            fvals = np.array(
                [cdf_value(law, float(n), gamma, fmode, eps_s) for n in prev]
            )
            evaluations += it
            if t == 2:
                if it == 0:
                    continue
                obj = prev + (float(nt) - prev) * fvals
                k = int(np.argmin(obj))
                ties = np.flatnonzero(obj == obj[k])
                for i1 in ties:
                    consider(
                        float(obj[i1]), (int(ns[i1]), int(nt)), gamma, residual
                    )
                continue
            if it < 2:
                continue
            mat = (
                prev[:, None] * (1.0 - fvals[:, None])
                + prev[None, :] * fvals[:, None]
                + ((float(nt) - prev) * fvals)[None, :]
            )
            mat = np.where(prev[:, None] < prev[None, :], mat, np.inf)
            kmin = np.unravel_index(np.argmin(mat), mat.shape)
            val = mat[kmin]
            if not np.isfinite(val):
                continue
            ties = np.argwhere(mat == val)
            for i1, i2 in ties:
                consider(
                    float(val), (int(ns[i1]), int(ns[i2]), int(nt)), gamma, residual
                )

    if best is None:
        raise Infeasible(
            "no feasible schedule on the search grid", n_last=int(ns[-1])
        )
    (obj, _, instants), gamma, residual = best
    schedule = Schedule(gamma, tuple(instants))
    return OptimizationResult(
        schedule=schedule,
        objective=float(obj),
        rate_bits=spec.message_bits / float(obj),
        constraint_residual=float(residual),
        rule=rule,
        diagnostics={
            "evaluations": float(evaluations),
            "n_candidates": float(ns.size),
            "gamma_candidates": float(len(grid.gamma_grid or ())),
        },
    )
