"""Protocol-level simulation of sparse stop-feedback decoding.

A trial transmits one codeword from a random codebook of ``m_sim`` words.
At every scheduled instant the receiver compares all accumulated
information densities against the threshold: it continues when none
reaches it, decodes when exactly one does, and declares an error when
several do at once. Under rule P1 reaching the final instant without a
crossing is an error; under rule P2 the final instant instead decides for
the maximum-density codeword, with density ties counted as errors.

Channels are simulated through sufficient statistics rather than symbol
streams. For the BSC the true codeword's agreement counts are sampled
directly and the competitors enter through one exactly precomputed
first-crossing distribution per attempt, sampled as a multinomial, so any
codebook size is handled without subsampling. For the BEC every competitor
that is still consistent with the received word shares the true codeword's
density, so only the count of consistent competitors must be tracked, and
it thins as a Markov chain. For the AWGN channel competitor densities are
simulated directly; codebooks larger than ``2**14`` are subsampled and the
competitor-caused error rate is scaled linearly, which is flagged in the
result.

Trials run in fixed-size seeded blocks whose random streams depend only on
(seed, block index), so results are reproducible for any worker count, and
P1/P2 runs with the same seed share the transmitted codeword's randomness.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import binom

from ._types import Rule, Schedule
from .channels import ChannelModel, single_letter_law
from .oracles import McConfig, _block_rng
from .saddlepoint import SNAP_REL

__all__ = [
    "Outcome",
    "Trial",
    "SimResult",
    "StoppingResult",
    "simulate",
    "simulate_stopping_only",
]

_SIM_BLOCK = 4096
_COMPETITOR_CAP = 1 << 14

_CORRECT, _FALSE_ALARM, _FINAL_ERROR = 0, 1, 2


class Outcome(Enum):
    CORRECT = "correct"
    FALSE_ALARM = "false_alarm"
    FINAL_ERROR = "final_error"


_OUTCOMES = (Outcome.CORRECT, Outcome.FALSE_ALARM, Outcome.FINAL_ERROR)


@dataclass(frozen=True)
class Trial:
    """One simulated transmission. ``attempt_index`` is the 1-based attempt
    number at which the trial stopped, so ``instants[attempt_index - 1]``
    equals ``stopping_time``."""

    stopping_time: int
    outcome: Outcome
    attempt_index: int


@dataclass(frozen=True)
class SimResult:
    """Aggregated protocol simulation outcome.

    ``outcome_counts`` holds raw simulated counts. When ``extrapolated`` is
    set (AWGN with a subsampled codebook), ``err_rate`` scales the
    competitor-caused error share up to the full codebook size and no longer
    equals the raw count ratio; ``mean_tau`` is never extrapolated.
    """

    err_rate: float
    err_stderr: float
    mean_tau: float
    tau_stderr: float
    trials: int
    outcome_counts: dict[str, int]
    attempt_histogram: tuple[int, ...]
    extrapolated: bool = False
    trial_records: tuple[Trial, ...] | None = None


@dataclass(frozen=True)
class StoppingResult:
    """Single-codeword stopping statistics (no competitors).

    ``continue_freq[j]`` is the fraction of trials with no threshold
    crossing at attempts 1..j+1; ``below_freq[j]`` is the marginal fraction
    with density below the threshold at instant j+1 regardless of earlier
    crossings, the quantity the objective surrogate uses.
    """

    mean_tau: float
    tau_stderr: float
    attempt_histogram: tuple[int, ...]
    continue_freq: tuple[float, ...]
    below_freq: tuple[float, ...]
    trials: int


def _crossing_counts(schedule: Schedule, origin: float, step: float) -> np.ndarray:
    """Per-instant minimal lattice step count whose density reaches the threshold."""
    out = np.empty(len(schedule.instants), dtype=np.int64)
    for i, n in enumerate(schedule.instants):
        u = (schedule.gamma - n * origin) / step
        nearest = round(u)
        if abs(u - nearest) <= SNAP_REL * max(1.0, abs(u)):
            u = float(nearest)
        out[i] = math.ceil(u)
    return out


def _merge_blocks(fn, cfg: McConfig, collect: bool):
    """Run seeded trial blocks, serially or in a thread pool, and merge in index order."""
    sizes = []
    remaining = cfg.trials
    while remaining > 0:
        take = min(_SIM_BLOCK, remaining)
        sizes.append(take)
        remaining -= take

    def run(idx_size):
        idx, size = idx_size
        return fn(_block_rng(cfg.seed, idx), size, collect)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, enumerate(sizes)))
    else:
        parts = [run(item) for item in enumerate(sizes)]
    return parts


def _finalize(
    parts, schedule: Schedule, trials: int, collect: bool, extrapolated: bool
) -> SimResult:
    t = len(schedule.instants)
    outcome_totals = np.zeros(3, dtype=np.int64)
    hist = np.zeros(t, dtype=np.int64)
    err_sum = 0.0
    err_sumsq = 0.0
    tau_sum = 0
    tau_sumsq = 0
    records: list[Trial] = []
    for part in parts:
        counts, part_hist, e1, e2, t1, t2, recs = part
        outcome_totals += counts
        hist += part_hist
        err_sum += e1
        err_sumsq += e2
        tau_sum += t1
        tau_sumsq += t2
        if collect:
            records.extend(recs)
    err_rate = err_sum / trials
    err_var = max(err_sumsq / trials - err_rate * err_rate, 0.0)
    mean_tau = tau_sum / trials
    tau_var = max(tau_sumsq / trials - mean_tau * mean_tau, 0.0)
    return SimResult(
        err_rate=float(err_rate),
        err_stderr=float(math.sqrt(err_var / trials)),
        mean_tau=float(mean_tau),
        tau_stderr=float(math.sqrt(tau_var / trials)),
        trials=trials,
        outcome_counts={
            o.value: int(c) for o, c in zip(_OUTCOMES, outcome_totals)
        },
        attempt_histogram=tuple(int(v) for v in hist),
        extrapolated=extrapolated,
        trial_records=tuple(records) if collect else None,
    )


def _pack(
    codes: np.ndarray,
    attempt: np.ndarray,
    taus: np.ndarray,
    err_weight: np.ndarray,
    t: int,
    collect: bool,
):
    counts = np.bincount(codes, minlength=3).astype(np.int64)
    hist = np.bincount(attempt, minlength=t).astype(np.int64)
    recs = []
    if collect:
        for i in range(len(codes)):
            recs.append(
                Trial(
                    stopping_time=int(taus[i]),
                    outcome=_OUTCOMES[codes[i]],
                    attempt_index=int(attempt[i]) + 1,
                )
            )
    return (
        counts,
        hist,
        float(err_weight.sum()),
        float((err_weight * err_weight).sum()),
        int(taus.sum()),
        int((taus.astype(np.int64) ** 2).sum()),
        recs,
    )


# -- BSC: exact competitor first-crossing distribution ----------------------


def _bsc_competitor_pattern(
    instants: tuple[int, ...], counts_needed: np.ndarray, split_last: bool
) -> tuple[np.ndarray, np.ndarray]:
    """First-crossing probabilities of one uniform competitor over the schedule.

    Returns the category vector (first crossing at attempt 1..T, then the
    never-crossed remainder) and the CDF of the competitor's agreement count
    at the final instant conditioned on never crossing, which the refined
    final decision needs. ``split_last`` includes the final instant in the
    threshold tests (rule P1); otherwise the chain just propagates to it.
    """
    t = len(instants)
    n_final = instants[-1]
    split_upto = t if split_last else t - 1
    gaps = np.diff(np.concatenate(([0], np.asarray(instants))))
    q = np.zeros(split_upto + 1)
    pmf = np.zeros(1)
    pmf[0] = 1.0
    for j in range(t):
        gap = int(gaps[j])
        pmf = np.convolve(pmf, binom.pmf(np.arange(gap + 1), gap, 0.5))
        if j < split_upto:
            cut = int(min(max(counts_needed[j], 0), len(pmf)))
            q[j] = float(pmf[cut:].sum())
            pmf = pmf[:cut].copy()
            if pmf.size == 0:
                pmf = np.zeros(1)
    survive = float(pmf.sum())
    q[split_upto] = survive
    q = np.clip(q, 0.0, None)
    total = q.sum()
    if total <= 0.0:
        q[-1] = 1.0
    else:
        q /= total
    cond_cdf = np.ones(n_final + 1)
    if not split_last and survive > 0.0:
        padded = np.zeros(n_final + 1)
        padded[: len(pmf)] = pmf
        cond_cdf = np.clip(np.cumsum(padded) / survive, 0.0, 1.0)
    return q, cond_cdf


def _simulate_bsc(
    channel: ChannelModel,
    schedule: Schedule,
    m_sim: int,
    rule: Rule,
    cfg: McConfig,
    collect: bool,
) -> SimResult:
    law = single_letter_law(channel)
    lattice = law.lattice
    assert lattice is not None
    instants = schedule.instants
    t = len(instants)
    split_last = rule is Rule.P1
    threshold_attempts = t if split_last else t - 1
    needed = _crossing_counts(schedule, lattice.origin, lattice.step)
    q, cond_cdf = _bsc_competitor_pattern(instants, needed, split_last)
    gaps = np.diff(np.concatenate(([0], np.asarray(instants))))
    p_true = 1.0 - channel.param
    instants_arr = np.asarray(instants, dtype=np.int64)

    def block(rng: np.random.Generator, count: int, want_records: bool):
        incs = rng.binomial(gaps, p_true, size=(count, t))
        path = np.cumsum(incs, axis=1)
        comp = rng.multinomial(m_sim - 1, q, size=count)
        tie_u = rng.random(count)

        crossed = path >= needed[np.newaxis, :]
        if threshold_attempts < t:
            crossed = crossed[:, :threshold_attempts]
        j_true = np.where(
            crossed.any(axis=1), crossed.argmax(axis=1), threshold_attempts
        )
        comp_cross = comp[:, :threshold_attempts] > 0
        j_comp = np.where(
            comp_cross.any(axis=1), comp_cross.argmax(axis=1), threshold_attempts
        )
        j_star = np.minimum(j_true, j_comp)

        codes = np.empty(count, dtype=np.int64)
        attempt = np.empty(count, dtype=np.int64)
        stopped = j_star < threshold_attempts
        attempt[stopped] = j_star[stopped]
        attempt[~stopped] = t - 1
        codes[stopped & (j_true < j_comp)] = _CORRECT
        codes[stopped & (j_comp <= j_true)] = _FALSE_ALARM
        final = ~stopped
        if split_last:
            codes[final] = _FINAL_ERROR
        else:
            a_final = path[final, t - 1]
            below = np.where(a_final > 0, cond_cdf[np.maximum(a_final - 1, 0)], 0.0)
            with np.errstate(divide="ignore"):
                win = np.where(
                    below >= 1.0,
                    1.0,
                    np.exp((m_sim - 1) * np.log(np.maximum(below, 1e-300))),
                )
            win[below <= 0.0] = 0.0
            ok = tie_u[final] < win
            sub = np.where(ok, _CORRECT, _FINAL_ERROR)
            codes[final] = sub
        taus = instants_arr[attempt]
        err_weight = (codes != _CORRECT).astype(float)
        return _pack(codes, attempt, taus, err_weight, t, want_records)

    parts = _merge_blocks(block, cfg, collect)
    return _finalize(parts, schedule, cfg.trials, collect, extrapolated=False)


# -- BEC: consistent-competitor thinning chain -------------------------------


def _simulate_bec(
    channel: ChannelModel,
    schedule: Schedule,
    m_sim: int,
    rule: Rule,
    cfg: McConfig,
    collect: bool,
) -> SimResult:
    law = single_letter_law(channel)
    lattice = law.lattice
    assert lattice is not None
    instants = schedule.instants
    t = len(instants)
    split_last = rule is Rule.P1
    threshold_attempts = t if split_last else t - 1
    needed = _crossing_counts(schedule, lattice.origin, lattice.step)
    gaps = np.diff(np.concatenate(([0], np.asarray(instants))))
    p_unerased = 1.0 - channel.param
    instants_arr = np.asarray(instants, dtype=np.int64)

    def block(rng: np.random.Generator, count: int, want_records: bool):
        incs = rng.binomial(gaps, p_unerased, size=(count, t))
        path = np.cumsum(incs, axis=1)
        # Competitors stay consistent only by matching every newly revealed
        # symbol, halving their survival odds per unerased symbol.
        alive = np.full(count, m_sim - 1, dtype=np.int64)
        alive_path = np.empty((count, t), dtype=np.int64)
        for j in range(t):
            alive = rng.binomial(alive, np.exp2(-incs[:, j].astype(float)))
            alive_path[:, j] = alive

        crossed = path >= needed[np.newaxis, :]
        if threshold_attempts < t:
            crossed = crossed[:, :threshold_attempts]
        j_true = np.where(
            crossed.any(axis=1), crossed.argmax(axis=1), threshold_attempts
        )
        codes = np.empty(count, dtype=np.int64)
        attempt = np.empty(count, dtype=np.int64)
        stopped = j_true < threshold_attempts
        attempt[stopped] = j_true[stopped]
        attempt[~stopped] = t - 1
        rows = np.flatnonzero(stopped)
        clean = alive_path[rows, j_true[rows]] == 0
        codes[rows[clean]] = _CORRECT
        codes[rows[~clean]] = _FALSE_ALARM
        final = ~stopped
        if split_last:
            codes[final] = _FINAL_ERROR
        else:
            # Every surviving competitor ties the true density exactly, so a
            # clean final decision requires none to survive.
            codes[final] = np.where(
                alive_path[final, t - 1] == 0, _CORRECT, _FINAL_ERROR
            )
        taus = instants_arr[attempt]
        err_weight = (codes != _CORRECT).astype(float)
        return _pack(codes, attempt, taus, err_weight, t, want_records)

    parts = _merge_blocks(block, cfg, collect)
    return _finalize(parts, schedule, cfg.trials, collect, extrapolated=False)


# -- AWGN: direct competitor simulation ---------------------------------------


def _simulate_awgn(
    channel: ChannelModel,
    schedule: Schedule,
    m_sim: int,
    rule: Rule,
    cfg: McConfig,
    collect: bool,
) -> SimResult:
    law = single_letter_law(channel)
    instants = schedule.instants
    t = len(instants)
    n_final = instants[-1]
    split_last = rule is Rule.P1
    threshold_attempts = t if split_last else t - 1
    gamma = schedule.gamma
    p0 = channel.param
    shift = law.shift
    sigma = math.sqrt(p0)
    n_comp = min(m_sim - 1, _COMPETITOR_CAP)
    scale = (m_sim - 1) / n_comp
    extrapolated = n_comp < m_sim - 1
    gaps = np.diff(np.concatenate(([0], np.asarray(instants))))
    instants_arr = np.asarray(instants, dtype=np.int64)

    def block(rng: np.random.Generator, count: int, want_records: bool):
        codes = np.empty(count, dtype=np.int64)
        attempt = np.empty(count, dtype=np.int64)
        err_weight = np.zeros(count)
        for i in range(count):
            s_true = 0.0
            comp_acc = np.zeros(n_comp)
            outcome = None
            attempt_idx = t - 1
            for j in range(t):
                gap = int(gaps[j])
                z = rng.standard_normal(gap)
                x = sigma * rng.standard_normal(gap)
                y = x + z
                comp_x = sigma * rng.standard_normal((n_comp, gap))
                s_true += float(
                    gap * shift + 0.5 * np.sum(y * y / (1.0 + p0) - z * z)
                )
                diff = y[np.newaxis, :] - comp_x
                comp_acc += gap * shift + 0.5 * (
                    np.sum(y * y) / (1.0 + p0) - np.einsum("ij,ij->i", diff, diff)
                )
                if outcome is not None or j >= threshold_attempts:
                    continue
                true_cross = s_true >= gamma
                n_cross = int(np.count_nonzero(comp_acc >= gamma))
                if true_cross and n_cross == 0:
                    outcome = _CORRECT
                    attempt_idx = j
                elif true_cross or n_cross > 0:
                    outcome = _FALSE_ALARM
                    attempt_idx = j
            if outcome is None:
                if split_last:
                    outcome = _FINAL_ERROR
                else:
                    outcome = (
                        _CORRECT if s_true > float(comp_acc.max()) else _FINAL_ERROR
                    )
                attempt_idx = t - 1
            codes[i] = outcome
            attempt[i] = attempt_idx
            if outcome == _FALSE_ALARM or (outcome == _FINAL_ERROR and not split_last):
                err_weight[i] = scale
            elif outcome == _FINAL_ERROR:
                err_weight[i] = 1.0
        taus = instants_arr[attempt]
        return _pack(codes, attempt, taus, err_weight, t, want_records)

    parts = _merge_blocks(block, cfg, collect)
    result = _finalize(parts, schedule, cfg.trials, collect, extrapolated)
    if result.err_rate > 1.0:
        result = dataclasses.replace(result, err_rate=1.0)
    return result


def simulate(
    channel: ChannelModel,
    schedule: Schedule,
    m_sim: int,
    rule: Rule,
    cfg: McConfig,
    collect_trials: bool = False,
) -> SimResult:
    """Simulate the full protocol with an ``m_sim``-word random codebook.

    The stopping and decision rules follow the three-case threshold test at
    every scheduled instant, with rule P2 replacing the final test by a
    maximum-density decision. Errors count false alarms (wrong or ambiguous
    decisions at a crossing) and final failures.
    """
    if m_sim < 2:
        raise ValueError("simulation codebook needs at least 2 codewords")
    if not isinstance(rule, Rule):
        raise ValueError(f"unknown rule: {rule!r}")
    if channel.variant == "bsc":
        return _simulate_bsc(channel, schedule, m_sim, rule, cfg, collect_trials)
    if channel.variant == "bec":
        return _simulate_bec(channel, schedule, m_sim, rule, cfg, collect_trials)
    return _simulate_awgn(channel, schedule, m_sim, rule, cfg, collect_trials)


def simulate_stopping_only(
    channel: ChannelModel, schedule: Schedule, cfg: McConfig
) -> StoppingResult:
    """Stopping statistics of the transmitted codeword alone.

    Thresholds are tested at every instant and the trial stops at the first
    crossing or at the final instant. The sample mean of the stopping time
    reproduces ``n_1 + sum (n_{j+1}-n_j) * continue_freq[j]`` exactly, the
    empirical form of the objective surrogate.
    """
    law = single_letter_law(channel)
    instants = schedule.instants
    t = len(instants)
    gaps = np.diff(np.concatenate(([0], np.asarray(instants))))
    instants_arr = np.asarray(instants, dtype=np.int64)

    if law.lattice is not None:
        needed = _crossing_counts(schedule, law.lattice.origin, law.lattice.step)
        p_step = 1.0 - channel.param

        def paths_below(rng: np.random.Generator, count: int) -> np.ndarray:
            incs = rng.binomial(gaps, p_step, size=(count, t))
            return np.cumsum(incs, axis=1) < needed[np.newaxis, :]

    else:
        p0 = channel.param
        sigma = math.sqrt(p0)
        shift = law.shift

        def paths_below(rng: np.random.Generator, count: int) -> np.ndarray:
            s = np.zeros((count, t))
            acc = np.zeros(count)
            for j in range(t):
                gap = int(gaps[j])
                z = rng.standard_normal((count, gap))
                x = sigma * rng.standard_normal((count, gap))
                y = x + z
                acc = acc + gap * shift + 0.5 * np.sum(
                    y * y / (1.0 + p0) - z * z, axis=1
                )
                s[:, j] = acc
            return s < schedule.gamma

    def block(rng: np.random.Generator, count: int, _collect: bool):
        below = paths_below(rng, count)
        crossed = ~below
        stop = np.where(crossed.any(axis=1), crossed.argmax(axis=1), t - 1)
        taus = instants_arr[stop]
        hist = np.bincount(stop, minlength=t).astype(np.int64)
        running = np.cumprod(below, axis=1)  # no crossing through attempt j
        return (
            int(taus.sum()),
            int((taus.astype(np.int64) ** 2).sum()),
            hist,
            running.sum(axis=0).astype(np.int64),
            below.sum(axis=0).astype(np.int64),
        )

    parts = _merge_blocks(block, cfg, collect=False)
    tau_sum = 0
    tau_sumsq = 0
    hist = np.zeros(t, dtype=np.int64)
    cont = np.zeros(t, dtype=np.int64)
    below_tot = np.zeros(t, dtype=np.int64)
    for t1, t2, h, c, b in parts:
        tau_sum += t1
        tau_sumsq += t2
        hist += h
        cont += c
        below_tot += b
    n = cfg.trials
    mean_tau = tau_sum / n
    tau_var = max(tau_sumsq / n - mean_tau * mean_tau, 0.0)
    return StoppingResult(
        mean_tau=float(mean_tau),
        tau_stderr=float(math.sqrt(tau_var / n)),
        attempt_histogram=tuple(int(v) for v in hist),
        continue_freq=tuple(float(v) / n for v in cont),
        below_freq=tuple(float(v) / n for v in below_tot),
        trials=n,
    )
