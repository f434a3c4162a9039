"""Schedule search for sparse stop-feedback codes.

A schedule is a decision threshold ``gamma`` plus ``t`` decoding instants.
The quantity minimized is the expected-stopping-time surrogate

    objective = n_1 + sum_j (n_{j+1} - n_j) * F(n_j, gamma)

where ``F(n, gamma)`` is the probability that the accumulated density is
still below the threshold after ``n`` symbols. Feasibility couples only the
threshold and the final instant: under rule P1 the miss probability at the
final instant plus the confusion union bound must fit the error budget;
under rule P2 the final attempt decodes unconditionally and the union bound
plus the forced-decision error floor must fit instead.

The search runs in three phases. A smooth phase descends on log-gap
coordinates, eliminating the threshold exactly at every step (the smallest
feasible threshold is optimal because the objective increases with it). An
integer phase rounds the relaxed instants all ways and re-solves the
threshold with integer semantics, which for lattice laws means exact-cell
values. A local phase polishes with single-coordinate moves of one or two
symbols. Multiple deterministic starts cover distinct basins; everything is
reproducible because nothing draws randomness.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from ._types import CodeSpec, OptimizationResult, Rule, Schedule
from .channels import ChannelModel, InfoDensityLaw, moments, single_letter_law
from .errors import Infeasible
from .oracles import eps_fb
from .saddlepoint import DEFAULT_EPS_S, Overshoot, cdf_value, lattice_cdf_at_steps

__all__ = [
    "Rule",
    "CodeSpec",
    "Schedule",
    "OptimizationResult",
    "OptimizeOptions",
    "DenseReference",
    "SweepRow",
    "objective",
    "solve_gamma_p1",
    "solve_gamma_p2",
    "optimize",
    "dense_reference",
    "sweep",
]


@dataclass(frozen=True)
class OptimizeOptions:
    """Tuning knobs for :func:`optimize`.

    ``n_max`` bounds the final instant; if no feasible schedule fits, the
    bound doubles until ``n_limit`` before the search gives up.
    ``extra_start_instants`` injects known-good schedules (for example from a
    neighbouring sweep cell) as additional descent starts and as direct
    integer candidates.
    """

    eps_s: float = DEFAULT_EPS_S
    n_max: int = 8192
    n_limit: int = 65536
    max_iters: int = 500
    grad_tol: float = 1e-6
    local_move_cap: int = 30_000
    extra_start_instants: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class DenseReference:
    """Best objective achievable when every symbol is a decoding instant."""

    objective: float
    rate_bits: float
    gamma: float
    final_instant: int


@dataclass(frozen=True)
class SweepRow:
    """One sweep cell. ``rule`` is ``p1``/``p2``, or ``dense`` for reference rows."""

    channel: str
    param: float
    bits: float
    eps: float
    t: int
    rule: str
    rate_bits: float
    objective: float
    gamma: float
    instants: tuple[int, ...]
    feasible: bool


def _final_mode(law: InfoDensityLaw) -> Overshoot:
    return Overshoot.EXACT_LATTICE if law.lattice is not None else Overshoot.LOWER


def objective(
    channel: ChannelModel,
    schedule: Schedule,
    eps_s: float = DEFAULT_EPS_S,
    mode: Overshoot | None = None,
) -> float:
    """Expected-stopping-time surrogate of a schedule.

    Lattice laws default to exact-cell CDF values; pass ``mode`` to evaluate
    the bracketing interpolants instead.
    """
    law = single_letter_law(channel)
    use = mode if mode is not None else _final_mode(law)
    total = float(schedule.instants[0])
    for a, b in zip(schedule.instants, schedule.instants[1:]):
        total += (b - a) * cdf_value(law, float(a), schedule.gamma, use, eps_s)
    return total


def _log_m_minus_one(m_size: float) -> float:
    if m_size < 2.0:
        raise ValueError("codebook size must be at least 2")
    return math.log(m_size - 1.0)


def _golden_argmin(fn, lo: float, hi: float, xtol: float) -> tuple[float, float]:
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
    return (c, fc) if fc <= fd else (d, fd)


def _lift_feasible(miss_at, log_m1: float, eps: float, gamma: float) -> float:
    """Nudge a binding threshold upward until the budget holds in floats.

    Solvers that place the threshold exactly on the constraint boundary can
    land a couple of ulps on the wrong side once the budget is re-evaluated
    in floating point; certification compares against a strict test, so the
    returned threshold must satisfy it as evaluated, not just exactly.
    """
    for _ in range(6):
        miss = miss_at(gamma)
        if miss >= eps:
            break
        union = math.exp(log_m1 - gamma)
        # Both float orderings of the same budget test, since downstream
        # consumers phrase it either way.
        if miss + union <= eps and miss <= eps - union:
            break
        gamma = max(
            gamma + max(abs(gamma), 1.0) * 1e-14,
            log_m1 - math.log(eps - miss),
        )
    return gamma


def _gamma_p1_continuous(
    law: InfoDensityLaw,
    nt: float,
    log_m1: float,
    eps: float,
    eps_s: float,
    mode: Overshoot,
    hint: float | None = None,
) -> float | None:
    """Smallest threshold meeting the P1 budget at a (possibly real) final instant.

    The budget function ``h(g) = F(nt, g) + (M-1) e^{-g} - eps`` is
    nonnegative at ``g_lo = log(M-1) - log(eps)`` and below it, so the
    smallest feasible threshold is the unique downward crossing of ``h``;
    ``None`` means the budget cannot be met at this instant.
    """

    def miss_at(g: float) -> float:
        return cdf_value(law, nt, g, mode, eps_s)

    def h(g: float) -> float:
        return miss_at(g) + math.exp(log_m1 - g) - eps

    def settle(g: float) -> float:
        return _lift_feasible(miss_at, log_m1, eps, g)

    g_lo = log_m1 - math.log(eps)
    h_lo = h(g_lo)
    if h_lo <= 0.0:
        return g_lo
    if hint is not None and hint > g_lo:
        a = max(g_lo, hint - 2.0)
        ha = h(a)
        if ha < 0.0:
            return settle(float(brentq(h, g_lo, a, xtol=1e-12, rtol=1e-15)))
        b = hint + 2.0
        if h(b) < 0.0:
            return settle(float(brentq(h, a, b, xtol=1e-12, rtol=1e-15)))
    m = moments(law, nt)
    g_hi = m.mean + 8.0 * math.sqrt(m.variance)
    if g_hi <= g_lo:
        return None
    span_tol = max(0.01 * math.sqrt(m.variance), 1e-6)
    g_best, h_best = _golden_argmin(h, g_lo, g_hi, span_tol)
    if h_best >= 0.0:
        return None
    return settle(float(brentq(h, g_lo, g_best, xtol=1e-12, rtol=1e-15)))


def _gamma_p1_lattice_exact(
    law: InfoDensityLaw, nt: int, log_m1: float, eps: float, eps_s: float
) -> float | None:
    """Smallest P1-feasible threshold under exact-cell lattice semantics.

    The miss probability is a step function, constant on each lattice cell,
    so per cell the binding threshold has a closed form and feasibility is a
    containment check; the first feasible cell gives the global minimum since
    both the step values and the per-cell requirements increase.
    """
    lattice = law.lattice
    assert lattice is not None
    steps = np.arange(1, nt + 2, dtype=float)
    miss = lattice_cdf_at_steps(law, float(nt), steps, eps_s)  # P[B <= j], j = 0..nt
    upper_edges = nt * lattice.origin + steps * lattice.step
    feasible_p = miss < eps
    if not feasible_p.any():
        return None
    need = np.full(miss.shape, np.inf)
    need[feasible_p] = log_m1 - np.log(eps - miss[feasible_p])
    ok = np.flatnonzero(feasible_p & (need <= upper_edges))
    if ok.size == 0:
        return None
    j = int(ok[0])
    return _lift_feasible(lambda _: float(miss[j]), log_m1, eps, float(need[j]))


def _gamma_p2(
    channel: ChannelModel,
    nt: float,
    m_size: float,
    log_m1: float,
    eps: float,
    eps_s: float,
) -> float | None:
    """P2 threshold: the union bound takes whatever the error floor leaves.

    The error floor is evaluated at the two bracketing integers and
    interpolated log-linearly: exact at integer finals, smooth enough for
    finite differences in between, and cache-friendly because the relaxed
    search probes a dense set of real finals over a handful of integers.
    """
    lo = math.floor(nt)
    hi = math.ceil(nt)
    f_lo = eps_fb(channel, float(lo), m_size, eps_s=eps_s)
    if hi == lo:
        floor = f_lo
    else:
        f_hi = eps_fb(channel, float(hi), m_size, eps_s=eps_s)
        w = nt - lo
        if f_lo > 0.0 and f_hi > 0.0:
            floor = math.exp((1.0 - w) * math.log(f_lo) + w * math.log(f_hi))
        else:
            floor = (1.0 - w) * f_lo + w * f_hi
    if floor >= eps:
        return None
    return _lift_feasible(lambda _: floor, log_m1, eps, log_m1 - math.log(eps - floor))


def solve_gamma_p1(
    channel: ChannelModel,
    n_t: int,
    m_size: float,
    epsilon: float,
    eps_s: float = DEFAULT_EPS_S,
) -> float:
    """Smallest P1-feasible threshold at a final instant, integer semantics."""
    law = single_letter_law(channel)
    log_m1 = _log_m_minus_one(m_size)
    if law.lattice is not None:
        gamma = _gamma_p1_lattice_exact(law, int(n_t), log_m1, epsilon, eps_s)
    else:
        gamma = _gamma_p1_continuous(
            law, float(n_t), log_m1, epsilon, eps_s, Overshoot.LOWER
        )
    if gamma is None:
        raise Infeasible(
            f"no threshold meets the budget {epsilon!r} at final instant {n_t}",
            n_last=int(n_t),
        )
    return gamma


def solve_gamma_p2(
    channel: ChannelModel,
    n_t: int,
    m_size: float,
    epsilon: float,
    eps_s: float = DEFAULT_EPS_S,
) -> float:
    """P2 threshold at a final instant; infeasible when the error floor fills the budget."""
    log_m1 = _log_m_minus_one(m_size)
    gamma = _gamma_p2(channel, float(n_t), m_size, log_m1, epsilon, eps_s)
    if gamma is None:
        raise Infeasible(
            f"forced-decision error floor exceeds the budget {epsilon!r} "
            f"at final instant {n_t}",
            n_last=int(n_t),
        )
    return gamma


class _Search:
    """Per-mode workspace carrying the relaxed and integer evaluators."""

    def __init__(
        self,
        channel: ChannelModel,
        spec: CodeSpec,
        rule: Rule,
        mode: Overshoot,
        options: OptimizeOptions,
        integer_gamma_cache: dict,
    ):
        self.channel = channel
        self.spec = spec
        self.rule = rule
        self.mode = mode
        self.options = options
        self.law = single_letter_law(channel)
        self.eps = spec.epsilon
        self.m_size = spec.codebook_size
        self.log_m1 = _log_m_minus_one(self.m_size)
        m1 = moments(self.law, 1)
        self.mean1 = m1.mean
        self.sd1 = math.sqrt(m1.variance)
        self.gamma_hint: float | None = None
        self._int_gamma = integer_gamma_cache
        self.final_mode = _final_mode(self.law)

    # -- relaxed phase ----------------------------------------------------

    def relaxed_gamma(self, nt: float) -> float | None:
        if self.rule is Rule.P2:
            return _gamma_p2(
                self.channel, nt, self.m_size, self.log_m1, self.eps, self.options.eps_s
            )
        g = _gamma_p1_continuous(
            self.law, nt, self.log_m1, self.eps, self.options.eps_s,
            self.mode, self.gamma_hint,
        )
        if g is not None:
            self.gamma_hint = g
        return g

    def relaxed_objective(self, theta: np.ndarray) -> tuple[float | None, float | None]:
        if np.any(theta > 32.0):
            return None, None
        gaps = np.exp(theta)
        inst = np.cumsum(gaps)
        if not np.isfinite(inst[-1]) or inst[0] < 1.0 or inst[-1] > 4.0 * self.options.n_limit:
            return None, None
        gamma = self.relaxed_gamma(float(inst[-1]))
        if gamma is None:
            return None, None
        total = float(inst[0])
        for j in range(len(inst) - 1):
            total += (inst[j + 1] - inst[j]) * cdf_value(
                self.law, float(inst[j]), gamma, self.mode, self.options.eps_s
            )
        return total, gamma

    # -- integer phase ----------------------------------------------------

    def integer_gamma(self, nt: int) -> tuple[float, float] | None:
        """Threshold plus constraint residual at an integer final instant."""
        hit = self._int_gamma.get((self.rule, nt), "miss")
        if hit != "miss":
            return hit
        if self.rule is Rule.P2:
            gamma = _gamma_p2(
                self.channel, float(nt), self.m_size, self.log_m1, self.eps,
                self.options.eps_s,
            )
            if gamma is None:
                result = None
            else:
                floor = eps_fb(self.channel, float(nt), self.m_size, eps_s=self.options.eps_s)
                result = (gamma, floor + math.exp(self.log_m1 - gamma) - self.eps)
        else:
            if self.law.lattice is not None:
                gamma = _gamma_p1_lattice_exact(
                    self.law, nt, self.log_m1, self.eps, self.options.eps_s
                )
            else:
                gamma = _gamma_p1_continuous(
                    self.law, float(nt), self.log_m1, self.eps, self.options.eps_s,
                    Overshoot.LOWER, self.gamma_hint,
                )
            if gamma is None:
                result = None
            else:
                miss = cdf_value(
                    self.law, float(nt), gamma, self.final_mode, self.options.eps_s
                )
                result = (gamma, miss + math.exp(self.log_m1 - gamma) - self.eps)
        self._int_gamma[(self.rule, nt)] = result
        return result

    def integer_eval(
        self, instants: tuple[int, ...]
    ) -> tuple[float, float, float] | None:
        """(objective, gamma, residual) for integer instants, or None if infeasible."""
        solved = self.integer_gamma(instants[-1])
        if solved is None:
            return None
        gamma, residual = solved
        total = float(instants[0])
        for a, b in zip(instants, instants[1:]):
            total += (b - a) * cdf_value(
                self.law, float(a), gamma, self.final_mode, self.options.eps_s
            )
        return total, gamma, residual

    # -- start construction -------------------------------------------------

    def pilot_instant(self, z: float) -> float:
        """Blocklength where the density mean sits ``z`` deviations above a pilot threshold."""
        gamma_hat = self.log_m1 - math.log(self.eps / 2.0)
        disc = z * self.sd1 + math.sqrt(z * z * self.sd1 * self.sd1 + 4.0 * self.mean1 * gamma_hat)
        root = disc / (2.0 * self.mean1)
        return root * root

    def build_starts(self) -> list[np.ndarray]:
        t = self.spec.attempts
        z_star = float(-ndtri(self.eps / 2.0))
        pairs = [
            (-2.0, z_star),
            (-1.0, z_star),
            (0.0, z_star),
            (1.0, z_star),
            (-2.0, z_star + 0.7),
            (0.0, z_star + 0.7),
            (-1.0, z_star + 1.5),
            (0.0, z_star - 0.5),
        ]
        starts = []
        seen = set()
        for z_first, z_last in pairs:
            if t == 1:
                zs = [z_last]
            else:
                zs = [z_first + (z_last - z_first) * j / (t - 1) for j in range(t)]
            inst = []
            prev = 0.0
            for z in zs:
                v = max(self.pilot_instant(z), prev + 1.0, 1.5)
                inst.append(v)
                prev = v
            key = tuple(round(v, 6) for v in inst)
            if key in seen:
                continue
            seen.add(key)
            gaps = np.diff(np.concatenate(([0.0], inst)))
            starts.append(np.log(gaps))
        return starts


def _descend(
    ws: _Search, theta0: np.ndarray
) -> tuple[np.ndarray, float, int, float] | None:
    """Armijo-backtracked gradient descent on log-gap coordinates.

    Returns (theta, value, iterations, gradient norm), or None when even a
    stretched version of the start is infeasible.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    val, _ = ws.relaxed_objective(theta)
    stretch = 0
    while val is None and stretch < 10:
        theta[-1] += math.log(1.5)
        val, _ = ws.relaxed_objective(theta)
        stretch += 1
    if val is None:
        return None
    step = 1.0
    iters = 0
    gnorm = math.inf
    dim = len(theta)
    anchor = val
    since_anchor = 0
    for iters in range(1, ws.options.max_iters + 1):
        grad = np.zeros(dim)
        for j in range(dim):
            hj = max(1e-4, 1e-6 * abs(theta[j]))
            up = theta.copy()
            up[j] += hj
            dn = theta.copy()
            dn[j] -= hj
            fu, _ = ws.relaxed_objective(up)
            fd, _ = ws.relaxed_objective(dn)
            if fu is None and fd is None:
                grad[j] = 0.0
            elif fu is None:
                grad[j] = (val - fd) / hj
            elif fd is None:
                grad[j] = (fu - val) / hj
            else:
                grad[j] = (fu - fd) / (2.0 * hj)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < ws.options.grad_tol:
            break
        alpha = step
        moved = False
        gg = float(grad @ grad)
        for _ in range(40):
            cand = theta - alpha * grad
            fc, _ = ws.relaxed_objective(cand)
            if fc is not None and fc <= val - 1e-4 * alpha * gg:
                theta = cand
                val = fc
                moved = True
                break
            alpha *= 0.5
        if not moved:
            break
        # Carry the accepted step into the next line search instead of
        # restarting at 1, and stop once a window of iterations brings no
        # meaningful progress; integer rounding swallows anything smaller.
        step = min(alpha * 2.0, 4.0)
        since_anchor += 1
        if since_anchor >= 20:
            if anchor - val < 1e-9 * (1.0 + abs(val)):
                break
            anchor = val
            since_anchor = 0
        step = min(alpha * 2.0, 4.0)
    return theta, val, iters, gnorm


def _round_candidates(inst: np.ndarray) -> list[tuple[int, ...]]:
    """All floor/ceil combinations of relaxed instants that stay valid."""
    choices = []
    for v in inst:
        lo = max(1, math.floor(v))
        hi = max(1, math.ceil(v))
        choices.append((lo,) if lo == hi else (lo, hi))
    out = []
    for combo in itertools.product(*choices):
        if all(b > a for a, b in zip(combo, combo[1:])):
            out.append(tuple(int(v) for v in combo))
    if not out:
        # Force a valid ladder from the rounded values.
        forced = []
        prev = 0
        for v in inst:
            w = max(int(round(v)), prev + 1)
            forced.append(w)
            prev = w
        out.append(tuple(forced))
    return sorted(set(out))


_SCAN_SPAN = 16


def _scan_moves(current: tuple[int, ...], span: int) -> list[tuple[int, ...]]:
    """Neighbourhood of coordinate offsets and shifted suffix blocks."""
    t = len(current)
    out = []
    for j in range(t):
        for d in range(-span, span + 1):
            if d == 0:
                continue
            cand = list(current)
            cand[j] += d
            if cand[j] < 1:
                continue
            if j > 0 and cand[j] <= cand[j - 1]:
                continue
            if j + 1 < t and cand[j] >= cand[j + 1]:
                continue
            out.append(tuple(cand))
    for j in range(t - 1):
        # Shift the tail starting at position j as a block; j == 0 slides the
        # whole schedule. Lattice channels need these: good schedules sit on
        # a coarse sub-lattice, and single-coordinate steps cannot cross the
        # worse ground between basins.
        for d in range(-span, span + 1):
            if d == 0:
                continue
            cand = list(current)
            for i in range(j, t):
                cand[i] += d
            if cand[0] < 1:
                continue
            if j > 0 and cand[j] <= cand[j - 1]:
                continue
            out.append(tuple(cand))
    return out


def _early_moves(current: tuple[int, ...], span: int) -> list[tuple[int, ...]]:
    """Scan neighbourhood over the early coordinates with the final pinned."""
    t = len(current)
    out = []
    for j in range(t - 1):
        for d in range(-span, span + 1):
            if d == 0:
                continue
            cand = list(current)
            cand[j] += d
            if cand[j] < 1:
                continue
            if j > 0 and cand[j] <= cand[j - 1]:
                continue
            if cand[j] >= cand[j + 1]:
                continue
            out.append(tuple(cand))
    for j in range(t - 2):
        for d in range(-span, span + 1):
            if d == 0:
                continue
            cand = list(current)
            for i in range(j, t - 1):
                cand[i] += d
            if cand[0] < 1:
                continue
            if j > 0 and cand[j] <= cand[j - 1]:
                continue
            if cand[t - 2] >= cand[t - 1]:
                continue
            out.append(tuple(cand))
    return out


def _fit_early(early: tuple[int, ...], final: int) -> tuple[int, ...]:
    """Clamp early instants to a strictly increasing ladder below ``final``."""
    out = list(early)
    cap = final
    for i in range(len(out) - 1, -1, -1):
        cap -= 1
        out[i] = min(out[i], cap)
        cap = out[i]
    prev = 0
    for i in range(len(out)):
        out[i] = max(out[i], prev + 1)
        prev = out[i]
    return tuple(out)


def _local_search(
    ws: _Search,
    instants: tuple[int, ...],
    move_budget: int,
    span: int = _SCAN_SPAN,
    pin_final: bool = False,
) -> tuple[tuple[int, ...], tuple[float, float, float], int]:
    """Best-improvement descent over the scan neighbourhood until a fixpoint.

    Ties within round-off prefer the smaller final instant, then the
    lexicographically smaller schedule, matching the exhaustive search.
    """
    current = instants
    best = ws.integer_eval(current)
    assert best is not None
    moves = 0
    improved = True
    while improved and moves < move_budget:
        improved = False
        top_inst = None
        top = None
        neighbours = (
            _early_moves(current, span) if pin_final else _scan_moves(current, span)
        )
        for cand in neighbours:
            moves += 1
            trial = ws.integer_eval(cand)
            if trial is None:
                continue
            if top is None or (trial[0], cand[-1], cand) < (top[0], top_inst[-1], top_inst):
                top_inst, top = cand, trial
            if moves >= move_budget:
                break
        if top is None:
            break
        gain = best[0] - top[0]
        if gain > 1e-12 or (
            gain > -1e-12
            and (top_inst[-1], top_inst) < (current[-1], current)
        ):
            current, best = top_inst, top
            improved = True
    return current, best, moves


def _min_feasible_final(ws: _Search, n_max: int) -> int | None:
    """Smallest integer final instant that admits a feasible threshold.

    Feasibility is almost monotone in the final instant; a binary search
    finds the boundary and a short downward scan guards against lattice-cell
    wobble.
    """
    if ws.integer_gamma(n_max) is None:
        return None
    lo, hi = 1, n_max
    while lo < hi:
        mid = (lo + hi) // 2
        if ws.integer_gamma(mid) is not None:
            hi = mid
        else:
            lo = mid + 1
    for cand in range(max(1, hi - 4), hi):
        if ws.integer_gamma(cand) is not None:
            return cand
    return hi


def optimize(
    channel: ChannelModel,
    spec: CodeSpec,
    rule: Rule,
    options: OptimizeOptions | None = None,
) -> OptimizationResult:
    """Search for the best feasible schedule with ``spec.attempts`` instants.

    Raises :class:`Infeasible` when no final instant up to the doubling limit
    can meet the error budget.
    """
    options = options or OptimizeOptions()
    law = single_letter_law(channel)
    int_gamma_cache: dict = {}
    modes = [Overshoot.LOWER, Overshoot.UPPER] if law.lattice is not None else [Overshoot.LOWER]

    # Feasibility gate with doubling of the size limit.
    gate = _Search(channel, spec, rule, modes[0], options, int_gamma_cache)
    n_max = options.n_max
    while gate.integer_gamma(n_max) is None:
        if n_max >= options.n_limit:
            raise Infeasible(
                f"no feasible schedule with final instant up to {n_max}",
                n_last=n_max,
            )
        n_max = min(2 * n_max, options.n_limit)

    best: tuple[tuple, float, float] | None = None  # ((obj, nt, inst), gamma, residual)
    total_iters = 0
    restarts = 0
    total_moves = 0
    best_gnorm = math.nan

    def consider(inst: tuple[int, ...], ev: tuple[float, float, float], gnorm: float) -> None:
        nonlocal best, best_gnorm
        obj, gamma, residual = ev
        key = (obj, inst[-1], inst)
        if best is None or key < best[0]:
            best = (key, gamma, residual)
            best_gnorm = gnorm

    extra = [
        tuple(v) for v in options.extra_start_instants
        if len(v) == spec.attempts and all(b > a for a, b in zip(v, v[1:])) and v[0] >= 1
    ]

    for mode in modes:
        ws = _Search(channel, spec, rule, mode, options, int_gamma_cache)

        if spec.attempts == 1:
            nt = _min_feasible_final(ws, n_max)
            if nt is not None:
                ev = ws.integer_eval((nt,))
                if ev is not None:
                    consider((nt,), ev, 0.0)
            restarts += 1
            continue

        starts = ws.build_starts()
        for inst in extra:
            gaps = np.diff(np.concatenate(([0.0], np.array(inst, dtype=float))))
            starts.append(np.log(gaps))
            direct = ws.integer_eval(inst)
            if direct is not None:
                polished, ev, moves = _local_search(
                    ws, inst, max(0, options.local_move_cap - total_moves), span=2
                )
                total_moves += moves
                consider(polished, ev, math.nan)

        for theta0 in starts:
            restarts += 1
            came = _descend(ws, theta0)
            if came is None:
                continue
            theta, _, iters, gnorm = came
            total_iters += iters
            inst_real = np.cumsum(np.exp(theta))
            round_best: tuple[tuple[int, ...], tuple[float, float, float]] | None = None
            for cand in _round_candidates(inst_real):
                ev = ws.integer_eval(cand)
                if ev is None:
                    continue
                if round_best is None or ev[0] < round_best[1][0]:
                    round_best = (cand, ev)
            if round_best is None:
                continue
            polished, ev, moves = _local_search(
                ws, round_best[0], max(0, options.local_move_cap - total_moves),
                span=2,
            )
            total_moves += moves
            consider(polished, ev, gnorm)

    if best is not None and spec.attempts >= 2:
        # Refine the incumbent: a wide scan, then a basin hop along the final
        # instant. Lattice thresholds move in a sawtooth as the final instant
        # grows, so a nearby final can hide a strictly better basin that no
        # bounded move from the incumbent reaches; re-place the early
        # instants for each candidate final and keep the winner, repeating
        # while the incumbent changes.
        ws = _Search(channel, spec, rule, modes[0], options, int_gamma_cache)
        hop_span = _SCAN_SPAN if spec.attempts <= 3 else max(4, 48 // spec.attempts)
        while total_moves < options.local_move_cap:
            cur = best[0][2]
            polished, ev, moves = _local_search(
                ws, cur, max(0, options.local_move_cap - total_moves)
            )
            total_moves += moves
            consider(polished, ev, math.nan)
            cur = best[0][2]
            nt = cur[-1]
            for ntp in range(max(spec.attempts, nt - hop_span), nt + hop_span + 1):
                if ntp == nt or ws.integer_gamma(ntp) is None:
                    continue
                seed = _fit_early(cur[:-1], ntp) + (ntp,)
                cand, ev, moves = _local_search(
                    ws, seed, max(0, options.local_move_cap - total_moves),
                    span=hop_span, pin_final=True,
                )
                total_moves += moves
                consider(cand, ev, math.nan)
            if best[0][2] == cur:
                break

    if best is None:
        raise Infeasible(
            "no feasible schedule found from any start", n_last=n_max
        )
    (obj, _, instants), gamma, residual = best
    schedule = Schedule(gamma, instants)
    return OptimizationResult(
        schedule=schedule,
        objective=float(obj),
        rate_bits=spec.message_bits / float(obj),
        constraint_residual=float(residual),
        rule=rule,
        diagnostics={
            "iterations": float(total_iters),
            "restarts": float(restarts),
            "local_search_moves": float(total_moves),
            "grad_norm": float(best_gnorm),
            "n_max_used": float(n_max),
        },
    )


def dense_reference(
    channel: ChannelModel,
    spec: CodeSpec,
    options: OptimizeOptions | None = None,
) -> DenseReference:
    """Best P1 objective when every symbol up to the final instant is an instant.

    Scans final instants upward from the feasibility boundary and stops after
    the objective has risen for a sustained stretch, returning the minimum.
    Any sparse schedule under the same rule and budget has an objective at
    least as large as a dense schedule with the same threshold and final
    instant, so this serves as the saturation reference for attempt sweeps.
    """
    options = options or OptimizeOptions()
    law = single_letter_law(channel)
    cache: dict = {}
    ws = _Search(channel, spec, Rule.P1, _final_mode(law), options, cache)
    n_max = options.n_max
    while ws.integer_gamma(n_max) is None:
        if n_max >= options.n_limit:
            raise Infeasible("dense reference infeasible", n_last=n_max)
        n_max = min(2 * n_max, options.n_limit)
    start = _min_feasible_final(ws, n_max)
    if start is None:
        raise Infeasible("dense reference infeasible", n_last=n_max)
    best: tuple[float, float, int] | None = None
    rises = 0
    n = start
    while n <= n_max and rises < 25:
        solved = ws.integer_gamma(n)
        if solved is None:
            n += 1
            continue
        gamma, _ = solved
        total = 1.0
        for k in range(1, n):
            total += cdf_value(law, float(k), gamma, ws.final_mode, options.eps_s)
        if best is None or total < best[0]:
            best = (total, gamma, n)
            rises = 0
        else:
            rises += 1
        n += 1
    assert best is not None
    obj, gamma, nt = best
    return DenseReference(
        objective=obj,
        rate_bits=spec.message_bits / obj,
        gamma=gamma,
        final_instant=nt,
    )


def _embed_candidates(
    prev: tuple[int, ...], t_new: int
) -> list[tuple[int, ...]]:
    """Grow a good ``t``-instant schedule into start candidates for more attempts.

    Prepending instants below the first one keeps the final instant, hence
    the threshold and feasibility, and strictly lowers the objective, which
    makes sweep rates monotone in the attempt count by construction.
    """
    extra = t_new - len(prev)
    if extra <= 0:
        return []
    out = []
    front = tuple(range(prev[0] - extra, prev[0])) + prev
    if front[0] >= 1:
        out.append(front)
    # Midpoint insertions into the widest gaps as a second family.
    cand = list(prev)
    for _ in range(extra):
        gaps = [(cand[0], 0)] + [
            (cand[i + 1] - cand[i], i + 1) for i in range(len(cand) - 1)
        ]
        width, pos = max(gaps)
        if width < 2:
            cand = []
            break
        if pos == 0:
            new = max(1, cand[0] // 2)
            if new >= cand[0]:
                cand = []
                break
            cand.insert(0, new)
        else:
            new = (cand[pos - 1] + cand[pos]) // 2
            if not cand[pos - 1] < new < cand[pos]:
                cand = []
                break
            cand.insert(pos, new)
    if cand and all(b > a for a, b in zip(cand, cand[1:])):
        out.append(tuple(cand))
    return out


def sweep(
    channels: list[ChannelModel],
    bits_list: list[float],
    eps_list: list[float],
    t_list: list[int],
    rules: list[Rule],
    options: OptimizeOptions | None = None,
    include_dense: bool = False,
) -> list[SweepRow]:
    """Optimize a grid of cells, warm-starting across attempt counts.

    Within each (channel, bits, eps) group attempts are processed in
    ascending order and each rule is seeded with its own previous schedule;
    rule P2 is additionally seeded with the P1 schedule of the same cell.
    Infeasible cells produce rows with ``feasible=False`` and NaN metrics.
    """
    options = options or OptimizeOptions()
    ordered_rules = sorted(set(rules), key=lambda r: r.value)  # p1 before p2
    rows: list[SweepRow] = []
    for channel in channels:
        for bits in bits_list:
            for eps in eps_list:
                if include_dense:
                    try:
                        ref = dense_reference(channel, CodeSpec(bits, eps, 1), options)
                        rows.append(
                            SweepRow(
                                channel.describe(), channel.param, bits, eps, 0,
                                "dense", ref.rate_bits, ref.objective, ref.gamma,
                                (), True,
                            )
                        )
                    except Infeasible:
                        rows.append(
                            SweepRow(
                                channel.describe(), channel.param, bits, eps, 0,
                                "dense", math.nan, math.nan, math.nan, (), False,
                            )
                        )
                prev_by_rule: dict[Rule, tuple[int, ...]] = {}
                p1_by_t: dict[int, tuple[int, ...]] = {}
                for t in sorted(set(t_list)):
                    for rule in ordered_rules:
                        seeds: list[tuple[int, ...]] = []
                        if rule in prev_by_rule:
                            seeds.extend(_embed_candidates(prev_by_rule[rule], t))
                        if rule is Rule.P2 and t in p1_by_t:
                            seeds.append(p1_by_t[t])
                        opts = dataclasses.replace(
                            options, extra_start_instants=tuple(seeds)
                        )
                        spec = CodeSpec(bits, eps, t)
                        try:
                            res = optimize(channel, spec, rule, opts)
                        except Infeasible:
                            rows.append(
                                SweepRow(
                                    channel.describe(), channel.param, bits, eps, t,
                                    rule.value, math.nan, math.nan, math.nan, (), False,
                                )
                            )
                            continue
                        rows.append(
                            SweepRow(
                                channel.describe(), channel.param, bits, eps, t,
                                rule.value, res.rate_bits, res.objective,
                                res.schedule.gamma, res.schedule.instants, True,
                            )
                        )
                        prev_by_rule[rule] = res.schedule.instants
                        if rule is Rule.P1:
                            p1_by_t[t] = res.schedule.instants
    return rows
