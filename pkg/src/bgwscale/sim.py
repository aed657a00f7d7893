"""Exact event-driven simulation of the chain plus Monte Carlo estimators.

Paths evolve by Gillespie stepping: in state x > a the holding time is
exponential with rate lam*x + mu; the event is a branching death (probability
lam*x/(lam*x+mu), x -> x - 1 + K) or an immigration/culling event (x -> x + J).

Randomness is counter-based: every uniform is a pure hash of
(seed, path index, per-path event index, slot), so replications are
order-independent, runs are reproducible bit-for-bit regardless of batch
layout, and two estimators driven by the same seed consume identical paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import model as md
from .errors import AdmissibilityError, DomainError, PreconditionError

__all__ = [
    "SimConfig", "PathOutcome", "Estimate",
    "sample_offspring", "sample_immigration", "simulate_path",
    "estimate_lt_passage", "estimate_joint_avalanche", "estimate_mean_passage",
    "estimate_explosion", "estimate_explosion_time",
    "atmin_clock_sample", "simulate_controlled",
]

HIT, THRESHOLD, CENSORED_JUMPS, CENSORED_TIME, CLOCK_RING = 1, 2, 3, 4, 5

_KIND = {HIT: "hit_level", THRESHOLD: "exceeded_threshold",
         CENSORED_JUMPS: "censored", CENSORED_TIME: "censored",
         CLOCK_RING: "clock_ring"}


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_paths: int = 1
    max_jumps: int = 10_000_000
    explosion_threshold: int = 1_000_000
    horizon: float = math.inf
    q: float = 0.0  # rate of the independent exponential clock, when simulated

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if self.explosion_threshold < 2:
            raise DomainError("explosion_threshold must be >= 2")


@dataclass(frozen=True)
class PathOutcome:
    kind: str
    terminal_time: float
    min_level: int
    t_last_min: float
    area: float
    jumps: int
    final_pop: int


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n_effective: int
    censored_fraction: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# counter-based uniforms
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def _mix_int(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _u01(seed: int, path: np.ndarray, step: np.ndarray, slot: int) -> np.ndarray:
    """Uniform(0,1) draws indexed by (seed, path, per-path step, slot)."""
    c = np.uint64(_mix_int(seed * 0x9E3779B97F4A7C15 + slot * 0xD1B54A32D192ED03 + 0x2545F4914F6CDD1D))
    with np.errstate(over="ignore"):
        x = (path.astype(np.uint64) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
        x ^= (step.astype(np.uint64) + np.uint64(1)) * np.uint64(0xD1B54A32D192ED03)
        x ^= c
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
        x = (x ^ (x >> np.uint64(33))) * np.uint64(0xFF51AFD7ED558CCD)
        x ^= x >> np.uint64(33)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


# ---------------------------------------------------------------------------
# jump-size samplers (inverse CDF throughout: one uniform per draw)
# ---------------------------------------------------------------------------

_SIBUYA_TABLE_LEN = 64
_K_CAP = 1 << 40


def _sibuya_tables(alpha: float) -> np.ndarray:
    """F_k = P(K <= k) for k = 0..64 of the Sibuya(alpha) law on {1,2,...}."""
    surv = np.ones(_SIBUYA_TABLE_LEN + 1)
    for j in range(1, _SIBUYA_TABLE_LEN + 1):
        surv[j] = surv[j - 1] * (1.0 - alpha / j)
    return 1.0 - surv


def _sibuya_log_surv(k: np.ndarray, alpha: float) -> np.ndarray:
    return gammaln(k + 1.0 - alpha) - gammaln(k + 1.0) - math.lgamma(1.0 - alpha)


def _invert_sibuya(u: np.ndarray, alpha: float, cdf_table: np.ndarray) -> np.ndarray:
    """K = min{k >= 1 : P(K <= k) >= u}; table up to 64, asymptotic inversion
    refined by exact survival comparisons beyond."""
    k = np.searchsorted(cdf_table, u, side="left").astype(np.int64)
    tail = k > _SIBUYA_TABLE_LEN
    if np.any(tail):
        w = 1.0 - u[tail]                    # survival target: min k with S_k < w... (S_k <= w)
        logw = np.log(w)
        kf = np.exp(-(logw + math.lgamma(1.0 - alpha)) / alpha)
        kf = np.minimum(kf, float(_K_CAP))
        for _ in range(3):                   # Newton in log k: d logS/d logk ~ -alpha
            resid = _sibuya_log_surv(kf, alpha) - logw
            kf = np.clip(kf * np.exp(resid / alpha), 65.0, float(_K_CAP))
        kt = np.ceil(kf).astype(np.int64)
        for _ in range(4):                   # exact local adjustment
            too_big = (kt > 65) & (_sibuya_log_surv(kt - 1.0, alpha) <= logw)
            kt = np.where(too_big, kt - 1, kt)
            too_small = (_sibuya_log_surv(kt.astype(float), alpha) > logw) & (kt < _K_CAP)
            kt = np.where(too_small, kt + 1, kt)
        k[tail] = np.maximum(kt, 65)
    return k


class _OffspringSampler:
    def __init__(self, law: md.OffspringLaw):
        self.law = law
        if law.kind == "tabular":
            self.cdf = np.cumsum(np.asarray(law.pmf))
        else:
            self.table = _sibuya_tables(law.alpha)

    def draw(self, u: np.ndarray) -> np.ndarray:
        if self.law.kind == "tabular":
            return np.searchsorted(self.cdf, u, side="right").astype(np.int64)
        zero = u < self.law.p0
        v = np.clip((u - self.law.p0) / (1.0 - self.law.p0), 1e-300, 1.0 - 1e-16)
        k = _invert_sibuya(v, self.law.alpha, self.table)
        return np.where(zero, 0, k)


class _ImmigrationSampler:
    def __init__(self, law: md.ImmigrationLaw):
        self.law = law
        if law.kind == "tabular":
            vals = [-1] if law.r_minus1 > 0.0 else []
            probs = [law.r_minus1] if law.r_minus1 > 0.0 else []
            for k, p in enumerate(law.pmf_up, start=1):
                if p > 0.0:
                    vals.append(k)
                    probs.append(p)
            self.vals = np.asarray(vals, dtype=np.int64)
            self.cdf = np.cumsum(np.asarray(probs))
            self.cdf /= self.cdf[-1]
        elif law.kind == "sibuya":
            self.table = _sibuya_tables(law.alpha)

    def draw(self, u: np.ndarray) -> np.ndarray:
        if self.law.kind == "tabular":
            return self.vals[np.searchsorted(self.cdf, u, side="right")]
        return _invert_sibuya(u, self.law.alpha, self.table)


def sample_offspring(law: md.OffspringLaw, rng) -> int:
    """One offspring count; ``rng`` is a numpy Generator (inverse-CDF transform)."""
    u = np.asarray([rng.random()])
    return int(_OffspringSampler(law).draw(u)[0])


def sample_immigration(law: md.ImmigrationLaw, rng) -> int:
    u = np.asarray([rng.random()])
    return int(_ImmigrationSampler(law).draw(u)[0])


# ---------------------------------------------------------------------------
# batched Gillespie core
# ---------------------------------------------------------------------------

@dataclass
class _BatchResult:
    status: np.ndarray
    time: np.ndarray
    area: np.ndarray
    min_level: np.ndarray
    t_last_min: np.ndarray
    jumps: np.ndarray
    pop: np.ndarray
    clock: np.ndarray


def _run_batch(spec: md.ModelSpec, x0: int, a: int, cfg: SimConfig,
               qclock: float | None = None) -> _BatchResult:
    # monotone-paths degeneracy is fine to simulate; only structural problems block
    problems = [p for p in md.validate(spec) if "nonincreasing" not in p]
    if problems:
        raise md.ModelError("invalid model: " + "; ".join(problems))
    if not (x0 >= a >= 0):
        raise DomainError("need x0 >= a >= 0")
    n = cfg.n_paths
    lam, mu = spec.lam, spec.mu
    has_imm = spec.has_immigration
    mu_eff = mu if has_imm else 0.0
    off = _OffspringSampler(spec.offspring)
    imm = _ImmigrationSampler(spec.immigration) if has_imm else None

    res = _BatchResult(
        status=np.zeros(n, dtype=np.int8),
        time=np.zeros(n), area=np.zeros(n),
        min_level=np.full(n, x0, dtype=np.int64),
        t_last_min=np.zeros(n),
        jumps=np.zeros(n, dtype=np.int64),
        pop=np.full(n, x0, dtype=np.int64),
        clock=np.full(n, math.inf),
    )
    pid_all = np.arange(n, dtype=np.int64)
    if qclock is not None:
        if qclock <= 0.0:
            raise DomainError("qclock must be > 0")
        res.clock = -np.log(_u01(cfg.seed, pid_all, np.zeros(n, dtype=np.int64), 3)) / qclock

    if x0 == a:
        res.status[:] = HIT
        return res

    # live working set
    pid = pid_all.copy()
    pop = res.pop.copy()
    t = np.zeros(n)
    area = np.zeros(n)
    minlev = res.min_level.copy()
    tmin = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    clock = res.clock.copy()

    def finalize(mask: np.ndarray, status_val: int, at_time: np.ndarray | None = None):
        idx = pid[mask]
        res.status[idx] = status_val
        res.time[idx] = t[mask] if at_time is None else at_time[mask]
        res.area[idx] = area[mask]
        res.min_level[idx] = minlev[mask]
        res.t_last_min[idx] = tmin[mask]
        res.jumps[idx] = steps[mask]
        res.pop[idx] = pop[mask]

    while pid.size:
        rate = lam * pop.astype(float) + mu_eff
        u0 = _u01(cfg.seed, pid, steps, 0)
        hold = -np.log(u0) / rate
        t_next = t + hold

        ringing = t_next >= clock
        if np.any(ringing):
            area_at = area + pop * (clock - t)
            sel = ringing
            idx = pid[sel]
            res.status[idx] = CLOCK_RING
            res.time[idx] = clock[sel]
            res.area[idx] = area_at[sel]
            res.min_level[idx] = minlev[sel]
            res.t_last_min[idx] = tmin[sel]
            res.jumps[idx] = steps[sel]
            res.pop[idx] = pop[sel]
        timing_out = (~ringing) & (t_next >= cfg.horizon)
        if np.any(timing_out):
            sel = timing_out
            idx = pid[sel]
            res.status[idx] = CENSORED_TIME
            res.time[idx] = cfg.horizon
            res.area[idx] = (area + pop * (cfg.horizon - t))[sel]
            res.min_level[idx] = minlev[sel]
            res.t_last_min[idx] = tmin[sel]
            res.jumps[idx] = steps[sel]
            res.pop[idx] = pop[sel]
        live = ~(ringing | timing_out)
        if not np.all(live):
            pid, pop, t, area, minlev, tmin, steps, clock, t_next, rate = (
                arr[live] for arr in (pid, pop, t, area, minlev, tmin, steps, clock, t_next, rate))
            if pid.size == 0:
                break

        area = area + pop * (t_next - t)
        t = t_next
        u1 = _u01(cfg.seed, pid, steps, 1)
        u2 = _u01(cfg.seed, pid, steps, 2)
        steps = steps + 1
        branching = u1 < lam * pop / rate if mu_eff > 0.0 else np.ones(pid.size, dtype=bool)
        jump = np.empty(pid.size, dtype=np.int64)
        if np.any(branching):
            jump[branching] = off.draw(u2[branching]) - 1
        if mu_eff > 0.0 and not np.all(branching):
            jump[~branching] = imm.draw(u2[~branching])
        pop = np.minimum(pop + jump, np.int64(2 * _K_CAP))

        lower = pop < minlev
        minlev = np.where(lower, pop, minlev)
        tmin = np.where(lower, t, tmin)

        hit = pop <= a
        exceeded = (~hit) & (pop >= cfg.explosion_threshold)
        exhausted = (~hit) & (~exceeded) & (steps >= cfg.max_jumps)
        finalize(hit, HIT)
        finalize(exceeded, THRESHOLD)
        finalize(exhausted, CENSORED_JUMPS)
        live = ~(hit | exceeded | exhausted)
        if not np.all(live):
            pid, pop, t, area, minlev, tmin, steps, clock = (
                arr[live] for arr in (pid, pop, t, area, minlev, tmin, steps, clock))
    return res


def simulate_path(spec: md.ModelSpec, x0: int, a: int, qclock: float | None = None,
                  cfg: SimConfig = SimConfig(), path_index: int = 0) -> PathOutcome:
    """Single path; ``path_index`` selects the counter-based stream within the seed."""
    sub = SimConfig(seed=cfg.seed, n_paths=path_index + 1, max_jumps=cfg.max_jumps,
                    explosion_threshold=cfg.explosion_threshold, horizon=cfg.horizon,
                    q=cfg.q)
    res = _run_batch(spec, x0, a, sub, qclock=qclock)
    i = path_index
    return PathOutcome(kind=_KIND[int(res.status[i])], terminal_time=float(res.time[i]),
                       min_level=int(res.min_level[i]), t_last_min=float(res.t_last_min[i]),
                       area=float(res.area[i]), jumps=int(res.jumps[i]),
                       final_pop=int(res.pop[i]))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _estimate_from_weights(w: np.ndarray, censored: np.ndarray,
                           diagnostics: dict | None = None) -> Estimate:
    n = len(w)
    mean = float(np.sum(w)) / n
    se = float(np.std(w, ddof=1)) / math.sqrt(n) if n > 1 else math.inf
    return Estimate(mean=mean, se=se, n_effective=n,
                    censored_fraction=float(np.sum(censored)) / n,
                    diagnostics=diagnostics or {})


def estimate_lt_passage(spec: md.ModelSpec, q: float, x: int, a: int,
                        cfg: SimConfig) -> Estimate:
    """MC estimate of P_x[e^{-q T_a^-}; T_a^- < inf]; censored and
    threshold-stopped paths contribute 0, with the omitted mass bounded by
    e^{-q t_stop} per path (reported, not subtracted)."""
    res = _run_batch(spec, x, a, cfg)
    hit = res.status == HIT
    w = np.where(hit, np.exp(-q * res.time), 0.0)
    censored = (res.status == CENSORED_JUMPS) | (res.status == CENSORED_TIME)
    stopped = censored | (res.status == THRESHOLD)
    bias = float(np.sum(np.exp(-q * res.time[stopped]))) / len(w) if q > 0.0 \
        else float(np.sum(stopped)) / len(w)
    return _estimate_from_weights(w, censored, {"bias_bound": bias})


def estimate_joint_avalanche(spec: md.ModelSpec, q: float, qbar: float, x: int, a: int,
                             cfg: SimConfig) -> Estimate:
    res = _run_batch(spec, x, a, cfg)
    hit = res.status == HIT
    w = np.where(hit, np.exp(-q * res.time - qbar * res.area), 0.0)
    censored = (res.status == CENSORED_JUMPS) | (res.status == CENSORED_TIME)
    return _estimate_from_weights(w, censored)


def estimate_mean_passage(spec: md.ModelSpec, x: int, a: int, cfg: SimConfig) -> Estimate:
    if x == a:
        return Estimate(mean=0.0, se=0.0, n_effective=cfg.n_paths, censored_fraction=0.0)
    res = _run_batch(spec, x, a, cfg)
    hit = res.status == HIT
    times = res.time[hit]
    n_eff = int(np.sum(hit))
    mean = float(np.mean(times)) if n_eff else math.nan
    se = float(np.std(times, ddof=1)) / math.sqrt(n_eff) if n_eff > 1 else math.inf
    censored = (res.status == CENSORED_JUMPS) | (res.status == CENSORED_TIME)
    return Estimate(mean=mean, se=se, n_effective=n_eff,
                    censored_fraction=float(np.sum(censored)) / cfg.n_paths)


def _explosion_weights(spec, q, x, a, cfg) -> tuple[np.ndarray, np.ndarray]:
    res = _run_batch(spec, x, a, cfg)
    crossed = res.status == THRESHOLD
    w = np.where(crossed, np.exp(-q * res.time) if q > 0.0 else 1.0, 0.0)
    censored = (res.status == CENSORED_JUMPS) | (res.status == CENSORED_TIME)
    return w, censored


def estimate_explosion(spec: md.ModelSpec, q: float, x: int, a: int,
                       cfg: SimConfig) -> Estimate:
    """MC estimate of P_x[e^{-q zeta}; zeta < T_a^-] via the threshold-crossing
    proxy for zeta; the estimate is recomputed at threshold/10 and the shift
    reported as the proxy-bias diagnostic."""
    if not md.is_explosive(spec):
        raise PreconditionError("estimate_explosion requires an explosive chain")
    w, censored = _explosion_weights(spec, q, x, a, cfg)
    cfg10 = SimConfig(seed=cfg.seed, n_paths=cfg.n_paths, max_jumps=cfg.max_jumps,
                      explosion_threshold=max(2, cfg.explosion_threshold // 10),
                      horizon=cfg.horizon, q=cfg.q)
    w10, _ = _explosion_weights(spec, q, x, a, cfg10)
    diag = {"proxy_delta": float(np.mean(w10) - np.mean(w)),
            "proxy_threshold": cfg.explosion_threshold}
    return _estimate_from_weights(w, censored, diag)


def estimate_explosion_time(spec: md.ModelSpec, x: int, cfg: SimConfig) -> Estimate:
    """MC estimate of P_x[zeta; zeta < inf] (threshold-crossing proxy for zeta)."""
    res = _run_batch(spec, x, 0, cfg)
    crossed = res.status == THRESHOLD
    w = np.where(crossed, res.time, 0.0)
    censored = (res.status == CENSORED_JUMPS) | (res.status == CENSORED_TIME)
    return _estimate_from_weights(w, censored)


def atmin_clock_sample(spec: md.ModelSpec, q: float, x: int, cfg: SimConfig) -> _BatchResult:
    """Paths run against an explicit Exp(q) clock; the running minimum at the
    ring (or at absorption, whichever comes first) realizes X_{G_{e_q}}."""
    if q <= 0.0:
        raise DomainError("q must be > 0")
    return _run_batch(spec, x, 0, cfg, qclock=q)


# ---------------------------------------------------------------------------
# controlled simulation
# ---------------------------------------------------------------------------

def simulate_controlled(problem, policy, x0: int, cfg: SimConfig) -> Estimate:
    """Mean discounted immigration cost of a control policy.

    ``policy``: ("barrier", a) with a >= floor; ("topup", m) refilling to
    max(current, floor+m) after each death; or a callable mapping the
    level-after-death array to immigrant counts (must keep the level > floor).
    """
    spec = problem.spec
    fl, q = problem.floor, problem.q
    md.require_valid(spec)
    lam = spec.lam
    off = _OffspringSampler(spec.offspring)

    if callable(policy):
        def immigrants(levels):
            out = np.asarray(policy(levels), dtype=np.int64)
            return out
        label = "custom"
    else:
        kind, par = policy
        if kind == "barrier":
            if par < fl:
                raise PreconditionError("barrier below the floor is inadmissible")
            def immigrants(levels):
                return np.maximum(par + 1 - levels, 0)
            label = f"barrier({par})"
        elif kind == "topup":
            def immigrants(levels):
                return np.maximum(fl + par - levels, 0)
            label = f"topup({par})"
        else:
            raise DomainError(f"unknown policy {kind!r}")

    n = cfg.n_paths
    horizon = cfg.horizon
    if q > 0.0:
        horizon = min(horizon, 50.0 / q)  # discount e^-50: remaining cost negligible
    pop_cap = cfg.explosion_threshold

    pid = np.arange(n, dtype=np.int64)
    lev0 = np.full(n, x0, dtype=np.int64)
    c0 = immigrants(lev0)
    pop = lev0 + c0
    if np.any(pop <= fl):
        raise AdmissibilityError("policy left the population at or below the floor at t=0")
    cost = c0.astype(float)
    t = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    total_cost = np.zeros(n)
    censored = np.zeros(n, dtype=bool)

    while pid.size:
        rate = lam * pop.astype(float)
        u0 = _u01(cfg.seed, pid, steps, 0)
        hold = -np.log(u0) / rate
        t_next = t + hold
        over = t_next >= horizon
        if np.any(over):
            total_cost[pid[over]] = cost[over]
            keep = ~over
            pid, pop, t, cost, steps, t_next = (
                arr[keep] for arr in (pid, pop, t, cost, steps, t_next))
            if pid.size == 0:
                break
        t = t_next
        u2 = _u01(cfg.seed, pid, steps, 2)
        steps = steps + 1
        k = off.draw(u2)
        level_after = pop - 1 + k
        im = immigrants(level_after)
        newpop = level_after + im
        if np.any(newpop <= fl):
            raise AdmissibilityError("policy let the population reach the floor")
        cost = cost + im * np.exp(-q * t)
        pop = newpop

        done = (pop >= pop_cap) | (steps >= cfg.max_jumps)
        if np.any(done):
            total_cost[pid[done]] = cost[done]
            censored[pid[done]] = steps[done] >= cfg.max_jumps
            keep = ~done
            pid, pop, t, cost, steps = (arr[keep] for arr in (pid, pop, t, cost, steps))
    return _estimate_from_weights(total_cost, censored, {"policy": label})
