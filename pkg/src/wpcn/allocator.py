"""Per-epoch power and time allocation for harvest-then-transmit WPCNs.

All solvers work on a :class:`ChannelBatch` (M epochs x K users) so that a
Monte-Carlo batch is allocated with a handful of numpy passes; the
single-epoch functions are thin wrappers around a batch of one.

Users are handled internally in ascending order of their saturation
threshold ``P_H / (N0 * eta * x)``, i.e. the BS power at which the user's
harvester reaches its plateau. Results are returned in the original user
order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .eh_model import EhCurve, EhuProfile, evaluate_curves
from .numerics import solve_snr_excess, z_of

log = logging.getLogger(__name__)

SATURATED, BOUNDARY, LINEAR, INACTIVE = 0, 1, 2, 3
REGIME_NAMES = ("saturated", "boundary", "linear", "inactive")

THEOREM1 = "theorem1"
THEOREM2 = "theorem2"
BASELINE1 = "baseline1"
BASELINE2 = "baseline2"
SCHEMES = (THEOREM1, THEOREM2, BASELINE1, BASELINE2)


@dataclass(frozen=True)
class NetworkConfig:
    k_users: int
    n0: float = 1e-10
    p_avg: float = 1.0
    p_max: Optional[float] = None
    epoch_duration: float = 1.0

    def __post_init__(self):
        if self.k_users < 1:
            raise ValueError("k_users must be >= 1")
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")
        if not self.p_avg > 0:
            raise ValueError("p_avg must be positive")
        if self.p_max is not None and not self.p_max > 0:
            raise ValueError("p_max must be positive when given")
        if not self.epoch_duration > 0:
            raise ValueError("epoch_duration must be positive")


def _profile_arrays(profiles: Sequence[EhuProfile]):
    eta = np.array([p.eta for p in profiles], dtype=float)
    p_sat = np.array([p.p_sat for p in profiles], dtype=float)
    return eta, p_sat


@dataclass(frozen=True, eq=False)
class ChannelBatch:
    """Normalised gains ``x = x'/N0`` for M epochs plus everything the
    allocation rules derive from them that does not depend on the dual
    variable.

    Sorted quantities (suffix ``_s``) follow the ascending-threshold order;
    ``a_coef[:, s]`` and ``b_coef[:, s]`` are the sums over the linear users
    after position ``s`` and the saturated users up to position ``s``.
    """

    x: np.ndarray
    n0: float
    eta: np.ndarray
    p_sat: np.ndarray
    thresholds: np.ndarray
    order: np.ndarray
    thr_s: np.ndarray
    lin_s: np.ndarray
    sat_s: np.ndarray
    a_coef: np.ndarray
    b_coef: np.ndarray
    z: np.ndarray

    @property
    def n_epochs(self) -> int:
        return self.x.shape[0]

    @property
    def k_users(self) -> int:
        return self.x.shape[1]

    def epoch(self, i: int) -> "EpochChannel":
        return EpochChannel(self.x[i], self.thresholds[i], self.order[i], self.n0)

    def subset(self, idx) -> "ChannelBatch":
        idx = np.atleast_1d(idx)
        return replace(self, **{f: getattr(self, f)[idx] for f in (
            "x", "thresholds", "order", "thr_s", "lin_s", "sat_s", "a_coef", "b_coef", "z")})

    def linearised(self) -> "ChannelBatch":
        """The same channels seen through a linear harvester (no saturation)."""
        return prepare_batch(self.x, self.eta, np.full_like(self.p_sat, np.inf), self.n0)


def prepare_batch(x, eta, p_sat, n0: float) -> ChannelBatch:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eta = np.asarray(eta, dtype=float)
    p_sat = np.asarray(p_sat, dtype=float)
    if np.any(x <= 0):
        raise ValueError("channel gains must be positive")
    m, k = x.shape
    if eta.shape != (k,) or p_sat.shape != (k,):
        raise ValueError(f"expected {k} profiles, got {eta.shape[0]}")

    thresholds = p_sat / (n0 * eta * x)
    # stable sort: ties resolved by original user index
    order = np.argsort(thresholds, axis=1, kind="stable")
    x_s = np.take_along_axis(x, order, axis=1)
    eta_s = eta[order]
    thr_s = np.take_along_axis(thresholds, order, axis=1)
    lin_s = n0 * eta_s * x_s**2
    sat_s = p_sat[order] * x_s

    a_coef = np.zeros((m, k + 1))
    a_coef[:, :k] = np.cumsum(lin_s[:, ::-1], axis=1)[:, ::-1]
    b_coef = np.zeros((m, k + 1))
    b_coef[:, 1:] = np.cumsum(sat_s, axis=1)
    z = z_of(b_coef.ravel()).reshape(b_coef.shape)
    return ChannelBatch(x, float(n0), eta, p_sat, thresholds, order,
                        thr_s, lin_s, sat_s, a_coef, b_coef, z)


@dataclass(frozen=True, eq=False)
class EpochChannel:
    x: np.ndarray
    thresholds: np.ndarray
    order: np.ndarray
    n0: float

    @classmethod
    def from_gains(cls, x, profiles: Sequence[EhuProfile], n0: float) -> "EpochChannel":
        return prepare_batch([x], *_profile_arrays(profiles), n0).epoch(0)

    def batch(self, profiles: Sequence[EhuProfile]) -> ChannelBatch:
        return prepare_batch([self.x], *_profile_arrays(profiles), self.n0)


@dataclass(frozen=True, eq=False)
class EpochAllocation:
    p0: float
    tau0: float
    tau: np.ndarray
    regime: tuple
    c_const: float
    s_star: Optional[int] = None
    rho: Optional[float] = None
    g: Optional[int] = None

    @property
    def active(self) -> bool:
        return self.p0 > 0


@dataclass(frozen=True, eq=False)
class AllocationBatch:
    """Allocations for every epoch of a batch, users in original order.

    ``s_star`` is the 1-based sorted position of the boundary user (0 when
    the epoch is idle or the peak constraint binds). ``c_minus_1`` is the
    common uplink SNR ``C - 1`` (0 when idle, nan for schemes without a
    common SNR).
    """

    p0: np.ndarray
    tau0: np.ndarray
    tau: np.ndarray
    regime: np.ndarray
    c_minus_1: np.ndarray
    s_star: np.ndarray
    rho: np.ndarray
    g: np.ndarray
    capped: np.ndarray

    @property
    def consumption(self) -> np.ndarray:
        return self.p0 * self.tau0

    @property
    def active(self) -> np.ndarray:
        return self.p0 > 0

    def epoch(self, i: int) -> EpochAllocation:
        s = int(self.s_star[i])
        rho = float(self.rho[i])
        return EpochAllocation(
            p0=float(self.p0[i]),
            tau0=float(self.tau0[i]),
            tau=self.tau[i].copy(),
            regime=tuple(REGIME_NAMES[r] for r in self.regime[i]),
            c_const=1.0 + float(self.c_minus_1[i]),
            s_star=s if s > 0 else None,
            rho=rho if math.isfinite(rho) else None,
            g=int(self.g[i]) if self.g[i] >= 0 else None,
        )


# -- building blocks --------------------------------------------------------


def coefficients(epoch: EpochChannel, profiles: Sequence[EhuProfile], s: int):
    """``(A_s, B_s)``: sum of ``N0*eta*x^2`` over sorted users after ``s`` and
    sum of ``P_H*x`` over sorted users ``1..s``."""
    k = len(profiles)
    if not 0 <= s <= k:
        raise IndexError(f"s must lie in [0, {k}], got {s}")
    b = epoch.batch(profiles)
    return float(b.a_coef[0, s]), float(b.b_coef[0, s])


def _s_star(batch: ChannelBatch, lam: float) -> np.ndarray:
    """1-based boundary position for every epoch (meaningless where idle).

    ``A_s - lam*z_s`` is strictly decreasing in ``s``; the boundary user is
    the first ``s`` where it turns non-positive.
    """
    k = batch.k_users
    if lam == 0.0:
        return np.full(batch.n_epochs, k, dtype=int)
    with np.errstate(invalid="ignore"):
        d = batch.a_coef[:, 1:] - lam * batch.z[:, 1:]
    return np.argmax(d <= 0.0, axis=1) + 1


def select_s_star(epoch: EpochChannel, profiles: Sequence[EhuProfile], lam: float) -> Optional[int]:
    """Sorted (1-based) index of the user whose harvester the BS drives
    exactly to its knee, or ``None`` when the epoch should stay idle."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    b = epoch.batch(profiles)
    if not b.a_coef[0, 0] > lam:
        return None
    return int(_s_star(b, lam)[0])


def solve_c_theorem1(epoch: EpochChannel, profiles: Sequence[EhuProfile], lam: float, s_star: int):
    """Common constant ``C`` and auxiliary ``rho`` for boundary user ``s_star``.

    Returns ``(C, rho)``; ``rho`` is the share of the boundary user's
    multiplier attributed to its saturation constraint.
    """
    b = epoch.batch(profiles)
    s = s_star
    p0 = b.thr_s[0, s - 1]
    g = p0 * b.a_coef[0, s] + b.b_coef[0, s]
    u = float(solve_snr_excess(lam * p0, g)[0])
    c = 1.0 + u
    rho = 1.0 - (lam * c - b.a_coef[0, s]) / b.lin_s[0, s - 1]
    if lam > 0 and not 0.0 < rho < 1.0:
        log.warning("rho=%g outside (0, 1) for s*=%d; inconsistent boundary index", rho, s)
    return c, rho


# -- batch allocation ---------------------------------------------------------


def allocate_batch(batch: ChannelBatch, lam: float, p_max: Optional[float] = None) -> AllocationBatch:
    """Optimal allocation of every epoch for dual variable ``lam``.

    Without ``p_max`` the BS drives the boundary user to its knee; with a
    peak limit that the knee power would exceed, the BS transmits at
    ``p_max`` and every user whose threshold lies below it saturates.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    m, k = batch.n_epochs, batch.k_users
    rows = np.arange(m)
    active = batch.a_coef[:, 0] > lam
    s_star = _s_star(batch, lam)

    if p_max is not None:
        g = np.sum(batch.thresholds < p_max, axis=1)
        capped = active & (g < s_star)
    else:
        g = np.full(m, -1)
        capped = np.zeros(m, dtype=bool)

    n_sat = np.where(capped, g, s_star)
    p0 = np.where(capped, p_max if p_max is not None else 0.0,
                  batch.thr_s[rows, s_star - 1])
    p0 = np.where(active, p0, 0.0)

    u = np.zeros(m)
    tau0 = np.zeros(m)
    tau_s = np.zeros((m, k))
    if np.any(active):
        pa = p0[active]
        ns = n_sat[active]
        ra = rows[active]
        gsum = pa * batch.a_coef[ra, ns] + batch.b_coef[ra, ns]
        ua = solve_snr_excess(lam * pa, gsum)
        t0 = ua / (ua + gsum)
        u[active] = ua
        tau0[active] = t0
        col = np.arange(k)[None, :]
        sat_part = batch.sat_s[ra] * (t0 / ua)[:, None]
        lin_part = batch.lin_s[ra] * (pa * t0 / ua)[:, None]
        tau_s[active] = np.where(col < ns[:, None], sat_part, lin_part)

    col = np.arange(k)[None, :]
    reg_s = np.where(col < n_sat[:, None], SATURATED, LINEAR)
    reg_s = np.where(~capped[:, None] & (col == s_star[:, None] - 1), BOUNDARY, reg_s)
    reg_s = np.where(active[:, None], reg_s, INACTIVE)

    theorem1_like = active & ~capped
    rho = np.full(m, np.nan)
    if np.any(theorem1_like):
        r = rows[theorem1_like]
        s = s_star[theorem1_like]
        rho[theorem1_like] = 1.0 - (lam * (1.0 + u[r]) - batch.a_coef[r, s]) / batch.lin_s[r, s - 1]

    tau = np.empty_like(tau_s)
    np.put_along_axis(tau, batch.order, tau_s, axis=1)
    regime = np.empty_like(reg_s)
    np.put_along_axis(regime, batch.order, reg_s, axis=1)
    return AllocationBatch(
        p0=p0, tau0=tau0, tau=tau, regime=regime.astype(np.int8), c_minus_1=u,
        s_star=np.where(theorem1_like, s_star, 0), rho=rho,
        g=g, capped=capped,
    )


def idle_allocation(k: int) -> EpochAllocation:
    return EpochAllocation(0.0, 0.0, np.zeros(k), ("inactive",) * k, 1.0)


def allocate_theorem1(epoch: EpochChannel, profiles: Sequence[EhuProfile], lam: float) -> EpochAllocation:
    return allocate_batch(epoch.batch(profiles), lam).epoch(0)


def allocate_theorem2(epoch: EpochChannel, profiles: Sequence[EhuProfile], lam: float,
                      p_max: float) -> EpochAllocation:
    if not p_max > 0:
        raise ValueError("p_max must be positive")
    return allocate_batch(epoch.batch(profiles), lam, p_max).epoch(0)


def baseline1_batch(batch: ChannelBatch, lam: float, p_max: float) -> AllocationBatch:
    """Allocation that is optimal when the harvesters are assumed linear.

    With no saturation every active epoch transmits at ``p_max``.
    """
    if p_max is None or not p_max > 0:
        raise ValueError("baseline1 needs a positive p_max")
    return allocate_batch(batch.linearised(), lam, p_max)


def baseline1(epoch: EpochChannel, profiles: Sequence[EhuProfile], lam: float,
              p_max: float) -> EpochAllocation:
    return baseline1_batch(epoch.batch(profiles), lam, p_max).epoch(0)


def baseline2_batch(batch: ChannelBatch, config: NetworkConfig) -> AllocationBatch:
    """Peak power, ``tau0 = p_avg/p_max`` and equal IT shares in every epoch."""
    if config.p_max is None:
        raise ValueError("baseline2 needs p_max")
    if config.p_avg > config.p_max:
        raise ValueError(f"baseline2 needs p_avg <= p_max (got {config.p_avg} > {config.p_max})")
    m, k = batch.n_epochs, batch.k_users
    tau0 = config.p_avg / config.p_max
    regime = np.where(batch.thresholds < config.p_max, SATURATED, LINEAR).astype(np.int8)
    return AllocationBatch(
        p0=np.full(m, config.p_max), tau0=np.full(m, tau0),
        tau=np.full((m, k), (1.0 - tau0) / k), regime=regime,
        c_minus_1=np.full(m, np.nan), s_star=np.zeros(m, dtype=int),
        rho=np.full(m, np.nan), g=np.sum(batch.thresholds < config.p_max, axis=1),
        capped=np.ones(m, dtype=bool),
    )


def baseline2(epoch: EpochChannel, config: NetworkConfig) -> EpochAllocation:
    k = epoch.x.shape[0]
    profiles = [EhuProfile(0.5, 1.0)] * k  # shares do not depend on the profiles
    return baseline2_batch(epoch.batch(profiles), config).epoch(0)


# -- rates ------------------------------------------------------------------


def batch_rates(alloc: AllocationBatch, batch: ChannelBatch,
                curves: Optional[Sequence[EhCurve]] = None) -> np.ndarray:
    """Per-epoch, per-user rates in nats/s/Hz, shape (M, K).

    Harvested energy is evaluated with ``curves`` (one per user) at the
    incident power ``N0 * x * p0``; ``None`` means the design model.
    """
    p_in = batch.n0 * batch.x * alloc.p0[:, None]
    if curves is None:
        harvested = np.minimum(batch.eta * p_in, batch.p_sat)
    else:
        harvested = evaluate_curves(curves, p_in)
    energy = harvested * alloc.tau0[:, None]
    tau = alloc.tau
    pos = tau > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(pos, energy * batch.x / np.where(pos, tau, 1.0), 0.0)
    return np.where(pos, tau * np.log1p(snr), 0.0)


def epoch_rates(alloc: EpochAllocation, epoch: EpochChannel, profiles: Sequence[EhuProfile],
                truth: Optional[Sequence[EhCurve]] = None) -> np.ndarray:
    b = epoch.batch(profiles)
    ab = AllocationBatch(
        p0=np.array([alloc.p0]), tau0=np.array([alloc.tau0]), tau=np.atleast_2d(alloc.tau),
        regime=np.zeros((1, b.k_users), dtype=np.int8), c_minus_1=np.array([alloc.c_const - 1.0]),
        s_star=np.zeros(1, dtype=int), rho=np.full(1, np.nan), g=np.zeros(1, dtype=int),
        capped=np.zeros(1, dtype=bool),
    )
    return batch_rates(ab, b, truth)[0]


# -- dual variable ------------------------------------------------------------


@dataclass
class LambdaSearch:
    """Outcome of the search for the average-power multiplier.

    ``constraint_active`` is False when even ``lambda = 0`` spends less than
    the budget (harvesters saturate before the budget is used up).

    Consumption can jump where an epoch switches boundary user. At such a
    multiplier the epoch is indifferent between the allocations on either
    side, so the epochs that switch are blended with weight ``theta`` on the
    ``lam`` side and ``1 - theta`` on the ``lam_hi`` side to land on the
    budget. ``theta`` is None when no blending was needed.
    """

    lam: float
    consumption: float
    constraint_active: bool
    budget_met: bool
    iterations: int
    trace: list = field(default_factory=list)
    lam_hi: Optional[float] = None
    theta: Optional[float] = None


def average(values: np.ndarray) -> float:
    """Mean with exactly rounded summation; independent of summation order."""
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values) / values.size if values.size else 0.0


def scheme_allocate(batch: ChannelBatch, scheme: str, lam: float, config: NetworkConfig) -> AllocationBatch:
    if scheme == THEOREM1:
        return allocate_batch(batch, lam)
    if scheme == THEOREM2:
        if config.p_max is None:
            raise ValueError("theorem2 needs p_max")
        return allocate_batch(batch, lam, config.p_max)
    if scheme == BASELINE1:
        return baseline1_batch(batch, lam, config.p_max)
    if scheme == BASELINE2:
        return baseline2_batch(batch, config)
    raise ValueError(f"unknown scheme {scheme!r}")


def find_lambda(batch: ChannelBatch, config: NetworkConfig, scheme: str = THEOREM2,
                rel_tol: float = 1e-6, max_iter: int = 200) -> LambdaSearch:
    """Bisection for the multiplier that makes average BS consumption equal
    ``config.p_avg`` on this batch.

    Consumption is zero for ``lambda >= max A_0`` (every epoch idle). It can
    jump where an epoch switches boundary user; bisection then closes in on
    the jump and the switching epochs are blended (see :class:`LambdaSearch`).
    """
    if scheme not in (THEOREM1, THEOREM2, BASELINE1):
        raise ValueError(f"find_lambda does not apply to {scheme!r}")
    if scheme == BASELINE1:
        batch = batch.linearised()
        scheme = THEOREM2
    target = config.p_avg

    def consumption(lam):
        return average(scheme_allocate(batch, scheme, lam, config).consumption)

    trace = []
    c0 = consumption(0.0)
    trace.append((0.0, c0))
    if c0 <= target * (1.0 + rel_tol):
        return LambdaSearch(0.0, c0, False, True, 0, trace)

    lo, hi = 0.0, float(np.max(batch.a_coef[:, 0]))
    c_lo, c_hi = c0, 0.0
    trace.append((hi, c_hi))
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        c_mid = consumption(mid)
        trace.append((mid, c_mid))
        if abs(c_mid - target) <= rel_tol * target:
            return LambdaSearch(mid, c_mid, True, True, it, trace)
        if c_mid > target:
            lo, c_lo = mid, c_mid
        else:
            hi, c_hi = mid, c_mid

    alloc_lo = scheme_allocate(batch, scheme, lo, config)
    alloc_hi = scheme_allocate(batch, scheme, hi, config)
    theta = _blend_weight(alloc_lo, alloc_hi, target)
    if theta is not None:
        c = average(blend_allocations(alloc_lo, alloc_hi, theta).consumption)
        met = abs(c - target) <= rel_tol * target
        return LambdaSearch(lo, c, True, met, it, trace, lam_hi=hi, theta=theta)

    lam, c = (lo, c_lo) if abs(c_lo - target) <= abs(c_hi - target) else (hi, c_hi)
    met = abs(c - target) <= rel_tol * target
    if not met:
        log.info("consumption jumps across the budget at lambda=%.17g (%.6g vs %.6g)",
                 lam, c_lo, c_hi)
    return LambdaSearch(lam, c, True, met, it, trace)


def _switching(lo: AllocationBatch, hi: AllocationBatch) -> np.ndarray:
    return lo.p0 != hi.p0


def _blend_weight(lo: AllocationBatch, hi: AllocationBatch, target: float) -> Optional[float]:
    sw = _switching(lo, hi)
    if not np.any(sw):
        return None
    m = lo.p0.size
    fixed = math.fsum(lo.consumption[~sw])
    s_lo = math.fsum(lo.consumption[sw])
    s_hi = math.fsum(hi.consumption[sw])
    if s_lo == s_hi:
        return None
    theta = (target * m - fixed - s_hi) / (s_lo - s_hi)
    return min(1.0, max(0.0, theta))


def blend_allocations(lo: AllocationBatch, hi: AllocationBatch, theta: float) -> AllocationBatch:
    """Take ``lo`` everywhere except in epochs whose BS power differs between
    the two; there, mix BS energy, EH share and IT shares with weight
    ``theta`` on ``lo``."""
    sw = _switching(lo, hi)
    p0, tau0, tau = lo.p0.copy(), lo.tau0.copy(), lo.tau.copy()
    regime = lo.regime.copy()
    energy = theta * lo.consumption[sw] + (1.0 - theta) * hi.consumption[sw]
    tau0[sw] = theta * lo.tau0[sw] + (1.0 - theta) * hi.tau0[sw]
    with np.errstate(divide="ignore", invalid="ignore"):
        p0[sw] = np.where(tau0[sw] > 0, energy / tau0[sw], 0.0)
    tau[sw] = theta * lo.tau[sw] + (1.0 - theta) * hi.tau[sw]
    # a blended epoch sits strictly between two knees: no boundary user
    regime[sw] = np.where(lo.regime[sw] == BOUNDARY, SATURATED, lo.regime[sw])
    s_star = np.where(sw, 0, lo.s_star)
    rho = np.where(sw, np.nan, lo.rho)
    c_minus_1 = np.where(sw, theta * lo.c_minus_1 + (1.0 - theta) * hi.c_minus_1, lo.c_minus_1)
    return AllocationBatch(p0, tau0, tau, regime, c_minus_1, s_star, rho, lo.g, lo.capped & hi.capped)


def allocate_for(batch: ChannelBatch, scheme: str, search: LambdaSearch,
                 config: NetworkConfig) -> AllocationBatch:
    """Allocation of ``scheme`` at the multiplier found by :func:`find_lambda`."""
    alloc = scheme_allocate(batch, scheme, search.lam, config)
    if search.theta is None:
        return alloc
    hi = scheme_allocate(batch, scheme, search.lam_hi, config)
    return blend_allocations(alloc, hi, search.theta)
