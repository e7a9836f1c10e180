"""Brute-force certification of per-epoch allocations.

For a fixed BS power and EH share, the best split of the remaining time
among the users has a closed form (all users see the same SNR), so each
epoch's Lagrangian can be searched exhaustively over a two-dimensional
(power, EH share) grid and compared with the closed-form allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import allocator as al
from .eh_model import EhuProfile

DEFAULT_GRID = 512
MIN_GRID = 64


def inner_split(harvested, x, it_budget: float):
    """Optimal IT shares for fixed harvested energies.

    With ``c_k = E_k * x_k`` the shares are proportional to ``c_k`` and the
    sum rate is ``b * ln(1 + sum(c) / b)`` for budget ``b``.
    """
    c = np.asarray(harvested, dtype=float) * np.asarray(x, dtype=float)
    total = float(np.sum(c))
    if total <= 0 or it_budget <= 0:
        return np.zeros_like(c), 0.0
    tau = it_budget * c / total
    return tau, it_budget * math.log1p(total / it_budget)


def lagrangian_objective(alloc: al.EpochAllocation, epoch: al.EpochChannel,
                         profiles: Sequence[EhuProfile], lam: float) -> float:
    rates = al.epoch_rates(alloc, epoch, profiles)
    return math.fsum(rates) - lam * alloc.p0 * alloc.tau0


@dataclass
class OracleReport:
    best_objective: float
    theorem_objective: float
    gap: float
    grid_resolution: tuple
    kkt_residuals: dict = field(default_factory=dict)
    best_p0: float = 0.0
    best_tau0: float = 0.0
    theorem_p0: float = 0.0
    theorem_tau0: float = 0.0
    p0_cell: float = 0.0

    @property
    def relative_gap(self) -> float:
        """Grid excess over the closed form, relative to the closed form."""
        scale = max(abs(self.theorem_objective), 1e-300)
        return self.gap / scale


def grid_axes(cap: float, n_p0: int, n_tau0: int):
    """Nested grids: resolution ``2n`` contains every point of resolution ``n``.

    BS power runs over ``cap * j/n`` for ``j = 0..n`` and the EH share over
    ``j/n`` for ``j = 0..n-1``.
    """
    p0 = cap * np.arange(n_p0 + 1) / n_p0
    tau0 = np.arange(n_tau0) / n_tau0
    return p0, tau0


def grid_objective(epoch: al.EpochChannel, profiles: Sequence[EhuProfile], lam: float,
                   p0: np.ndarray, tau0: np.ndarray) -> np.ndarray:
    eta = np.array([p.eta for p in profiles])
    p_sat = np.array([p.p_sat for p in profiles])
    x = np.asarray(epoch.x, dtype=float)
    harvest = np.minimum(epoch.n0 * eta * x * p0[:, None], p_sat)  # (P, K)
    weight = harvest @ x  # sum_k P_h,k * x_k per power level
    t0 = tau0[None, :]
    budget = 1.0 - t0
    total = t0 * weight[:, None]
    rate = budget * np.log1p(total / budget)
    return rate - lam * p0[:, None] * t0


def epoch_grid_search(epoch: al.EpochChannel, profiles: Sequence[EhuProfile], lam: float,
                      p_max: Optional[float] = None, grid=DEFAULT_GRID,
                      alloc: Optional[al.EpochAllocation] = None) -> OracleReport:
    """Exhaustive search of the epoch Lagrangian against the closed form.

    ``gap = best_grid - closed_form``; it is non-positive (up to rounding)
    when the closed form is optimal and shrinks towards 0 as the grid is
    refined.
    """
    n_p0, n_tau0 = (grid, grid) if np.isscalar(grid) else grid
    if n_p0 < MIN_GRID or n_tau0 < MIN_GRID:
        raise ValueError(f"grid resolution must be at least {MIN_GRID}")
    if alloc is None:
        alloc = (al.allocate_theorem1(epoch, profiles, lam) if p_max is None
                 else al.allocate_theorem2(epoch, profiles, lam, p_max))
    cap = p_max if p_max is not None else 2.0 * float(np.max(epoch.thresholds))
    p0, tau0 = grid_axes(cap, n_p0, n_tau0)
    obj = grid_objective(epoch, profiles, lam, p0, tau0)
    flat = int(np.argmax(obj))  # first maximum wins ties
    i, j = divmod(flat, obj.shape[1])
    best = float(obj[i, j])
    theorem = lagrangian_objective(alloc, epoch, profiles, lam)
    return OracleReport(
        best_objective=best, theorem_objective=theorem, gap=best - theorem,
        grid_resolution=(n_p0, n_tau0),
        kkt_residuals=kkt_residuals(alloc, epoch, profiles, lam, p_max),
        best_p0=float(p0[i]), best_tau0=float(tau0[j]),
        theorem_p0=alloc.p0, theorem_tau0=alloc.tau0, p0_cell=cap / n_p0,
    )


KKT_KEYS = ("equal_snr", "stationarity", "multiplier", "dual_feasibility",
            "rho_bounds", "saturation_slack", "linear_slack", "share_closure")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def kkt_residuals(alloc: al.EpochAllocation, epoch: al.EpochChannel,
                  profiles: Sequence[EhuProfile], lam: float,
                  p_max: Optional[float] = None) -> dict:
    """Relative residuals of the optimality conditions at ``alloc``.

    Multipliers are recovered from the allocation: each linear user gets
    ``alpha = x/C``, each saturated user ``beta = x/C`` and the boundary user
    splits ``x/C`` as ``(1 - rho, rho)``. With the peak constraint binding,
    its multiplier ``gamma = sum(alpha*N0*eta*x) - lam`` must be
    non-negative. An idle epoch only has to satisfy ``A_0 <= lam``.
    """
    eta = np.array([p.eta for p in profiles])
    p_sat = np.array([p.p_sat for p in profiles])
    x = np.asarray(epoch.x, dtype=float)
    n0 = epoch.n0
    out = dict.fromkeys(KKT_KEYS, 0.0)

    if not alloc.active:
        a0 = float(np.sum(n0 * eta * x**2))
        out["dual_feasibility"] = max(0.0, a0 - lam) / max(lam, 1e-300)
        return out

    c = alloc.c_const
    snr_common = c - 1.0
    e_lin = n0 * eta * x * alloc.p0 * alloc.tau0
    e_sat = p_sat * alloc.tau0
    energy = np.minimum(e_lin, e_sat)
    tau = np.asarray(alloc.tau, dtype=float)
    pos = tau > 0
    snr = np.zeros_like(x)
    snr[pos] = energy[pos] * x[pos] / tau[pos]
    if np.any(pos):
        out["equal_snr"] = float(np.max(np.abs(snr[pos] - snr_common))) / snr_common

    regime = np.array(alloc.regime)
    rho = alloc.rho if alloc.rho is not None else 0.0
    alpha = np.where(regime == "linear", x / c, 0.0)
    beta = np.where(regime == "saturated", x / c, 0.0)
    bnd = regime == "boundary"
    alpha = np.where(bnd, (1.0 - rho) * x / c, alpha)
    beta = np.where(bnd, rho * x / c, beta)

    # d/de_k: alpha_k + beta_k = x_k / (1 + SNR_k)
    target = x / (1.0 + snr)
    out["multiplier"] = float(np.max(np.abs(alpha + beta - target) / target))

    # d/dtau_k with eps from d/dtau0 (plus the peak multiplier when capped)
    lin_sum = float(np.sum(alpha * n0 * eta * x))
    gamma = lin_sum - lam
    eps = float(np.sum(beta * p_sat))
    if alloc.s_star is None and p_max is not None:
        eps += gamma * p_max
        out["dual_feasibility"] = max(0.0, -gamma) / max(lam, 1e-300)
    else:
        out["dual_feasibility"] = _rel(lin_sum, lam) if lam > 0 else abs(lin_sum)
        out["rho_bounds"] = max(0.0, -rho, rho - 1.0) if alloc.s_star is not None else 0.0
    lhs = math.log(c) - (c - 1.0) / c
    out["stationarity"] = abs(lhs - eps) / max(abs(eps), abs(lhs), 1e-300)

    with np.errstate(divide="ignore", invalid="ignore"):
        sat_gap = np.where(beta > 0, (e_sat - energy) / e_sat, 0.0)
        lin_gap = np.where(alpha > 0, (e_lin - energy) / e_lin, 0.0)
    out["saturation_slack"] = float(np.max(np.abs(sat_gap)))
    out["linear_slack"] = float(np.max(np.abs(lin_gap)))
    out["share_closure"] = abs(alloc.tau0 + math.fsum(tau) - 1.0)
    return out


@dataclass
class Instance:
    x: np.ndarray
    profiles: list
    n0: float
    lam: float
    p_max: Optional[float]

    @property
    def epoch(self) -> al.EpochChannel:
        return al.EpochChannel.from_gains(self.x, self.profiles, self.n0)


def random_instances(n: int, seed: int = 0, k_choices=(1, 2, 3, 5)) -> list[Instance]:
    """Randomised certification epochs: random user count, harvester
    parameters, log-uniform gains, a multiplier spanning idle to heavily
    active, and a peak limit on half of them."""
    rng = np.random.default_rng(seed)
    n0 = 1e-10
    out = []
    for _ in range(n):
        k = int(rng.choice(k_choices))
        profiles = [EhuProfile(float(rng.uniform(0.1, 0.9)), float(10 ** rng.uniform(-6.5, -4.5)))
                    for _ in range(k)]
        x = 10 ** rng.uniform(-7.5, -5.0, size=k) / n0
        eta = np.array([p.eta for p in profiles])
        a0 = float(np.sum(n0 * eta * x**2))
        lam = a0 * 10 ** rng.uniform(-2.5, 0.1)
        p_max = None
        if rng.random() < 0.5:
            thr = np.array([p.p_sat for p in profiles]) / (n0 * eta * x)
            p_max = float(10 ** rng.uniform(np.log10(thr.min()) - 0.3, np.log10(thr.max()) + 0.3))
        out.append(Instance(x, profiles, n0, float(lam), p_max))
    return out


def certify(instances: Sequence[Instance], grid=DEFAULT_GRID, workers=None,
            tamper=None) -> list[OracleReport]:
    """Run the grid search on every instance.

    ``tamper`` (tests only) maps each closed-form allocation to a modified
    one before it is scored.
    """
    from .simulator import parallel_map

    def one(inst: Instance) -> OracleReport:
        ep = inst.epoch
        alloc = (al.allocate_theorem1(ep, inst.profiles, inst.lam) if inst.p_max is None
                 else al.allocate_theorem2(ep, inst.profiles, inst.lam, inst.p_max))
        if tamper is not None:
            alloc = tamper(alloc)
        return epoch_grid_search(ep, inst.profiles, inst.lam, inst.p_max, grid, alloc)

    return parallel_map(one, instances, workers)
