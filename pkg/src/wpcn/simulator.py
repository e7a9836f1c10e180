"""Rayleigh block-fading Monte-Carlo runs and parameter sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import allocator as al
from .allocator import NetworkConfig
from .eh_model import EhuProfile, curves_for

RAYLEIGH_POWER = "rayleigh_power"
CHUNK_EPOCHS = 4096
PATH_LOSS_SCALE = 1e-3
PATH_LOSS_EXPONENT = 3.0


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get("WPCN_THREADS", "1") or 1)
    return max(1, int(workers))


def parallel_map(fn: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """Ordered map; the thread count only changes speed, never results."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def mean_gain(distance, scale: float = PATH_LOSS_SCALE, exponent: float = PATH_LOSS_EXPONENT):
    """Average channel power gain at ``distance`` metres."""
    return scale * np.asarray(distance, dtype=float) ** (-exponent)


@dataclass(frozen=True, eq=False)
class FadingSpec:
    mean_gain: np.ndarray
    seed: int = 1
    epochs: int = 10_000
    distribution: str = RAYLEIGH_POWER

    def __post_init__(self):
        object.__setattr__(self, "mean_gain", np.atleast_1d(np.asarray(self.mean_gain, dtype=float)))
        if np.any(self.mean_gain <= 0):
            raise ValueError("mean gains must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.distribution != RAYLEIGH_POWER:
            raise ValueError(f"unsupported fading distribution {self.distribution!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @classmethod
    def for_profiles(cls, profiles: Sequence[EhuProfile], seed: int = 1, epochs: int = 10_000):
        return cls(mean_gain(np.array([p.distance for p in profiles])), seed, epochs)


def _uniform_block(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in (0, 1) for raw draw indices ``start .. start+count-1``.

    Draw ``j`` always comes from Philox block ``j // 4``, so any chunking of
    the index range reproduces the same numbers.
    """
    block, lane = divmod(start, 4)
    bitgen = np.random.Philox(key=seed, counter=[block, 0, 0, 0])
    raw = bitgen.random_raw(lane + count)[lane:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def generate_gains(spec: FadingSpec, workers: Optional[int] = None) -> np.ndarray:
    """Channel power gains ``x'`` (M, K); exponential with the given means."""
    k = spec.mean_gain.size
    starts = range(0, spec.epochs, CHUNK_EPOCHS)

    def chunk(i0):
        i1 = min(i0 + CHUNK_EPOCHS, spec.epochs)
        u = _uniform_block(spec.seed, i0 * k, (i1 - i0) * k).reshape(i1 - i0, k)
        return -np.log(u) * spec.mean_gain

    return np.concatenate(parallel_map(chunk, starts, workers), axis=0)


def generate_epochs(spec: FadingSpec, n0: float, workers: Optional[int] = None) -> np.ndarray:
    """Noise-normalised gains ``x = x'/N0`` for every epoch, shape (M, K)."""
    return generate_gains(spec, workers) / n0


@dataclass
class SchemeResult:
    scheme: str
    avg_sum_rate: float
    avg_sum_rate_design: float
    per_user_rate: np.ndarray
    consumed_avg_power: float
    lam: float
    epochs_active_fraction: float
    sum_rate_stderr: float
    constraint_active: bool = True
    budget_met: bool = True


def run_scheme(batch: al.ChannelBatch, config: NetworkConfig, scheme: str,
               truth=None) -> SchemeResult:
    """Calibrate the multiplier on ``batch`` (where the scheme has one),
    allocate every epoch and average the rates under the truth curves and
    under the design model."""
    profiles_k = batch.k_users
    if profiles_k != config.k_users:
        raise ValueError(f"batch has {profiles_k} users, config says {config.k_users}")
    if scheme == al.BASELINE2:
        search = al.LambdaSearch(0.0, float("nan"), True, True, 0)
    else:
        search = al.find_lambda(batch, config, scheme)
    alloc = al.allocate_for(batch, scheme, search, config)

    profiles = [EhuProfile(float(e), float(p)) for e, p in zip(batch.eta, batch.p_sat)]
    rates = al.batch_rates(alloc, batch, curves_for(truth, profiles))
    rates_design = al.batch_rates(alloc, batch, None)
    per_epoch = rates.sum(axis=1)
    m = batch.n_epochs
    stderr = float(np.std(per_epoch, ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    return SchemeResult(
        scheme=scheme,
        avg_sum_rate=al.average(per_epoch),
        avg_sum_rate_design=al.average(rates_design.sum(axis=1)),
        per_user_rate=np.array([al.average(rates[:, k]) for k in range(batch.k_users)]),
        consumed_avg_power=al.average(alloc.consumption),
        lam=search.lam,
        epochs_active_fraction=float(np.count_nonzero(alloc.active)) / m,
        sum_rate_stderr=stderr,
        constraint_active=search.constraint_active,
        budget_met=search.budget_met,
    )


P_AVG = "p_avg"
P_MAX = "p_max"


@dataclass(eq=False)
class SweepSpec:
    """Sweep of ``p_avg`` or ``p_max`` over ``values``.

    ``p_max_ratio`` ties the peak to the average power (``p_max = ratio *
    p_avg``) when sweeping ``p_avg``. ``k_values`` repeats the sweep for
    several network sizes, each with ``k`` copies of the first profile.
    """

    variable: str
    values: Sequence[float]
    fixed: NetworkConfig
    schemes: Sequence[str] = (al.THEOREM2, al.BASELINE1, al.BASELINE2)
    truth_curve: object = None
    p_max_ratio: Optional[float] = None
    k_values: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.variable not in (P_AVG, P_MAX):
            raise ValueError(f"sweep variable must be p_avg or p_max, got {self.variable!r}")
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")
        for s in self.schemes:
            if s not in al.SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")

    def config_at(self, value: float, k_users: int) -> NetworkConfig:
        if self.variable == P_AVG:
            p_max = self.fixed.p_max if self.p_max_ratio is None else self.p_max_ratio * value
            return replace(self.fixed, k_users=k_users, p_avg=value, p_max=p_max)
        return replace(self.fixed, k_users=k_users, p_max=value)


@dataclass
class SweepRow:
    sweep_var: str
    value: float
    k_users: int
    result: SchemeResult

    @property
    def scheme(self) -> str:
        return self.result.scheme


def run_sweep(spec: SweepSpec, profiles: Sequence[EhuProfile], fading: FadingSpec,
              workers: Optional[int] = None) -> list[SweepRow]:
    """One row per (k, value, scheme). All points for a given ``k`` share
    the same fading batch."""
    rows = []
    for k in spec.k_values or [spec.fixed.k_users]:
        profs = list(profiles) if len(profiles) == k else [profiles[0]] * k
        fspec = fading if fading.mean_gain.size == k else replace(
            fading, mean_gain=mean_gain([p.distance for p in profs]))
        x = generate_epochs(fspec, spec.fixed.n0, workers)
        eta = np.array([p.eta for p in profs])
        p_sat = np.array([p.p_sat for p in profs])
        batch = al.prepare_batch(x, eta, p_sat, spec.fixed.n0)

        jobs = [(v, s) for v in spec.values for s in spec.schemes]

        def job(vs):
            v, s = vs
            return SweepRow(spec.variable, v, k, run_scheme(batch, spec.config_at(v, k), s,
                                                            spec.truth_curve))

        rows.extend(parallel_map(job, jobs, workers))
    return rows


AVG_POWER_SWEEP = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
PEAK_POWER_SWEEP = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)


def preset(name: str, n0: float = 1e-10, truth=None,
           schemes: Sequence[str] = (al.THEOREM2, al.BASELINE1, al.BASELINE2)) -> SweepSpec:
    """Standard sweeps: ``fig1a`` varies the average power with
    the peak at 15x the average for 3 and 5 users; ``fig1b`` varies the peak
    for 5 users at 3 W average."""
    if name == "fig1a":
        return SweepSpec(P_AVG, AVG_POWER_SWEEP, NetworkConfig(5, n0, 1.0, 15.0), schemes,
                         truth, p_max_ratio=15.0, k_values=(3, 5))
    if name == "fig1b":
        return SweepSpec(P_MAX, PEAK_POWER_SWEEP, NetworkConfig(5, n0, 3.0, 35.0), schemes, truth)
    raise ValueError(f"unknown preset {name!r}")


def default_profiles(k: int) -> list[EhuProfile]:
    return [EhuProfile(0.2, 9.2e-6, 10.0) for _ in range(k)]
