"""Exact event-driven simulation loop.

A single exponential clock at the dominating rate gamma = gamma_b +
gamma_d + gamma_c proposes event times; between proposals all radii evolve
by an explicit Euler flow; each proposal picks an individual uniformly,
picks the event channel proportionally to the channel bounds, and accepts
or rejects by thinning against the exact state-dependent rate. Rejection
is a normal outcome and is logged.

Randomness contract: every draw of one replica comes from a single
``numpy.random.Generator`` in this fixed order per iteration:

1. exponential waiting time (scale 1/gamma);
2. during the flow, one standard-normal vector per Euler substep when
   ``sigma_r > 0``;
3. one uniform for the event channel;
4. one uniform integer for the subject individual;
5. channel-specific draws: birth consumes the dispersal offset normals
   (island mode redraws until the candidate lands inside the parcel) and
   then one acceptance uniform; competition death consumes one uniform
   integer for the partner and one acceptance uniform; natural death
   consumes one acceptance uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (IslandCxCache, birth_rate, competition_u, death_rate,
                      lambda_c_all, psi_from_lambda_c, richards_R,
                      sample_dispersal)
from .params import DISPERSAL_ISLAND, PSI_INTERVAL, ModelParams
from .population import Individual, Population

BIRTH = "birth"
NATURAL_DEATH = "natural_death"
COMPETITION_DEATH = "competition_death"
REJECTED_BIRTH = "rejected_birth"
REJECTED_NDEATH = "rejected_ndeath"
REJECTED_CDEATH = "rejected_cdeath"

ACCEPTED_KINDS = (BIRTH, NATURAL_DEATH, COMPETITION_DEATH)

DEFAULT_N_CAP = 1_000_000


class SimulationAbort(RuntimeError):
    """Raised when a run hits a hard safety cap or a numerical guard."""


@dataclass(frozen=True)
class GlobalRates:
    """Dominating channel bounds for a population of size N."""

    gamma_b: float
    gamma_d: float
    gamma_c: float
    gamma: float


def global_rates(n: int, params: ModelParams) -> GlobalRates:
    gb = params.kappa * params.lambda_b_max * n
    gd = params.lambda_d_max * n
    gc = params.u_max * n * n
    return GlobalRates(gb, gd, gc, gb + gd + gc)


@dataclass(frozen=True)
class EventRecord:
    """One proposed event, accepted or rejected."""

    k: int
    time: float
    kind: str
    subject_id: int
    partner_id: int | None = None
    newborn: Individual | None = None
    n_after: int = 0


@dataclass
class Trajectory:
    """Realized path of one replica: events, snapshots, tracked integrals."""

    params: ModelParams
    snapshot_times: list[float] = field(default_factory=list)
    snapshots: list[tuple] | None = None
    n_at_snapshots: list[int] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)
    tracked: dict = field(default_factory=dict)
    final_time: float = 0.0
    n_final: int = 0
    counts: dict = field(default_factory=dict)


@dataclass
class EngineState:
    """Mutable loop state; owned by exactly one thread."""

    pop: Population
    t: float
    k: int
    rng: np.random.Generator
    log: Trajectory
    cx_cache: IslandCxCache | None = None


def flow(pop: Population, t0: float, t1: float, params: ModelParams,
         rng: np.random.Generator | None = None, tracker=None) -> Population:
    """Advance all radii from t0 to t1; no punctual event inside (t0, t1).

    Explicit Euler with step dt_flow (the last partial substep lands on t1
    exactly); the competition pressure entering psi is re-evaluated at
    every substep unless ``psi_resolution = "interval"``. With sigma_r > 0
    an Euler-Maruyama Gaussian increment is added per substep. Radii are
    clamped to [r_min, r_max]; positions and N never change.
    """
    if t1 < t0:
        raise ValueError(f"flow target {t1} precedes start {t0}")
    span = t1 - t0
    if span == 0.0:
        return pop
    if pop.n == 0 or not params.growth_active:
        pop.time = t1
        if tracker is not None:
            tracker.sample(pop, t1)
        return pop

    nsub = max(1, math.ceil(span / params.dt_flow - 1e-12))
    psi_frozen = None
    if params.psi_resolution == PSI_INTERVAL:
        psi_frozen = psi_from_lambda_c(lambda_c_all(pop), params)
    t_cur = t0
    for i in range(1, nsub + 1):
        t_next = t1 if i == nsub else t0 + i * params.dt_flow
        h = t_next - t_cur
        if psi_frozen is None:
            ps = psi_from_lambda_c(lambda_c_all(pop), params)
        else:
            ps = psi_frozen
        r = pop.r
        new_r = r + h * ps * richards_R(r, params)
        if params.sigma_r > 0:
            if rng is None:
                raise ValueError("sigma_r > 0 requires an RNG for the flow")
            new_r = new_r + params.sigma_r * math.sqrt(h) * rng.standard_normal(pop.n)
        np.clip(new_r, params.r_min, params.r_max, out=new_r)
        pop.set_radii(new_r)
        t_cur = t_next
        if tracker is not None:
            tracker.sample(pop, t_cur)
    pop.time = t1
    return pop


def step(state: EngineState, params: ModelParams) -> EventRecord:
    """Apply one proposed event at the current time (population N >= 1).

    The caller has already advanced the flow to the event time. Returns
    the (possibly rejected) record; the population and grid are updated on
    acceptance.
    """
    pop = state.pop
    rng = state.rng
    n = pop.n
    g = global_rates(n, params)
    u_channel = rng.random()
    slot = int(rng.integers(n))
    x = pop.individual_at(slot)
    p_b = g.gamma_b / g.gamma
    p_d = g.gamma_d / g.gamma
    state.k += 1

    if u_channel < p_b:
        cand = sample_dispersal(x, params, rng)
        bound = params.lambda_b_max
        if params.dispersal_mode == DISPERSAL_ISLAND:
            if state.cx_cache is None:
                state.cx_cache = IslandCxCache(params)
            bound = bound * state.cx_cache.value(x.px, x.py)
        accept = rng.random() < birth_rate(x, params) / bound
        if accept:
            ident = pop.add(*cand)
            newborn = Individual(ident, *cand)
            return EventRecord(state.k, state.t, BIRTH, x.id,
                               newborn=newborn, n_after=pop.n)
        return EventRecord(state.k, state.t, REJECTED_BIRTH, x.id, n_after=pop.n)

    if u_channel < p_b + p_d:
        accept = rng.random() < death_rate(x, params) / params.lambda_d_max
        if accept:
            pop.remove(x.id)
            return EventRecord(state.k, state.t, NATURAL_DEATH, x.id,
                               n_after=pop.n)
        return EventRecord(state.k, state.t, REJECTED_NDEATH, x.id, n_after=pop.n)

    partner_slot = int(rng.integers(n))
    y = pop.individual_at(partner_slot)
    accept = rng.random() < competition_u(x, y, params) / params.u_max
    if accept:
        pop.remove(x.id)
        return EventRecord(state.k, state.t, COMPETITION_DEATH, x.id,
                           partner_id=y.id, n_after=pop.n)
    return EventRecord(state.k, state.t, REJECTED_CDEATH, x.id,
                       partner_id=y.id, n_after=pop.n)


def snapshot_grid(t_max: float, interval: float) -> list[float]:
    """Times {0, d, 2d, ...} up to and always including t_max."""
    if interval <= 0:
        raise ValueError("snapshot interval must be positive")
    count = int(math.floor(t_max / interval + 1e-9))
    times = [i * interval for i in range(count + 1)]
    if times[-1] < t_max - 1e-12 * max(1.0, t_max):
        times.append(t_max)
    else:
        times[-1] = t_max if count > 0 else times[-1]
    return times


def run(params: ModelParams, initial_entries, t_max: float,
        rng: np.random.Generator, *, snapshot_interval: float | None = None,
        track=(), store_snapshots: bool = True, log_events: bool = True,
        n_cap: int = DEFAULT_N_CAP) -> Trajectory:
    """Simulate one replica on [0, t_max].

    Proposals repeat until the next tentative event time exceeds t_max;
    the population is then flowed to exactly t_max. Extinction (N = 0)
    silences the clock, so the run coasts to t_max. Identical
    (params, initial state, generator state) produce identical
    trajectories.
    """
    from .observables import ObservableTracker  # local import avoids a cycle

    pop = Population.from_entries(initial_entries, params)
    traj = Trajectory(params=params, snapshots=[] if store_snapshots else None)
    state = EngineState(pop=pop, t=0.0, k=0, rng=rng, log=traj)
    tracker = ObservableTracker(track, params) if track else None

    interval = snapshot_interval if snapshot_interval else params.dt_max_rebuild
    times = snapshot_grid(t_max, interval)
    counts = {kind: 0 for kind in (BIRTH, NATURAL_DEATH, COMPETITION_DEATH,
                                   REJECTED_BIRTH, REJECTED_NDEATH,
                                   REJECTED_CDEATH)}

    def take_snapshot(t_snap: float):
        traj.snapshot_times.append(t_snap)
        traj.n_at_snapshots.append(pop.n)
        if store_snapshots:
            traj.snapshots.append(pop.snapshot_arrays())
        if tracker is not None:
            tracker.checkpoint(pop, t_snap)

    if tracker is not None:
        tracker.sample(pop, 0.0)
    take_snapshot(times[0])
    si = 1

    while True:
        n = pop.n
        g = global_rates(n, params) if n else None
        if n == 0 or g.gamma == 0.0:
            for t_snap in times[si:]:
                flow(pop, state.t, t_snap, params, rng=rng, tracker=tracker)
                state.t = t_snap
                take_snapshot(t_snap)
                si += 1
            if state.t < t_max:
                flow(pop, state.t, t_max, params, rng=rng, tracker=tracker)
                state.t = t_max
            break

        wait = rng.exponential(1.0 / g.gamma)
        t_event = state.t + wait
        t_stop = min(t_event, t_max)
        while si < len(times) and times[si] <= t_stop + 1e-15:
            flow(pop, state.t, times[si], params, rng=rng, tracker=tracker)
            state.t = times[si]
            take_snapshot(times[si])
            si += 1
        if t_event > t_max:
            flow(pop, state.t, t_max, params, rng=rng, tracker=tracker)
            state.t = t_max
            break

        flow(pop, state.t, t_event, params, rng=rng, tracker=tracker)
        state.t = t_event
        record = step(state, params)
        counts[record.kind] += 1
        if tracker is not None:
            # restart the integrand interval from the post-event state
            tracker.sample(pop, state.t)
        if log_events:
            traj.events.append(record)
        if pop.n > n_cap:
            raise SimulationAbort(
                f"population size {pop.n} exceeded the hard cap {n_cap} at "
                f"t={state.t:.6g}; the configuration is supercritical")

    traj.final_time = state.t
    traj.n_final = pop.n
    traj.counts = counts
    if tracker is not None:
        traj.tracked = tracker.series()
    return traj
