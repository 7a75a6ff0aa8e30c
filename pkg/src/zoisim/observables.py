"""Measure pairings, generator evaluation and martingale validators.

All analysis here is read-only over populations or completed trajectories
and freely parallel across replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (birth_rate_vec, island_cx_exact, lambda_c_all,
                      psi_from_lambda_c, richards_R)
from .params import DISPERSAL_ISLAND, ModelParams
from .population import Population


class TestFunction:
    """Bounded function of the individual state x = (px, py, r).

    ``value`` (and the radial derivatives, when present) are vectorized
    over numpy arrays. Derivatives are needed only for the growth terms.
    """

    def __init__(self, name, value, dr=None, d2r=None, needs_position=False):
        self.name = name
        self._value = value
        self._dr = dr
        self._d2r = d2r
        self.needs_position = needs_position

    def value(self, px, py, r):
        return self._value(px, py, np.asarray(r, dtype=float))

    @property
    def has_derivatives(self) -> bool:
        return self._dr is not None and self._d2r is not None

    def dr(self, px, py, r):
        if self._dr is None:
            raise ValueError(f"test function {self.name!r} carries no radial "
                             f"derivative; growth terms are unavailable")
        return self._dr(px, py, np.asarray(r, dtype=float))

    def d2r(self, px, py, r):
        if self._d2r is None:
            raise ValueError(f"test function {self.name!r} carries no second "
                             f"radial derivative")
        return self._d2r(px, py, np.asarray(r, dtype=float))


def tf_one() -> TestFunction:
    return TestFunction("one",
                        lambda px, py, r: np.ones_like(r),
                        lambda px, py, r: np.zeros_like(r),
                        lambda px, py, r: np.zeros_like(r))


def tf_radius() -> TestFunction:
    return TestFunction("radius",
                        lambda px, py, r: r,
                        lambda px, py, r: np.ones_like(r),
                        lambda px, py, r: np.zeros_like(r))


def tf_radius_sq() -> TestFunction:
    return TestFunction("radius_sq",
                        lambda px, py, r: r * r,
                        lambda px, py, r: 2.0 * r,
                        lambda px, py, r: np.full_like(r, 2.0))


def tf_indicator_box(x0, x1, y0, y1) -> TestFunction:
    """Indicator of a spatial box; radial derivatives are identically zero."""
    def value(px, py, r):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        inside = (px >= x0) & (px < x1) & (py >= y0) & (py < y1)
        return inside.astype(float)

    return TestFunction(f"box[{x0},{x1})x[{y0},{y1})", value,
                        lambda px, py, r: np.zeros_like(r),
                        lambda px, py, r: np.zeros_like(r),
                        needs_position=True)


def tf_radius_band(r0, r1) -> TestFunction:
    """Indicator of a radius bin; not differentiable, no growth terms."""
    def value(px, py, r):
        return ((r >= r0) & (r < r1)).astype(float)

    return TestFunction(f"rband[{r0},{r1})", value)


def tf_tabulated(name, grid, values, dvalues=None, d2values=None) -> TestFunction:
    """Radius-tabulated function with linear interpolation."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)

    def make(tab):
        tab = np.asarray(tab, dtype=float)
        return lambda px, py, r: np.interp(r, grid, tab)

    return TestFunction(name, make(values),
                        make(dvalues) if dvalues is not None else None,
                        make(d2values) if d2values is not None else None)


def combine(name, terms) -> TestFunction:
    """Linear combination sum_i a_i * f_i of test functions."""
    fs = [(float(a), f) for a, f in terms]
    needs_pos = any(f.needs_position for _, f in fs)
    have_der = all(f.has_derivatives for _, f in fs)

    def value(px, py, r):
        return sum(a * f.value(px, py, r) for a, f in fs)

    dr = (lambda px, py, r: sum(a * f.dr(px, py, r) for a, f in fs)) if have_der else None
    d2r = (lambda px, py, r: sum(a * f.d2r(px, py, r) for a, f in fs)) if have_der else None
    return TestFunction(name, value, dr, d2r, needs_position=needs_pos)


BUILTIN_TEST_FUNCTIONS = {
    "one": tf_one,
    "radius": tf_radius,
    "radius_sq": tf_radius_sq,
}


def test_function_by_name(name: str) -> TestFunction:
    try:
        return BUILTIN_TEST_FUNCTIONS[name]()
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; "
                         f"choose from {sorted(BUILTIN_TEST_FUNCTIONS)}") from None


# -- pairings ----------------------------------------------------------------

def pair(pop: Population, f: TestFunction) -> float:
    """<nu, f> = sum of f over the individuals; 0 on the empty measure."""
    if pop.n == 0:
        return 0.0
    return float(np.sum(f.value(pop.px, pop.py, pop.r)))


def pair_arrays(px, py, r, f: TestFunction) -> float:
    if len(r) == 0:
        return 0.0
    return float(np.sum(f.value(px, py, r)))


# -- dispersal expectation ---------------------------------------------------

_GH_POINTS = 32


def _gauss_hermite(sigma: float):
    nodes, weights = np.polynomial.hermite.hermgauss(_GH_POINTS)
    return math.sqrt(2.0) * sigma * nodes, weights / math.sqrt(math.pi)


def dispersal_expectation(f: TestFunction, px, py, params: ModelParams,
                          square: bool = False) -> np.ndarray:
    """E over the dispersal kernel of f (or f^2) at the newborn state.

    The newborn radius is a point mass at r_min, so for functions of the
    radius alone this is a constant. Position dependence is integrated by
    32-point Gauss-Hermite per axis; in island mode the same quadrature of
    the border-truncated kernel is renormalized by the exact C_x.
    """
    px = np.atleast_1d(np.asarray(px, dtype=float))
    py = np.atleast_1d(np.asarray(py, dtype=float))
    n = len(px)
    if not f.needs_position:
        v = float(f.value(np.zeros(1), np.zeros(1), np.array([params.r_min]))[0])
        if square:
            v = v * v
        return np.full(n, v)

    offs, w = _gauss_hermite(params.sigma_disp)
    wx = w[:, None] * w[None, :]
    qx = px[:, None, None] + offs[None, :, None]
    qy = py[:, None, None] + offs[None, None, :]
    if params.dispersal_mode == DISPERSAL_ISLAND:
        inside = ((qx >= 0.0) & (qx <= params.L)
                  & (qy >= 0.0) & (qy <= params.L)).astype(float)
    else:
        qx %= params.L
        qy %= params.L
        inside = 1.0
    rv = np.full(qx.shape, params.r_min)
    vals = f.value(qx, qy, rv)
    if square:
        vals = vals * vals
    est = np.sum(vals * inside * wx[None, :, :], axis=(1, 2))
    if params.dispersal_mode == DISPERSAL_ISLAND:
        cx = np.array([island_cx_exact(px[i], py[i], params) for i in range(n)])
        est = est * cx
    return est


# -- generator and quadratic-variation integrands ----------------------------

@dataclass(frozen=True)
class GeneratorTerms:
    """Per-population values of the four generator parts and QV integrands."""

    l_d: float
    l_b: float
    l_c: float
    l_g: float
    q_d: float
    q_b: float
    q_c: float
    q_g: float

    @property
    def l_total(self) -> float:
        return self.l_d + self.l_b + self.l_c + self.l_g

    @property
    def q_vector(self):
        return (self.q_d, self.q_b, self.q_c, self.q_g)


_ZERO_TERMS = GeneratorTerms(0, 0, 0, 0, 0, 0, 0, 0)


def generator_terms(pop: Population, f: TestFunction,
                    params: ModelParams) -> GeneratorTerms:
    if pop.n == 0:
        return _ZERO_TERMS
    px, py, r = pop.px, pop.py, pop.r
    fv = f.value(px, py, r)
    br = birth_rate_vec(r, params)
    if params.dispersal_mode == DISPERSAL_ISLAND:
        cx = np.array([island_cx_exact(float(px[i]), float(py[i]), params)
                       for i in range(pop.n)])
        br_eff = br / cx
    else:
        br_eff = br
    lam_c = lambda_c_all(pop)
    ef = dispersal_expectation(f, px, py, params)
    ef2 = dispersal_expectation(f, px, py, params, square=True)

    l_d = -float(np.sum(params.lambda_d * fv))
    l_b = float(np.sum(br_eff * ef))
    l_c = -float(np.sum(lam_c * fv))
    q_d = float(np.sum(params.lambda_d * fv * fv))
    q_b = float(np.sum(br_eff * ef2))
    q_c = float(np.sum(lam_c * fv * fv))

    l_g = 0.0
    q_g = 0.0
    if params.growth_active:
        drift = psi_from_lambda_c(lam_c, params) * richards_R(r, params)
        fr = f.dr(px, py, r)
        l_g = float(np.sum(fr * drift))
        if params.sigma_r > 0:
            f2r = f.d2r(px, py, r)
            l_g += 0.5 * params.sigma_r ** 2 * float(np.sum(f2r))
            q_g = params.sigma_r ** 2 * float(np.sum(fr * fr))
    return GeneratorTerms(l_d, l_b, l_c, l_g, q_d, q_b, q_c, q_g)


def generator_l(f: TestFunction, pop: Population, params: ModelParams) -> float:
    """Drift of <nu_t, f>: death + birth + competition + growth parts."""
    return generator_terms(pop, f, params).l_total


# -- predicted quadratic variation -------------------------------------------

@dataclass(frozen=True)
class QVReport:
    """Time-integrated QV components along one realized trajectory."""

    d: float
    b: float
    c: float
    g: float
    empirical_var: float | None = None
    replicas: int | None = None

    @property
    def total(self) -> float:
        return self.d + self.b + self.c + self.g

    def to_text(self) -> str:
        lines = [f"qv_d {self.d:.12g}", f"qv_b {self.b:.12g}",
                 f"qv_c {self.c:.12g}", f"qv_g {self.g:.12g}",
                 f"qv_total {self.total:.12g}"]
        if self.empirical_var is not None:
            lines.append(f"empirical_var {self.empirical_var:.12g}")
        if self.replicas is not None:
            lines.append(f"replicas {self.replicas}")
        return "\n".join(lines) + "\n"


def _population_from_snapshot(snapshot, params: ModelParams) -> Population:
    _, px, py, r = snapshot
    return Population.from_entries(list(zip(px, py, r)), params)


def predicted_qv(f: TestFunction, traj, params: ModelParams) -> QVReport:
    """Trapezoid time-integration of the four QV integrands over snapshots.

    Requires stored snapshots dense enough in time; each snapshot state is
    re-indexed to evaluate the exact competition sums.
    """
    if traj.snapshots is None:
        raise ValueError("predicted_qv needs a trajectory with stored snapshots")
    times = np.asarray(traj.snapshot_times)
    rows = np.zeros((len(times), 4))
    for i, snap in enumerate(traj.snapshots):
        pop = _population_from_snapshot(snap, params)
        terms = generator_terms(pop, f, params)
        rows[i] = terms.q_vector
    d, b, c, g = (float(np.trapezoid(rows[:, j], times)) for j in range(4))
    return QVReport(d, b, c, g)


# -- online tracking during a run ---------------------------------------------

@dataclass
class TrackedSeries:
    """Checkpointed pairings and integrals of one test function."""

    times: np.ndarray
    pairing: np.ndarray
    int_l: np.ndarray
    int_qd: np.ndarray
    int_qb: np.ndarray
    int_qc: np.ndarray
    int_qg: np.ndarray

    @property
    def int_qv_total(self) -> np.ndarray:
        return self.int_qd + self.int_qb + self.int_qc + self.int_qg

    def compensated(self) -> np.ndarray:
        """<nu_t,f> - <nu_0,f> - int_0^t l f ds at the checkpoint times."""
        return self.pairing - self.pairing[0] - self.int_l


class ObservableTracker:
    """Accumulates int l f ds and the QV integrals along a running replica.

    The engine samples at every Euler substep boundary and at both sides
    of each event, so the trapezoid never spans a jump of the integrands.
    """

    def __init__(self, fs, params: ModelParams):
        self.fs = list(fs)
        self.params = params
        self._last_t: float | None = None
        self._last: list[tuple] = []
        self._cum = [np.zeros(5) for _ in self.fs]
        self._ck_times: list[float] = []
        self._ck_pairing = [[] for _ in self.fs]
        self._ck_cum = [[] for _ in self.fs]

    def _evaluate(self, pop):
        out = []
        for f in self.fs:
            t = generator_terms(pop, f, self.params)
            out.append((t.l_total, t.q_d, t.q_b, t.q_c, t.q_g))
        return out

    def sample(self, pop, t: float) -> None:
        cur = self._evaluate(pop)
        if self._last_t is not None:
            h = t - self._last_t
            if h > 0:
                for i in range(len(self.fs)):
                    a = self._last[i]
                    b = cur[i]
                    for j in range(5):
                        self._cum[i][j] += 0.5 * h * (a[j] + b[j])
        self._last = cur
        self._last_t = t

    def checkpoint(self, pop, t: float) -> None:
        self.sample(pop, t)
        self._ck_times.append(t)
        for i, f in enumerate(self.fs):
            self._ck_pairing[i].append(pair(pop, f))
            self._ck_cum[i].append(self._cum[i].copy())

    def series(self) -> dict:
        out = {}
        times = np.array(self._ck_times)
        for i, f in enumerate(self.fs):
            cum = np.array(self._ck_cum[i])
            out[f.name] = TrackedSeries(
                times=times,
                pairing=np.array(self._ck_pairing[i]),
                int_l=cum[:, 0],
                int_qd=cum[:, 1],
                int_qb=cum[:, 2],
                int_qc=cum[:, 3],
                int_qg=cum[:, 4],
            )
        return out


# -- ensemble statistics -------------------------------------------------------

def ensemble_moments(samples: np.ndarray):
    """Column-wise mean, variance (ddof=1) and stderr of replica series.

    ``samples`` has one row per replica.
    """
    samples = np.asarray(samples, dtype=float)
    m = samples.shape[0]
    mean = samples.mean(axis=0)
    var = samples.var(axis=0, ddof=1) if m > 1 else np.zeros(samples.shape[1])
    stderr = np.sqrt(var / m)
    return mean, var, stderr
