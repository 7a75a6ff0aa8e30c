"""Rate functions and samplers: competition, birth, growth, dispersal.

All functions are pure in their inputs plus an explicit RNG stream, so they
are safe to call concurrently with distinct streams.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import delta_components, distance, lens_area, lens_area_vec
from .params import (DISPERSAL_ISLAND, DISPERSAL_PARCEL, KERNEL_CONSTANT,
                     KERNEL_NONE, KERNEL_ZOI, ModelParams)
from .population import Individual, Population


# -- competition -----------------------------------------------------------

def competition_u(x: Individual, y: Individual, params: ModelParams) -> float:
    """Pairwise competition rate u(x, y) exerted on x by y.

    Distinct individuals with identical states compete fully; only identity
    (not state) excludes self-competition.
    """
    if x.id == y.id:
        return 0.0
    if params.kernel_mode == KERNEL_NONE:
        return 0.0
    if params.kernel_mode == KERNEL_CONSTANT:
        return params.kernel_c
    d = float(distance(x.px, x.py, y.px, y.py, params.L, params.periodic))
    if d >= x.r + y.r:
        return 0.0
    return params.u_max * lens_area(x.r, y.r, d) / (math.pi * x.r * x.r)


def lambda_c(x: Individual, pop: Population) -> float:
    """Total competition rate on x: sum of u(x, y) over the population.

    Uses the spatial grid to restrict to candidate neighbors, then filters
    by exact overlap. Accumulation is in ascending id order so the result
    is bit-identical to the brute-force sum.
    """
    params = pop.params
    if params.kernel_mode == KERNEL_NONE:
        return 0.0
    if params.kernel_mode == KERNEL_CONSTANT:
        return params.kernel_c * (pop.n - 1)
    ids = pop.grid.neighbor_ids(x.px, x.py, exclude=x.id)
    if not ids:
        return 0.0
    slots = np.fromiter((pop.slot(i) for i in ids), dtype=np.intp, count=len(ids))
    dx, dy = delta_components(x.px, x.py, pop.px[slots], pop.py[slots],
                              params.L, params.periodic)
    d = np.hypot(dx, dy)
    ry = pop.r[slots]
    lens = lens_area_vec(np.full(len(ids), x.r), ry, d)
    u = params.u_max * lens / (math.pi * x.r * x.r)
    return float(np.add.reduce(u))


def lambda_c_bruteforce(x: Individual, pop: Population) -> float:
    """O(N) reference: identical summation order (ascending id)."""
    total = 0.0
    for ident in sorted(pop.ids):
        if ident == x.id:
            continue
        total += competition_u(x, pop.individual(ident), pop.params)
    return total


def lambda_c_all(pop: Population) -> np.ndarray:
    """Competition rate for every individual, indexed by storage slot."""
    params = pop.params
    n = pop.n
    if n == 0:
        return np.zeros(0)
    if params.kernel_mode == KERNEL_NONE:
        return np.zeros(n)
    if params.kernel_mode == KERNEL_CONSTANT:
        return np.full(n, params.kernel_c * (n - 1))
    out = np.zeros(n)
    for s in range(n):
        out[s] = lambda_c(pop.individual_at(s), pop)
    return out


# -- birth and growth ------------------------------------------------------

def birth_rate(x, params: ModelParams) -> float:
    """Fertility of an individual: proportional to r above the threshold r_b."""
    r = x.r if isinstance(x, Individual) else float(x)
    if r < params.r_b:
        return 0.0
    return params.lambda_b_max * r / params.r_max


def birth_rate_vec(r: np.ndarray, params: ModelParams) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.where(r >= params.r_b, params.lambda_b_max * r / params.r_max, 0.0)


def death_rate(x, params: ModelParams) -> float:
    """Natural death rate; constant by default but evaluated per state."""
    return params.lambda_d


def richards_R(r, params: ModelParams):
    """Sigmoid growth speed with stable fixed point at r_max.

    Positive on (0, r_max) for any beta_g != 1: the bracket and the
    1/(1-beta_g) prefactor change sign together.
    """
    r = np.asarray(r, dtype=float)
    ratio = r / params.r_max
    val = (params.alpha_g_max / (1.0 - params.beta_g) * r
           * (ratio ** (params.beta_g - 1.0) - 1.0))
    if val.ndim == 0:
        return float(val)
    return val


def psi(x: Individual, pop: Population, params: ModelParams) -> float:
    """Growth-condition factor in [0, 1]; 1 means no competition pressure."""
    return psi_from_lambda_c(lambda_c(x, pop), params)


def psi_from_lambda_c(lam_c, params: ModelParams):
    return np.maximum(0.0, 1.0 - params.C_g * np.asarray(lam_c, dtype=float))


def growth_drift(x: Individual, pop: Population, params: ModelParams) -> float:
    """Radius drift dr/dt = psi * R(r); the position component is zero."""
    return float(psi(x, pop, params) * richards_R(x.r, params))


# -- dispersal -------------------------------------------------------------

def sample_dispersal(x: Individual, params: ModelParams, rng: np.random.Generator):
    """Draw a candidate newborn state (px, py, r) for parent x.

    Parcel mode: isotropic Gaussian offset wrapped onto the torus.
    Island mode: Gaussian offset redrawn until the absolute position lands
    inside the parcel (truncated, renormalized kernel); the matching
    fertility reduction 1/C_x is applied by the engine's thinning.
    The newborn radius is exactly r_min in both modes.
    """
    if params.dispersal_mode == DISPERSAL_PARCEL:
        off = rng.standard_normal(2) * params.sigma_disp
        return ((x.px + off[0]) % params.L, (x.py + off[1]) % params.L,
                params.r_min)
    while True:
        off = rng.standard_normal(2) * params.sigma_disp
        px, py = x.px + off[0], x.py + off[1]
        if 0.0 <= px <= params.L and 0.0 <= py <= params.L:
            # positions exactly at L are folded to stay in the half-open box
            return min(px, np.nextafter(params.L, 0.0)), \
                min(py, np.nextafter(params.L, 0.0)), params.r_min


def _interval_mass(lo: float, hi: float, sigma: float) -> float:
    """Gaussian N(0, sigma^2) mass of [lo, hi]."""
    if sigma == 0.0:
        return 1.0 if lo <= 0.0 <= hi else 0.0
    inv = 1.0 / (sigma * math.sqrt(2.0))
    return 0.5 * (math.erf(hi * inv) - math.erf(lo * inv))


def island_cx_exact(px: float, py: float, params: ModelParams) -> float:
    """Normalization C_x >= 1 of the border-truncated dispersal kernel.

    Reciprocal of the Gaussian offset mass that keeps the newborn inside
    the parcel; separable, so a product of two 1-D interval masses.
    """
    s = params.sigma_disp
    if s == 0.0:
        return 1.0
    mx = _interval_mass(-px, params.L - px, s)
    my = _interval_mass(-py, params.L - py, s)
    return 1.0 / (mx * my)


class IslandCxCache:
    """Bilinear lookup of C_x on a 256x256 position grid.

    Beyond a 6*sigma_disp margin from the border the truncation loss is
    below 1e-9, so C_x is treated as exactly 1 there.
    """

    RESOLUTION = 256
    MARGIN_SIGMAS = 6.0

    def __init__(self, params: ModelParams):
        self.params = params
        self.margin = self.MARGIN_SIGMAS * params.sigma_disp
        n = self.RESOLUTION
        self._h = params.L / (n - 1)
        coords = np.linspace(0.0, params.L, n)
        mass = np.array([_interval_mass(-c, params.L - c, params.sigma_disp)
                         for c in coords])
        self._inv_mass = 1.0 / mass  # separable: C_x = inv_mass[ix]*inv_mass[iy]

    def _axis_value(self, c: float) -> float:
        h = self._h
        i = min(int(c / h), self.RESOLUTION - 2)
        frac = c / h - i
        return self._inv_mass[i] * (1.0 - frac) + self._inv_mass[i + 1] * frac

    def value(self, px: float, py: float) -> float:
        L = self.params.L
        if min(px, L - px, py, L - py) >= self.margin:
            return 1.0
        return self._axis_value(px) * self._axis_value(py)
