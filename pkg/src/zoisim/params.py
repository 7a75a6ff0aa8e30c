"""Model parameters shared by the simulator, the observables and the solvers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

KERNEL_ZOI = "zoi"
KERNEL_CONSTANT = "constant"
KERNEL_NONE = "none"
KERNEL_MODES = (KERNEL_ZOI, KERNEL_CONSTANT, KERNEL_NONE)

DISPERSAL_PARCEL = "parcel_in_forest"
DISPERSAL_ISLAND = "island"
DISPERSAL_MODES = (DISPERSAL_PARCEL, DISPERSAL_ISLAND)

PSI_SUBSTEP = "substep"
PSI_INTERVAL = "interval"


class ParameterError(ValueError):
    """Raised when a parameter set violates a model constraint."""


@dataclass(frozen=True)
class ModelParams:
    """All rates, bounds and geometry constants of one model configuration.

    Lengths are in meters, rates in 1/time. A frozen instance is a plain
    value: safe to share between threads and to hash into provenance headers.
    """

    L: float = 10.0
    r_min: float = 0.1
    r_max: float = 1.0
    r_b: float = 0.1
    lambda_b_max: float = 1.0
    lambda_d_max: float = 0.1
    lambda_d: float = 0.1
    u_max: float = 1.0
    kappa: float = 1.0
    sigma_disp: float = 0.5
    alpha_g_max: float = 1.0
    beta_g: float = 2.0
    C_g: float = 1.0
    sigma_r: float = 0.0
    kernel_mode: str = KERNEL_ZOI
    kernel_c: float = 0.0
    dispersal_mode: str = DISPERSAL_PARCEL
    dt_flow: float = 1e-3
    dt_max_rebuild: float = 0.05
    psi_resolution: str = PSI_SUBSTEP

    def __post_init__(self):
        def fail(msg: str):
            raise ParameterError(msg)

        for name in ("lambda_b_max", "lambda_d_max", "lambda_d", "u_max",
                     "kappa", "sigma_disp", "alpha_g_max", "C_g", "sigma_r"):
            if getattr(self, name) < 0:
                fail(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not (0 < self.r_min <= self.r_b <= self.r_max):
            fail(f"radii must satisfy 0 < r_min <= r_b <= r_max, "
                 f"got r_min={self.r_min}, r_b={self.r_b}, r_max={self.r_max}")
        if self.beta_g == 1.0:
            fail("beta_g must differ from 1 (growth law is singular at beta_g=1)")
        if not 2.0 * self.r_max < self.L:
            fail(f"minimal-image correctness requires 2*r_max < L, "
                 f"got r_max={self.r_max}, L={self.L}")
        if self.kernel_mode not in KERNEL_MODES:
            fail(f"kernel_mode must be one of {KERNEL_MODES}, got {self.kernel_mode!r}")
        if self.dispersal_mode not in DISPERSAL_MODES:
            fail(f"dispersal_mode must be one of {DISPERSAL_MODES}, "
                 f"got {self.dispersal_mode!r}")
        if self.dispersal_mode == DISPERSAL_PARCEL and self.kappa != 1.0:
            fail(f"kappa must equal 1 in {DISPERSAL_PARCEL} mode, got {self.kappa}")
        if self.kernel_mode == KERNEL_CONSTANT:
            if not 0.0 <= self.kernel_c <= self.u_max:
                fail(f"constant kernel requires 0 <= kernel_c <= u_max, "
                     f"got kernel_c={self.kernel_c}, u_max={self.u_max}")
        if self.lambda_d > self.lambda_d_max:
            fail(f"lambda_d must not exceed lambda_d_max, "
                 f"got lambda_d={self.lambda_d}, lambda_d_max={self.lambda_d_max}")
        if self.dt_flow <= 0:
            fail(f"dt_flow must be positive, got {self.dt_flow}")
        if self.dt_max_rebuild <= 0:
            fail(f"dt_max_rebuild must be positive, got {self.dt_max_rebuild}")
        if self.psi_resolution not in (PSI_SUBSTEP, PSI_INTERVAL):
            fail(f"psi_resolution must be '{PSI_SUBSTEP}' or '{PSI_INTERVAL}', "
                 f"got {self.psi_resolution!r}")

    @property
    def periodic(self) -> bool:
        return self.dispersal_mode == DISPERSAL_PARCEL

    @property
    def growth_active(self) -> bool:
        """Radii can move between events (drift or diffusion present)."""
        drift = self.alpha_g_max > 0 and self.r_min < self.r_max
        return drift or self.sigma_r > 0

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)
