"""Run configuration models (the four sections of a homog config file)."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

SQRT2 = math.sqrt(2.0)


class _Section(BaseModel):
    # Unknown keys are config errors; accept both alias and field names.
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class RadiusSpec(_Section):
    """Inclusion radius r(x) in cell units, selected by name + parameters."""

    kind: Literal["constant", "linear", "bump"] = "constant"
    r0: float = Field(default=0.25, description="Base radius")
    a: float = Field(default=0.0, description="Slope (linear) or amplitude (bump)")
    center: tuple[float, float] = Field(default=(0.5, 0.5), description="Bump center")
    width: float = Field(default=0.25, gt=0, description="Bump width")

    def value(self, x1: float, x2: float) -> float:
        if self.kind == "constant":
            return self.r0
        if self.kind == "linear":
            return self.r0 + self.a * x1
        d2 = (x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2
        return self.r0 + self.a * math.exp(-d2 / self.width**2)

    def bounds(self, omega: tuple[float, float, float, float]) -> tuple[float, float]:
        """Closed-form min/max of r over the rectangle omega."""
        x0, x1, y0, y1 = omega
        if self.kind == "constant":
            return self.r0, self.r0
        if self.kind == "linear":
            lo, hi = self.value(x0, 0.0), self.value(x1, 0.0)
            return min(lo, hi), max(lo, hi)
        # bump: extremes at the point of omega nearest to / farthest from the center
        cx, cy = self.center
        near = (min(max(cx, x0), x1), min(max(cy, y0), y1))
        far = (x0 if abs(cx - x0) > abs(cx - x1) else x1, y0 if abs(cy - y0) > abs(cy - y1) else y1)
        vals = (self.value(*near), self.value(*far))
        return min(vals), max(vals)

    def max_slope(self) -> float:
        """Upper bound of |grad r| over the plane."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear":
            return abs(self.a)
        # |d/ds a exp(-s^2/w^2)| peaks at s = w/sqrt(2)
        return abs(self.a) * SQRT2 / self.width * math.exp(-0.5)


class GeometrySection(_Section):
    radius: RadiusSpec = Field(default_factory=RadiusSpec)
    r_min: float | None = Field(default=None, description="Explicit lower radius bound")
    r_max: float | None = Field(default=None, description="Explicit upper radius bound")
    omega: tuple[float, float, float, float] = Field(
        default=(0.0, 1.0, 0.0, 1.0), description="Rectangle x0, x1, y0, y1"
    )
    exclusion: float = Field(
        default=SQRT2, gt=0, description="Cells closer than exclusion*eps to the boundary carry no inclusion"
    )

    def radius_bounds(self) -> tuple[float, float]:
        lo, hi = self.radius.bounds(self.omega)
        return (self.r_min if self.r_min is not None else lo, self.r_max if self.r_max is not None else hi)


class VelocitySpec(_Section):
    kind: Literal["none", "stream"] = "none"
    amplitude: float = 1.0


class BoundarySpec(_Section):
    """u_b(x, t) = value * (1 + amplitude*cos(pi x1) cos(pi x2)) * exp(-rate t)."""

    kind: Literal["constant", "decay", "cosine_decay"] = "constant"
    value: float = 1.0
    rate: float = 0.0
    amplitude: float = 0.0


class InitialSpec(_Section):
    """Macro initial data; u uses constant|bump, v uses match|constant|radial."""

    kind: Literal["constant", "bump", "match", "radial"] = "bump"
    value: float = 1.0
    amplitude: float = 1.0


class PhysicsSection(_Section):
    D_h: float = Field(default=1.0, gt=0)
    D_l: float = Field(default=1.0, gt=0)
    velocity: VelocitySpec = Field(default_factory=VelocitySpec)
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    initial_u: InitialSpec = Field(default_factory=InitialSpec)
    initial_v: InitialSpec = Field(default_factory=lambda: InitialSpec(kind="match"))


class DiscretizationSection(_Section):
    h_ratio: int = Field(default=32, ge=1, description="Fine grid spacing h = eps / h_ratio")
    dt: float | None = Field(default=None, gt=0, description="Time step (default: h)")
    H: float = Field(default=1.0 / 32.0, gt=0, description="Macro grid spacing")
    m: int = Field(default=16, ge=2, description="Radial cells per inclusion")
    n: int = Field(default=128, ge=32, description="Cell-problem resolution")
    T: float = Field(default=0.25, ge=0, description="Time horizon")
    sample_every: int = Field(default=10, ge=1, description="Store every k-th step (plus T)")
    radii: list[float] | None = Field(default=None, description="Effective-table radii")


class RunSection(_Section):
    epsilon: float = Field(default=0.125, gt=0, description="Scale for single runs")
    eps: list[float] = Field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    out: str = "out"
    seed: int = 0
    strict: bool = False
    threads: int | None = Field(default=None, ge=1)


class RunConfig(_Section):
    """Fully validated run configuration."""

    command: str | None = Field(default=None, description="Subcommand this config drives")
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    discretization: DiscretizationSection = Field(default_factory=DiscretizationSection)
    run: RunSection = Field(default_factory=RunSection)

    def h_for(self, epsilon: float) -> float:
        return epsilon / self.discretization.h_ratio

    def dt_for(self, epsilon: float) -> float:
        dt = self.discretization.dt
        return dt if dt is not None else self.h_for(epsilon)

    def table_radii(self) -> list[float]:
        """Configured table radii, or 6 samples spanning [0, r_max]."""
        if self.discretization.radii is not None:
            return list(self.discretization.radii)
        _, hi = self.geometry.radius_bounds()
        if hi <= 0.0:
            return [0.0, 0.1, 0.2, 0.3]
        return [hi * k / 5 for k in range(6)]
