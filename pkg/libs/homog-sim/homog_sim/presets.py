"""Analytic fields selected by name in the config: radii, velocities, boundary and initial data."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from homog_core import BoundarySpec, InitialSpec, RadiusSpec, RunConfig, VelocitySpec

Array = npt.NDArray[np.float64]
PI = np.pi


@dataclass(frozen=True)
class Radius:
    """Vectorized r(x) and grad r(x) for a RadiusSpec; x has shape (..., 2)."""

    spec: RadiusSpec

    @classmethod
    def constant(cls, r0: float) -> Radius:
        return cls(RadiusSpec(kind="constant", r0=r0))

    @classmethod
    def linear(cls, r0: float, a: float) -> Radius:
        return cls(RadiusSpec(kind="linear", r0=r0, a=a))

    @property
    def is_constant(self) -> bool:
        return self.spec.kind == "constant" or self.spec.a == 0.0

    def __call__(self, x: Array) -> Array:
        s = self.spec
        x = np.asarray(x, dtype=float)
        if s.kind == "constant":
            return np.full(x.shape[:-1], s.r0)
        if s.kind == "linear":
            return s.r0 + s.a * x[..., 0]
        d = x - np.asarray(s.center)
        return s.r0 + s.a * np.exp(-np.sum(d * d, axis=-1) / s.width**2)

    def gradient(self, x: Array) -> Array:
        s = self.spec
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape)
        if s.kind == "linear":
            g[..., 0] = s.a
        elif s.kind == "bump":
            d = x - np.asarray(s.center)
            e = np.exp(-np.sum(d * d, axis=-1) / s.width**2)
            g = (-2.0 * s.a / s.width**2) * e[..., None] * d
        return g


SampleKind = Literal["constant", "linear", "square", "bump", "sinsin", "sincos"]


@dataclass(frozen=True)
class SampleField:
    """
    Smooth scalar fields with analytic derivatives.

      constant: value
      linear:   value * x1
      square:   value * x1^2
      bump:     value + amplitude * sin(pi x1) sin(pi x2)
      sinsin:   amplitude * sin(pi x1) sin(pi x2)       (zero trace on the unit square)
      sincos:   amplitude * sin(pi x1) cos(pi x2)
    """

    kind: SampleKind
    value: float = 1.0
    amplitude: float = 1.0

    def __call__(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.value)
        if self.kind == "linear":
            return self.value * a
        if self.kind == "square":
            return self.value * a * a
        if self.kind == "bump":
            return self.value + self.amplitude * np.sin(PI * a) * np.sin(PI * b)
        if self.kind == "sinsin":
            return self.amplitude * np.sin(PI * a) * np.sin(PI * b)
        return self.amplitude * np.sin(PI * a) * np.cos(PI * b)

    def gradient(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        g = np.zeros(x.shape)
        if self.kind == "linear":
            g[..., 0] = self.value
        elif self.kind == "square":
            g[..., 0] = 2.0 * self.value * a
        elif self.kind in ("bump", "sinsin"):
            g[..., 0] = self.amplitude * PI * np.cos(PI * a) * np.sin(PI * b)
            g[..., 1] = self.amplitude * PI * np.sin(PI * a) * np.cos(PI * b)
        elif self.kind == "sincos":
            g[..., 0] = self.amplitude * PI * np.cos(PI * a) * np.cos(PI * b)
            g[..., 1] = -self.amplitude * PI * np.sin(PI * a) * np.sin(PI * b)
        return g

    def hessian(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        h = np.zeros((*x.shape, 2))
        pp = PI * PI * self.amplitude
        if self.kind == "square":
            h[..., 0, 0] = 2.0 * self.value
        elif self.kind in ("bump", "sinsin"):
            h[..., 0, 0] = -pp * np.sin(PI * a) * np.sin(PI * b)
            h[..., 1, 1] = h[..., 0, 0]
            h[..., 0, 1] = pp * np.cos(PI * a) * np.cos(PI * b)
            h[..., 1, 0] = h[..., 0, 1]
        elif self.kind == "sincos":
            h[..., 0, 0] = -pp * np.sin(PI * a) * np.cos(PI * b)
            h[..., 1, 1] = h[..., 0, 0]
            h[..., 0, 1] = -pp * np.cos(PI * a) * np.sin(PI * b)
            h[..., 1, 0] = h[..., 0, 1]
        return h


@dataclass(frozen=True)
class Velocity:
    """q = A (d psi/dx2, -d psi/dx1) with psi = sin(pi x1) sin(pi x2), or q = 0."""

    kind: Literal["none", "stream"] = "none"
    amplitude: float = 0.0

    @classmethod
    def from_spec(cls, spec: VelocitySpec) -> Velocity:
        return cls(kind=spec.kind, amplitude=spec.amplitude if spec.kind == "stream" else 0.0)

    @property
    def active(self) -> bool:
        return self.kind == "stream" and self.amplitude != 0.0

    def stream(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if not self.active:
            return np.zeros(x.shape[:-1])
        return self.amplitude * np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1])

    def __call__(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        q = np.zeros(x.shape)
        if self.active:
            a, b = x[..., 0], x[..., 1]
            q[..., 0] = self.amplitude * PI * np.sin(PI * a) * np.cos(PI * b)
            q[..., 1] = -self.amplitude * PI * np.cos(PI * a) * np.sin(PI * b)
        return q


@dataclass(frozen=True)
class BoundaryData:
    """u_b(x, t) = value * (1 + amplitude cos(pi x1) cos(pi x2)) * exp(-rate t)."""

    spec: BoundarySpec

    @classmethod
    def constant(cls, value: float) -> BoundaryData:
        return cls(BoundarySpec(kind="constant", value=value))

    def _profile(self, x: Array) -> Array:
        s = self.spec
        x = np.asarray(x, dtype=float)
        if s.kind == "cosine_decay":
            return s.value * (1.0 + s.amplitude * np.cos(PI * x[..., 0]) * np.cos(PI * x[..., 1]))
        return np.full(x.shape[:-1], s.value)

    def _decay(self, t: float) -> float:
        s = self.spec
        return 1.0 if s.kind == "constant" else float(np.exp(-s.rate * t))

    def __call__(self, x: Array, t: float) -> Array:
        return self._profile(x) * self._decay(t)

    def time_derivative(self, x: Array, t: float) -> Array:
        s = self.spec
        if s.kind == "constant":
            return np.zeros(np.asarray(x).shape[:-1])
        return -s.rate * self(x, t)


InitialV = Callable[[Array, Array], Array]


def initial_u(spec: InitialSpec) -> SampleField:
    if spec.kind == "constant":
        return SampleField("constant", value=spec.value)
    return SampleField("bump", value=spec.value, amplitude=spec.amplitude)


def initial_v(spec: InitialSpec, u_init: SampleField, radius: Radius) -> InitialV:
    """v_I(x, y); `radial` adds amplitude*(|y|^2 - r(x)^2), which keeps v_I = u_I on the inclusion boundary."""

    def match(x: Array, y: Array) -> Array:
        return u_init(x)

    def constant(x: Array, y: Array) -> Array:
        return np.full(np.asarray(x).shape[:-1], spec.value)

    def radial(x: Array, y: Array) -> Array:
        y = np.asarray(y, dtype=float)
        return u_init(x) + spec.amplitude * (np.sum(y * y, axis=-1) - radius(x) ** 2)

    if spec.kind == "constant":
        return constant
    if spec.kind == "radial":
        return radial
    return match


@dataclass(frozen=True)
class Presets:
    """Every analytic input of one run, built from a RunConfig."""

    radius: Radius
    velocity: Velocity
    boundary: BoundaryData
    u_init: SampleField
    v_init: InitialV

    @classmethod
    def from_config(cls, cfg: RunConfig) -> Presets:
        radius = Radius(cfg.geometry.radius)
        u0 = initial_u(cfg.physics.initial_u)
        return cls(
            radius=radius,
            velocity=Velocity.from_spec(cfg.physics.velocity),
            boundary=BoundaryData(cfg.physics.boundary),
            u_init=u0,
            v_init=initial_v(cfg.physics.initial_v, u0, radius),
        )


def property_rng(cfg: RunConfig, case: int = 0) -> np.random.Generator:
    """Generator for randomized property checks: run.seed, one independent stream per case."""
    return np.random.default_rng([cfg.run.seed, case])


def _kind_and_params(text: str, what: str) -> dict[str, object]:
    kind, _, params = text.partition(":")
    values: dict[str, object] = {"kind": kind.strip()}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"{what} parameter {item!r} is not key=value")
        key = key.strip()
        if key == "center":
            cx, cy = raw.split(";")
            values[key] = (float(cx), float(cy))
        else:
            values[key] = float(raw)
    return values


def parse_radius(text: str) -> RadiusSpec:
    """
    Parse a command-line radius spec such as `constant:r0=0.25` or `linear:r0=0.2,a=0.05`.
    """
    return RadiusSpec.model_validate(_kind_and_params(text, "radius"))


def parse_velocity(text: str) -> VelocitySpec:
    """`none` or `stream:amplitude=1.5`."""
    return VelocitySpec.model_validate(_kind_and_params(text, "velocity"))
