"""Heightfield terrain: flat, rough, and slope variants.

All kinds reduce to a sampled heightfield h(x) so the contact kernels see a
single representation. Rough terrain is generated from a seed, so a terrain
is fully reproducible from (kind, seed, parameters) recorded in a manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("flat", "rough", "slope")


@dataclass
class Terrain:
    kind: str
    heightfield: np.ndarray
    x0: float
    dx: float
    slope_angle: float = 0.0
    friction_mu: float = 0.8
    restitution: float = 0.0  # recorded metadata; the spring-damper law is inelastic
    seed: int = 0
    rough_amplitude: float = 0.0

    def __post_init__(self):
        self.heightfield = np.asarray(self.heightfield, dtype=float)
        if not np.all(np.isfinite(self.heightfield)):
            raise ValueError("heightfield must be finite")
        if self.friction_mu <= 0:
            raise ValueError("friction_mu must be positive")
        if not 0.0 <= self.restitution <= 0.2:
            raise ValueError("restitution must lie in [0, 0.2]")

    @property
    def x_max(self) -> float:
        return self.x0 + self.dx * (len(self.heightfield) - 1)

    def height(self, x: float) -> float:
        s = np.clip((x - self.x0) / self.dx, 0.0, len(self.heightfield) - 1)
        i = int(min(s, len(self.heightfield) - 2))
        f = s - i
        return float(self.heightfield[i] * (1 - f) + self.heightfield[i + 1] * f)

    def params(self) -> dict:
        return {
            "kind": self.kind,
            "x0": self.x0,
            "dx": self.dx,
            "n": int(len(self.heightfield)),
            "slope_angle": self.slope_angle,
            "friction_mu": self.friction_mu,
            "restitution": self.restitution,
            "seed": self.seed,
            "rough_amplitude": self.rough_amplitude,
        }


def make_terrain(
    kind: str = "flat",
    extent: float = 12.0,
    dx: float = 0.1,
    slope_angle: float = 0.0,
    friction_mu: float = 0.8,
    rough_amplitude: float = 0.02,
    seed: int = 0,
) -> Terrain:
    """Build a terrain centered on x=0 spanning [-extent/2, extent/2]."""
    if kind not in KINDS:
        raise ValueError(f"unknown terrain kind {kind!r}")
    n = int(round(extent / dx)) + 1
    x0 = -extent / 2.0
    xs = x0 + dx * np.arange(n)
    if kind == "flat":
        h = np.zeros(n)
        slope_angle = 0.0
        rough_amplitude = 0.0
    elif kind == "slope":
        h = np.tan(slope_angle) * xs
        rough_amplitude = 0.0
    else:  # rough: smoothed seeded bumps
        rng = np.random.Generator(np.random.Philox(key=seed))
        raw = rng.uniform(-1.0, 1.0, n)
        kern = np.array([0.25, 0.5, 0.25])
        for _ in range(2):
            raw = np.convolve(raw, kern, mode="same")
        h = rough_amplitude * raw
        slope_angle = 0.0
    return Terrain(
        kind=kind,
        heightfield=h,
        x0=x0,
        dx=dx,
        slope_angle=slope_angle,
        friction_mu=friction_mu,
        seed=seed,
        rough_amplitude=rough_amplitude,
    )


def from_params(p: dict) -> Terrain:
    """Rebuild a terrain from its recorded parameters."""
    extent = p["dx"] * (p["n"] - 1)
    t = make_terrain(
        kind=p["kind"],
        extent=extent,
        dx=p["dx"],
        slope_angle=p["slope_angle"],
        friction_mu=p["friction_mu"],
        rough_amplitude=p["rough_amplitude"],
        seed=p["seed"],
    )
    t.restitution = p.get("restitution", 0.0)
    return t
