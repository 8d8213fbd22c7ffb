"""Observation assembly: proprioception, 10-step history, extrinsics latent.

The policy observation is [z_t, s_t, s_{t-10:t-1}] with the history block
ordered oldest first and zero-padded at episode start. Proprioception is
s_t = [pitch, ang_vel, q, qd, prev_action] with fixed scaling constants
(spec'd content, implementation-chosen scales): ang vel x0.25, dof vel x0.05.
Base linear velocity and x-position are deliberately excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ANG_VEL_SCALE = 0.25
DOF_VEL_SCALE = 0.05

HISTORY_LEN = 10


@dataclass
class ObsLayout:
    n_s: int
    n_z: int
    history: int = HISTORY_LEN

    @property
    def total(self) -> int:
        return self.n_z + self.n_s * (self.history + 1)

    @classmethod
    def for_model(cls, n_joints: int, n_z: int = 8) -> "ObsLayout":
        # pitch + ang vel + q + qd + prev action
        return cls(n_s=2 + 3 * n_joints, n_z=n_z)


@dataclass
class Extrinsics:
    """Privileged per-episode environment parameters."""

    friction_mu: float
    mass_scale: np.ndarray        # per link
    com_offset: float             # base CoM x shift, m
    control_delay: int            # extra substeps holding the previous action
    terrain_slope: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            [self.friction_mu],
            np.asarray(self.mass_scale, dtype=float),
            [self.com_offset, float(self.control_delay), self.terrain_slope],
        ])

    @staticmethod
    def dim(n_links: int) -> int:
        return n_links + 4


def proprio(pitch, ang_vel, q, qd, prev_action) -> np.ndarray:
    return np.concatenate([
        [pitch, ANG_VEL_SCALE * ang_vel],
        np.asarray(q, dtype=float),
        DOF_VEL_SCALE * np.asarray(qd, dtype=float),
        np.asarray(prev_action, dtype=float),
    ])


class HistoryBuffer:
    """Last H proprioception vectors, zero-padded after reset."""

    def __init__(self, n_s: int, history: int = HISTORY_LEN):
        self.n_s = n_s
        self.history = history
        self.buf = np.zeros((history, n_s))

    def reset(self):
        self.buf[:] = 0.0

    def push(self, s: np.ndarray):
        self.buf[:-1] = self.buf[1:]
        self.buf[-1] = s

    def flat(self) -> np.ndarray:
        """Oldest-first concatenation s_{t-H} .. s_{t-1}."""
        return self.buf.reshape(-1)

    def state(self) -> np.ndarray:
        return self.buf.copy()

    def load(self, arr: np.ndarray):
        self.buf[:] = arr


def build_observation(z: np.ndarray, s_t: np.ndarray, history: HistoryBuffer) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s_t = np.asarray(s_t, dtype=float)
    if s_t.shape[0] != history.n_s:
        raise ValueError(f"proprioception size {s_t.shape[0]} != layout {history.n_s}")
    return np.concatenate([z, s_t, history.flat()])


def history_block(obs: np.ndarray, layout: ObsLayout) -> np.ndarray:
    """The [s_t, s_{t-10:t-1}] slice used by the adaptation encoder."""
    return obs[..., layout.n_z:]
