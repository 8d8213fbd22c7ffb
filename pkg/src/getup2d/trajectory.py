"""50 Hz trajectory records: the stage I to stage II handoff artifact.

Serialized as line-delimited JSON: a header object, then one frame object
per line with the field order documented in FRAME_FIELDS. ``slowdown``
resamples a record to a longer duration by exact linear interpolation in
time; frame j of the output maps to source position j*(N-1)/(M-1), so the
first and last frames are preserved bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FRAME_RATE = 50.0

FRAME_FIELDS = (
    "q_target", "q", "qd", "base_pos", "base_pitch", "h_head",
    "g_base", "g_torso", "g_knee", "tau", "f_feet",
)


@dataclass
class TrajectoryRecord:
    q_target: np.ndarray    # (T, nj) action-derived PD targets
    q: np.ndarray           # (T, nj)
    qd: np.ndarray
    base_pos: np.ndarray    # (T, 2)
    base_pitch: np.ndarray  # (T,)
    h_head: np.ndarray
    g_base: np.ndarray      # (T, 2)
    g_torso: np.ndarray
    g_knee: np.ndarray      # (T, 2, 2)
    tau: np.ndarray
    f_feet: np.ndarray      # (T, 2)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        T = self.q.shape[0]
        for name in FRAME_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if arr.shape[0] != T:
                raise ValueError(f"field {name} has {arr.shape[0]} frames, expected {T}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name} contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.q.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / FRAME_RATE

    def frame(self, i: int) -> dict:
        i = min(max(i, 0), self.n_frames - 1)  # hold first/last beyond the ends
        return {name: getattr(self, name)[i] for name in FRAME_FIELDS}

    def frame_at_time(self, t: float) -> dict:
        return self.frame(int(np.floor(FRAME_RATE * t)))


def save_trajectory(traj: TrajectoryRecord, path: str):
    with open(path, "w") as f:
        header = {"format": "getup2d-trajectory", "version": 1,
                  "frame_rate": FRAME_RATE, "n_frames": traj.n_frames,
                  "fields": list(FRAME_FIELDS), "provenance": traj.provenance}
        f.write(json.dumps(header) + "\n")
        for i in range(traj.n_frames):
            row = {name: np.asarray(getattr(traj, name)[i]).tolist()
                   for name in FRAME_FIELDS}
            f.write(json.dumps(row) + "\n")


def load_trajectory(path: str) -> TrajectoryRecord:
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != "getup2d-trajectory":
            raise ValueError(f"{path} is not a trajectory file")
        rows = [json.loads(line) for line in f if line.strip()]
    if len(rows) != header["n_frames"]:
        raise ValueError(f"{path}: header says {header['n_frames']} frames, "
                         f"found {len(rows)}")
    cols = {name: np.asarray([r[name] for r in rows], dtype=float)
            for name in FRAME_FIELDS}
    return TrajectoryRecord(provenance=header.get("provenance", {}), **cols)


def slowdown(traj: TrajectoryRecord, target_duration_s: float) -> TrajectoryRecord:
    """Linear time-interpolation onto round(50 * target_duration) frames."""
    if target_duration_s < traj.duration:
        raise ValueError(
            f"target duration {target_duration_s} s is shorter than the "
            f"source ({traj.duration} s)")
    M = int(round(FRAME_RATE * target_duration_s))
    N = traj.n_frames
    if M == N:
        return TrajectoryRecord(
            provenance=dict(traj.provenance),
            **{name: getattr(traj, name).copy() for name in FRAME_FIELDS})
    out = {}
    for name in FRAME_FIELDS:
        src = getattr(traj, name)
        dst = np.empty((M,) + src.shape[1:])
        for j in range(M):
            num = j * (N - 1)
            idx = num // (M - 1)
            rem = num - idx * (M - 1)
            if rem == 0:
                dst[j] = src[idx]  # exact frames, endpoints bit-equal
            else:
                frac = rem / (M - 1)
                dst[j] = src[idx] + frac * (src[idx + 1] - src[idx])
        out[name] = dst
    prov = dict(traj.provenance)
    prov["slowdown_from_s"] = traj.duration
    prov["slowdown_to_s"] = M / FRAME_RATE
    return TrajectoryRecord(provenance=prov, **out)


def select_reference(candidates: list[tuple[TrajectoryRecord, float, float]],
                     task: str = "getup") -> TrajectoryRecord:
    """Pick the candidate maximizing the task metric; ties break toward the
    lowest energy. Candidates are (record, task_metric, energy) triples."""
    if not candidates:
        raise ValueError("no candidate trajectories")
    best = candidates[0]
    for cand in candidates[1:]:
        if cand[1] > best[1] or (cand[1] == best[1] and cand[2] < best[2]):
            best = cand
    return best[0]
