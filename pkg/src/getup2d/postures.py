"""Canonical poses and randomized lying-posture datasets.

Randomized supine/prone postures are produced by perturbing the canonical
lying DoFs, dropping the robot from 0.5 m, and simulating 10 s passively.
A sample is kept only if it comes to rest (max link speed < 0.05 m/s over the
final second) with the intended orientation label. Each sample draws from its
own Philox stream keyed by (seed, index), so generation is reproducible and
independent of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import SimConfig, SimState, step
from .model import Posture, RobotModel
from .terrain import Terrain, make_terrain

DROP_HEIGHT = 0.5
SETTLE_TIME = 10.0
REST_WINDOW = 1.0
REST_SPEED = 0.05          # m/s, max link speed over the rest window
DOF_NOISE_FRACTION = 0.4   # +/- 0.4 * (q_max - q_min) around the canonical DoFs
BASE_X_JITTER = 0.1


class GenerationFailed(RuntimeError):
    def __init__(self, kind, wanted, got, attempts):
        super().__init__(
            f"posture generation exhausted its budget: wanted {wanted} {kind} "
            f"postures, got {got} after {attempts} attempts"
        )
        self.kind = kind
        self.wanted = wanted
        self.got = got
        self.attempts = attempts


@dataclass
class SettleReport:
    max_link_speed: float
    max_penetration: float
    settled: bool
    label_ok: bool


@dataclass
class PostureSet:
    postures: list[Posture]
    split_tags: list[str]            # "train" / "heldout" per entry
    generator_seed: int
    settle_reports: list[SettleReport] = field(default_factory=list)
    kind: str = ""

    def __len__(self):
        return len(self.postures)

    def subset(self, tag: str) -> list[tuple[int, Posture]]:
        """(index, posture) pairs carrying the requested split tag."""
        return [(i, p) for i, (p, t) in enumerate(zip(self.postures, self.split_tags))
                if t == tag]


def orientation_label(model: RobotModel, state: SimState) -> str:
    """supine iff the torso front axis projects gravity to negative local x."""
    gx = -np.sin(state.qg[2])
    return "supine" if gx < 0 else "prone"


def canonical_pose(model: RobotModel, kind: str) -> Posture:
    if kind not in model.canonical_poses:
        raise ValueError(f"unknown canonical pose kind {kind!r}")
    p = model.canonical_poses[kind]
    return Posture(label=kind, q=p.q.copy(), base_pos=tuple(p.base_pos),
                   base_pitch=p.base_pitch)


def _link_speeds(model: RobotModel, state: SimState) -> float:
    h = 1e-7
    _, pos0 = model.frames(state.qg)
    _, pos1 = model.frames(state.qg + h * state.vg)
    return float(np.max(np.linalg.norm((pos1 - pos0) / h, axis=1)))


def settle(
    model: RobotModel, start: SimState, terrain: Terrain, cfg: SimConfig,
) -> tuple[SimState, float, float]:
    """Simulate passively for SETTLE_TIME; returns the final state, the max
    link speed over the final REST_WINDOW, and the final max penetration."""
    from . import kernels
    from .engine import SimulationDiverged, resolve_contacts

    st = start.copy()
    pk = model.packed

    def run(n_sub):
        status = kernels.passive_run_kernel(
            st.qg, st.vg, n_sub, cfg.dt_sim, cfg.gravity,
            pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path, pk.npath,
            pk.q_min, pk.q_max, cfg.joint_limit_stiffness, cfg.joint_limit_damping,
            pk.cp_link, pk.cp_pos, pk.cp_coarse, False,
            terrain.x0, terrain.dx, terrain.heightfield, terrain.friction_mu,
            cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
            pk.feet_links,
        )
        st.time += n_sub * cfg.dt_sim
        if status != kernels.STATUS_OK:
            raise SimulationDiverged(st)

    rest_substeps = int(round(REST_WINDOW / cfg.dt_sim))
    run(int(round((SETTLE_TIME - REST_WINDOW) / cfg.dt_sim)))
    max_speed = 0.0
    for _ in range(int(round(REST_WINDOW / cfg.control_dt))):
        run(cfg.substeps_per_control)
        max_speed = max(max_speed, _link_speeds(model, st))
    pen = max((cp.depth for cp in resolve_contacts(model, st, terrain, "full", cfg)),
              default=0.0)
    return st, max_speed, pen


def _sample_posture(model, terrain, cfg, kind, seed, index):
    canon = model.canonical_poses[kind]
    rng = np.random.Generator(np.random.Philox(key=(seed << 32) + index))
    pk = model.packed
    span = DOF_NOISE_FRACTION * (pk.q_max - pk.q_min)
    q = np.clip(
        canon.q + rng.uniform(-span, span),
        pk.q_min, pk.q_max,
    )
    x = canon.base_pos[0] + rng.uniform(-BASE_X_JITTER, BASE_X_JITTER)
    start = SimState.from_pose(q, (x, canon.base_pos[1] + DROP_HEIGHT), canon.base_pitch)
    final, max_speed, pen = settle(model, start, terrain, cfg)
    settled = max_speed < REST_SPEED
    label_ok = orientation_label(model, final) == kind
    # gravity parks joints a few hundredths of a radian past their limits on
    # the soft limit springs; the recorded pose is clamped back inside
    posture = Posture(
        label=kind,
        q=np.clip(final.q, pk.q_min, pk.q_max),
        base_pos=(float(final.qg[0]), float(final.qg[1])),
        base_pitch=float(final.qg[2]),
    )
    report = SettleReport(max_link_speed=max_speed, max_penetration=pen,
                          settled=settled, label_ok=label_ok)
    return posture, report


def generate_postures(
    model: RobotModel,
    terrain: Terrain | None,
    kind: str,
    n: int,
    seed: int,
    cfg: SimConfig | None = None,
    workers: int = 1,
) -> PostureSet:
    """Drop-and-settle posture dataset of a single orientation kind."""
    if n <= 0:
        raise ValueError("n must be positive")
    if kind not in ("supine", "prone"):
        raise ValueError(f"posture kind must be supine or prone, got {kind!r}")
    terrain = terrain or make_terrain("flat")
    cfg = cfg or SimConfig()
    budget = 10 * n
    postures: list[Posture] = []
    reports: list[SettleReport] = []
    index = 0
    while len(postures) < n:
        if index >= budget:
            raise GenerationFailed(kind, n, len(postures), index)
        batch = min(max(workers, 1) * 8, n - len(postures) + 4, budget - index)
        idxs = list(range(index, index + batch))
        index += batch
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(
                    lambda i: _sample_posture(model, terrain, cfg, kind, seed, i), idxs
                ))
        else:
            results = [_sample_posture(model, terrain, cfg, kind, seed, i) for i in idxs]
        for posture, report in results:
            if len(postures) >= n:
                break
            if report.settled and report.label_ok:
                postures.append(posture)
                reports.append(report)
    return PostureSet(postures=postures, split_tags=["train"] * n,
                      generator_seed=seed, settle_reports=reports, kind=kind)


def split(pset: PostureSet, train_fraction: float, seed: int) -> PostureSet:
    """Disjoint, exhaustive, seed-deterministic train/heldout split.

    Train size is floor(n * fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(pset.postures)
    n_train = int(np.floor(n * train_fraction))
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(n)
    tags = ["heldout"] * n
    for i in order[:n_train]:
        tags[i] = "train"
    return PostureSet(postures=pset.postures, split_tags=tags,
                      generator_seed=pset.generator_seed,
                      settle_reports=pset.settle_reports, kind=pset.kind)


def save_posture_set(pset: PostureSet, path: str):
    """One posture per line: label, split, q[], base pose, settle report."""
    with open(path, "w") as f:
        header = {"format": "getup2d-postures", "version": 1,
                  "kind": pset.kind, "generator_seed": pset.generator_seed,
                  "count": len(pset.postures)}
        f.write(json.dumps(header) + "\n")
        for i, p in enumerate(pset.postures):
            rep = pset.settle_reports[i] if i < len(pset.settle_reports) else None
            row = {
                "label": p.label,
                "split": pset.split_tags[i],
                "q": [float(v) for v in p.q],
                "base_pos": [float(p.base_pos[0]), float(p.base_pos[1])],
                "base_pitch": float(p.base_pitch),
                "settle": None if rep is None else {
                    "max_link_speed": rep.max_link_speed,
                    "max_penetration": rep.max_penetration,
                    "settled": rep.settled,
                    "label_ok": rep.label_ok,
                },
            }
            f.write(json.dumps(row) + "\n")


def load_posture_set(path: str) -> PostureSet:
    postures, tags, reports = [], [], []
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != "getup2d-postures":
            raise ValueError(f"{path} is not a posture set file")
        for line in f:
            row = json.loads(line)
            postures.append(Posture(
                label=row["label"], q=np.asarray(row["q"], dtype=float),
                base_pos=tuple(row["base_pos"]), base_pitch=row["base_pitch"],
            ))
            tags.append(row["split"])
            s = row.get("settle")
            if s:
                reports.append(SettleReport(
                    max_link_speed=s["max_link_speed"],
                    max_penetration=s["max_penetration"],
                    settled=s["settled"], label_ok=s["label_ok"],
                ))
    return PostureSet(postures=postures, split_tags=tags,
                      generator_seed=header.get("generator_seed", 0),
                      settle_reports=reports, kind=header.get("kind", ""))
