"""Robot description: links, joints, canonical poses, and kernel packing.

Robot spec file schema (JSON, human-readable):

    {
      "name": str,
      "links": [
        {"name": str, "mass": kg, "inertia": kg m^2, "length": m,
         "com": [x, z],
         "collision_points_coarse": [[x, z], ...],
         "collision_points_full": [[x, z], ...]},
        ...                      # first link is the floating base
      ],
      "joints": [
        {"name": str, "parent": link name, "child": link name,
         "anchor": [x, z],       # on the parent, in its frame
         "q_min": rad, "q_max": rad, "tau_max": N m,
         "kp": N m/rad, "kd": N m s/rad,
         "side": "left" | "right" | "center", "axis": "pitch"},
        ...                      # joint i's child must be link i+1
      ],
      "head": {"link": link name, "offset": [x, z]},
      "feet": [left link name, right link name],
      "standing_head_height": m,
      "default_dof": [rad per joint],
      "canonical_poses": {
        "standing" | "supine" | "prone":
            {"q": [rad...], "base_pos": [x, z], "base_pitch": rad}
      }
    }

Conventions: x right, z up, angles counterclockwise; a link's gravity
projection is the world -z unit vector expressed in its frame. Left/right
joints pair up by name stem ("hip_l" mirrors "hip_r") and must share limits
and gains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import kernels


class ModelError(ValueError):
    """Raised when a robot spec violates its invariants."""


@dataclass
class LinkSpec:
    name: str
    mass: float
    inertia: float
    length: float
    com: tuple[float, float]
    collision_points_coarse: list[tuple[float, float]]
    collision_points_full: list[tuple[float, float]]


@dataclass
class JointSpec:
    name: str
    parent: str
    child: str
    anchor: tuple[float, float]
    q_min: float
    q_max: float
    tau_max: float
    kp: float
    kd: float
    side: str = "center"
    axis: str = "pitch"


@dataclass
class Posture:
    label: str
    q: np.ndarray
    base_pos: tuple[float, float]
    base_pitch: float

    def to_qg(self) -> np.ndarray:
        return np.concatenate(
            [[self.base_pos[0], self.base_pos[1], self.base_pitch], self.q]
        )


@dataclass
class PackedModel:
    """Flat-array view of a RobotModel, as consumed by the kernels."""

    jnt_parent: np.ndarray
    anchor: np.ndarray
    mass: np.ndarray
    inertia: np.ndarray
    com: np.ndarray
    path: np.ndarray
    npath: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    tau_max: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    cp_link: np.ndarray
    cp_pos: np.ndarray
    cp_coarse: np.ndarray
    feet_links: np.ndarray
    head_link: int
    head_local: np.ndarray
    knee_links: np.ndarray
    default_dof: np.ndarray

    def copy(self) -> "PackedModel":
        return PackedModel(
            self.jnt_parent.copy(), self.anchor.copy(), self.mass.copy(),
            self.inertia.copy(), self.com.copy(), self.path.copy(),
            self.npath.copy(), self.q_min.copy(), self.q_max.copy(),
            self.tau_max.copy(), self.kp.copy(), self.kd.copy(),
            self.cp_link.copy(), self.cp_pos.copy(), self.cp_coarse.copy(),
            self.feet_links.copy(), self.head_link, self.head_local.copy(),
            self.knee_links.copy(), self.default_dof.copy(),
        )


@dataclass
class RobotModel:
    name: str
    links: list[LinkSpec]
    joints: list[JointSpec]
    head_link: str
    head_offset: tuple[float, float]
    feet: tuple[str, str]
    standing_head_height: float
    default_dof: np.ndarray
    canonical_poses: dict[str, Posture] = field(default_factory=dict)

    def __post_init__(self):
        self._link_index = {l.name: i for i, l in enumerate(self.links)}
        self.validate()
        self._packed = self._pack()

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link_index(self, name: str) -> int:
        return self._link_index[name]

    @property
    def packed(self) -> PackedModel:
        return self._packed

    # -- derived joint groups ------------------------------------------------

    @property
    def ankle_joints(self) -> list[int]:
        """Joints directly proximal to the feet."""
        feet = {self._link_index[f] for f in self.feet}
        return [j for j, js in enumerate(self.joints)
                if self._link_index[js.child] in feet]

    @property
    def upper_joints(self) -> list[int]:
        """Joints not on any base-to-foot chain (arms on the default model)."""
        on_leg = set()
        for f in self.feet:
            i = self._link_index[f]
            on_leg.update(self._packed.path[i, : self._packed.npath[i]].tolist())
        return [j for j in range(self.n_joints) if j not in on_leg]

    def mirror_pairs(self) -> list[tuple[int, int]]:
        """(left, right) joint index pairs, matched by name stem."""
        def stem(name):
            for suf in ("_l", "_r", "_left", "_right"):
                if name.endswith(suf):
                    return name[: -len(suf)]
            return name

        left = {stem(j.name): i for i, j in enumerate(self.joints) if j.side == "left"}
        right = {stem(j.name): i for i, j in enumerate(self.joints) if j.side == "right"}
        return [(left[s], right[s]) for s in sorted(left)]

    @property
    def waist_joints(self) -> list[int]:
        return [i for i, j in enumerate(self.joints) if j.side == "center"]

    # -- validation ----------------------------------------------------------

    def validate(self):
        if len(self.feet) != 2:
            raise ModelError("model must declare exactly two feet")
        for l in self.links:
            if l.mass <= 0 or l.inertia <= 0 or l.length <= 0:
                raise ModelError(f"link {l.name}: mass/inertia/length must be positive")
            full = {tuple(p) for p in l.collision_points_full}
            for p in l.collision_points_coarse:
                if tuple(p) not in full:
                    raise ModelError(f"link {l.name}: coarse point {p} missing from full set")
            pts = np.asarray(l.collision_points_coarse, dtype=float)
            if len(pts) >= 2:
                dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
                if dists.max() < l.length - 1e-9:
                    raise ModelError(f"link {l.name}: collision points do not span the link ends")
        seen = set()
        for i, j in enumerate(self.joints):
            if j.parent not in self._link_index or j.child not in self._link_index:
                raise ModelError(f"joint {j.name}: unknown parent/child link")
            ci = self._link_index[j.child]
            if ci != i + 1:
                raise ModelError(f"joint {j.name}: child must be link {i + 1} in file order")
            if self._link_index[j.parent] >= ci:
                raise ModelError(f"joint {j.name}: parents must precede children")
            if ci in seen:
                raise ModelError(f"link {j.child} has two parent joints")
            seen.add(ci)
            if not (j.q_min < j.q_max):
                raise ModelError(f"joint {j.name}: q_min must be < q_max")
            if j.tau_max <= 0 or j.kp < 0 or j.kd < 0:
                raise ModelError(f"joint {j.name}: bad tau_max/kp/kd")
        if len(seen) != len(self.links) - 1:
            raise ModelError("kinematic tree is not connected")
        # left/right mirrors must exist with identical limits and gains
        lefts = [j for j in self.joints if j.side == "left"]
        rights = {j.name: j for j in self.joints if j.side == "right"}
        if len(lefts) != len(rights):
            raise ModelError("left/right joint counts differ")
        for j in lefts:
            twin_name = j.name[:-2] + "_r" if j.name.endswith("_l") else None
            twin = rights.get(twin_name)
            if twin is None:
                raise ModelError(f"joint {j.name} has no right mirror")
            for attr in ("q_min", "q_max", "tau_max", "kp", "kd"):
                if getattr(j, attr) != getattr(twin, attr):
                    raise ModelError(f"mirror pair {j.name}/{twin.name} differ in {attr}")
        if len(self.default_dof) != len(self.joints):
            raise ModelError("default_dof length mismatch")

    def validate_standing_height(self):
        """The stated standing head height must match forward kinematics."""
        pose = self.canonical_poses.get("standing")
        if pose is None:
            raise ModelError("missing standing canonical pose")
        head = self.head_position(pose.to_qg())
        if abs(head[1] - self.standing_head_height) > 1e-6:
            raise ModelError(
                f"standing_head_height {self.standing_head_height} != FK {head[1]:.9f}"
            )

    # -- kinematics helpers ----------------------------------------------------

    def frames(self, qg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World angle and origin of every link frame."""
        qg = np.asarray(qg, dtype=float)
        if qg.shape != (3 + self.n_joints,):
            raise ModelError(f"qg must have shape ({3 + self.n_joints},)")
        pk = self._packed
        theta = np.empty(self.n_links)
        pos = np.empty((self.n_links, 2))
        kernels.fk_kernel(qg, pk.jnt_parent, pk.anchor, theta, pos)
        return theta, pos

    def head_position(self, qg: np.ndarray) -> np.ndarray:
        theta, pos = self.frames(qg)
        hl = self._packed.head_link
        c, s = np.cos(theta[hl]), np.sin(theta[hl])
        off = self._packed.head_local
        return pos[hl] + np.array([c * off[0] - s * off[1], s * off[0] + c * off[1]])

    def feet_positions(self, qg: np.ndarray) -> np.ndarray:
        _, pos = self.frames(qg)
        return pos[self._packed.feet_links]

    # -- packing ---------------------------------------------------------------

    def _pack(self) -> PackedModel:
        nb = self.n_links
        nj = self.n_joints
        jnt_parent = np.array([self._link_index[j.parent] for j in self.joints], dtype=np.int64)
        anchor = np.array([j.anchor for j in self.joints], dtype=float).reshape(nj, 2)
        mass = np.array([l.mass for l in self.links])
        inertia = np.array([l.inertia for l in self.links])
        com = np.array([l.com for l in self.links], dtype=float).reshape(nb, 2)
        paths = []
        for i in range(nb):
            chain = []
            c = i
            while c != 0:
                chain.append(c - 1)
                c = jnt_parent[c - 1]
            paths.append(chain[::-1])
        maxd = max((len(p) for p in paths), default=0)
        path = np.full((nb, max(maxd, 1)), -1, dtype=np.int64)
        npath = np.zeros(nb, dtype=np.int64)
        for i, p in enumerate(paths):
            npath[i] = len(p)
            for k, j in enumerate(p):
                path[i, k] = j
        cp_link, cp_pos, cp_coarse = [], [], []
        for i, l in enumerate(self.links):
            full = [tuple(p) for p in l.collision_points_full]
            coarse = {tuple(p) for p in l.collision_points_coarse}
            for p in full:
                cp_link.append(i)
                cp_pos.append(p)
                cp_coarse.append(p in coarse)
        return PackedModel(
            jnt_parent=jnt_parent,
            anchor=anchor,
            mass=mass,
            inertia=inertia,
            com=com,
            path=path,
            npath=npath,
            q_min=np.array([j.q_min for j in self.joints]),
            q_max=np.array([j.q_max for j in self.joints]),
            tau_max=np.array([j.tau_max for j in self.joints]),
            kp=np.array([j.kp for j in self.joints]),
            kd=np.array([j.kd for j in self.joints]),
            cp_link=np.array(cp_link, dtype=np.int64),
            cp_pos=np.array(cp_pos, dtype=float).reshape(len(cp_link), 2),
            cp_coarse=np.array(cp_coarse, dtype=np.bool_),
            feet_links=np.array([self._link_index[f] for f in self.feet], dtype=np.int64),
            head_link=self._link_index[self.head_link],
            head_local=np.array(self.head_offset, dtype=float),
            knee_links=(
                np.array([self._link_index[self.joints[a].child] for a in self.ankle_joints],
                         dtype=np.int64)
                if len(self.ankle_joints) == 2
                else np.array([self._link_index[f] for f in self.feet], dtype=np.int64)
            ),
            default_dof=np.asarray(self.default_dof, dtype=float),
        )

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "links": [
                {
                    "name": l.name, "mass": l.mass, "inertia": l.inertia,
                    "length": l.length, "com": list(l.com),
                    "collision_points_coarse": [list(p) for p in l.collision_points_coarse],
                    "collision_points_full": [list(p) for p in l.collision_points_full],
                }
                for l in self.links
            ],
            "joints": [
                {
                    "name": j.name, "parent": j.parent, "child": j.child,
                    "anchor": list(j.anchor), "q_min": j.q_min, "q_max": j.q_max,
                    "tau_max": j.tau_max, "kp": j.kp, "kd": j.kd,
                    "side": j.side, "axis": j.axis,
                }
                for j in self.joints
            ],
            "head": {"link": self.head_link, "offset": list(self.head_offset)},
            "feet": list(self.feet),
            "standing_head_height": self.standing_head_height,
            "default_dof": list(map(float, self.default_dof)),
            "canonical_poses": {
                k: {
                    "q": list(map(float, p.q)),
                    "base_pos": list(p.base_pos),
                    "base_pitch": p.base_pitch,
                }
                for k, p in self.canonical_poses.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        links = [
            LinkSpec(
                name=l["name"], mass=l["mass"], inertia=l["inertia"],
                length=l["length"], com=tuple(l["com"]),
                collision_points_coarse=[tuple(p) for p in l["collision_points_coarse"]],
                collision_points_full=[tuple(p) for p in l["collision_points_full"]],
            )
            for l in d["links"]
        ]
        joints = [
            JointSpec(
                name=j["name"], parent=j["parent"], child=j["child"],
                anchor=tuple(j["anchor"]), q_min=j["q_min"], q_max=j["q_max"],
                tau_max=j["tau_max"], kp=j["kp"], kd=j["kd"],
                side=j.get("side", "center"), axis=j.get("axis", "pitch"),
            )
            for j in d["joints"]
        ]
        poses = {
            k: Posture(
                label=k, q=np.asarray(p["q"], dtype=float),
                base_pos=tuple(p["base_pos"]), base_pitch=p["base_pitch"],
            )
            for k, p in d.get("canonical_poses", {}).items()
        }
        model = cls(
            name=d.get("name", "robot"),
            links=links,
            joints=joints,
            head_link=d["head"]["link"],
            head_offset=tuple(d["head"]["offset"]),
            feet=tuple(d["feet"]),
            standing_head_height=d["standing_head_height"],
            default_dof=np.asarray(d["default_dof"], dtype=float),
            canonical_poses=poses,
        )
        model.validate_standing_height()
        return model


def load_robot(path: str) -> RobotModel:
    with open(path) as f:
        return RobotModel.from_dict(json.load(f))


def save_robot(model: RobotModel, path: str):
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=1)
        f.write("\n")


def default_robot() -> RobotModel:
    """The G1-scale planar biped shipped with the package."""
    ref = resources.files("getup2d.data").joinpath("biped_g1_scale.json")
    return RobotModel.from_dict(json.loads(ref.read_text()))
