"""Procedural low-poly quadruped with named joints and gait animation.

The animal faces +x in its model frame, z up, origin on the ground below
the body center. Every animation frame carries the full vertex cloud,
the joint positions and a fitted oriented bounding box; frame 0 of every
sequence has all four feet planted at z = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Obb, obb_from_vertices

JOINT_NAMES = (
    "pelvis",
    "spine",
    "shoulder",
    "neck",
    "head",
    "tail",
    "hip_fl",
    "knee_fl",
    "foot_fl",
    "hip_fr",
    "knee_fr",
    "foot_fr",
    "hip_bl",
    "knee_bl",
    "foot_bl",
    "hip_br",
    "knee_br",
    "foot_br",
)
_J = {name: k for k, name in enumerate(JOINT_NAMES)}

# (kind, leg swing m, foot lift m, body bob m, stride cycles per sequence)
_GAIT_KINDS = (
    ("stand", 0.0, 0.0, 0.008, 1),
    ("walk", 0.22, 0.07, 0.02, 1),
    ("trot", 0.30, 0.12, 0.035, 2),
    ("graze", 0.04, 0.015, 0.01, 1),
    ("look", 0.0, 0.0, 0.012, 1),
)


class AssetError(ValueError):
    """Invalid asset construction parameters."""


@dataclass(frozen=True)
class QuadrupedParams:
    body_length: float = 2.2
    body_width: float = 0.55
    torso_height: float = 0.6
    leg_length: float = 0.95
    neck_length: float = 0.8
    size_scale: float = 1.0

    def scaled(self, s: float) -> "QuadrupedParams":
        return replace(self, size_scale=self.size_scale * s)


@dataclass(frozen=True, eq=False)
class AnimationFrame:
    vertices: np.ndarray  # (V, 3)
    joints: np.ndarray  # (J, 3)
    obb: Obb


@dataclass(frozen=True, eq=False)
class AssetModel:
    model_id: str
    joint_names: tuple[str, ...]
    faces: np.ndarray  # (F, 3) int32, shared by all frames
    frames: tuple[AnimationFrame, ...]
    sequence_ranges: tuple[tuple[int, int], ...]

    @property
    def total_frames(self) -> int:
        return len(self.frames)

    @property
    def n_sequences(self) -> int:
        return len(self.sequence_ranges)

    def sequence_of_frame(self, frame_index: int) -> int:
        for s, (lo, hi) in enumerate(self.sequence_ranges):
            if lo <= frame_index < hi:
                return s
        raise AssetError(f"frame index {frame_index} out of range")


def _rest_joints(p: QuadrupedParams) -> np.ndarray:
    s = p.size_scale
    torso_len = p.body_length * 0.68 * s
    leg = p.leg_length * s
    hip_x = torso_len / 2 - 0.10 * s
    leg_y = (p.body_width / 2 - 0.07) * s
    back_z = leg + p.torso_height * 0.45 * s
    j = np.zeros((len(JOINT_NAMES), 3))
    j[_J["pelvis"]] = (-torso_len / 2, 0.0, back_z)
    j[_J["spine"]] = (0.0, 0.0, back_z + 0.03 * s)
    j[_J["shoulder"]] = (torso_len / 2, 0.0, back_z)
    j[_J["neck"]] = (torso_len / 2 + 0.12 * s, 0.0, back_z + 0.18 * s)
    j[_J["head"]] = (
        torso_len / 2 + 0.12 * s + p.neck_length * 0.72 * s,
        0.0,
        back_z + 0.18 * s + p.neck_length * 0.65 * s,
    )
    j[_J["tail"]] = (-torso_len / 2 - 0.38 * s, 0.0, back_z - 0.25 * s)
    for name, sx, sy in (
        ("fl", 1.0, 1.0),
        ("fr", 1.0, -1.0),
        ("bl", -1.0, 1.0),
        ("br", -1.0, -1.0),
    ):
        hip = np.array([sx * hip_x, sy * leg_y, leg])
        j[_J[f"hip_{name}"]] = hip
        j[_J[f"knee_{name}"]] = (hip[0] + 0.04 * s, hip[1], leg * 0.5)
        j[_J[f"foot_{name}"]] = (hip[0], hip[1], 0.0)
    return j


_LEG_PHASE = {"fl": 0.0, "br": 0.0, "fr": math.pi, "bl": math.pi}


def _pose_joints(p: QuadrupedParams, rest: np.ndarray, gait, phase: float) -> np.ndarray:
    """Joint positions at a gait phase in [0, 2*pi)."""
    kind, swing, lift, bob, cycles = gait["kind"]
    s = p.size_scale
    swing = swing * gait["amp"] * s
    lift = lift * gait["amp"] * s
    j = rest.copy()
    th = cycles * phase

    bob_dz = bob * s * math.sin(2.0 * th)
    for name in ("pelvis", "spine", "shoulder", "neck", "head", "tail"):
        j[_J[name], 2] += bob_dz

    for leg, ph in _LEG_PHASE.items():
        hip = j[_J[f"hip_{leg}"]]
        foot = j[_J[f"foot_{leg}"]]
        foot[0] += swing * math.sin(th + ph)
        lifted = max(0.0, math.sin(th + ph + math.pi / 2.0)) * math.fabs(math.sin(th + ph))
        foot[2] += lift * lifted
        knee = j[_J[f"knee_{leg}"]]
        knee[0] = (hip[0] + foot[0]) / 2 + (0.05 + 0.5 * lift * lifted) * s
        knee[1] = foot[1]
        knee[2] = (hip[2] + foot[2]) / 2

    if kind == "graze":
        # Head dips toward the ground and sweeps sideways.
        drop = gait["head_drop"] * s
        j[_J["head"], 2] -= drop * (0.85 + 0.15 * math.cos(th))
        j[_J["head"], 0] += 0.18 * s
        j[_J["head"], 1] += gait["sway"] * s * math.sin(th)
    elif kind == "look":
        j[_J["head"], 1] += gait["sway"] * s * math.sin(th)
        j[_J["neck"], 1] += 0.4 * gait["sway"] * s * math.sin(th)
    j[_J["tail"], 1] += gait["tail_swish"] * s * math.sin(th)
    return j


# Mesh parts: (start joint, end joint, fraction range along the bone,
# half width, half height). Cross sections are scaled by size_scale.
_PARTS = (
    ("pelvis", "shoulder", -0.14, 1.14, 0.275, 0.30),
    ("neck", "head", 0.0, 0.80, 0.13, 0.16),
    ("neck", "head", 0.70, 1.16, 0.095, 0.12),
    ("pelvis", "tail", 0.15, 1.05, 0.04, 0.04),
    ("hip_fl", "knee_fl", 0.0, 1.0, 0.075, 0.075),
    ("knee_fl", "foot_fl", 0.0, 1.0, 0.05, 0.05),
    ("hip_fr", "knee_fr", 0.0, 1.0, 0.075, 0.075),
    ("knee_fr", "foot_fr", 0.0, 1.0, 0.05, 0.05),
    ("hip_bl", "knee_bl", 0.0, 1.0, 0.075, 0.075),
    ("knee_bl", "foot_bl", 0.0, 1.0, 0.05, 0.05),
    ("hip_br", "knee_br", 0.0, 1.0, 0.075, 0.075),
    ("knee_br", "foot_br", 0.0, 1.0, 0.05, 0.05),
)

_BOX_FACES = np.array(
    [
        [0, 1, 3], [0, 3, 2],
        [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4],
        [1, 5, 7], [1, 7, 3],
    ],
    dtype=np.int32,
)


def _bone_frame(j0: np.ndarray, j1: np.ndarray):
    e1 = j1 - j0
    length = np.linalg.norm(e1)
    if length < 1e-9:
        raise AssetError("degenerate bone")
    e1 = e1 / length
    up = np.array([0.0, 0.0, 1.0])
    e2 = np.cross(up, e1)
    if np.linalg.norm(e2) < 1e-6:
        e2 = np.cross(np.array([1.0, 0.0, 0.0]), e1)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return e1, e2, e3, length


def _skin(p: QuadrupedParams, joints: np.ndarray) -> np.ndarray:
    s = p.size_scale
    verts = np.empty((len(_PARTS) * 8, 3))
    k = 0
    for name0, name1, f0, f1, hw, hh in _PARTS:
        j0 = joints[_J[name0]]
        j1 = joints[_J[name1]]
        e1, e2, e3, length = _bone_frame(j0, j1)
        for fa in (f0, f1):
            base = j0 + e1 * (fa * length)
            for sw in (-1.0, 1.0):
                for sh in (-1.0, 1.0):
                    verts[k] = base + e2 * (sw * hw * s) + e3 * (sh * hh * s)
                    k += 1
    return verts


def _build_faces() -> np.ndarray:
    faces = []
    for part in range(len(_PARTS)):
        faces.append(_BOX_FACES + 8 * part)
    return np.concatenate(faces).astype(np.int32)


def _sequence_lengths(n_sequences, frames_per_sequence, total_frames):
    if n_sequences < 1:
        raise AssetError(f"n_sequences must be at least 1, got {n_sequences}")
    if frames_per_sequence is not None:
        if frames_per_sequence < 1:
            raise AssetError(f"frames_per_sequence must be at least 1, got {frames_per_sequence}")
        return [int(frames_per_sequence)] * int(n_sequences)
    if total_frames is None or total_frames < n_sequences:
        raise AssetError(
            f"total_frames must cover at least one frame per sequence "
            f"({n_sequences}), got {total_frames}"
        )
    base, rem = divmod(int(total_frames), int(n_sequences))
    return [base + 1 if i < rem else base for i in range(int(n_sequences))]


def make_quadruped(
    params: QuadrupedParams | None = None,
    n_sequences: int = 34,
    frames_per_sequence: int | None = None,
    total_frames: int | None = 888,
    seed=0,
    model_id: str | None = None,
) -> AssetModel:
    """Build a deterministic animated quadruped.

    Sequences cycle through gait kinds (stand, walk, trot, graze, look)
    with per-sequence amplitude variation drawn from the seed. Either
    frames_per_sequence fixes a uniform length, or total_frames is
    distributed as evenly as possible across sequences.
    """
    p = params or QuadrupedParams()
    lengths = _sequence_lengths(n_sequences, frames_per_sequence, total_frames)
    rng = np.random.default_rng(seed)
    rest = _rest_joints(p)
    faces = _build_faces()

    frames: list[AnimationFrame] = []
    ranges: list[tuple[int, int]] = []
    for si, n_frames in enumerate(lengths):
        gait = {
            "kind": _GAIT_KINDS[si % len(_GAIT_KINDS)],
            "amp": float(rng.uniform(0.8, 1.2)),
            "head_drop": float(rng.uniform(0.55, 0.8)),
            "sway": float(rng.uniform(0.05, 0.16)),
            "tail_swish": float(rng.uniform(0.05, 0.2)),
        }
        start = len(frames)
        for f in range(n_frames):
            phase = 2.0 * math.pi * f / n_frames
            joints = _pose_joints(p, rest, gait, phase)
            verts = _skin(p, joints)
            frames.append(AnimationFrame(verts, joints, obb_from_vertices(verts)))
        ranges.append((start, len(frames)))

    return AssetModel(
        model_id=model_id or f"quadruped-{seed}",
        joint_names=JOINT_NAMES,
        faces=faces,
        frames=tuple(frames),
        sequence_ranges=tuple(ranges),
    )


def build_catalog(
    n_variants: int = 1,
    n_sequences: int = 34,
    frames_per_sequence: int | None = None,
    total_frames: int | None = 888,
    seed=0,
    params: QuadrupedParams | None = None,
) -> list[AssetModel]:
    """One or more quadruped variants; extra variants get size jitter."""
    if n_variants < 1:
        raise AssetError(f"n_variants must be at least 1, got {n_variants}")
    base = params or QuadrupedParams()
    rng = np.random.default_rng(seed)
    models = []
    for v in range(n_variants):
        scale = 1.0 if v == 0 else float(rng.uniform(0.9, 1.1))
        models.append(
            make_quadruped(
                base.scaled(scale),
                n_sequences=n_sequences,
                frames_per_sequence=frames_per_sequence,
                total_frames=total_frames,
                seed=rng.integers(0, 2**63 - 1) if v else seed,
                model_id=f"quadruped-{v:03d}",
            )
        )
    return models
