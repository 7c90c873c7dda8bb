"""Robot skills and the stochastic execution model.

A skill is a typed motion primitive (move, pick, insert, push with a force,
turn by an angle).  The simulator replaces the physical outcome with a
two-level probability model: a per-skill base success probability, dropped
to an out-of-envelope probability when a grasp-pose offset leaves the
finger type's tolerance envelope.  Pose noise on success is clipped at
three standard deviations, so achieved poses stay within a hard bound.

Physical slip is represented by displacement: a failed skill lands more
than 5 mm from its target, a successful one within the noise bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import Rotation

__all__ = [
    "FailureModel",
    "GRASP_MOVED_THRESHOLD_MM",
    "Pose",
    "PoseOffset",
    "RobotSimulator",
    "Skill",
    "SkillKind",
    "SkillResult",
    "ToleranceEnvelope",
    "execute_skill",
    "grasp_displacement",
    "moved_significantly",
    "run_sequence",
]

# Displacement above this is a significant move (strict comparison).
GRASP_MOVED_THRESHOLD_MM = 5.0

# Success noise is clipped at this many standard deviations.
NOISE_CLIP_SIGMAS = 3.0

_FAILURE_SLIP_RANGE_MM = (6.0, 12.0)


class SkillKind(enum.Enum):
    MOVE_TO = "move_to"
    MOVE_TO_CONTACT = "move_to_contact"
    PICK = "pick"
    PLACE = "place"
    INSERT = "insert"
    TURN = "turn"
    PUSH = "push"


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: Rotation

    def __post_init__(self) -> None:
        position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(position)):
            raise ValueError(f"pose position must be finite, got {position}")
        position.setflags(write=False)
        object.__setattr__(self, "position", position)

    @classmethod
    def at(cls, x: float, y: float, z: float) -> "Pose":
        return cls(np.array([x, y, z]), Rotation.identity())

    def translated(self, delta: np.ndarray) -> "Pose":
        return Pose(self.position + np.asarray(delta, dtype=np.float64),
                    self.orientation)

    def rotated_by(self, rotation: Rotation) -> "Pose":
        return Pose(self.position, Rotation(rotation.matrix @ self.orientation.matrix))


@dataclass(frozen=True)
class PoseOffset:
    """Grasp-approach error: per-axis position (mm) and rotation (degrees)."""

    position_mm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation_deg: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        for name in ("position_mm", "rotation_deg"):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def is_zero(self) -> bool:
        return not (self.position_mm.any() or self.rotation_deg.any())

    def apply_to(self, pose: Pose) -> Pose:
        out = pose.translated(self.position_mm)
        if self.rotation_deg.any():
            out = out.rotated_by(Rotation.from_euler_xyz_degrees(*self.rotation_deg))
        return out


@dataclass(frozen=True)
class ToleranceEnvelope:
    """Maximum tolerated |offset| per axis; boundary values are inside."""

    position_mm: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))
    rotation_deg: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))

    def __post_init__(self) -> None:
        for name in ("position_mm", "rotation_deg"):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            if np.any(value < 0):
                raise ValueError(f"{name} envelope must be non-negative")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def contains(self, offset: PoseOffset) -> bool:
        return bool(
            np.all(np.abs(offset.position_mm) <= self.position_mm)
            and np.all(np.abs(offset.rotation_deg) <= self.rotation_deg)
        )


@dataclass(frozen=True)
class Skill:
    kind: SkillKind
    target: Pose
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parameters", dict(self.parameters))
        if self.kind is SkillKind.PUSH and "force" not in self.parameters:
            raise ValueError("push skill requires a 'force' parameter (N)")
        if self.kind is SkillKind.TURN and "angle" not in self.parameters:
            raise ValueError("turn skill requires an 'angle' parameter (degrees)")


@dataclass(frozen=True)
class SkillResult:
    kind: SkillKind
    success: bool
    achieved_pose: Pose
    notes: str = ""


@dataclass(frozen=True)
class FailureModel:
    """Stochastic stand-in for physical skill outcomes.

    ``base_success`` maps skill kinds to success probabilities (unlisted
    kinds use ``default_success``).  When a grasp offset falls outside the
    finger type's envelope, ``out_of_envelope_success`` replaces the base
    probability for that skill.
    """

    base_success: Mapping[SkillKind, float] = field(default_factory=dict)
    default_success: float = 1.0
    position_noise_mm: float = 0.0
    rotation_noise_deg: float = 0.0
    envelopes: Mapping[str, ToleranceEnvelope] = field(default_factory=dict)
    out_of_envelope_success: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_success", dict(self.base_success))
        object.__setattr__(self, "envelopes", dict(self.envelopes))
        probabilities = [
            self.default_success,
            self.out_of_envelope_success,
            *self.base_success.values(),
        ]
        for p in probabilities:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of [0, 1]: {p}")
        if self.position_noise_mm < 0 or self.rotation_noise_deg < 0:
            raise ValueError("noise stddev must be non-negative")

    def success_probability(
        self,
        kind: SkillKind,
        finger_type: str | None = None,
        offset: PoseOffset | None = None,
    ) -> float:
        if offset is not None and finger_type in self.envelopes:
            if not self.envelopes[finger_type].contains(offset):
                return self.out_of_envelope_success
        return self.base_success.get(kind, self.default_success)

    @property
    def position_noise_bound_mm(self) -> float:
        return NOISE_CLIP_SIGMAS * self.position_noise_mm


def _success_noise(model: FailureModel, rng: np.random.Generator, target: Pose) -> Pose:
    # Zero stddev still consumes draws, keeping rng streams aligned across
    # model variants.
    shift = rng.normal(0.0, model.position_noise_mm, size=3)
    tilt = rng.normal(0.0, model.rotation_noise_deg, size=3)
    bound_mm = NOISE_CLIP_SIGMAS * model.position_noise_mm
    bound_deg = NOISE_CLIP_SIGMAS * model.rotation_noise_deg
    pose = target.translated(np.clip(shift, -bound_mm, bound_mm))
    tilt = np.clip(tilt, -bound_deg, bound_deg)
    if tilt.any():
        pose = pose.rotated_by(Rotation.from_euler_xyz_degrees(*tilt))
    return pose


def _failure_slip(rng: np.random.Generator, target: Pose) -> tuple[Pose, float]:
    direction = rng.standard_normal(3)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 1e-12 else np.array([1.0, 0.0, 0.0])
    magnitude = rng.uniform(*_FAILURE_SLIP_RANGE_MM)
    return target.translated(direction * magnitude), magnitude


def execute_skill(
    skill: Skill,
    model: FailureModel,
    rng: np.random.Generator,
    finger_type: str | None = None,
    offset: PoseOffset | None = None,
) -> SkillResult:
    """Execute one skill under the model.

    The success draw happens before any noise draw, so changing noise
    parameters never flips success verdicts for a given rng stream.
    """
    probability = model.success_probability(skill.kind, finger_type, offset)
    success = rng.random() < probability
    if success:
        achieved = _success_noise(model, rng, skill.target)
        return SkillResult(kind=skill.kind, success=True, achieved_pose=achieved)
    achieved, magnitude = _failure_slip(rng, skill.target)
    return SkillResult(
        kind=skill.kind,
        success=False,
        achieved_pose=achieved,
        notes=f"failed; displaced {magnitude:.2f} mm from target",
    )


def run_sequence(
    skills: list[Skill],
    model: FailureModel,
    rng: np.random.Generator,
    finger_type: str | None = None,
    offset: PoseOffset | None = None,
) -> tuple[bool, list[SkillResult]]:
    """Execute skills in order, stopping at the first failure.

    ``offset`` represents a grasp-approach error: it is applied to every
    pick skill (each grasping approach) and ignored elsewhere.
    """
    if not skills:
        raise ValueError("skill sequence must be non-empty")
    results: list[SkillResult] = []
    for skill in skills:
        skill_offset = offset if skill.kind is SkillKind.PICK else None
        result = execute_skill(skill, model, rng, finger_type, skill_offset)
        results.append(result)
        if not result.success:
            return False, results
    return True, results


def grasp_displacement(expected: Pose, actual: Pose) -> float:
    """Euclidean distance between the two positions, in mm."""
    return float(np.linalg.norm(expected.position - actual.position))


def moved_significantly(
    displacement_mm: float, threshold_mm: float = GRASP_MOVED_THRESHOLD_MM
) -> bool:
    """Strictly greater than the threshold counts as moved."""
    return displacement_mm > threshold_mm


class RobotSimulator:
    """A robot instance owning its failure model and rng stream."""

    def __init__(
        self, model: FailureModel, rng: np.random.Generator | None = None
    ) -> None:
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(model.rng_seed)

    def execute_skill(
        self,
        skill: Skill,
        finger_type: str | None = None,
        offset: PoseOffset | None = None,
    ) -> SkillResult:
        return execute_skill(skill, self.model, self.rng, finger_type, offset)

    def run_sequence(
        self,
        skills: list[Skill],
        finger_type: str | None = None,
        offset: PoseOffset | None = None,
    ) -> tuple[bool, list[SkillResult]]:
        return run_sequence(skills, self.model, self.rng, finger_type, offset)
