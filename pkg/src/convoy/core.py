"""Core state types, scenario configuration, and standing-assumption validation.

Vectors are plain 1-D float64 numpy arrays of dimension n >= 2 (n in {2, 3}
exercised everywhere). All distances are meters, speeds m/s, angles radians,
times seconds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

Vec = np.ndarray

ACTIVE = "active"
BROKEN = "broken"

# Norms below this are treated as singular (gradients undefined).
EPS_SING = 1e-9


class ScenarioError(ValueError):
    """A scenario violates one of the standing assumptions."""


def as_vec(values: Iterable[float], n: Optional[int] = None) -> Vec:
    """Coerce to a finite 1-D float64 vector, optionally checking dimension."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector has non-finite components: {v}")
    if n is not None and v.size != n:
        raise ValueError(f"expected dimension {n}, got {v.size}")
    return v


def inf_norm(v: Iterable[float]) -> float:
    """Componentwise maximum magnitude (the norm bounding robot inputs)."""
    return float(np.max(np.abs(np.asarray(v, dtype=float))))


@dataclass
class RobotState:
    """One robot: integer id >= 1, position, optional heading, liveness status.

    Broken robots hold position and never produce control inputs.
    """

    id: int
    position: Vec
    heading: Optional[float] = None
    status: str = ACTIVE

    def __post_init__(self) -> None:
        self.id = int(self.id)
        if self.id < 1:
            raise ValueError(f"robot id must be >= 1, got {self.id}")
        self.position = as_vec(self.position)
        if self.status not in (ACTIVE, BROKEN):
            raise ValueError(f"unknown robot status {self.status!r}")

    @property
    def is_active(self) -> bool:
        return self.status == ACTIVE

    def copy(self) -> "RobotState":
        # Fields were validated on construction; skip re-validation in the
        # simulation hot path.
        dup = object.__new__(RobotState)
        dup.id = self.id
        dup.position = self.position.copy()
        dup.heading = self.heading
        dup.status = self.status
        return dup


@dataclass
class TargetState:
    """Moving target: position and true velocity."""

    position: Vec
    velocity: Vec

    def __post_init__(self) -> None:
        self.position = as_vec(self.position)
        self.velocity = as_vec(self.velocity, n=self.position.size)

    def copy(self) -> "TargetState":
        return TargetState(self.position.copy(), self.velocity.copy())


@dataclass
class Obstacle:
    """Static ball obstacle with center and strictly positive radius."""

    center: Vec
    radius: float

    def __post_init__(self) -> None:
        self.center = as_vec(self.center)
        self.radius = float(self.radius)
        if not self.radius > 0.0:
            raise ValueError(f"obstacle radius must be > 0, got {self.radius}")


@dataclass
class TargetMotionSpec:
    """Target motion: constant velocity, or a tangential orbit about a center.

    Circular motion commands speed 2*omega tangentially (anticlockwise in the
    xy-plane), so the target stays on the circle through its start point.
    """

    kind: str
    velocity: Optional[Vec] = None
    center: Optional[Vec] = None
    omega: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.velocity is None:
                raise ValueError("constant motion requires a velocity")
            self.velocity = as_vec(self.velocity)
        elif self.kind == "circular":
            if self.center is None:
                raise ValueError("circular motion requires a center")
            self.center = as_vec(self.center)
            self.omega = float(self.omega)
        else:
            raise ValueError(f"unknown target motion kind {self.kind!r}")

    @classmethod
    def constant(cls, velocity: Iterable[float]) -> "TargetMotionSpec":
        return cls(kind="constant", velocity=as_vec(velocity))

    @classmethod
    def circular(cls, center: Iterable[float], omega: float) -> "TargetMotionSpec":
        return cls(kind="circular", center=as_vec(center), omega=float(omega))

    def speed_bound(self) -> float:
        """Largest possible inf-norm of the commanded target velocity."""
        if self.kind == "constant":
            return inf_norm(self.velocity)
        return 2.0 * abs(self.omega)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "velocity": list(map(float, self.velocity))}
        return {
            "kind": "circular",
            "center": list(map(float, self.center)),
            "omega": float(self.omega),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TargetMotionSpec":
        keys = set(data)
        if data.get("kind") == "constant":
            _reject_unknown(keys, {"kind", "velocity"}, "target_motion")
            return cls.constant(data["velocity"])
        if data.get("kind") == "circular":
            _reject_unknown(keys, {"kind", "center", "omega"}, "target_motion")
            return cls.circular(data["center"], data["omega"])
        raise ValueError(f"unknown target motion kind {data.get('kind')!r}")


@dataclass
class EventSpec:
    """A scheduled event; currently only robot breakdowns."""

    time: float
    kind: str = "breakdown"
    robot_ids: tuple = ()

    def __post_init__(self) -> None:
        self.time = float(self.time)
        if self.kind != "breakdown":
            raise ValueError(f"unknown event kind {self.kind!r}")
        self.robot_ids = tuple(int(i) for i in self.robot_ids)

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "robot_ids": list(self.robot_ids)}

    @classmethod
    def from_dict(cls, data: dict) -> "EventSpec":
        _reject_unknown(set(data), {"time", "kind", "robot_ids"}, "event")
        return cls(
            time=data["time"],
            kind=data.get("kind", "breakdown"),
            robot_ids=tuple(data.get("robot_ids", ())),
        )


_REQUIRED_KEYS = {
    "n", "robots", "target_start", "target_motion",
    "r", "R", "zeta", "eta1", "eta2", "dt", "duration",
}
_OPTIONAL_KEYS = {
    "name", "weight", "chi1", "chi2", "oracle_velocity", "obstacles",
    "events", "unicycle", "nid_ell", "delta0", "seed",
}


def _reject_unknown(keys: set, allowed: set, where: str) -> None:
    unknown = keys - allowed
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class ScenarioConfig:
    """Complete description of one convoying scenario.

    Field names double as the JSON schema keys; unknown keys are rejected so
    that a stored file reproduces a run exactly.
    """

    n: int
    robots: list  # list[RobotState] initial states
    target_start: Vec
    target_motion: TargetMotionSpec
    r: float  # collision radius (m)
    R: float  # sensing radius (m)
    zeta: float  # input limit (m/s), inf-norm
    eta1: float  # attraction gain
    eta2: float  # repulsion gain / sensing margin
    dt: float
    duration: float
    name: str = ""
    weight: float = 10.0  # QP slack cost weight, > 1
    chi1: float = 2.0
    chi2: float = 1.0
    oracle_velocity: bool = False  # feed true target velocity, bypassing the estimator
    obstacles: list = field(default_factory=list)
    events: list = field(default_factory=list)
    unicycle: bool = False  # n=2 only: drive robots through the unicycle adapter
    nid_ell: float = 0.2
    delta0: float = 100.0  # initial slack warm start for the first solve
    seed: int = 0

    def __post_init__(self) -> None:
        self.n = int(self.n)
        self.target_start = as_vec(self.target_start, n=self.n)
        for attr in ("r", "R", "zeta", "eta1", "eta2", "dt", "duration",
                     "weight", "chi1", "chi2", "nid_ell", "delta0"):
            setattr(self, attr, float(getattr(self, attr)))
        self.seed = int(self.seed)
        self.oracle_velocity = bool(self.oracle_velocity)
        self.unicycle = bool(self.unicycle)

    def to_dict(self) -> dict:
        robots = []
        for s in self.robots:
            entry: dict = {"id": s.id, "position": list(map(float, s.position))}
            if s.heading is not None:
                entry["heading"] = float(s.heading)
            if s.status != ACTIVE:
                entry["status"] = s.status
            robots.append(entry)
        return {
            "name": self.name,
            "n": self.n,
            "robots": robots,
            "target_start": list(map(float, self.target_start)),
            "target_motion": self.target_motion.to_dict(),
            "r": self.r,
            "R": self.R,
            "zeta": self.zeta,
            "eta1": self.eta1,
            "eta2": self.eta2,
            "weight": self.weight,
            "dt": self.dt,
            "duration": self.duration,
            "chi1": self.chi1,
            "chi2": self.chi2,
            "oracle_velocity": self.oracle_velocity,
            "obstacles": [
                {"center": list(map(float, o.center)), "radius": o.radius}
                for o in self.obstacles
            ],
            "events": [e.to_dict() for e in self.events],
            "unicycle": self.unicycle,
            "nid_ell": self.nid_ell,
            "delta0": self.delta0,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        _reject_unknown(set(data), _REQUIRED_KEYS | _OPTIONAL_KEYS, "scenario")
        missing = _REQUIRED_KEYS - set(data)
        if missing:
            raise ValueError(f"missing scenario keys: {sorted(missing)}")
        robots = []
        for entry in data["robots"]:
            _reject_unknown(set(entry), {"id", "position", "heading", "status"}, "robot")
            robots.append(RobotState(
                id=entry["id"],
                position=entry["position"],
                heading=entry.get("heading"),
                status=entry.get("status", ACTIVE),
            ))
        obstacles = []
        for entry in data.get("obstacles", ()):
            _reject_unknown(set(entry), {"center", "radius"}, "obstacle")
            obstacles.append(Obstacle(center=entry["center"], radius=entry["radius"]))
        events = [EventSpec.from_dict(e) for e in data.get("events", ())]
        kwargs = {k: data[k] for k in data
                  if k not in ("robots", "obstacles", "events", "target_motion")}
        return cls(
            robots=robots,
            obstacles=obstacles,
            events=events,
            target_motion=TargetMotionSpec.from_dict(data["target_motion"]),
            **kwargs,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name}: {c.detail}" if c.detail else f"[{mark}] {c.name}")
        return "\n".join(lines)


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """Check every standing assumption; report each with the offending values."""
    checks = []

    def add(name: str, passed: bool, detail: str = "") -> None:
        checks.append(ValidationCheck(name, bool(passed), detail))

    add("dimension", cfg.n >= 2, f"n={cfg.n}")
    add("positive_gains",
        cfg.r > 0 and cfg.zeta > 0 and cfg.eta1 > 0 and cfg.eta2 > 0
        and cfg.dt > 0 and cfg.duration >= 0,
        f"r={cfg.r}, zeta={cfg.zeta}, eta1={cfg.eta1}, eta2={cfg.eta2}, dt={cfg.dt}")
    add("weight_gt_one", cfg.weight > 1.0, f"weight={cfg.weight}")
    add("sensing_margin", cfg.R >= cfg.r + cfg.eta2,
        f"R={cfg.R} vs r+eta2={cfg.r + cfg.eta2}")
    add("estimator_gains", cfg.chi1 > 0 and cfg.chi2 > 0,
        f"chi1={cfg.chi1}, chi2={cfg.chi2}")

    ids = [s.id for s in cfg.robots]
    add("unique_ids", len(ids) == len(set(ids)), f"ids={ids}")

    dims_ok = all(s.position.size == cfg.n for s in cfg.robots)
    add("robot_dimensions", dims_ok, f"n={cfg.n}")

    min_pair = math.inf
    worst_pair = ""
    for a_idx in range(len(cfg.robots)):
        for b_idx in range(a_idx + 1, len(cfg.robots)):
            a, b = cfg.robots[a_idx], cfg.robots[b_idx]
            d = float(np.linalg.norm(a.position - b.position))
            if d < min_pair:
                min_pair = d
                worst_pair = f"robots ({a.id},{b.id}) at distance {d:.6g}"
    add("initial_separation", min_pair >= cfg.r or not cfg.robots,
        worst_pair or "no robot pairs")

    min_target = math.inf
    for s in cfg.robots:
        min_target = min(min_target, float(np.linalg.norm(s.position - cfg.target_start)))
    add("initial_target_distance", min_target > 0 or not cfg.robots,
        f"min robot-target distance {min_target:.6g}")

    bound = cfg.target_motion.speed_bound()
    add("target_speed_limit", bound < cfg.zeta,
        f"target speed bound {bound:.6g} vs zeta={cfg.zeta}")

    clear_ok = True
    detail = "no obstacles"
    for o in cfg.obstacles:
        for s in cfg.robots:
            c = float(np.linalg.norm(s.position - o.center)) - o.radius
            if c <= 0:
                clear_ok = False
                detail = f"robot {s.id} starts inside obstacle (clearance {c:.6g})"
    if cfg.obstacles and clear_ok:
        detail = "all robots start outside every obstacle"
    add("initial_obstacle_clearance", clear_ok, detail)

    events_ok = all(0.0 <= e.time <= cfg.duration and
                    set(e.robot_ids) <= set(ids) for e in cfg.events)
    add("events_in_range", events_ok, f"{len(cfg.events)} events")

    add("unicycle_dimension", (not cfg.unicycle) or cfg.n == 2,
        f"unicycle={cfg.unicycle}, n={cfg.n}")
    if cfg.unicycle:
        add("nid_ell_positive", cfg.nid_ell > 0, f"nid_ell={cfg.nid_ell}")

    return ValidationReport(checks)
