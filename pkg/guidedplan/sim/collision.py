"""
Oriented-box collisions

Boxes overlap unless one of the four edge normals separates their
projections (touching counts as overlap). A contact is the ego's fault
when the ego moves toward the other box or the other box stands still.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from guidedplan.scene.geometry import box_corners, rotate_vectors, wrap_to_pi


@dataclass(frozen=True)
class BoxState:
    """ Footprint and velocity of one road user at one tick """

    id: str
    x: float
    y: float
    heading: float
    length: float
    width: float
    vx: float = 0.0
    vy: float = 0.0

    @classmethod
    def from_state(cls, box_id: str, state: np.ndarray, length: float,
                   width: float) -> 'BoxState':
        return cls(box_id, float(state[0]), float(state[1]), float(state[2]),
                   length, width, float(state[3]), float(state[4]))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.hypot(self.length, self.width))

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.heading, self.length,
                           self.width)

    def moved(self, dt: float) -> 'BoxState':
        """ Constant-velocity position after <dt> seconds """

        return BoxState(self.id, self.x + self.vx * dt, self.y + self.vy * dt,
                        self.heading, self.length, self.width, self.vx,
                        self.vy)


@dataclass(frozen=True)
class CollisionEvent:
    """
    Attributes:
        tick (int): tick of first contact
        agent_id (str): the other party
        at_fault (bool): ego-caused by the at-fault rule
        distance (float): center distance at contact
        bearing (float): direction of the other center in the ego frame
        ego_speed (float): ego speed at contact
        agent_speed (float): other party's speed at contact
    """

    tick: int
    agent_id: str
    at_fault: bool
    distance: float
    bearing: float
    ego_speed: float
    agent_speed: float


def _normals(corners: np.ndarray) -> np.ndarray:
    edges = np.roll(corners, -1, axis=0)[:2] - corners[:2]
    return np.stack([-edges[:, 1], edges[:, 0]], axis=1)


def boxes_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """ Separating-axis test of two rectangles given by their corners [4, 2] """

    for _axis in np.concatenate([_normals(a), _normals(b)]):
        pa, pb = a @ _axis, b @ _axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def is_at_fault(ego: BoxState, other: BoxState,
                stopped_speed: float = 0.05) -> bool:
    toward = float(np.dot(ego.velocity, other.center - ego.center)) > 0.0
    return toward or other.speed < stopped_speed


def in_contact(ego: BoxState, other: BoxState) -> bool:
    if np.linalg.norm(other.center - ego.center) > \
            ego.half_diagonal + other.half_diagonal:
        return False
    return boxes_overlap(ego.corners(), other.corners())


def collision_check(tick: int,
                    ego: BoxState,
                    others: Iterable[BoxState],
                    stopped_speed: float = 0.05) -> List[CollisionEvent]:
    """ Every box of <others> overlapping the ego at <tick> """

    events = []
    for _o in others:
        if not in_contact(ego, _o):
            continue
        rel = rotate_vectors(_o.center - ego.center, -ego.heading)
        events.append(
            CollisionEvent(tick=tick,
                           agent_id=_o.id,
                           at_fault=is_at_fault(ego, _o, stopped_speed),
                           distance=float(np.linalg.norm(rel)),
                           bearing=float(wrap_to_pi(np.arctan2(rel[1], rel[0]))),
                           ego_speed=ego.speed,
                           agent_speed=_o.speed))
    return events
