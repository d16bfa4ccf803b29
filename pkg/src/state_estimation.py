"""Constant-velocity Kalman filters for 3D and 2D trajectories."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box2D, Box3D, wrap_angle
from .kitti_io import Detection2D, Detection3D


logger = logging.getLogger(__name__)

# Smallest box side a 2D filter may report, in pixels
MIN_BOX_SIDE_PX = 1.0

# 3D state layout
X, Y, Z, YAW, L, W, H, VX, VY, VZ = range(10)


@dataclass(frozen=True)
class FilterNoise3D:
    """Diagonal priors and noise levels of the 3D filter."""

    pos_var: float = 1.0
    yaw_var: float = 0.1
    dim_var: float = 0.01
    vel_var: float = 100.0
    process_noise: float = 0.01
    measurement_noise: float = 0.1

    def __post_init__(self):
        for name in ("pos_var", "yaw_var", "dim_var", "vel_var", "measurement_noise"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.process_noise < 0:
            raise ValueError("process_noise must be non-negative")


@dataclass(frozen=True)
class FilterNoise2D:
    """Diagonal priors and noise levels of the 2D filter."""

    box_var: float = 10.0
    vel_var: float = 1000.0
    process_noise: float = 1.0
    measurement_noise: float = 1.0

    def __post_init__(self):
        for name in ("box_var", "vel_var", "measurement_noise"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.process_noise < 0:
            raise ValueError("process_noise must be non-negative")


def _constant_velocity(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Transition F and observation H for ``dim`` observed plus velocity terms."""
    transition = np.eye(2 * dim)
    transition[:dim, dim:] = np.eye(dim)
    observation = np.zeros((dim, 2 * dim))
    observation[:, :dim] = np.eye(dim)
    return transition, observation


def _joseph_update(
    state: np.ndarray,
    cov: np.ndarray,
    observation: np.ndarray,
    innovation: np.ndarray,
    meas_cov: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    s = observation @ cov @ observation.T + meas_cov
    gain = np.linalg.solve(s, observation @ cov).T
    state = state + gain @ innovation
    factor = np.eye(len(state)) - gain @ observation
    cov = factor @ cov @ factor.T + gain @ meas_cov @ gain.T
    return state, 0.5 * (cov + cov.T)


@dataclass
class Filter3D:
    """Kalman filter over (x, y, z, yaw, l, w, h, vx, vy, vz), units per frame.

    The observed part is the first seven components. Dimensions get no
    process noise, so they settle to a running estimate.
    """

    state: np.ndarray
    cov: np.ndarray
    noise: FilterNoise3D = field(default_factory=FilterNoise3D)

    @classmethod
    def from_detection(cls, det: Detection3D, noise: FilterNoise3D | None = None) -> "Filter3D":
        """Start a filter at a detection with zero velocity.

        Args:
            det: Birth detection
            noise: Priors, defaults when None

        Returns:
            New filter
        """
        noise = noise or FilterNoise3D()
        state = np.array([det.x, det.y, det.z, wrap_angle(det.rot_y), det.l, det.w, det.h, 0.0, 0.0, 0.0])
        diag = [noise.pos_var] * 3 + [noise.yaw_var] + [noise.dim_var] * 3 + [noise.vel_var] * 3
        return cls(state=state, cov=np.diag(diag), noise=noise)

    @property
    def transition(self) -> np.ndarray:
        transition = np.eye(10)
        transition[X, VX] = transition[Y, VY] = transition[Z, VZ] = 1.0
        return transition

    @property
    def observation(self) -> np.ndarray:
        return np.eye(7, 10)

    @property
    def process_cov(self) -> np.ndarray:
        q = self.noise.process_noise
        return np.diag([q, q, q, q, 0.0, 0.0, 0.0, q, q, q])

    @property
    def box(self) -> Box3D:
        """Current state as a box."""
        s = self.state
        return Box3D(
            float(s[X]), float(s[Y]), float(s[Z]),
            float(s[H]), float(s[W]), float(s[L]), float(s[YAW]),
        )

    @property
    def velocity(self) -> tuple[float, float, float]:
        return (float(self.state[VX]), float(self.state[VY]), float(self.state[VZ]))

    def predict(self) -> Box3D:
        """Advance one frame under constant velocity.

        Returns:
            Predicted box
        """
        transition = self.transition
        self.state = transition @ self.state
        self.state[YAW] = wrap_angle(self.state[YAW])
        cov = transition @ self.cov @ transition.T + self.process_cov
        self.cov = 0.5 * (cov + cov.T)
        return self.box

    def orientation_innovation(self, det_yaw: float) -> float:
        """Correct the state yaw against a detection and return the yaw innovation.

        When the wrapped difference exceeds pi/2 the state heading is flipped
        by pi, so the returned innovation always lies in [-pi/2, pi/2].
        """
        innovation = wrap_angle(wrap_angle(det_yaw) - self.state[YAW])
        if abs(innovation) > 0.5 * math.pi:
            self.state[YAW] = wrap_angle(self.state[YAW] + math.pi)
            innovation = wrap_angle(wrap_angle(det_yaw) - self.state[YAW])
        return innovation

    def update(self, det: Detection3D) -> Box3D:
        """Fuse one detection into the state.

        Args:
            det: Detection matched to this filter in the current frame

        Returns:
            Posterior box
        """
        yaw_innovation = self.orientation_innovation(det.rot_y)
        measured = np.array([det.x, det.y, det.z, 0.0, det.l, det.w, det.h])
        observation = self.observation
        innovation = measured - observation @ self.state
        innovation[YAW] = yaw_innovation
        meas_cov = np.eye(7) * self.noise.measurement_noise
        self.state, self.cov = _joseph_update(self.state, self.cov, observation, innovation, meas_cov)
        self.state[YAW] = wrap_angle(self.state[YAW])
        return self.box


@dataclass
class Filter2D:
    """Kalman filter over (u, v, w, h, vu, vv, vw, vh) in pixels per frame.

    With ``snap=True`` the filter keeps no motion model: predict holds the
    last box and update copies the detection.
    """

    state: np.ndarray
    cov: np.ndarray
    noise: FilterNoise2D = field(default_factory=FilterNoise2D)
    snap: bool = False
    clamp_count: int = 0

    @classmethod
    def from_detection(cls, det: Detection2D, noise: FilterNoise2D | None = None, snap: bool = False) -> "Filter2D":
        noise = noise or FilterNoise2D()
        u, v = det.box.center
        state = np.array([u, v, det.box.width, det.box.height, 0.0, 0.0, 0.0, 0.0])
        cov = np.diag([noise.box_var] * 4 + [noise.vel_var] * 4)
        return cls(state=state, cov=cov, noise=noise, snap=snap)

    @property
    def box(self) -> Box2D:
        u, v, w, h = (float(value) for value in self.state[:4])
        return Box2D.from_center(u, v, w, h)

    def predict(self) -> Box2D:
        """Advance one frame; returns the predicted box."""
        if self.snap:
            return self.box
        transition, _ = _constant_velocity(4)
        self.state = transition @ self.state
        self._clamp_size()
        cov = transition @ self.cov @ transition.T + np.eye(8) * self.noise.process_noise
        self.cov = 0.5 * (cov + cov.T)
        return self.box

    def update(self, det: Detection2D) -> Box2D:
        """Fuse one detection; returns the posterior box."""
        u, v = det.box.center
        measured = np.array([u, v, det.box.width, det.box.height])
        if self.snap:
            self.state[:4] = measured
            return self.box
        _, observation = _constant_velocity(4)
        innovation = measured - observation @ self.state
        meas_cov = np.eye(4) * self.noise.measurement_noise
        self.state, self.cov = _joseph_update(self.state, self.cov, observation, innovation, meas_cov)
        self._clamp_size()
        return self.box

    def reset_to(self, box: Box2D) -> None:
        """Overwrite the observed box while keeping velocity and covariance."""
        u, v = box.center
        self.state[:4] = [u, v, box.width, box.height]
        self._clamp_size()

    def _clamp_size(self) -> None:
        for index in (2, 3):
            if self.state[index] < MIN_BOX_SIDE_PX:
                self.state[index] = MIN_BOX_SIDE_PX
                self.clamp_count += 1
                logger.debug(f"2D filter size component {index} clamped to {MIN_BOX_SIDE_PX} px")
