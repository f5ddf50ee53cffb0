"""Frames, Euler-angle rotations, RIS element lattices and local spherical
coordinates.

Conventions
-----------
* ``Q(gamma) = Qz(psi_z) @ Qy(psi_y) @ Qx(psi_x)``, each factor a
  counterclockwise rotation about its own axis.
* The RIS local frame is obtained from the global one by ``Q``; a global
  vector ``v`` has local coordinates ``Q.T @ v``. At ``gamma = 0`` both frames
  coincide and the RIS normal is the global +z axis.
* Spherical directions use elevation ``phi`` from local +z and azimuth
  ``theta`` from local +x. ``theta`` is pinned to 0 when ``phi`` is 0 or pi.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C = 299_792_458.0


class GeometryError(ValueError):
    """Raised for degenerate geometry (coincident points, zero-length vectors)."""


@dataclass(frozen=True)
class EulerAngles:
    """Roll, pitch and yaw in radians. Stored as given, never wrapped."""

    psi_x: float = 0.0
    psi_y: float = 0.0
    psi_z: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError(f"Euler angles must be finite, got {self.as_array()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_x, self.psi_y, self.psi_z], dtype=float)

    @classmethod
    def from_array(cls, values) -> "EulerAngles":
        vx, vy, vz = (float(v) for v in values)
        return cls(vx, vy, vz)


@dataclass(frozen=True)
class Pose:
    """RIS position (global frame, meters) and orientation."""

    position: np.ndarray
    orientation: EulerAngles = field(default_factory=EulerAngles)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"pose position must be finite, got {pos}")
        object.__setattr__(self, "position", pos)

    def as_vector(self) -> np.ndarray:
        """The six estimands ``[x, y, z, psi_x, psi_y, psi_z]``."""
        return np.concatenate([self.position, self.orientation.as_array()])

    @classmethod
    def from_vector(cls, theta) -> "Pose":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:3], EulerAngles.from_array(theta[3:6]))


@dataclass(frozen=True)
class RisLattice:
    """Regular ``N x M`` planar lattice with spacing ``d`` in the local xy-plane.

    Element ``(n, m)`` sits at ``[n d, m d, 0]`` for ``n = -N/2 .. N/2-1`` and
    ``m = -M/2 .. M/2-1``. Flattened arrays are row-major in ``(n, m)``.
    """

    n_count: int
    m_count: int
    spacing: float
    gamma_elem: float

    def __post_init__(self):
        for name in ("n_count", "m_count"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
            if value % 2:
                raise ValueError(f"{name} must be even, got {value}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not self.gamma_elem > 0:
            raise ValueError(f"gamma_elem must be positive, got {self.gamma_elem}")

    @property
    def size(self) -> int:
        return self.n_count * self.m_count

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``(n, m)`` index arrays, each of length ``N*M``."""
        n = np.arange(-self.n_count // 2, self.n_count // 2)
        m = np.arange(-self.m_count // 2, self.m_count // 2)
        nn, mm = np.meshgrid(n, m, indexing="ij")
        return nn.ravel(), mm.ravel()

    def local_positions(self) -> np.ndarray:
        """``(N*M, 3)`` array of ``p_nm``."""
        n, m = self.indices()
        p = np.zeros((self.size, 3))
        p[:, 0] = n * self.spacing
        p[:, 1] = m * self.spacing
        return p


@dataclass(frozen=True)
class TerminalGeometry:
    """Tx/Rx antenna positions and the list of measurement channels.

    ``channels`` holds ``(tx_index, rx_index)`` pairs; channel ``l`` uses
    antennas ``tx_positions[channels[l][0]]`` and ``rx_positions[channels[l][1]]``.
    """

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    channels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        tx = np.atleast_2d(np.asarray(self.tx_positions, dtype=float))
        rx = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        if tx.shape[1] != 3 or rx.shape[1] != 3:
            raise ValueError("antenna positions must be 3-vectors")
        chans = tuple((int(t), int(r)) for t, r in self.channels)
        if not chans:
            raise ValueError("at least one measurement channel is required")
        for t, r in chans:
            if not (0 <= t < len(tx) and 0 <= r < len(rx)):
                raise ValueError(f"channel ({t}, {r}) references a missing antenna")
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "channels", chans)

    @classmethod
    def all_pairs(cls, tx_positions, rx_positions) -> "TerminalGeometry":
        """One channel per Tx-Rx antenna pair, Tx-major."""
        tx = np.atleast_2d(np.asarray(tx_positions, dtype=float))
        rx = np.atleast_2d(np.asarray(rx_positions, dtype=float))
        chans = tuple((t, r) for t in range(len(tx)) for r in range(len(rx)))
        return cls(tx, rx, chans)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def tx_phase_center(self) -> np.ndarray:
        return self.tx_positions.mean(axis=0)

    @property
    def rx_phase_center(self) -> np.ndarray:
        return self.rx_positions.mean(axis=0)

    def channel_tx(self) -> np.ndarray:
        """``(L, 3)`` Tx antenna position of every channel."""
        return self.tx_positions[[t for t, _ in self.channels]]

    def channel_rx(self) -> np.ndarray:
        """``(L, 3)`` Rx antenna position of every channel."""
        return self.rx_positions[[r for _, r in self.channels]]

    def translated(self, offset) -> "TerminalGeometry":
        offset = np.asarray(offset, dtype=float)
        return TerminalGeometry(self.tx_positions + offset, self.rx_positions + offset,
                                self.channels)


@dataclass(frozen=True)
class SphericalDirection:
    phi: float
    theta: float


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_matrix(gamma: EulerAngles) -> np.ndarray:
    """Return ``Q = Qz(psi_z) Qy(psi_y) Qx(psi_x)``."""
    return _rot_z(gamma.psi_z) @ _rot_y(gamma.psi_y) @ _rot_x(gamma.psi_x)


def rotation_jacobian(gamma: EulerAngles) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives ``(dQ/dpsi_x, dQ/dpsi_y, dQ/dpsi_z)``."""
    qx, qy, qz = _rot_x(gamma.psi_x), _rot_y(gamma.psi_y), _rot_z(gamma.psi_z)
    return (
        qz @ qy @ _drot_x(gamma.psi_x),
        qz @ _drot_y(gamma.psi_y) @ qx,
        _drot_z(gamma.psi_z) @ qy @ qx,
    )


def element_positions(pose: Pose, lattice: RisLattice) -> np.ndarray:
    """Global ``(N*M, 3)`` positions ``x + Q p_nm``."""
    q = rotation_matrix(pose.orientation)
    return pose.position + lattice.local_positions() @ q.T


def direction_to_local(gamma: EulerAngles, vector) -> SphericalDirection:
    """Local spherical direction of a global-frame vector."""
    v = rotation_matrix(gamma).T @ np.asarray(vector, dtype=float)
    return cartesian_to_spherical(v)


def cartesian_to_spherical(v) -> SphericalDirection:
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if not r > 0:
        raise GeometryError("direction of a zero-length vector is undefined")
    phi = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    if v[0] == 0.0 and v[1] == 0.0:
        theta = 0.0
    else:
        theta = float(np.arctan2(v[1], v[0]))
    return SphericalDirection(phi, theta)


def to_local_spherical(pose: Pose, point) -> SphericalDirection:
    """Direction of ``point`` as seen from the RIS, in RIS-local coordinates."""
    return direction_to_local(pose.orientation, np.asarray(point, dtype=float) - pose.position)


def unit_vector(direction: SphericalDirection) -> np.ndarray:
    sp = np.sin(direction.phi)
    return np.array([sp * np.cos(direction.theta), sp * np.sin(direction.theta),
                     np.cos(direction.phi)])
