"""
Geometry primitives for the channel simulator.

Holds the 3D vector type, antenna array layouts, the GCS to LCS rotation and the
polarized antenna field patterns used by the LOS and NLOS gain terms.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
DIPOLE_PEAK_GAIN = math.sqrt(1.64)
DEFAULT_ROTATION = math.pi / 15

# Below this |sin(elevation)| the dipole gain takes its limit value 0
_DIPOLE_SINGULAR = 1e-9


class GeometryError(ValueError):
    """Raised when a direction is undefined because two points coincide."""


@dataclass(frozen=True)
class Vector3:
    """A position, distance or velocity in the global coordinate system."""

    x: float
    y: float
    z: float

    @classmethod
    def zero(cls) -> "Vector3":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Vector3":
        arr = np.asarray(values, dtype=float).reshape(3)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dot(self, other: "Vector3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def __add__(self, other: "Vector3") -> "Vector3":
        return Vector3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vector3") -> "Vector3":
        return Vector3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, scalar: float) -> "Vector3":
        return Vector3(self.x * scalar, self.y * scalar, self.z * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Vector3":
        return Vector3(-self.x, -self.y, -self.z)


Y_AXIS = Vector3(0.0, 1.0, 0.0)


class PatternKind(str, Enum):
    """Closed-form element patterns. Tabulated patterns use PatternTable."""

    OMNIDIRECTIONAL = "omnidirectional"
    HALF_WAVE_DIPOLE = "half_wave_dipole"


@dataclass
class PatternTable:
    """
    Tabulated gain over the local (theta, phi) grid, bilinearly interpolated.

    Points outside the tabulated range are extrapolated from the nearest cells.
    """

    theta: np.ndarray
    phi: np.ndarray
    gain: np.ndarray
    _interpolator: RegularGridInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.gain = np.asarray(self.gain, dtype=float)
        if self.gain.shape != (self.theta.size, self.phi.size):
            raise ValueError(
                f"Gain table shape {self.gain.shape} does not match grid "
                f"({self.theta.size}, {self.phi.size})"
            )
        if self.theta.size < 2 or self.phi.size < 2:
            raise ValueError("Pattern table needs at least two points per axis")
        self._interpolator = RegularGridInterpolator(
            (self.theta, self.phi), self.gain, method="linear", bounds_error=False, fill_value=None
        )

    def gain_at(self, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
        points = np.stack([np.ravel(theta), np.ravel(phi)], axis=-1)
        return self._interpolator(points).reshape(np.shape(theta))


ElementPattern = Union[PatternKind, PatternTable]


def load_pattern_table(path: Union[str, Path]) -> PatternTable:
    """
    Load a custom pattern from a columnar text file.

    Each row holds ``theta_tilde_rad phi_tilde_rad gain``; lines starting with ``#``
    are comments. The rows must cover a full rectangular grid.
    """
    rows = np.loadtxt(path, comments="#", ndmin=2)
    if rows.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns, found {rows.shape[1]}")

    theta = np.unique(rows[:, 0])
    phi = np.unique(rows[:, 1])
    if rows.shape[0] != theta.size * phi.size:
        raise ValueError(
            f"{path}: {rows.shape[0]} rows do not form a {theta.size}x{phi.size} grid"
        )

    gain = np.full((theta.size, phi.size), np.nan)
    gain[np.searchsorted(theta, rows[:, 0]), np.searchsorted(phi, rows[:, 1])] = rows[:, 2]
    if np.isnan(gain).any():
        raise ValueError(f"{path}: duplicate grid points leave holes in the table")

    logger.debug(f"Loaded {theta.size}x{phi.size} pattern table from {path}")
    return PatternTable(theta=theta, phi=phi, gain=gain)


@dataclass(frozen=True)
class PolarizedField:
    f_vertical: float
    f_horizontal: float


def rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """
    Rotation from the global to the local coordinate system.

    A rotation of alpha about x, then beta about the new y, then gamma about the
    new z, i.e. R = Rz(gamma) @ Ry(beta) @ Rx(alpha).
    """
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)

    rz = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    return rz @ ry @ rx


def local_angles(directions: np.ndarray, rot: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized LCS azimuth/elevation of ``directions`` (shape (..., 3)).

    Raises:
        GeometryError: If any direction has zero length
    """
    directions = np.asarray(directions, dtype=float)
    if np.any(np.all(directions == 0.0, axis=-1)):
        raise GeometryError("Direction between coincident points is undefined")

    local = directions @ rot.T
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    theta = np.arctan2(y, x)
    phi = np.arctan2(z, np.hypot(x, y))
    return theta, phi


def to_local_angles(a: Vector3, b: Vector3, rot: np.ndarray) -> Tuple[float, float]:
    """Azimuth and elevation of a - b seen in the local coordinate system."""
    theta, phi = local_angles((a - b).to_array(), rot)
    return float(theta), float(phi)


def pattern_gain(pattern: ElementPattern, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Element gain G(theta, phi) for any supported pattern."""
    if isinstance(pattern, PatternTable):
        return pattern.gain_at(theta, phi)
    if pattern == PatternKind.OMNIDIRECTIONAL:
        return np.ones(np.shape(theta))
    if pattern == PatternKind.HALF_WAVE_DIPOLE:
        sin_phi = np.sin(phi)
        singular = np.abs(sin_phi) < _DIPOLE_SINGULAR
        safe = np.where(singular, 1.0, sin_phi)
        gain = DIPOLE_PEAK_GAIN * np.cos(0.5 * np.pi * np.cos(phi)) / safe
        return np.where(singular, 0.0, gain)
    raise ValueError(f"Unsupported element pattern: {pattern!r}")


def field_components(
    pattern: ElementPattern, directions: np.ndarray, rot: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vertical and horizontal field components for a batch of directions.

    Returns:
        (f_vertical, f_horizontal), each with the leading shape of ``directions``
    """
    theta, phi = local_angles(directions, rot)
    gain = pattern_gain(pattern, theta, phi)
    return gain * np.sin(theta), gain * np.cos(theta)


def field_pattern(
    pattern: ElementPattern, a: Vector3, b: Vector3, rot: np.ndarray
) -> PolarizedField:
    """
    Polarized field of an element at ``b`` towards the point ``a``.

    Args:
        pattern: Element pattern
        a: Point the field is evaluated towards
        b: Element position
        rot: GCS to LCS rotation of the element's array

    Returns:
        PolarizedField with F_V = G sin(theta) and F_H = G cos(theta)
    """
    f_v, f_h = field_components(pattern, (a - b).to_array(), rot)
    return PolarizedField(f_vertical=float(f_v), f_horizontal=float(f_h))


@dataclass
class AntennaArray:
    """
    An antenna array moving rigidly with constant velocity.

    Element positions are offsets from the array center; ``center`` is the initial
    center in global coordinates.
    """

    element_positions: List[Vector3]
    center: Vector3 = field(default_factory=Vector3.zero)
    broadside_azimuth: float = 0.0
    broadside_elevation: float = 0.0
    rotation_angles: Tuple[float, float, float] = (
        DEFAULT_ROTATION,
        DEFAULT_ROTATION,
        DEFAULT_ROTATION,
    )
    velocity: Vector3 = field(default_factory=Vector3.zero)
    element_pattern: ElementPattern = PatternKind.OMNIDIRECTIONAL

    def __post_init__(self):
        if not self.element_positions:
            raise ValueError("An antenna array needs at least one element")
        self._offsets = np.array([p.to_array() for p in self.element_positions])
        self._center = self.center.to_array()
        self._velocity = self.velocity.to_array()
        self.rotation = rotation_matrix(*self.rotation_angles)

    @property
    def num_elements(self) -> int:
        return len(self.element_positions)

    def center_at(self, t: float) -> np.ndarray:
        return self._center + self._velocity * t

    def positions_at(self, t: float) -> np.ndarray:
        """Global positions of all elements at time t, shape (M, 3)."""
        return self._center + self._offsets + self._velocity * t

    def velocity_array(self) -> np.ndarray:
        return self._velocity.copy()


def element_position(array: AntennaArray, index: int, t: float) -> Vector3:
    """
    Global position of one element at time t.

    Raises:
        IndexError: If index is not a valid element index
        ValueError: If t is negative
    """
    if not 0 <= index < array.num_elements:
        raise IndexError(f"Element index {index} out of range for {array.num_elements} elements")
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}")
    return array.center + array.element_positions[index] + array.velocity * t


def linear_layout(num_elements: int, spacing: float, axis: Vector3 = Y_AXIS) -> List[Vector3]:
    """Uniform linear array centered on the origin along ``axis``."""
    if num_elements < 1:
        raise ValueError("Layout needs at least one element")
    unit = axis * (1.0 / axis.norm())
    start = -(num_elements - 1) / 2.0
    return [unit * ((start + k) * spacing) for k in range(num_elements)]


def planar_layout(rows: int, cols: int, spacing: float) -> List[Vector3]:
    """Uniform rectangular array in the y-z plane, row-major."""
    if rows < 1 or cols < 1:
        raise ValueError("Layout needs at least one element")
    y0 = -(cols - 1) / 2.0
    z0 = -(rows - 1) / 2.0
    return [
        Vector3(0.0, (y0 + c) * spacing, (z0 + r) * spacing)
        for r in range(rows)
        for c in range(cols)
    ]


def cube_layout(side: int, spacing: float) -> List[Vector3]:
    """Uniform cubic array with ``side`` elements per edge."""
    if side < 1:
        raise ValueError("Layout needs at least one element")
    o = -(side - 1) / 2.0
    return [
        Vector3((o + i) * spacing, (o + j) * spacing, (o + k) * spacing)
        for i in range(side)
        for j in range(side)
        for k in range(side)
    ]


def spherical_direction(azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Unit vectors for the given azimuth/elevation arrays, shape (..., 3)."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


def wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


def optional_pattern(name: Optional[str]) -> ElementPattern:
    """Resolve a pattern name or table path from configuration."""
    if name is None:
        return PatternKind.OMNIDIRECTIONAL
    try:
        return PatternKind(name)
    except ValueError:
        return load_pattern_table(name)
