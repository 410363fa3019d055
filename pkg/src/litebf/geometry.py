"""Array geometry, angle conventions and steering/alignment vectors.

Angles
------
``theta_b`` is the pair-local broadside angle in degrees, zero on the
normal of the pair axis.  ``azimuth`` is the global angle, counterclockwise
from +x, of the direction *towards* the source.  For a pair ``(a, b)`` with
axis angle ``phi`` (from mic ``a`` to mic ``b``)::

    azimuth = phi + 90 + theta_b        (front half-plane)
    azimuth = phi - 90 - theta_b        (mirror across the pair axis)

With this convention a plane wave from ``theta_b`` reaches mic ``b`` later
than mic ``a`` by ``d*sin(theta_b)/c``, so ``X_b = X_a * exp(-1j*dphi)``
with ``dphi`` from :func:`phase_difference`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOUND_SPEED = 343.0
DEFAULT_SPACING = 0.085


class DegeneratePairError(ValueError):
    pass


def wrap_deg(angle):
    """Wrap to [0, 360)."""
    out = np.mod(angle, 360.0)
    # np.mod(-1e-17, 360) rounds to 360.0
    out = np.where(out >= 360.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def angle_diff_deg(a, b):
    """Signed smallest difference ``a - b`` in (-180, 180]."""
    d = np.mod(np.asarray(a, dtype=float) - b + 180.0, 360.0) - 180.0
    d = np.where(d == -180.0, 180.0, d)
    return float(d) if np.ndim(d) == 0 else d


def wrap_phase(x):
    """Wrap radians to (-pi, pi]."""
    y = np.angle(np.exp(1j * np.asarray(x)))
    return np.where(y == -np.pi, np.pi, y)


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray
    kind: str = "dual"
    pairs: tuple[tuple[int, int], ...] = ((0, 1),)
    sound_speed: float = SOUND_SPEED
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("mic_positions must have shape (n_mics, 2)")
        object.__setattr__(self, "mic_positions", pos)
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i + 1) for i in range(len(pos))))
        if len(self.labels) != len(pos):
            raise ValueError("one label per microphone")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")
        n = len(pos)
        for a, b in self.pairs:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ValueError(f"invalid pair ({a}, {b})")
        if self.kind == "dual":
            if n != 2:
                raise ValueError("dual array needs exactly 2 microphones")
        elif self.kind == "circular":
            if n % 2 or n < 4:
                raise ValueError("circular array needs an even number (>= 4) of microphones")
            center = self.center
            for a, b in self.pairs:
                mid = 0.5 * (pos[a] + pos[b])
                if np.linalg.norm(mid - center) > 1e-9:
                    raise ValueError(f"pair ({a}, {b}) is not diametral")
        else:
            raise ValueError(f"unknown array kind {self.kind!r}")

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def center(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)

    def spacing(self, pair_index: int = 0) -> float:
        a, b = self.pairs[pair_index]
        return float(np.linalg.norm(self.mic_positions[b] - self.mic_positions[a]))

    def pair_labels(self, pair_index: int) -> tuple[str, str]:
        a, b = self.pairs[pair_index]
        return self.labels[a], self.labels[b]

    def rotated(self, degrees: float) -> "ArrayGeometry":
        """Rotate all microphones about the array center."""
        r = np.deg2rad(degrees)
        rot = np.array([[np.cos(r), -np.sin(r)], [np.sin(r), np.cos(r)]])
        c = self.center
        pos = (self.mic_positions - c) @ rot.T + c
        return ArrayGeometry(pos, self.kind, self.pairs, self.sound_speed, self.labels)

    def sub_pair(self, pair_index: int) -> "ArrayGeometry":
        """Dual geometry made of one pair's two microphones."""
        a, b = self.pairs[pair_index]
        return ArrayGeometry(
            self.mic_positions[[a, b]], "dual", ((0, 1),), self.sound_speed,
            (self.labels[a], self.labels[b]),
        )


def make_dual(spacing: float = DEFAULT_SPACING, sound_speed: float = SOUND_SPEED) -> ArrayGeometry:
    """Two microphones on the x-axis centred at the origin (broadside = 90 deg)."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pos = [(-spacing / 2, 0.0), (spacing / 2, 0.0)]
    return ArrayGeometry(pos, "dual", ((0, 1),), sound_speed)


def make_circular(n_mics: int = 6, diameter: float = DEFAULT_SPACING,
                  sound_speed: float = SOUND_SPEED, numbering: str = "sequential") -> ArrayGeometry:
    """Uniform circular array with diametral pairs.

    ``numbering="sequential"``: mic ``i`` at ``360*i/n`` degrees, pairs
    ``(i, i + n/2)``; labels ``1..n`` run around the circle (so for six mics
    the pairs are #1/#4, #2/#5, #3/#6).

    ``numbering="paired"``: diametral mics carry consecutive labels
    (#1/#2, #3/#4, ...) and the middle pair lies on the x-axis, pair ``k``
    having axis angle ``(k - n_pairs//2) * 180/n_pairs``.
    """
    if n_mics % 2 or n_mics < 4:
        raise ValueError("n_mics must be even and >= 4")
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    r = diameter / 2
    half = n_mics // 2
    if numbering == "sequential":
        ang = 2 * np.pi * np.arange(n_mics) / n_mics
        pairs = tuple((i, i + half) for i in range(half))
    elif numbering == "paired":
        axis = np.pi * (np.arange(half) - half // 2) / half
        ang = np.empty(n_mics)
        ang[0::2] = axis
        ang[1::2] = axis + np.pi
        pairs = tuple((2 * k, 2 * k + 1) for k in range(half))
    else:
        raise ValueError(f"unknown numbering {numbering!r}")
    pos = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    pos[np.abs(pos) < 1e-15] = 0.0
    return ArrayGeometry(pos, "circular", pairs, sound_speed)


def phase_difference(bin_hz, d: float, theta_b, c: float = SOUND_SPEED):
    """Inter-channel phase ``2*pi*f*d*sin(theta_b)/c`` in radians (unwrapped)."""
    return 2 * np.pi * np.asarray(bin_hz, dtype=float) * d * np.sin(np.deg2rad(theta_b)) / c


def steering_vector(bin_hz, d: float, theta_b, c: float = SOUND_SPEED) -> np.ndarray:
    """``[1, exp(-1j*dphi)]`` stacked on the last axis."""
    dphi = phase_difference(bin_hz, d, theta_b, c)
    return np.stack([np.ones_like(dphi, dtype=complex), np.exp(-1j * dphi)], axis=-1)


def alignment_vector(bin_hz, d: float, theta_b, c: float = SOUND_SPEED) -> np.ndarray:
    """Centre-referenced steering ``0.5*[exp(+1j*dphi/2), exp(-1j*dphi/2)]``.

    ``pi*d*sin(theta)/lambda`` with ``lambda = c/f`` is half of the full
    inter-channel phase.
    """
    half = 0.5 * phase_difference(bin_hz, d, theta_b, c)
    return 0.5 * np.stack([np.exp(1j * half), np.exp(-1j * half)], axis=-1)


def pair_axis_angle(geometry: ArrayGeometry, pair_index: int) -> float:
    """Global angle of the pair axis (first mic to second mic) in [0, 360)."""
    a, b = geometry.pairs[pair_index]
    dx, dy = geometry.mic_positions[b] - geometry.mic_positions[a]
    if np.hypot(dx, dy) < 1e-12:
        raise DegeneratePairError("degenerate pair: coincident microphones")
    return wrap_deg(np.degrees(np.arctan2(dy, dx)))


def local_to_azimuth(theta_b, phi: float, mirror: bool = False):
    """Pair-local broadside angle to global azimuth (or its mirror)."""
    if mirror:
        return wrap_deg(phi - 90.0 - np.asarray(theta_b))
    return wrap_deg(phi + 90.0 + np.asarray(theta_b))


def azimuth_to_local(azimuth, phi: float):
    """Global azimuth to ``(theta_b, mirror)`` for a pair with axis angle ``phi``.

    ``mirror`` is True when the azimuth lies behind the pair (the half-plane
    reached by :func:`local_to_azimuth` with ``mirror=True``).
    """
    rel = angle_diff_deg(azimuth, phi + 90.0)
    if np.ndim(rel) == 0:
        if -90.0 <= rel <= 90.0:
            return rel, False
        return float(angle_diff_deg(phi - 90.0, azimuth)), True
    rel = np.asarray(rel)
    front = np.abs(rel) <= 90.0
    back = angle_diff_deg(phi - 90.0, azimuth)
    return np.where(front, rel, back), ~front
