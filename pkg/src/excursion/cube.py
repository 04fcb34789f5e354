"""Stratification of the cube M = [-1, 1]^d into open faces."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DIM = 4


@dataclass(frozen=True)
class FaceDescriptor:
    """One open face of [-1, 1]^d.

    ``sigma`` holds the free coordinates (0-based), ``epsilon`` maps each
    fixed coordinate to its sign.
    """

    face_id: int
    d: int
    sigma: tuple[int, ...]
    epsilon: tuple[tuple[int, int], ...]

    @property
    def dim(self) -> int:
        return len(self.sigma)

    @property
    def fixed(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.epsilon)

    @property
    def signs(self) -> np.ndarray:
        return np.array([e for _, e in self.epsilon], dtype=float)

    @property
    def label(self) -> str:
        """One character per coordinate: '*' free, '+'/'-' fixed at +/-1."""
        chars = ["*"] * self.d
        for j, e in self.epsilon:
            chars[j] = "+" if e > 0 else "-"
        return "".join(chars)

    def embed(self, free: np.ndarray) -> np.ndarray:
        """Map free coordinates (..., dim) to points (..., d) of the face."""
        free = np.asarray(free, dtype=float)
        out = np.empty(free.shape[:-1] + (self.d,))
        if self.sigma:
            out[..., list(self.sigma)] = free
        for j, e in self.epsilon:
            out[..., j] = e
        return out

    def __repr__(self) -> str:
        return f"FaceDescriptor({self.face_id}, {self.label!r})"


def _check_dim(d: int, max_dim: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"cube dimension must be a positive integer, got {d!r}")
    if d > max_dim:
        raise ValueError(f"cube dimension {d} exceeds the supported cap {max_dim}")


@lru_cache(maxsize=None)
def _faces(d: int) -> tuple[FaceDescriptor, ...]:
    faces = []
    for k in range(d + 1):
        for sigma in itertools.combinations(range(d), k):
            fixed = [j for j in range(d) if j not in sigma]
            for signs in itertools.product((-1, 1), repeat=len(fixed)):
                faces.append(
                    FaceDescriptor(len(faces), d, sigma, tuple(zip(fixed, signs)))
                )
    return tuple(faces)


def enumerate_faces(d: int, max_dim: int = MAX_DIM) -> list[FaceDescriptor]:
    """All 3^d open faces of [-1, 1]^d, ordered by dimension.

    Within a dimension faces are ordered by free coordinates and then by
    signs (-1 before +1), so face ids are stable for a given ``d``.
    """
    _check_dim(d, max_dim)
    return list(_faces(int(d)))


def face_by_label(d: int, label: str) -> FaceDescriptor:
    for face in _faces(int(d)):
        if face.label == label:
            return face
    raise KeyError(f"no face {label!r} in dimension {d}")


def interior_face(d: int) -> FaceDescriptor:
    return _faces(int(d))[-1]


def membership_face(t, boundary_tol: float = 1e-9, max_dim: int = MAX_DIM) -> FaceDescriptor:
    """The open face containing ``t``; coordinates within ``boundary_tol`` of
    +/-1 count as fixed there."""
    t = np.asarray(t, dtype=float).ravel()
    d = t.size
    _check_dim(d, max_dim)
    if np.any(np.abs(t) > 1 + boundary_tol) or not np.all(np.isfinite(t)):
        raise ValueError(f"point {t} lies outside the cube [-1, 1]^{d}")
    label = "".join(
        "+" if x >= 1 - boundary_tol else "-" if x <= -1 + boundary_tol else "*"
        for x in t
    )
    return face_by_label(d, label)


def sample_face_point(face: FaceDescriptor, rng, margin: float = 1e-6) -> np.ndarray:
    free = rng.uniform(-1 + margin, 1 - margin, size=face.dim)
    return face.embed(free)
