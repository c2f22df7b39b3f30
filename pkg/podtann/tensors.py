#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Symmetric second-order tensors in orthonormal (Mandel) 6-vector form.

    [a11, a22, a33, √2·a23, √2·a13, √2·a12]

With this ordering the Euclidean inner product of two 6-vectors is the double contraction
of the 3×3 tensors, so energies, norms and POD projections need no shear-factor bookkeeping.

Every function works on a single tensor of shape (6,) or on a stack of shape (..., 6).
"""

from typing import (
    Optional,
    Tuple,
    Union,
)

import numpy as np
from scipy.spatial.transform import Rotation

from .enums import TensorUnit

__all__ = [
    'SQRT2',
    'IDENTITY6',
    'SymTensor6',
    'Rotation3',
    'RotationError',
    'to_matrix',
    'from_matrix',
    'inner',
    'norm',
    'trace',
    'deviator',
    'invariants',
    'rotate',
    'rotation_operator',
    'random_rotation',
]

SQRT2 = np.sqrt(2.0)

IDENTITY6 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

# (row, col) of the 3×3 entry stored in each Mandel slot
_MANDEL_INDEX = (
    (0, 0),
    (1, 1),
    (2, 2),
    (1, 2),
    (0, 2),
    (0, 1),
)

_MANDEL_WEIGHT = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])

_ORTHOGONALITY_TOL = 1e-9


class RotationError(Exception):
    pass


class Rotation3(object):
    """
    Proper rotation, stored as a row-major 3×3 matrix.
    """

    def __init__(
            self,
            matrix: np.ndarray,
    ) -> None:
        m = np.asarray(matrix, dtype=float).reshape(3, 3)
        _check_rotation(m)
        self._matrix = m

    @classmethod
    def identity(cls) -> 'Rotation3':
        return cls(np.eye(3))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix.copy()

    @property
    def entries(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in self._matrix.ravel())

    def compose(
            self,
            other: 'Rotation3',
    ) -> 'Rotation3':
        """
        `self.compose(other)` applies `other` first, then `self`.
        """
        return Rotation3(self._matrix @ other.matrix)

    def __repr__(self) -> str:
        return f'Rotation3({self.entries})'


class SymTensor6(object):
    """
    A single symmetric tensor with its unit tag.

    Module functions operate on raw arrays for speed,
    this class is the typed value handed across module boundaries and written in reports.
    """

    def __init__(
            self,
            components,
            unit: Optional[TensorUnit] = TensorUnit.Strain,
    ) -> None:
        c = np.asarray(components, dtype=float)
        if c.shape != (6,):
            raise ValueError(
                f'Parameter `components` expected 6 entries, but shape {c.shape} was given.'
            )
        self._components = c
        self._unit = unit

    @classmethod
    def from_matrix(
            cls,
            matrix: np.ndarray,
            unit: Optional[TensorUnit] = TensorUnit.Strain,
    ) -> 'SymTensor6':
        return cls(from_matrix(matrix), unit=unit)

    @property
    def components(self) -> np.ndarray:
        return self._components.copy()

    @property
    def unit(self) -> TensorUnit:
        return self._unit

    @property
    def matrix(self) -> np.ndarray:
        return to_matrix(self._components)

    def rotated(
            self,
            rotation: Union[Rotation3, np.ndarray],
    ) -> 'SymTensor6':
        return SymTensor6(rotate(self._components, rotation), unit=self._unit)

    def dot(
            self,
            other: 'SymTensor6',
    ) -> float:
        return float(inner(self._components, other.components))

    def __add__(self, other: 'SymTensor6') -> 'SymTensor6':
        return SymTensor6(self._components + other.components, unit=self._unit)

    def __sub__(self, other: 'SymTensor6') -> 'SymTensor6':
        return SymTensor6(self._components - other.components, unit=self._unit)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymTensor6):
            return NotImplemented
        return self._unit == other.unit and np.array_equal(self._components, other.components)

    def __repr__(self) -> str:
        return f'SymTensor6({self._components.tolist()}, {self._unit.label})'


def _check_rotation(
        m: np.ndarray,
) -> None:
    residual = np.max(np.abs(m @ m.T - np.eye(3)))
    if residual > _ORTHOGONALITY_TOL:
        raise RotationError(
            f'Parameter `R` expected an orthogonal matrix, but the residual |R·Rᵀ − I| is {residual:.3e}.'
        )
    if np.linalg.det(m) < 0.0:
        raise RotationError(
            'Parameter `R` expected a proper rotation (det = +1), but a reflection was given.'
        )


def _rotation_matrix(
        rotation: Union[Rotation3, np.ndarray],
) -> np.ndarray:
    if isinstance(rotation, Rotation3):
        return rotation.matrix
    m = np.asarray(rotation, dtype=float).reshape(3, 3)
    _check_rotation(m)
    return m


def to_matrix(
        t: np.ndarray,
) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    m = np.empty(t.shape[:-1] + (3, 3))
    for slot, (i, j) in enumerate(_MANDEL_INDEX):
        value = t[..., slot] / _MANDEL_WEIGHT[slot]
        m[..., i, j] = value
        m[..., j, i] = value
    return m


def from_matrix(
        m: np.ndarray,
) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    t = np.empty(sym.shape[:-2] + (6,))
    for slot, (i, j) in enumerate(_MANDEL_INDEX):
        t[..., slot] = sym[..., i, j] * _MANDEL_WEIGHT[slot]
    return t


def inner(
        a: np.ndarray,
        b: np.ndarray,
) -> np.ndarray:
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def norm(
        t: np.ndarray,
) -> np.ndarray:
    return np.sqrt(inner(t, t))


def trace(
        t: np.ndarray,
) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return t[..., 0] + t[..., 1] + t[..., 2]


def deviator(
        t: np.ndarray,
) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return t - (trace(t) / 3.0)[..., None] * IDENTITY6


def invariants(
        t: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (I1, J2, p, q) with I1 the trace, J2 = ½ s:s, p = I1/3 and q = √(3 J2).
    """
    i1 = trace(t)
    s = deviator(t)
    j2 = 0.5 * inner(s, s)
    return i1, j2, i1 / 3.0, np.sqrt(3.0 * j2)


def rotation_operator(
        rotation: Union[Rotation3, np.ndarray],
) -> np.ndarray:
    """
    6×6 orthogonal matrix Q such that Q·t represents R·T·Rᵀ.
    """
    r = _rotation_matrix(rotation)
    basis = to_matrix(np.eye(6))
    rotated = np.einsum('ij,njk,lk->nil', r, basis, r)
    return from_matrix(rotated).T


def rotate(
        t: np.ndarray,
        rotation: Union[Rotation3, np.ndarray],
) -> np.ndarray:
    r = _rotation_matrix(rotation)
    m = to_matrix(t)
    return from_matrix(r @ m @ r.T)


def random_rotation(
        rng: np.random.Generator,
) -> Rotation3:
    """
    Haar-uniform sample of SO(3), drawn through a normalised Gaussian quaternion.
    """
    m = Rotation.random(random_state=rng).as_matrix()
    # re-orthonormalise to push |det − 1| down to round-off
    u, _, vt = np.linalg.svd(m)
    return Rotation3(u @ vt)
