#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Proper orthogonal decomposition of internal-coordinate snapshots.

    Ξ  (n_dof × n_snap)  =  U Σ Vᵀ
    Z  = Ũᵀ ξ            Ż = Ũᵀ Δξ            ξ̄ = Ũ Z

with Ũ the first r left singular vectors. Snapshots are never centred,
so the pristine state ξ = 0 maps onto Z = 0.
"""

import json
import logging

from dataclasses import dataclass

from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import scipy.linalg

from .enums import (
    ArtifactKind,
    Normalization,
    SvdMethod,
)

from .storage import (
    Artifact,
    FingerprintMismatchError,
    fingerprint,
)

__all__ = [
    'IcLayout',
    'SnapshotMatrix',
    'PodBasis',
    'ErrorRow',
    'LayoutMismatchError',
    'RankTooLargeError',
    'compute_pod_basis',
    'project',
    'project_rate',
    'reconstruct',
    'compression_ratio',
    'energy_reconstruction_error',
    'select_modes_by_energy_error',
    'select_modes_by_singular_threshold',
    'reconstruction_mae',
    'truncation_residual',
    'save_basis',
    'load_basis',
]

logger = logging.getLogger(__name__)

SIGN_CONVENTION = 'max-abs-positive'

# the Gram route pays off only for strongly rectangular, large matrices
_GRAM_ASPECT = 0.1
_GRAM_MIN_ROWS = 5000


class LayoutMismatchError(Exception):
    pass


class RankTooLargeError(Exception):
    pass


class IcLayout(object):
    """
    Row map of a point-major IC vector: the fields of point 0, then the fields of point 1, ...

    eg:
    >>> layout = IcLayout.ruc(2)
    >>> layout.size
    26
    >>> layout.block_rows('alpha')
    array([12, 25])
    >>>
    """

    RUC_FIELDS = (('eps_el', 6), ('eps_pl', 6), ('alpha', 1))

    IWAN_FIELDS = (('stretch', 1), ('slip', 1), ('slip_max', 1))

    def __init__(
            self,
            n_points: int,
            fields: Sequence[Tuple[str, int]],
    ) -> None:
        if n_points < 1:
            raise LayoutMismatchError(
                f'Parameter `n_points` expected a positive count, but {n_points} was given.'
            )
        self._n_points = int(n_points)
        self._fields = tuple((str(name), int(width)) for name, width in fields)

    @classmethod
    def ruc(cls, n_points: int) -> 'IcLayout':
        return cls(n_points, cls.RUC_FIELDS)

    @classmethod
    def iwan(cls, n_el: int) -> 'IcLayout':
        return cls(n_el, cls.IWAN_FIELDS)

    @property
    def n_points(self) -> int:
        return self._n_points

    @property
    def fields(self) -> Tuple[Tuple[str, int], ...]:
        return self._fields

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self._fields]

    @property
    def width(self) -> int:
        return sum(w for _, w in self._fields)

    @property
    def size(self) -> int:
        return self._n_points * self.width

    @property
    def fingerprint(self) -> str:
        return fingerprint(json.dumps(self.to_dict(), sort_keys=True).encode('utf-8'))

    def block_rows(
            self,
            name: str,
    ) -> np.ndarray:
        offset = 0
        for field_name, w in self._fields:
            if field_name == name:
                local = offset + np.arange(w)
                return (np.arange(self._n_points)[:, None] * self.width + local).ravel()
            offset += w
        raise LayoutMismatchError(f'Layout has no field `{name}`, known fields are {self.names}.')

    def to_dict(self) -> Dict:
        return {
            'n_points': self._n_points,
            'fields': [[name, w] for name, w in self._fields],
        }

    @classmethod
    def from_dict(cls, d: Dict) -> 'IcLayout':
        return cls(d['n_points'], [tuple(f) for f in d['fields']])

    def __eq__(self, other) -> bool:
        if not isinstance(other, IcLayout):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f'IcLayout(n_points={self._n_points}, fields={self._fields})'


class SnapshotMatrix(object):
    """
    IC snapshots stored column-wise, one column per increment.
    """

    def __init__(
            self,
            data: np.ndarray,
            layout: IcLayout,
    ) -> None:
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise LayoutMismatchError(
                f'Parameter `data` expected a matrix, but {data.ndim} dimension(s) were given.'
            )
        if data.shape[0] != layout.size:
            raise LayoutMismatchError(
                f'Snapshot rows ({data.shape[0]}) do not match the IC layout size ({layout.size}).'
            )
        self.data = data
        self.layout = layout

    @classmethod
    def from_rows(
            cls,
            rows: np.ndarray,
            layout: IcLayout,
    ) -> 'SnapshotMatrix':
        return cls(np.asarray(rows, dtype=float).T, layout)

    @property
    def n_dof(self) -> int:
        return self.data.shape[0]

    @property
    def n_snap(self) -> int:
        return self.data.shape[1]

    def block_scales(self) -> np.ndarray:
        """
        Per-row divisors that bring every IC field block to a unit max-abs value.
        """
        scales = np.ones(self.n_dof)
        for name in self.layout.names:
            rows = self.layout.block_rows(name)
            peak = float(np.max(np.abs(self.data[rows]))) if self.n_snap else 0.0
            if peak > 0.0:
                scales[rows] = peak
        return scales

    def normalized_by_block(self) -> Tuple['SnapshotMatrix', np.ndarray]:
        scales = self.block_scales()
        return SnapshotMatrix(self.data / scales[:, None], self.layout), scales


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class PodBasis(object):
    """
    Retained modes Ũ with the full singular spectrum.

    Immutable once built. With `scales` set, ICs are divided row-wise by them before
    projection and multiplied back after reconstruction.
    """

    def __init__(
            self,
            U: np.ndarray,
            singular_values: np.ndarray,
            layout: IcLayout,
            scales: Optional[np.ndarray] = None,
    ) -> None:
        if U.shape[0] != layout.size:
            raise LayoutMismatchError(
                f'Basis rows ({U.shape[0]}) do not match the IC layout size ({layout.size}).'
            )
        self._U = _read_only(U)
        self._singular_values = _read_only(singular_values)
        self._layout = layout
        self._scales = None if scales is None else _read_only(scales)

    @property
    def U(self) -> np.ndarray:
        return self._U

    @property
    def singular_values(self) -> np.ndarray:
        return self._singular_values

    @property
    def layout(self) -> IcLayout:
        return self._layout

    @property
    def scales(self) -> Optional[np.ndarray]:
        return self._scales

    @property
    def r(self) -> int:
        return self._U.shape[1]

    @property
    def n_dof(self) -> int:
        return self._U.shape[0]

    @property
    def fingerprint(self) -> str:
        parts = [self._layout.fingerprint.encode('ascii'), self._U.tobytes()]
        if self._scales is not None:
            parts.append(self._scales.tobytes())
        return fingerprint(*parts)

    def truncate(
            self,
            r: int,
    ) -> 'PodBasis':
        if not 1 <= r <= self.r:
            raise RankTooLargeError(
                f'Parameter `r` expected a value in [1, {self.r}], but {r} was given.'
            )
        return PodBasis(self._U[:, :r], self._singular_values, self._layout, self._scales)

    def _check(
            self,
            xi: np.ndarray,
    ) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.n_dof:
            raise LayoutMismatchError(
                f'IC vector has {xi.shape[-1]} entries, but the basis expects {self.n_dof}.'
            )
        return xi

    def project(
            self,
            xi: np.ndarray,
    ) -> np.ndarray:
        """
        :param xi: (n_dof,) or (n, n_dof)
        :return: (r,) or (n, r)
        """
        xi = self._check(xi)
        if self._scales is not None:
            xi = xi / self._scales
        return xi @ self._U

    def project_rate(
            self,
            dxi: np.ndarray,
    ) -> np.ndarray:
        return self.project(dxi)

    def reconstruct(
            self,
            z: np.ndarray,
    ) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.r:
            raise LayoutMismatchError(
                f'ISV vector has {z.shape[-1]} entries, but the basis retains {self.r} modes.'
            )
        xi = z @ self._U.T
        if self._scales is not None:
            xi = xi * self._scales
        return xi

    def __repr__(self) -> str:
        return f'PodBasis(n_dof={self.n_dof}, r={self.r})'


def _fix_signs(
        U: np.ndarray,
) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0.0] = 1.0
    return U * signs


def _svd_direct(
        data: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    U, s, _ = scipy.linalg.svd(data, full_matrices=False, lapack_driver='gesdd')
    return U, s


def _svd_gram(
        data: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    n_dof, n_snap = data.shape
    if n_snap <= n_dof:
        lam, V = scipy.linalg.eigh(data.T @ data)
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        s = np.sqrt(np.clip(lam, 0.0, None))
        with np.errstate(divide='ignore', invalid='ignore'):
            U = np.where(s > 0.0, (data @ V) / s, 0.0)
        # re-orthonormalise, columns of vanishing singular values included
        Q, R = scipy.linalg.qr(U, mode='economic')
        U = Q * np.where(np.diag(R) < 0.0, -1.0, 1.0)
    else:
        lam, U = scipy.linalg.eigh(data @ data.T)
        order = np.argsort(lam)[::-1]
        s = np.sqrt(np.clip(lam[order], 0.0, None))
        U = U[:, order]
    return U, s


def compute_pod_basis(
        snapshots: SnapshotMatrix,
        r: Optional[int] = None,
        method: Optional[SvdMethod] = SvdMethod.Auto,
        scales: Optional[np.ndarray] = None,
) -> PodBasis:
    """
    :param snapshots: column-per-increment IC matrix
    :param r: retained modes, full rank when None
    :param method: SVD route
    :param scales: optional row divisors, as returned by `SnapshotMatrix.normalized_by_block`
    """
    full = min(snapshots.n_dof, snapshots.n_snap)
    if r is None:
        r = full
    if not 1 <= r <= full:
        raise RankTooLargeError(
            f'Parameter `r` expected a value in [1, {full}], but {r} was given.'
        )

    data = snapshots.data
    if scales is not None:
        data = data / scales[:, None]

    method = SvdMethod(method)
    if method is SvdMethod.Auto:
        small, large = sorted(data.shape)
        method = SvdMethod.Gram if small < _GRAM_ASPECT * large and large >= _GRAM_MIN_ROWS else SvdMethod.Direct

    if method is SvdMethod.Gram:
        U, s = _svd_gram(data)
    else:
        U, s = _svd_direct(data)

    U = _fix_signs(U[:, :r])
    logger.info(
        'POD basis built: %d x %d snapshots, r = %d, %s route, sigma_1 = %.6e',
        snapshots.n_dof, snapshots.n_snap, r, method.value, s[0] if len(s) else 0.0,
    )
    return PodBasis(U, s[:full], snapshots.layout, scales)


def project(
        basis: PodBasis,
        xi: np.ndarray,
) -> np.ndarray:
    return basis.project(xi)


def project_rate(
        basis: PodBasis,
        dxi: np.ndarray,
) -> np.ndarray:
    return basis.project_rate(dxi)


def reconstruct(
        basis: PodBasis,
        z: np.ndarray,
) -> np.ndarray:
    return basis.reconstruct(z)


def compression_ratio(
        dim_z: int,
        dim_xi: int,
) -> float:
    """
    CR = (1 − dim Z / dim ξ) · 100
    """
    if not 0 <= dim_z <= dim_xi or dim_xi < 1:
        raise ValueError(
            f'Parameters `dim_z` and `dim_xi` expected 0 <= dim_z <= dim_xi, but ({dim_z}, {dim_xi}) was given.'
        )
    return (1.0 - dim_z / dim_xi) * 100.0


@dataclass
class ErrorRow(object):
    r: int
    mean: float
    std: float
    mean_abs: float


def energy_reconstruction_error(
        basis: PodBasis,
        r_values: Iterable[int],
        xi: np.ndarray,
        psi: np.ndarray,
        micro_energy_eval: Callable[[np.ndarray], np.ndarray],
        normalization: Optional[Normalization] = Normalization.Max,
) -> List[ErrorRow]:
    """
    err_Ψ = (Ψ − Ψ̄) / Ψ_ref, Ψ̄ being the energy of the ICs reconstructed from r modes.

    :param xi: (n, n_dof) IC rows
    :param psi: (n,) recorded macroscopic energies
    :param micro_energy_eval: maps IC rows to macroscopic energies
    """
    psi = np.asarray(psi, dtype=float)
    reference = Normalization(normalization).reference(psi)
    if reference == 0.0:
        reference = 1.0

    rows = []
    for r in r_values:
        b = basis.truncate(int(r))
        psi_bar = micro_energy_eval(b.reconstruct(b.project(xi)))
        err = (psi - psi_bar) / reference
        rows.append(ErrorRow(
            r=int(r),
            mean=float(np.mean(err)),
            std=float(np.std(err)),
            mean_abs=float(np.mean(np.abs(err))),
        ))
        logger.debug('energy error r = %d: mean |err| = %.3e', r, rows[-1].mean_abs)
    return rows


def select_modes_by_energy_error(
        rows: Sequence[ErrorRow],
        tolerance: float,
) -> Optional[int]:
    """
    Smallest r whose mean |err_Ψ| reaches `tolerance`, None when no row does.
    """
    hits = [row.r for row in rows if row.mean_abs <= tolerance]
    return min(hits) if hits else None


def select_modes_by_singular_threshold(
        singular_values: np.ndarray,
        threshold: Optional[float] = 1e-4,
) -> int:
    """
    Smallest r such that σ_{r+1}/σ_1 < threshold.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] <= 0.0:
        logger.warning('singular spectrum is empty or zero, one mode retained')
        return 1
    return max(1, int(np.count_nonzero(s / s[0] >= threshold)))


def reconstruction_mae(
        basis: PodBasis,
        xi: np.ndarray,
        r: Optional[int] = None,
) -> Dict[str, float]:
    """
    Mean absolute reconstruction error per IC field block, plus the overall value under 'all'.
    """
    b = basis if r is None else basis.truncate(r)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    err = np.abs(xi - b.reconstruct(b.project(xi)))

    mae = {name: float(np.mean(err[:, basis.layout.block_rows(name)])) for name in basis.layout.names}
    mae['all'] = float(np.mean(err))
    return mae


def truncation_residual(
        snapshots: SnapshotMatrix,
        basis: PodBasis,
) -> float:
    """
    ‖Ξ − Ũ Ũᵀ Ξ‖_F, which equals the norm of the discarded singular values.
    """
    data = snapshots.data
    return float(np.linalg.norm(data - basis.U @ (basis.U.T @ data)))


def save_basis(
        basis: PodBasis,
        directory: str,
        name: Optional[str] = 'basis',
        meta: Optional[Dict] = None,
) -> str:
    blocks = {
        'U': basis.U,
        'S': basis.singular_values,
    }
    if basis.scales is not None:
        blocks['SCALES'] = basis.scales

    doc = dict(meta or {})
    doc.update(
        n_dof=basis.n_dof,
        r=basis.r,
        layout=basis.layout.to_dict(),
        layout_fingerprint=basis.layout.fingerprint,
        fingerprint=basis.fingerprint,
        sign_convention=SIGN_CONVENTION,
    )
    return Artifact(ArtifactKind.Basis, meta=doc, blocks=blocks).write_on(directory, name)


def load_basis(
        manifest_path: str,
) -> PodBasis:
    a = Artifact.read(manifest_path, kind=ArtifactKind.Basis, required=('U', 'S'))
    basis = PodBasis(
        a.blocks['U'],
        a.blocks['S'],
        IcLayout.from_dict(a.meta['layout']),
        a.blocks.get('SCALES'),
    )
    recorded = a.meta.get('fingerprint')
    if recorded is not None and recorded != basis.fingerprint:
        raise FingerprintMismatchError(
            f'Basis `{manifest_path}` records fingerprint {recorded[:12]}, but its modes hash to {basis.fingerprint[:12]}.'
        )
    return basis
