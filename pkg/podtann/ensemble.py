#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Weighted Gauss-point ensembles under a uniform macroscopic strain.

Every point sees the same strain increment (Taylor averaging), so the macroscopic
stress, energy and dissipation are exact weighted sums of the pointwise values:

    Σ = Σ_i w_i σ_i      Ψ = Σ_i w_i ψ_i      D = Σ_i w_i d_i
"""

import os
import logging

from concurrent.futures import ThreadPoolExecutor

from dataclasses import (
    dataclass,
    replace,
)

from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .enums import (
    ArtifactKind,
    TensorUnit,
)

from .fields import (
    GridSpec,
    correlated_properties,
)

from .network import (
    Scalers,
    TannDataset,
)

from .plasticity import (
    IC_WIDTH,
    MAX_INCREMENT_NORM,
    MaterialParams,
    MaterialTable,
    StrainIncrementError,
    integrate_batch,
)

from .pod import (
    IcLayout,
    LayoutMismatchError,
    PodBasis,
)

from .storage import Artifact

from .tensors import (
    IDENTITY6,
    SQRT2,
    Rotation3,
    deviator,
    inner,
    norm,
    rotation_operator,
)

__all__ = [
    'PRESETS',
    'Ensemble',
    'EnsembleError',
    'StrainPath',
    'PathRecord',
    'CapUnreachableError',
    'generate_strain_path',
    'cyclic_shear_path',
    'triaxial_path',
    'simulate_path',
    'simulate_paths',
    'worker_count',
    'augment_rotation',
    'macro_first_law_residual',
    'build_dataset',
    'save_records',
    'load_records',
]

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 100

WEIGHT_TOL = 1e-12

THREADS_ENV = 'PODTANN_THREADS'

# (matrix, inclusion) parameter sets of the two inclusion geometries
PRESETS: Dict[str, Tuple[Dict, Dict]] = {
    'ellipsoidal': (
        dict(E=5500.0, nu=0.3, phi=32.0, psi_dil=32.0, c=10.0, H=4000.0),
        dict(E=6500.0, nu=0.3, phi=30.0, psi_dil=30.0, c=12.0, H=3500.0),
    ),
    'leaf': (
        dict(E=5500.0, nu=0.3, phi=25.4, psi_dil=25.4, c=5.0, H=3000.0),
        dict(E=6500.0, nu=0.3, phi=30.0, psi_dil=30.0, c=12.0, H=2500.0),
    ),
}


class EnsembleError(Exception):
    pass


class CapUnreachableError(Exception):
    pass


class Ensemble(object):
    """
    Material points with their volume fractions.

    eg:
    >>> ens = Ensemble([MaterialParams(E=5500.0, nu=0.3)], [1.0])
    >>> ens.layout.size
    13
    >>>
    """

    def __init__(
            self,
            points: Sequence[MaterialParams],
            weights: Sequence[float],
    ) -> None:
        w = np.asarray(weights, dtype=float)
        if len(points) == 0 or w.shape != (len(points),):
            raise EnsembleError(
                f'Parameter `weights` expected {len(points)} entries, but shape {w.shape} was given.'
            )
        if np.any(w <= 0.0):
            raise EnsembleError('Parameter `weights` expected positive volume fractions, but a non-positive one was given.')
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise EnsembleError(
                f'Parameter `weights` expected volume fractions summing to 1, but they sum to {w.sum():.15f}.'
            )
        self._points = tuple(points)
        self._weights = w
        self._table = MaterialTable(self._points)

    @classmethod
    def uniform(
            cls,
            points: Sequence[MaterialParams],
    ) -> 'Ensemble':
        n = len(points)
        return cls(points, np.full(n, 1.0 / n) if n else [])

    @classmethod
    def two_phase(
            cls,
            rng: np.random.Generator,
            preset: Optional[str] = 'ellipsoidal',
            n_points: Optional[int] = 64,
            inclusion_fraction: Optional[float] = 0.25,
            heterogeneity: Optional[float] = 0.1,
            materials: Optional[Sequence[Dict]] = None,
    ) -> 'Ensemble':
        """
        Matrix and inclusion points, the inclusion taking `inclusion_fraction` of the volume.

        Within each phase, E, c and H are perturbed point by point with
        log-normal factors of spread `heterogeneity`, standing in for the field gradients
        around the inclusion.
        """
        if materials is None:
            if preset not in PRESETS:
                raise EnsembleError(
                    f'Parameter `preset` expected one of {sorted(PRESETS)}, but `{preset}` was given.'
                )
            materials = PRESETS[preset]
        if len(materials) != 2:
            raise EnsembleError(f'Parameter `materials` expected (matrix, inclusion), but {len(materials)} were given.')
        if n_points < 1:
            raise EnsembleError(f'Parameter `n_points` expected a positive count, but {n_points} was given.')
        if n_points == 1:
            return cls([MaterialParams(**materials[0])], [1.0])
        if not 0.0 < inclusion_fraction < 1.0:
            raise EnsembleError(
                f'Parameter `inclusion_fraction` expected a value in (0, 1), but {inclusion_fraction} was given.'
            )

        n_inclusion = min(n_points - 1, max(1, int(round(inclusion_fraction * n_points))))
        phases = [1] * n_inclusion + [0] * (n_points - n_inclusion)
        weights = np.array([
            inclusion_fraction / n_inclusion if p else (1.0 - inclusion_fraction) / (n_points - n_inclusion)
            for p in phases
        ])
        weights = weights / weights.sum()

        points = []
        for p in phases:
            base = dict(materials[p])
            factors = np.exp(heterogeneity * rng.standard_normal(3))
            for key, f in zip(('E', 'c', 'H'), factors):
                base[key] = base.get(key, 0.0) * float(f)
            points.append(MaterialParams(**base))

        logger.debug('two-phase ensemble: %d matrix and %d inclusion points', n_points - n_inclusion, n_inclusion)
        return cls(points, weights)

    @classmethod
    def correlated(
            cls,
            grid: GridSpec,
            kappa: float,
            seed: int,
    ) -> 'Ensemble':
        """
        One equally weighted point per cell of a random-field property grid.
        """
        props = correlated_properties(grid, kappa, seed)
        return cls.uniform(props.params)

    @property
    def points(self) -> Tuple[MaterialParams, ...]:
        return self._points

    @property
    def weights(self) -> np.ndarray:
        return self._weights.copy()

    @property
    def table(self) -> MaterialTable:
        return self._table

    @property
    def n_points(self) -> int:
        return len(self._points)

    @property
    def layout(self) -> IcLayout:
        return IcLayout.ruc(self.n_points)

    def macro_energy(
            self,
            xi: np.ndarray,
    ) -> np.ndarray:
        """
        Ψ of IC rows (n, 13·n_points), evaluated point by point from ε_el and α.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.layout.size:
            raise LayoutMismatchError(
                f'IC rows hold {xi.shape[1]} entries, but the ensemble layout expects {self.layout.size}.'
            )
        states = xi.reshape(len(xi), self.n_points, IC_WIDTH)
        psi = self._table.energy(states[..., :6], states[..., 12])
        return psi @ self._weights

    def to_dict(self) -> Dict:
        return {
            'points': [p.to_dict() for p in self._points],
            'weights': self._weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> 'Ensemble':
        return cls([MaterialParams.from_dict(p) for p in d['points']], d['weights'])


@dataclass
class StrainPath(object):
    """
    Macroscopic strain increments, Mandel form, shape (n, 6).
    """
    increments: np.ndarray

    def __len__(self) -> int:
        return len(self.increments)

    @property
    def total(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=0)

    def rotated(
            self,
            rotation: Rotation3,
    ) -> 'StrainPath':
        return StrainPath(self.increments @ rotation_operator(rotation).T)


def _j2(e: np.ndarray) -> float:
    s = deviator(e)
    return 0.5 * float(inner(s, s))


def _cap_fraction(
        current: np.ndarray,
        step: np.ndarray,
        j2_cap: float,
) -> float:
    """
    Largest t in [0, 1] with J2(current + t·step) <= j2_cap.
    """
    a = deviator(current)
    b = deviator(step)
    bb = float(inner(b, b))
    if bb == 0.0:
        return 1.0
    ab = float(inner(a, b))
    aa = float(inner(a, a))
    disc = max(ab * ab - bb * (aa - 2.0 * j2_cap), 0.0)
    return float(min(1.0, max(0.0, (-ab + np.sqrt(disc)) / bb)))


def generate_strain_path(
        rng: np.random.Generator,
        n_inc: Optional[int] = 1000,
        std_dev: Optional[float] = 5e-4,
        init_vol_strain: Optional[float] = -5e-4,
        j2_cap: Optional[float] = 0.015,
) -> StrainPath:
    """
    A volumetric preload followed by Gaussian increments that keep the cumulative
    deviatoric invariant J2 below `j2_cap`.
    """
    if n_inc < 1:
        raise ValueError(f'Parameter `n_inc` expected a positive count, but {n_inc} was given.')
    if not std_dev > 0.0:
        raise ValueError(f'Parameter `std_dev` expected a positive value, but {std_dev} was given.')

    increments = np.zeros((n_inc, 6))
    increments[0] = init_vol_strain / 3.0 * IDENTITY6
    total = increments[0].copy()
    if _j2(total) > j2_cap or j2_cap < 0.0:
        raise CapUnreachableError(
            f'Parameter `j2_cap` is {j2_cap}, but the preload alone reaches J2 = {_j2(total):.3e}.'
        )

    scaled = 0
    for i in range(1, n_inc):
        for _ in range(MAX_RESAMPLES):
            step = rng.normal(0.0, std_dev, size=6)
            if _j2(total + step) <= j2_cap:
                break
        else:
            step = step * _cap_fraction(total, step, j2_cap)
            scaled += 1
        increments[i] = step
        total = total + step

    if scaled:
        logger.debug('%d increment(s) scaled onto the J2 cap', scaled)
    return StrainPath(increments)


def _legs(
        start: np.ndarray,
        targets: Sequence[np.ndarray],
        steps: int,
) -> List[np.ndarray]:
    out = []
    current = start
    for target in targets:
        out.extend([(target - current) / steps] * steps)
        current = target
    return out


def cyclic_shear_path(
        amplitude: Optional[float] = 0.005,
        cycles: Optional[int] = 2,
        steps: Optional[int] = 50,
        init_vol_strain: Optional[float] = -5e-4,
) -> StrainPath:
    """
    Volumetric preload, then pure shear ε12 cycled between ±`amplitude`,
    ending with a reload to +`amplitude`.
    """
    shear = np.zeros(6)
    shear[5] = SQRT2 * amplitude
    preload = init_vol_strain / 3.0 * IDENTITY6
    targets = []
    for _ in range(cycles):
        targets.extend([preload + shear, preload - shear])
    targets.append(preload + shear)
    return StrainPath(np.vstack([preload] + _legs(preload, targets, steps)))


def triaxial_path(
        axial_strain: Optional[float] = -0.01,
        lateral_ratio: Optional[float] = 0.2,
        n_inc: Optional[int] = 200,
        init_vol_strain: Optional[float] = -5e-4,
) -> StrainPath:
    """
    Isotropic compression, then E11, E22 and E33 increased at a fixed ratio.
    """
    preload = init_vol_strain / 3.0 * IDENTITY6
    direction = np.array([lateral_ratio, lateral_ratio, 1.0, 0.0, 0.0, 0.0])
    steps = np.tile(axial_strain / n_inc * direction, (n_inc, 1))
    return StrainPath(np.vstack([preload, steps]))


@dataclass
class PathRecord(object):
    """
    Macroscopic record of one path, one row per increment.

    `xi` rows hold the point-major ICs [ε_el, ε_pl, α] after each increment.
    """
    increments: np.ndarray
    E: np.ndarray
    Sigma: np.ndarray
    Psi: np.ndarray
    D_inc: np.ndarray
    xi: np.ndarray
    path_id: int = 0

    def __len__(self) -> int:
        return len(self.E)

    @property
    def dxi(self) -> np.ndarray:
        return np.diff(self.xi, axis=0, prepend=np.zeros((1, self.xi.shape[1])))


def simulate_path(
        ens: Ensemble,
        path: StrainPath,
        substeps: Optional[int] = 1,
        path_id: Optional[int] = 0,
) -> PathRecord:
    """
    Integrates every point of `ens` under the macroscopic increments of `path`, from the pristine state.
    """
    n = len(path)
    table = ens.table
    w = ens.weights
    n_p = ens.n_points

    eps_el = np.zeros((n_p, 6))
    eps_pl = np.zeros((n_p, 6))
    alpha = np.zeros(n_p)

    Sigma = np.zeros((n, 6))
    Psi = np.zeros(n)
    D = np.zeros(n)
    xi = np.zeros((n, n_p * IC_WIDTH))
    apexes = 0

    for i, d in enumerate(path.increments):
        if norm(d) >= MAX_INCREMENT_NORM:
            raise StrainIncrementError(
                f'Increment {i} of path {path_id} has norm {norm(d):.3e}, above {MAX_INCREMENT_NORM}.'
            )
        r = integrate_batch(table, eps_el, eps_pl, alpha, d, substeps)
        eps_el, eps_pl, alpha = r.eps_el, r.eps_pl, r.alpha
        apexes += int(np.count_nonzero(r.apex))

        Sigma[i] = w @ r.sigma
        Psi[i] = w @ r.psi
        D[i] = w @ r.d_inc
        xi[i] = np.hstack([eps_el, eps_pl, alpha[:, None]]).ravel()

    if apexes:
        logger.debug('path %d: %d apex return(s)', path_id, apexes)
    logger.debug('path %d: %d increments simulated', path_id, n)
    return PathRecord(
        increments=path.increments.copy(),
        E=path.total,
        Sigma=Sigma,
        Psi=Psi,
        D_inc=D,
        xi=xi,
        path_id=path_id,
    )


def worker_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning('%s=%r is not an integer, falling back to one thread', THREADS_ENV, value)
            return 1
    return min(4, os.cpu_count() or 1)


def simulate_paths(
        ens: Ensemble,
        paths: Sequence[StrainPath],
        substeps: Optional[int] = 1,
        threads: Optional[int] = None,
) -> List[PathRecord]:
    """
    Independent paths run concurrently, results come back in path order.
    """
    threads = threads or worker_count()
    if threads == 1 or len(paths) < 2:
        return [simulate_path(ens, p, substeps, i) for i, p in enumerate(paths)]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(simulate_path, ens, p, substeps, i) for i, p in enumerate(paths)]
        return [f.result() for f in futures]


def augment_rotation(
        rec: PathRecord,
        rotation: Rotation3,
        path_id: Optional[int] = None,
) -> PathRecord:
    """
    Rotates every tensor of the record, macroscopic and pointwise; Ψ, D and α are copied.
    """
    Q = rotation_operator(rotation)
    n_p = rec.xi.shape[1] // IC_WIDTH
    states = rec.xi.reshape(len(rec), n_p, IC_WIDTH).copy()
    states[..., :6] = states[..., :6] @ Q.T
    states[..., 6:12] = states[..., 6:12] @ Q.T

    return replace(
        rec,
        increments=rec.increments @ Q.T,
        E=rec.E @ Q.T,
        Sigma=rec.Sigma @ Q.T,
        Psi=rec.Psi.copy(),
        D_inc=rec.D_inc.copy(),
        xi=states.reshape(len(rec), -1),
        path_id=rec.path_id if path_id is None else path_id,
    )


def macro_first_law_residual(
        rec: PathRecord,
) -> np.ndarray:
    """
    Σ_mid:ΔE − ΔΨ − D per increment, from the pristine state.
    """
    sigma_prev = np.vstack([np.zeros(6), rec.Sigma[:-1]])
    psi_prev = np.concatenate([[0.0], rec.Psi[:-1]])
    work = inner(0.5 * (sigma_prev + rec.Sigma), rec.increments)
    return work - (rec.Psi - psi_prev) - rec.D_inc


def build_dataset(
        records: Sequence[PathRecord],
        basis: PodBasis,
        scalers: Optional[Scalers] = None,
) -> TannDataset:
    """
    Reduced samples (E, Z = Ũᵀξ, Ż = ŨᵀΔξ) with targets Σ, Ψ, D, one per increment.
    """
    for rec in records:
        if rec.xi.shape[1] != basis.n_dof:
            raise LayoutMismatchError(
                f'Path {rec.path_id} holds {rec.xi.shape[1]} ICs per increment, but the basis has {basis.n_dof} rows.'
            )

    def stack(name: str) -> np.ndarray:
        return np.concatenate([getattr(rec, name) for rec in records])

    xi = stack('xi')
    dxi = np.concatenate([rec.dxi for rec in records])
    return TannDataset(
        E=stack('E'),
        Z=basis.project(xi),
        Zdot=basis.project_rate(dxi),
        dE=stack('increments'),
        Sigma=stack('Sigma'),
        Psi=stack('Psi'),
        D=stack('D_inc'),
        path=np.concatenate([np.full(len(rec), rec.path_id) for rec in records]),
        scalers=scalers,
        basis_fingerprint=basis.fingerprint,
    )


def save_records(
        records: Sequence[PathRecord],
        ens: Ensemble,
        directory: str,
        name: Optional[str] = 'ruc',
        meta: Optional[Dict] = None,
) -> str:
    strain, stress = TensorUnit.Strain.value, TensorUnit.Stress.value
    blocks = {
        'E': np.concatenate([r.E for r in records]),
        'DE': np.concatenate([r.increments for r in records]),
        'SIGMA': np.concatenate([r.Sigma for r in records]),
        'PSI': np.concatenate([r.Psi for r in records]),
        'D': np.concatenate([r.D_inc for r in records]),
        'XI': np.concatenate([r.xi for r in records]),
        'PATH': np.concatenate([np.full(len(r), r.path_id, dtype=float) for r in records]),
    }
    units = {
        'E': strain, 'DE': strain, 'SIGMA': stress, 'PSI': stress,
        'D': stress, 'XI': strain, 'PATH': '-',
    }
    doc = dict(meta or {})
    doc.update(
        layout=ens.layout.to_dict(),
        layout_fingerprint=ens.layout.fingerprint,
        ensemble=ens.to_dict(),
        n_paths=len(records),
        n_samples=int(len(blocks['E'])),
    )
    return Artifact(ArtifactKind.RucDataset, meta=doc, blocks=blocks, units=units).write_on(directory, name)


def load_records(
        manifest_path: str,
) -> Tuple[List[PathRecord], Ensemble, Dict]:
    a = Artifact.read(
        manifest_path,
        kind=ArtifactKind.RucDataset,
        required=('E', 'DE', 'SIGMA', 'PSI', 'D', 'XI', 'PATH'),
    )
    b = a.blocks
    ens = Ensemble.from_dict(a.meta['ensemble'])
    if b['XI'].shape[1] != ens.layout.size:
        raise LayoutMismatchError(
            f'Dataset `{manifest_path}` holds {b["XI"].shape[1]} ICs per row, but its ensemble needs {ens.layout.size}.'
        )

    path = b['PATH'].astype(int)
    records = []
    # path ids are contiguous runs in file order
    for pid in dict.fromkeys(path.tolist()):
        idx = np.flatnonzero(path == pid)
        records.append(PathRecord(
            increments=b['DE'][idx],
            E=b['E'][idx],
            Sigma=b['SIGMA'][idx],
            Psi=b['PSI'][idx],
            D_inc=b['D'][idx],
            xi=b['XI'][idx],
            path_id=int(pid),
        ))
    return records, ens, a.meta
