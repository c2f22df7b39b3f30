#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Spatially correlated Gaussian random fields on a periodic 3D grid.

    f = IFFT( √S(k) · FFT(w) ),    S(k) = exp(−|k|²/κ²),    k = 2π · fftfreq(N, d=dx)

w is real white noise, so its transform is Hermitian and f is real up to round-off.
The construction is a circular convolution: a circular shift of w shifts f by the same amount.
"""

import logging

from dataclasses import dataclass

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
    YieldModel,
)

from .plasticity import MaterialParams

from .storage import Artifact

__all__ = [
    'CORRELATED_TABLE',
    'CAP_PARAMETERS',
    'GridSpec',
    'FieldSample',
    'AssignedProperties',
    'GridError',
    'GridMismatchError',
    'DegenerateFieldError',
    'power_spectrum',
    'correlated_field_from_noise',
    'generate_correlated_field',
    'scale_field',
    'assign_properties',
    'correlated_properties',
    'theoretical_autocorrelation',
    'empirical_autocorrelation',
    'radial_average',
    'histogram',
    'save_field',
    'load_field',
]

logger = logging.getLogger(__name__)

# (mean, std) per parameter; std 0 means homogeneous
CORRELATED_TABLE: Dict[str, Tuple[float, float]] = {
    'beta': (40.0, 0.1),
    'd': (15.0, 0.5),
    'E': (18000.0, 5000.0),
    'nu': (0.3, 0.01),
    'p0': (100.0, 0.5),
    'alpha': (0.05, 0.0),
    'R': (1.2, 0.0),
    'K': (0.8, 0.0),
    'H': (1000.0, 0.0),
}

# volumetric-cap parameters, read but not used by the linear cone
CAP_PARAMETERS = ('p0', 'alpha', 'R', 'K')

_ALIASES = {
    'beta': 'phi',
    'd': 'c',
}

DEFAULT_CLIP: Dict[str, Tuple[Optional[float], Optional[float]]] = {
    'E': (1e-6, None),
    'nu': (-0.99, 0.499),
    'c': (0.0, None),
    'phi': (0.0, 89.0),
    'H': (0.0, None),
}

_REALNESS_TOL = 1e-10


class GridError(Exception):
    pass


class GridMismatchError(Exception):
    pass


class DegenerateFieldError(Exception):
    pass


@dataclass(frozen=True)
class GridSpec(object):
    lengths: Tuple[float, float, float]
    shape: Tuple[int, int, int]

    def __post_init__(self) -> None:
        lengths = tuple(float(v) for v in self.lengths)
        shape = tuple(int(v) for v in self.shape)
        if len(lengths) != 3 or len(shape) != 3:
            raise GridError(
                f'Grid expected three lengths and three resolutions, but {lengths} and {shape} were given.'
            )
        if min(lengths) <= 0.0 or min(shape) < 1:
            raise GridError(
                f'Grid expected positive lengths and resolutions, but {lengths} and {shape} were given.'
            )
        object.__setattr__(self, 'lengths', lengths)
        object.__setattr__(self, 'shape', shape)

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return tuple(l / n for l, n in zip(self.lengths, self.shape))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def wavenumbers(self) -> List[np.ndarray]:
        return [2.0 * np.pi * np.fft.fftfreq(n, d=d) for n, d in zip(self.shape, self.spacing)]

    def lag_distances(self) -> np.ndarray:
        """
        Minimum-image distance of every cell from the origin cell.
        """
        axes = []
        for n, d in zip(self.shape, self.spacing):
            i = np.arange(n)
            axes.append(np.minimum(i, n - i) * d)
        x, y, z = np.meshgrid(*axes, indexing='ij')
        return np.sqrt(x ** 2 + y ** 2 + z ** 2)

    def to_dict(self) -> Dict:
        return {'lengths': list(self.lengths), 'shape': list(self.shape)}

    @classmethod
    def from_dict(cls, d: Dict) -> 'GridSpec':
        return cls(tuple(d['lengths']), tuple(d['shape']))


@dataclass
class FieldSample(object):
    values: np.ndarray
    grid: GridSpec
    kappa: float
    seed: Optional[int] = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    def stats(self) -> Dict[str, float]:
        return {
            'mean': self.mean,
            'std': self.std,
            'min': float(np.min(self.values)),
            'max': float(np.max(self.values)),
        }


def power_spectrum(
        grid: GridSpec,
        kappa: float,
) -> np.ndarray:
    if not kappa > 0.0:
        raise GridError(f'Parameter `kappa` expected a positive value, but {kappa} was given.')
    kx, ky, kz = np.meshgrid(*grid.wavenumbers(), indexing='ij')
    return np.exp(-(kx ** 2 + ky ** 2 + kz ** 2) / kappa ** 2)


def correlated_field_from_noise(
        noise: np.ndarray,
        grid: GridSpec,
        kappa: float,
) -> np.ndarray:
    noise = np.asarray(noise, dtype=float)
    if noise.shape != grid.shape:
        raise GridMismatchError(
            f'Noise of shape {noise.shape} does not match the grid {grid.shape}.'
        )
    f = np.fft.ifftn(np.sqrt(power_spectrum(grid, kappa)) * np.fft.fftn(noise))
    residue = float(np.linalg.norm(f.imag))
    if residue > _REALNESS_TOL * max(float(np.linalg.norm(f.real)), 1.0):
        logger.warning('imaginary residue %.3e after the inverse transform', residue)
    return f.real


def generate_correlated_field(
        grid: GridSpec,
        kappa: float,
        seed: int,
) -> FieldSample:
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    return FieldSample(correlated_field_from_noise(noise, grid, kappa), grid, float(kappa), seed)


def scale_field(
        f: FieldSample,
        target_mean: float,
        target_std: float,
) -> FieldSample:
    """
    f′ = (f − μ)/σ · σ′ + μ′ with the population (ddof = 0) statistics of the sample.
    """
    if target_std < 0.0:
        raise ValueError(f'Parameter `target_std` expected a non-negative value, but {target_std} was given.')
    mu = np.mean(f.values)
    sigma = np.std(f.values)
    if sigma == 0.0:
        raise DegenerateFieldError('Field has zero standard deviation and cannot be rescaled.')
    values = (f.values - mu) / sigma * target_std + target_mean
    return FieldSample(values, f.grid, f.kappa, f.seed)


@dataclass
class AssignedProperties(object):
    params: List[MaterialParams]
    clip_counts: Dict[str, int]
    ignored: List[str]


def _resolve(
        name: str,
) -> str:
    return _ALIASES.get(name, name)


def assign_properties(
        fields: Dict[str, FieldSample],
        homogeneous: Optional[Dict[str, float]] = None,
        clip_rules: Optional[Dict[str, Tuple[Optional[float], Optional[float]]]] = None,
        model: Optional[YieldModel] = YieldModel.DruckerPrager,
) -> AssignedProperties:
    """
    One associative `MaterialParams` per grid cell.

    `fields` and `homogeneous` accept the names of `MaterialParams` and the aliases
    'beta' (friction angle) and 'd' (cohesion); cap parameters are ignored.
    """
    homogeneous = dict(homogeneous or {})
    clip_rules = DEFAULT_CLIP if clip_rules is None else clip_rules

    if not fields:
        raise GridMismatchError('Parameter `fields` expected at least one field, but none was given.')
    grids = {f.grid for f in fields.values()}
    if len(grids) > 1:
        raise GridMismatchError(f'Fields expected one shared grid, but {len(grids)} different grids were given.')
    n = next(iter(grids)).size

    ignored = sorted(k for k in list(fields) + list(homogeneous) if k in CAP_PARAMETERS)
    if ignored:
        logger.warning('cap parameters %s are read but ignored by the linear cone', ignored)

    columns: Dict[str, np.ndarray] = {}
    for name, value in homogeneous.items():
        if name not in CAP_PARAMETERS:
            columns[_resolve(name)] = np.full(n, float(value))
    for name, f in fields.items():
        if name not in CAP_PARAMETERS:
            columns[_resolve(name)] = np.asarray(f.values, dtype=float).ravel()

    if 'E' not in columns or 'nu' not in columns:
        raise GridMismatchError('Properties expected at least `E` and `nu`, but one is missing.')

    clip_counts = {}
    for name, (low, high) in clip_rules.items():
        if name not in columns:
            continue
        clipped = np.clip(columns[name], low, high)
        clip_counts[name] = int(np.count_nonzero(clipped != columns[name]))
        columns[name] = clipped
    if any(clip_counts.values()):
        logger.info('clipped cells: %s', {k: v for k, v in clip_counts.items() if v})

    model = YieldModel(model)
    params = []
    for i in range(n):
        kwargs = {k: float(v[i]) for k, v in columns.items()}
        if 'phi' in kwargs:
            kwargs['psi_dil'] = kwargs['phi']
        params.append(MaterialParams(model=model, **kwargs))
    return AssignedProperties(params=params, clip_counts=clip_counts, ignored=ignored)


def correlated_properties(
        grid: GridSpec,
        kappa: float,
        seed: int,
        table: Optional[Dict[str, Tuple[float, float]]] = None,
) -> AssignedProperties:
    """
    Independent correlated fields for every parameter of `table` with a positive std,
    constants for the others.
    """
    table = CORRELATED_TABLE if table is None else table
    children = np.random.SeedSequence(seed).spawn(len(table))

    fields = {}
    homogeneous = {}
    for (name, (mean, std)), child in zip(sorted(table.items()), children):
        if std > 0.0:
            raw = generate_correlated_field(grid, kappa, int(child.generate_state(1)[0]))
            fields[name] = scale_field(raw, mean, std)
        else:
            homogeneous[name] = mean
    return assign_properties(fields, homogeneous)


def theoretical_autocorrelation(
        grid: GridSpec,
        kappa: float,
) -> np.ndarray:
    """
    Normalised autocorrelation at every lag: the inverse transform of S.
    """
    c = np.fft.ifftn(power_spectrum(grid, kappa)).real
    return c / c.flat[0]


def empirical_autocorrelation(
        samples: Sequence[FieldSample],
) -> np.ndarray:
    """
    Normalised autocorrelation from the averaged periodogram of the samples.
    """
    if not samples:
        raise ValueError('Parameter `samples` expected at least one field, but none was given.')
    power = np.zeros(samples[0].grid.shape)
    for s in samples:
        v = s.values - np.mean(s.values)
        power += np.abs(np.fft.fftn(v)) ** 2
    c = np.fft.ifftn(power / len(samples)).real
    return c / c.flat[0]


def radial_average(
        grid: GridSpec,
        values: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Averages a lag-indexed array over shells of the minimum-image lag distance,
    shells one smallest grid spacing wide.
    """
    width = min(grid.spacing)
    shell = np.rint(grid.lag_distances() / width).astype(int).ravel()
    counts = np.bincount(shell)
    sums = np.bincount(shell, weights=np.asarray(values, dtype=float).ravel())
    used = counts > 0
    return np.flatnonzero(used) * width, sums[used] / counts[used]


def histogram(
        f: FieldSample,
        bins: Optional[int] = 50,
) -> Dict[str, np.ndarray]:
    counts, edges = np.histogram(f.values, bins=bins)
    width = np.diff(edges)
    return {
        'bin_left': edges[:-1],
        'bin_right': edges[1:],
        'count': counts.astype(float),
        'density': counts / (counts.sum() * width),
    }


def save_field(
        f: FieldSample,
        directory: str,
        name: Optional[str] = 'field',
        meta: Optional[Dict] = None,
) -> str:
    doc = dict(meta or {})
    doc.update(grid=f.grid.to_dict(), kappa=f.kappa, seed=f.seed, stats=f.stats())
    return Artifact(ArtifactKind.Field, meta=doc, blocks={'VALUES': f.values}).write_on(directory, name)


def load_field(
        manifest_path: str,
) -> FieldSample:
    a = Artifact.read(manifest_path, kind=ArtifactKind.Field, required=('VALUES',))
    grid = GridSpec.from_dict(a.meta['grid'])
    values = a.blocks['VALUES']
    if values.shape != grid.shape:
        raise GridMismatchError(f'Field values of shape {values.shape} do not match the grid {grid.shape}.')
    return FieldSample(values, grid, float(a.meta['kappa']), a.meta.get('seed'))
