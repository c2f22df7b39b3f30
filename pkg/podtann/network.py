#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Thermodynamics-based energy network over the reduced state S = [E, Z].

One hidden layer with quadratic activation, linear output without bias:

    A = W1·x + b1
    N(x) = Σ_k w2_k · (A_k² − b1_k²)

The `− b1²` term anchors the pristine state, N(0) = 0, for any trained biases.
Stress (or displacement) and dissipation are analytic derivatives of N,
so the first law holds by construction whatever the training quality:

    Σ = ± ∂Ψ̂/∂E        D = −∂Ψ̂/∂Z · Ż

Gradients of the training loss with respect to the weights, second-order terms of the
stress and dissipation terms included, are written out by hand below.
"""

import logging

from dataclasses import (
    asdict,
    dataclass,
    field,
)

from typing import (
    Dict,
    List,
    Optional,
    Tuple,
)

import numpy as np

from .enums import (
    ArtifactKind,
    InferenceMode,
    LossVariant,
    Potential,
)

from .params import ConfigError

from .storage import (
    Artifact,
    FingerprintMismatchError,
)

__all__ = [
    'Scalers',
    'ZQuadratic',
    'TannDataset',
    'TrainingSample',
    'TrainConfig',
    'EnergyModel',
    'EvolutionModel',
    'EpochRecord',
    'InferenceResult',
    'NadamState',
    'DimensionMismatchError',
    'DivergedError',
    'ModeMismatchError',
    'init_network',
    'forward_energy',
    'stress_from_energy',
    'dissipation_pred',
    'loss',
    'loss_and_gradients',
    'nadam_step',
    'train',
    'add_z_offset',
    'train_evolution',
    'infer_path',
    'save_model',
    'load_model',
    'load_dataset',
    'save_evolution',
    'load_evolution',
]

logger = logging.getLogger(__name__)

LOSS_TERMS = ('psi', 'sigma', 'd', 'd_sign')


class DimensionMismatchError(Exception):
    pass


class DivergedError(Exception):
    pass


class ModeMismatchError(Exception):
    pass


def _max_abs(
        a: np.ndarray,
        axis: Optional[int] = None,
) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.ones(a.shape[1:]) if axis == 0 else np.ones(())
    peak = np.max(np.abs(a), axis=axis)
    return np.where(peak > 0.0, peak, 1.0)


def _rows(
        a: np.ndarray,
) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[None, :] if a.ndim == 1 else a


@dataclass
class Scalers(object):
    """
    Pure divisions by per-component max-abs values, no offsets.
    """
    e_scale: np.ndarray
    z_scale: np.ndarray
    conj_scale: np.ndarray
    psi_scale: float = 1.0
    d_scale: float = 1.0

    @classmethod
    def identity(
            cls,
            n_strain: int,
            r: int,
    ) -> 'Scalers':
        return cls(np.ones(n_strain), np.ones(r), np.ones(n_strain))

    @classmethod
    def fit(
            cls,
            E: np.ndarray,
            Z: np.ndarray,
            conjugate: np.ndarray,
            psi: np.ndarray,
            d: np.ndarray,
    ) -> 'Scalers':
        return cls(
            e_scale=_max_abs(E, axis=0),
            z_scale=_max_abs(Z, axis=0),
            conj_scale=_max_abs(conjugate, axis=0),
            psi_scale=float(_max_abs(psi)),
            d_scale=float(_max_abs(d)),
        )

    def to_dict(self) -> Dict:
        return {
            'e_scale': np.asarray(self.e_scale).tolist(),
            'z_scale': np.asarray(self.z_scale).tolist(),
            'conj_scale': np.asarray(self.conj_scale).tolist(),
            'psi_scale': float(self.psi_scale),
            'd_scale': float(self.d_scale),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> 'Scalers':
        return cls(
            e_scale=np.asarray(d['e_scale'], dtype=float),
            z_scale=np.asarray(d['z_scale'], dtype=float),
            conj_scale=np.asarray(d['conj_scale'], dtype=float),
            psi_scale=float(d['psi_scale']),
            d_scale=float(d['d_scale']),
        )


@dataclass
class ZQuadratic(object):
    """
    g(Z) = ½ Zᵀ Q Z + l·Z in raw units, a purely ISV-dependent energy.
    """
    Q: np.ndarray
    l: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.Q, dtype=float)
        self.Q = 0.5 * (q + q.T)
        self.l = np.asarray(self.l, dtype=float)

    @classmethod
    def zero(cls, r: int) -> 'ZQuadratic':
        return cls(np.zeros((r, r)), np.zeros(r))

    def value(self, Z: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum('...i,ij,...j->...', Z, self.Q, Z) + Z @ self.l

    def gradient(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.Q + self.l

    def __add__(self, other: 'ZQuadratic') -> 'ZQuadratic':
        return ZQuadratic(self.Q + other.Q, self.l + other.l)


@dataclass
class TrainingSample(object):
    """
    One increment in scaled units.
    """
    E: np.ndarray
    Z: np.ndarray
    Zdot: np.ndarray
    Sigma: np.ndarray
    Psi: float
    D: float


class TannDataset(object):
    """
    Per-increment reduced records in raw units: strain (or force) E, ISVs Z, their increments Ż,
    the strain increment dE, the conjugate target, energy and dissipation targets, and the path id.
    """

    def __init__(
            self,
            E: np.ndarray,
            Z: np.ndarray,
            Zdot: np.ndarray,
            dE: np.ndarray,
            Sigma: np.ndarray,
            Psi: np.ndarray,
            D: np.ndarray,
            path: np.ndarray,
            potential: Optional[Potential] = Potential.Helmholtz,
            scalers: Optional[Scalers] = None,
            basis_fingerprint: Optional[str] = None,
    ) -> None:
        self.E = np.atleast_2d(np.asarray(E, dtype=float))
        self.Z = np.asarray(Z, dtype=float).reshape(len(self.E), -1)
        self.Zdot = np.asarray(Zdot, dtype=float).reshape(self.Z.shape)
        self.dE = np.asarray(dE, dtype=float).reshape(self.E.shape)
        self.Sigma = np.asarray(Sigma, dtype=float).reshape(self.E.shape)
        self.Psi = np.asarray(Psi, dtype=float).ravel()
        self.D = np.asarray(D, dtype=float).ravel()
        self.path = np.asarray(path).astype(int).ravel()
        self.potential = Potential(potential)
        for name in ('Psi', 'D', 'path'):
            if len(getattr(self, name)) != len(self.E):
                raise DimensionMismatchError(
                    f'Block `{name}` holds {len(getattr(self, name))} rows, but `E` holds {len(self.E)}.'
                )
        self.scalers = scalers or Scalers.fit(self.E, self.Z, self.Sigma, self.Psi, self.D)
        self.basis_fingerprint = basis_fingerprint

    def __len__(self) -> int:
        return len(self.E)

    @property
    def n_strain(self) -> int:
        return self.E.shape[1]

    @property
    def r(self) -> int:
        return self.Z.shape[1]

    def __getitem__(self, i: int) -> TrainingSample:
        s = self.scalers
        return TrainingSample(
            E=self.E[i] / s.e_scale,
            Z=self.Z[i] / s.z_scale,
            Zdot=self.Zdot[i] / s.z_scale,
            Sigma=self.Sigma[i] / s.conj_scale,
            Psi=float(self.Psi[i] / s.psi_scale),
            D=float(self.D[i] / s.d_scale),
        )

    def subset(
            self,
            index: np.ndarray,
    ) -> 'TannDataset':
        return TannDataset(
            self.E[index], self.Z[index], self.Zdot[index], self.dE[index],
            self.Sigma[index], self.Psi[index], self.D[index], self.path[index],
            potential=self.potential,
            scalers=self.scalers,
            basis_fingerprint=self.basis_fingerprint,
        )

    def split_by_path(
            self,
            validation_fraction: float,
            rng: np.random.Generator,
    ) -> Tuple['TannDataset', Optional['TannDataset']]:
        """
        Whole paths go to validation, a single-path dataset has no validation part.
        """
        ids = np.unique(self.path)
        if len(ids) < 2 or validation_fraction <= 0.0:
            return self, None
        n_val = min(len(ids) - 1, max(1, int(round(validation_fraction * len(ids)))))
        val_ids = rng.permutation(ids)[:n_val]
        mask = np.isin(self.path, val_ids)
        logger.debug('validation paths: %s', sorted(int(i) for i in val_ids))
        return self.subset(np.flatnonzero(~mask)), self.subset(np.flatnonzero(mask))

    def to_artifact(
            self,
            meta: Optional[Dict] = None,
    ) -> Artifact:
        doc = dict(meta or {})
        doc.update(
            potential=self.potential.value,
            scalers=self.scalers.to_dict(),
            basis_fingerprint=self.basis_fingerprint,
        )
        return Artifact(
            ArtifactKind.ReducedDataset,
            meta=doc,
            blocks={
                'E': self.E, 'Z': self.Z, 'ZDOT': self.Zdot, 'DE': self.dE,
                'SIGMA': self.Sigma, 'PSI': self.Psi, 'D': self.D, 'PATH': self.path,
            },
        )

    @classmethod
    def from_artifact(
            cls,
            a: Artifact,
    ) -> 'TannDataset':
        b = a.blocks
        return cls(
            b['E'], b['Z'], b['ZDOT'], b['DE'], b['SIGMA'], b['PSI'], b['D'], b['PATH'],
            potential=a.meta.get('potential', Potential.Helmholtz),
            scalers=Scalers.from_dict(a.meta['scalers']),
            basis_fingerprint=a.meta.get('basis_fingerprint'),
        )


@dataclass
class TrainConfig(object):
    loss_variant: LossVariant = LossVariant.Full
    w_psi: float = 1.0
    w_sigma: float = 1.0
    w_d: float = 1.0
    w_d_sign: float = 1.0
    learning_rate: float = 5e-5
    batch: int = 1000
    epochs: int = 100
    seed: int = 0
    early_stop: float = 1e-4
    validation_fraction: float = 0.1
    hidden: int = 100

    def __post_init__(self) -> None:
        self.loss_variant = LossVariant(self.loss_variant)
        if min(self.w_psi, self.w_sigma, self.w_d, self.w_d_sign) < 0.0:
            raise ConfigError('Loss weights expected non-negative values, but a negative one was given.')
        if not any(w > 0.0 for w in self.weights.values()):
            raise ConfigError(
                f'Loss variant `{self.loss_variant.value}` leaves no positive weight.'
            )
        if self.batch < 1 or self.epochs < 0 or self.hidden < 1:
            raise ConfigError(
                f'Parameters `batch`, `hidden` and `epochs` expected positive counts, '
                f'but ({self.batch}, {self.hidden}, {self.epochs}) was given.'
            )

    @property
    def weights(self) -> Dict[str, float]:
        w = {
            'psi': self.w_psi,
            'sigma': self.w_sigma,
            'd': self.w_d,
            'd_sign': self.w_d_sign,
        }
        if self.loss_variant is LossVariant.Reduced:
            w['psi'] = 0.0
            w['d'] = 0.0
        return w

    @classmethod
    def from_config(
            cls,
            cfg: Dict,
    ) -> 'TrainConfig':
        weights = cfg.get('weights', {})
        return cls(
            loss_variant=cfg.get('loss_variant', LossVariant.Full),
            w_psi=weights.get('psi', 1.0),
            w_sigma=weights.get('sigma', 1.0),
            w_d=weights.get('d', 1.0),
            w_d_sign=weights.get('d_sign', 1.0),
            learning_rate=cfg.get('learning_rate', 5e-5),
            batch=cfg.get('batch', 1000),
            epochs=cfg.get('epochs', 100),
            seed=cfg.get('seed', 0),
            early_stop=cfg.get('early_stop', 1e-4),
            validation_fraction=cfg.get('validation_fraction', 0.1),
            hidden=cfg.get('hidden', 100),
        )

    def to_dict(self) -> Dict:
        d = asdict(self)
        d['loss_variant'] = self.loss_variant.value
        return d


class EnergyModel(object):
    """
    Weights, scalers and architecture of an energy network.

    Inputs of every public method are raw: strain (or force) E and ISVs Z.
    """

    def __init__(
            self,
            W1: np.ndarray,
            b1: np.ndarray,
            w2: np.ndarray,
            n_strain: int,
            potential: Optional[Potential] = Potential.Helmholtz,
            scalers: Optional[Scalers] = None,
            offset: Optional[ZQuadratic] = None,
            basis_fingerprint: Optional[str] = None,
    ) -> None:
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        h, n_in = self.W1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise DimensionMismatchError(
                f'Biases and output weights expected {h} entries, but {self.b1.shape} and {self.w2.shape} were given.'
            )
        if not 1 <= n_strain <= n_in:
            raise DimensionMismatchError(
                f'Parameter `n_strain` expected a value in [1, {n_in}], but {n_strain} was given.'
            )
        self.n_strain = int(n_strain)
        self.potential = Potential(potential)
        self.scalers = scalers or Scalers.identity(self.n_strain, n_in - self.n_strain)
        self.offset = offset
        self.basis_fingerprint = basis_fingerprint

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def n_in(self) -> int:
        return self.W1.shape[1]

    @property
    def r(self) -> int:
        return self.n_in - self.n_strain

    @property
    def n_parameters(self) -> int:
        return self.W1.size + self.b1.size + self.w2.size

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'W1': self.W1, 'b1': self.b1, 'w2': self.w2}

    def with_parameters(
            self,
            params: Dict[str, np.ndarray],
    ) -> 'EnergyModel':
        return EnergyModel(
            params['W1'], params['b1'], params['w2'],
            n_strain=self.n_strain,
            potential=self.potential,
            scalers=self.scalers,
            offset=self.offset,
            basis_fingerprint=self.basis_fingerprint,
        )

    def features(
            self,
            E: np.ndarray,
            Z: np.ndarray,
    ) -> np.ndarray:
        E = np.atleast_2d(np.asarray(E, dtype=float))
        Z = np.asarray(Z, dtype=float).reshape(len(E), -1)
        if E.shape[1] != self.n_strain or Z.shape[1] != self.r:
            raise DimensionMismatchError(
                f'Model expects {self.n_strain} strain and {self.r} ISV entries, '
                f'but {E.shape[1]} and {Z.shape[1]} were given.'
            )
        return np.hstack([E / self.scalers.e_scale, Z / self.scalers.z_scale])

    def hidden_activation(
            self,
            x: np.ndarray,
    ) -> np.ndarray:
        return x @ self.W1.T + self.b1

    def network(
            self,
            x: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        :return: hidden pre-activation A, scaled energy N and its input gradient g
        """
        A = self.hidden_activation(x)
        N = (A ** 2 - self.b1 ** 2) @ self.w2
        g = 2.0 * (A * self.w2) @ self.W1
        return A, N, g

    @property
    def conjugate_factor(self) -> np.ndarray:
        """
        Scaled conjugate = factor ⊙ ∂N/∂x_E.
        """
        s = self.scalers
        return self.potential.sign * s.psi_scale / (s.e_scale * s.conj_scale)

    def dissipation_direction(
            self,
            Zdot: np.ndarray,
    ) -> np.ndarray:
        """
        v such that the scaled network dissipation is g·v.
        """
        s = self.scalers
        Zdot = _rows(Zdot)
        v = np.zeros((len(Zdot), self.n_in))
        v[:, self.n_strain:] = -s.psi_scale * Zdot / (s.z_scale * s.d_scale)
        return v

    def offset_dissipation(
            self,
            Z: np.ndarray,
            Zdot: np.ndarray,
    ) -> np.ndarray:
        """
        Scaled dissipation contributed by the ISV-only offset, a constant for training.
        """
        Z = _rows(Z)
        if self.offset is None:
            return np.zeros(len(Z))
        Zdot = _rows(Zdot)
        return -np.sum(self.offset.gradient(Z) * Zdot, axis=1) / self.scalers.d_scale

    def energy(
            self,
            E: np.ndarray,
            Z: np.ndarray,
    ) -> np.ndarray:
        return self.scalers.psi_scale * forward_energy(self, E, Z)

    def conjugate(
            self,
            E: np.ndarray,
            Z: np.ndarray,
    ) -> np.ndarray:
        return stress_from_energy(self, E, Z)

    def dissipation(
            self,
            E: np.ndarray,
            Z: np.ndarray,
            Zdot: np.ndarray,
    ) -> np.ndarray:
        return dissipation_pred(self, E, Z, Zdot)

    def __repr__(self) -> str:
        return f'EnergyModel(n_in={self.n_in}, hidden={self.hidden}, potential={self.potential.value})'


def init_network(
        n_in: int,
        h: int,
        seed: int,
        n_strain: Optional[int] = 6,
        potential: Optional[Potential] = Potential.Helmholtz,
) -> EnergyModel:
    """
    Glorot-uniform weights, zero hidden biases.
    """
    if n_in < 1 or h < 1:
        raise DimensionMismatchError(
            f'Parameters `n_in` and `h` expected positive counts, but ({n_in}, {h}) was given.'
        )
    rng = np.random.default_rng(seed)
    limit_1 = np.sqrt(6.0 / (n_in + h))
    limit_2 = np.sqrt(6.0 / (h + 1))
    W1 = rng.uniform(-limit_1, limit_1, size=(h, n_in))
    w2 = rng.uniform(-limit_2, limit_2, size=h)
    return EnergyModel(W1, np.zeros(h), w2, n_strain=min(n_strain, n_in), potential=potential)


def forward_energy(
        m: EnergyModel,
        E: np.ndarray,
        Z: np.ndarray,
) -> np.ndarray:
    """
    Energy in scaled units, the ISV-only offset included.
    """
    x = m.features(E, Z)
    _, N, _ = m.network(x)
    if m.offset is not None:
        N = N + m.offset.value(np.asarray(Z, dtype=float).reshape(len(x), -1)) / m.scalers.psi_scale
    return N


def stress_from_energy(
        m: EnergyModel,
        E: np.ndarray,
        Z: np.ndarray,
) -> np.ndarray:
    """
    Raw conjugate quantity: +∂Ψ̂/∂E for Helmholtz models, −∂Φ̂/∂F for Gibbs models.
    """
    x = m.features(E, Z)
    _, _, g = m.network(x)
    return m.potential.sign * m.scalers.psi_scale * g[:, :m.n_strain] / m.scalers.e_scale


def dissipation_pred(
        m: EnergyModel,
        E: np.ndarray,
        Z: np.ndarray,
        Zdot: np.ndarray,
) -> np.ndarray:
    """
    Raw dissipation −∂Ψ̂/∂Z · Ż, in the units of the raw energy.
    """
    x = m.features(E, Z)
    _, _, g = m.network(x)
    d = np.sum(g * m.dissipation_direction(Zdot), axis=1) + m.offset_dissipation(Z, Zdot)
    return m.scalers.d_scale * d


def _scaled_targets(
        m: EnergyModel,
        data: TannDataset,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = m.scalers
    return data.Sigma / s.conj_scale, data.Psi / s.psi_scale, data.D / s.d_scale


def loss(
        m: EnergyModel,
        data: TannDataset,
        cfg: TrainConfig,
) -> Tuple[float, Dict[str, float]]:
    total, terms, _ = loss_and_gradients(m, data, cfg, gradients=False)
    return total, terms


def loss_and_gradients(
        m: EnergyModel,
        data: TannDataset,
        cfg: TrainConfig,
        gradients: Optional[bool] = True,
) -> Tuple[float, Dict[str, float], Optional[Dict[str, np.ndarray]]]:
    """
    Weighted sum of the mean squared energy, conjugate and dissipation errors
    plus the mean squared negative part of the predicted dissipation, all in scaled units.
    """
    if len(data) == 0:
        raise DimensionMismatchError('Parameter `data` expected a non-empty batch.')

    B = len(data)
    ns = m.n_strain
    weights = cfg.weights

    x = m.features(data.E, data.Z)
    v = m.dissipation_direction(data.Zdot)
    sigma_t, psi_t, d_t = _scaled_targets(m, data)

    A, N, g = m.network(x)
    c = m.conjugate_factor
    sigma_s = c * g[:, :ns]
    d_s = np.sum(g * v, axis=1) + m.offset_dissipation(data.Z, data.Zdot)
    negative = np.maximum(-d_s, 0.0)

    terms = {
        'psi': float(np.mean((N - psi_t) ** 2)),
        'sigma': float(np.mean((sigma_s - sigma_t) ** 2)),
        'd': float(np.mean((d_s - d_t) ** 2)),
        'd_sign': float(np.mean(negative ** 2)),
    }
    total = float(sum(weights[k] * terms[k] for k in LOSS_TERMS))
    if not gradients:
        return total, terms, None

    g_psi = 2.0 * weights['psi'] * (N - psi_t) / B
    g_sigma = 2.0 * weights['sigma'] * (sigma_s - sigma_t) / (B * ns)
    g_d = 2.0 * weights['d'] * (d_s - d_t) / B - 2.0 * weights['d_sign'] * negative / B

    # T = ∂loss/∂g per sample, M = T·W1ᵀ
    T = g_d[:, None] * v
    T[:, :ns] += g_sigma * c
    M = T @ m.W1.T

    b1, w2 = m.b1, m.w2
    grads = {
        'w2': g_psi @ (A ** 2 - b1 ** 2) + 2.0 * np.sum(A * M, axis=0),
        'b1': 2.0 * w2 * (g_psi @ (A - b1)) + 2.0 * w2 * np.sum(M, axis=0),
        'W1': 2.0 * w2[:, None] * ((g_psi[:, None] * A).T @ x + M.T @ x + A.T @ T),
    }
    return total, terms, grads


@dataclass
class NadamState(object):
    beta_1: float = 0.9
    beta_2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def nadam_step(
        params: Dict[str, np.ndarray],
        grads: Dict[str, np.ndarray],
        state: NadamState,
        lr: float,
) -> Dict[str, np.ndarray]:
    """
    One Nesterov-accelerated Adam update, returned as new arrays.

        m̂ = β1·m / (1 − β1^{t+1}) + (1 − β1)·g / (1 − β1^t)
        v̂ = v / (1 − β2^t)
        θ ← θ − lr · m̂ / (√v̂ + ε)
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta_1, state.beta_2

    updated = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionMismatchError(
                f'Gradient `{name}` has shape {g.shape}, but the parameter has {theta.shape}.'
            )
        m = b1 * state.m.get(name, np.zeros_like(theta)) + (1.0 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(theta)) + (1.0 - b2) * g ** 2
        state.m[name] = m
        state.v[name] = v

        m_hat = b1 * m / (1.0 - b1 ** (t + 1)) + (1.0 - b1) * g / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        updated[name] = theta - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated


@dataclass
class EpochRecord(object):
    epoch: int
    loss: float
    psi: float
    sigma: float
    d: float
    d_sign: float
    val_loss: float = float('nan')


def _monitor(
        record: EpochRecord,
) -> float:
    return record.loss if np.isnan(record.val_loss) else record.val_loss


def train(
        dataset: TannDataset,
        cfg: TrainConfig,
        model: Optional[EnergyModel] = None,
) -> Tuple[EnergyModel, List[EpochRecord]]:
    """
    Mini-batch Nadam on the analytic loss gradients, early stop on the validation loss
    (the training loss for a single-path dataset). A given `model` only seeds the weights and is not modified.
    """
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = init_network(dataset.n_strain + dataset.r, cfg.hidden, cfg.seed, dataset.n_strain, dataset.potential)
    model = EnergyModel(
        model.W1, model.b1, model.w2,
        n_strain=model.n_strain,
        potential=model.potential,
        scalers=dataset.scalers,
        offset=model.offset,
        basis_fingerprint=dataset.basis_fingerprint,
    )

    train_set, val_set = dataset.split_by_path(cfg.validation_fraction, rng)
    state = NadamState()
    curves = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), cfg.batch):
            batch = train_set.subset(order[start:start + cfg.batch])
            _, _, grads = loss_and_gradients(model, batch, cfg)
            model = model.with_parameters(nadam_step(model.parameters(), grads, state, cfg.learning_rate))

        total, terms = loss(model, train_set, cfg)
        val_total = loss(model, val_set, cfg)[0] if val_set is not None else float('nan')
        record = EpochRecord(epoch=epoch + 1, loss=total, val_loss=val_total, **terms)
        curves.append(record)

        if not np.isfinite(total) or (val_set is not None and not np.isfinite(val_total)):
            raise DivergedError(f'Training loss became non-finite at epoch {epoch + 1}.')
        logger.debug('epoch %d: loss %.6e, validation %.6e', epoch + 1, total, val_total)

        if _monitor(record) <= cfg.early_stop:
            logger.info('early stop at epoch %d, monitored loss %.3e <= %.3e', epoch + 1, _monitor(record), cfg.early_stop)
            break

    return model, curves


def add_z_offset(
        m: EnergyModel,
        g: ZQuadratic,
) -> EnergyModel:
    """
    Adds an ISV-only energy: conjugate outputs are untouched, dissipation shifts by −∂g/∂Z·Ż.
    """
    if g.l.shape != (m.r,):
        raise DimensionMismatchError(
            f'Offset expected {m.r} ISV entries, but {g.l.shape[0]} were given.'
        )
    offset = g if m.offset is None else m.offset + g
    return EnergyModel(
        m.W1, m.b1, m.w2,
        n_strain=m.n_strain,
        potential=m.potential,
        scalers=m.scalers,
        offset=offset,
        basis_fingerprint=m.basis_fingerprint,
    )


class EvolutionModel(object):
    """
    Quadratic-activation regressor (E, Z, ΔE) → ΔZ, used for autonomous rollouts.

        Y = W2·(W1·x + b1)² + b2
    """

    def __init__(
            self,
            W1: np.ndarray,
            b1: np.ndarray,
            W2: np.ndarray,
            b2: np.ndarray,
            n_strain: int,
            in_scale: np.ndarray,
            out_scale: np.ndarray,
    ) -> None:
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.W2 = np.asarray(W2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)
        self.n_strain = int(n_strain)
        self.in_scale = np.asarray(in_scale, dtype=float)
        self.out_scale = np.asarray(out_scale, dtype=float)

    @property
    def r(self) -> int:
        return self.W2.shape[0]

    @classmethod
    def initial(
            cls,
            n_strain: int,
            r: int,
            h: int,
            seed: int,
            in_scale: np.ndarray,
            out_scale: np.ndarray,
    ) -> 'EvolutionModel':
        n_in = 2 * n_strain + r
        rng = np.random.default_rng(seed)
        limit_1 = np.sqrt(6.0 / (n_in + h))
        limit_2 = np.sqrt(6.0 / (h + r))
        return cls(
            rng.uniform(-limit_1, limit_1, size=(h, n_in)),
            np.zeros(h),
            rng.uniform(-limit_2, limit_2, size=(r, h)),
            np.zeros(r),
            n_strain, in_scale, out_scale,
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'W1': self.W1, 'b1': self.b1, 'W2': self.W2, 'b2': self.b2}

    def with_parameters(self, p: Dict[str, np.ndarray]) -> 'EvolutionModel':
        return EvolutionModel(p['W1'], p['b1'], p['W2'], p['b2'], self.n_strain, self.in_scale, self.out_scale)

    def inputs(
            self,
            E: np.ndarray,
            Z: np.ndarray,
            dE: np.ndarray,
    ) -> np.ndarray:
        E = np.atleast_2d(np.asarray(E, dtype=float))
        x = np.hstack([E, np.asarray(Z, dtype=float).reshape(len(E), -1), np.asarray(dE, dtype=float).reshape(E.shape)])
        if x.shape[1] != self.W1.shape[1]:
            raise DimensionMismatchError(
                f'Evolution model expects {self.W1.shape[1]} inputs, but {x.shape[1]} were given.'
            )
        return x / self.in_scale

    def scaled_output(
            self,
            x: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        A = x @ self.W1.T + self.b1
        return A, (A ** 2) @ self.W2.T + self.b2

    def predict(
            self,
            E: np.ndarray,
            Z: np.ndarray,
            dE: np.ndarray,
    ) -> np.ndarray:
        _, Y = self.scaled_output(self.inputs(E, Z, dE))
        return Y * self.out_scale

    def loss_and_gradients(
            self,
            x: np.ndarray,
            y: np.ndarray,
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        A, Y = self.scaled_output(x)
        residual = Y - y
        G = 2.0 * residual / residual.size
        dA = 2.0 * A * (G @ self.W2)
        grads = {
            'W2': G.T @ (A ** 2),
            'b2': np.sum(G, axis=0),
            'W1': dA.T @ x,
            'b1': np.sum(dA, axis=0),
        }
        return float(np.mean(residual ** 2)), grads


def _previous_strain(
        data: TannDataset,
) -> np.ndarray:
    return data.E - data.dE


def train_evolution(
        dataset: TannDataset,
        cfg: TrainConfig,
) -> Tuple[EvolutionModel, List[float]]:
    """
    Regresses the ISV increment of each sample on the state before it and the applied increment.
    """
    E_prev = _previous_strain(dataset)
    Z_prev = dataset.Z - dataset.Zdot
    raw_x = np.hstack([E_prev, Z_prev, dataset.dE])
    in_scale = _max_abs(raw_x, axis=0)
    out_scale = _max_abs(dataset.Zdot, axis=0)

    model = EvolutionModel.initial(dataset.n_strain, dataset.r, cfg.hidden, cfg.seed, in_scale, out_scale)
    x = raw_x / in_scale
    y = dataset.Zdot / out_scale

    rng = np.random.default_rng(cfg.seed)
    state = NadamState()
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            _, grads = model.loss_and_gradients(x[idx], y[idx])
            model = model.with_parameters(nadam_step(model.parameters(), grads, state, cfg.learning_rate))

        value, _ = model.loss_and_gradients(x, y)
        if not np.isfinite(value):
            raise DivergedError(f'Evolution loss became non-finite at epoch {epoch + 1}.')
        curve.append(value)
        if value <= cfg.early_stop:
            logger.info('evolution early stop at epoch %d, loss %.3e', epoch + 1, value)
            break
    return model, curve


@dataclass
class InferenceResult(object):
    E: np.ndarray
    conjugate: np.ndarray
    psi: np.ndarray
    d: np.ndarray
    Z: np.ndarray


def infer_path(
        m: EnergyModel,
        dE: np.ndarray,
        Z: Optional[np.ndarray] = None,
        Zdot: Optional[np.ndarray] = None,
        evolution: Optional[EvolutionModel] = None,
        mode: Optional[InferenceMode] = InferenceMode.TeacherForced,
        E0: Optional[np.ndarray] = None,
        z0: Optional[np.ndarray] = None,
) -> InferenceResult:
    """
    Runs the model along the strain (or force) increments `dE`.

    Teacher-forced runs read Z and Ż of every increment from the record,
    autonomous runs advance Z with the evolution model from `z0` (the pristine 0 by default).
    """
    dE = np.atleast_2d(np.asarray(dE, dtype=float))
    E_start = np.zeros(m.n_strain) if E0 is None else np.asarray(E0, dtype=float)
    E = E_start + np.cumsum(dE, axis=0)
    mode = InferenceMode(mode)

    if mode is InferenceMode.TeacherForced:
        if Z is None or Zdot is None:
            raise ModeMismatchError('Teacher-forced inference needs the recorded `Z` and `Zdot`.')
        Z = np.asarray(Z, dtype=float).reshape(len(E), m.r)
        Zdot = np.asarray(Zdot, dtype=float).reshape(Z.shape)
    else:
        if evolution is None:
            raise ModeMismatchError('Autonomous inference needs an evolution model, but none was given.')
        z = np.zeros(m.r) if z0 is None else np.asarray(z0, dtype=float)
        Z = np.empty((len(E), m.r))
        Zdot = np.empty_like(Z)
        E_prev = E_start
        for i in range(len(E)):
            dz = evolution.predict(E_prev, z, dE[i])[0]
            z = z + dz
            Z[i] = z
            Zdot[i] = dz
            E_prev = E[i]

    return InferenceResult(
        E=E,
        conjugate=stress_from_energy(m, E, Z),
        psi=m.energy(E, Z),
        d=dissipation_pred(m, E, Z, Zdot),
        Z=Z,
    )


def save_model(
        m: EnergyModel,
        directory: str,
        name: Optional[str] = 'model',
        meta: Optional[Dict] = None,
) -> str:
    s = m.scalers
    blocks = {
        'W1': m.W1,
        'B1': m.b1,
        'W2': m.w2,
        'E_SCALE': s.e_scale,
        'Z_SCALE': s.z_scale,
        'CONJ_SCALE': s.conj_scale,
        'PSI_SCALE': np.array([s.psi_scale]),
        'D_SCALE': np.array([s.d_scale]),
    }
    if m.offset is not None:
        blocks['OFFSET_Q'] = m.offset.Q
        blocks['OFFSET_L'] = m.offset.l

    doc = dict(meta or {})
    doc.update(
        n_strain=m.n_strain,
        n_in=m.n_in,
        hidden=m.hidden,
        r=m.r,
        potential=m.potential.value,
        activation='quadratic',
        basis_fingerprint=m.basis_fingerprint,
    )
    return Artifact(ArtifactKind.Model, meta=doc, blocks=blocks).write_on(directory, name)


def load_model(
        manifest_path: str,
        basis_fingerprint: Optional[str] = None,
) -> EnergyModel:
    a = Artifact.read(manifest_path, kind=ArtifactKind.Model, required=('W1', 'B1', 'W2'))
    recorded = a.meta.get('basis_fingerprint')
    if basis_fingerprint is not None and recorded != basis_fingerprint:
        raise FingerprintMismatchError(
            f'Model `{manifest_path}` was trained on basis {str(recorded)[:12]}, '
            f'but basis {basis_fingerprint[:12]} was supplied.'
        )

    b = a.blocks
    scalers = Scalers(
        e_scale=b['E_SCALE'],
        z_scale=b['Z_SCALE'],
        conj_scale=b['CONJ_SCALE'],
        psi_scale=float(b['PSI_SCALE'][0]),
        d_scale=float(b['D_SCALE'][0]),
    )
    offset = ZQuadratic(b['OFFSET_Q'], b['OFFSET_L']) if 'OFFSET_Q' in b else None
    return EnergyModel(
        b['W1'], b['B1'], b['W2'],
        n_strain=int(a.meta['n_strain']),
        potential=a.meta.get('potential', Potential.Helmholtz),
        scalers=scalers,
        offset=offset,
        basis_fingerprint=recorded,
    )


def load_dataset(
        manifest_path: str,
) -> TannDataset:
    a = Artifact.read(
        manifest_path,
        kind=ArtifactKind.ReducedDataset,
        required=('E', 'Z', 'ZDOT', 'DE', 'SIGMA', 'PSI', 'D', 'PATH'),
    )
    return TannDataset.from_artifact(a)


def save_evolution(
        m: EvolutionModel,
        directory: str,
        name: Optional[str] = 'evolution',
        meta: Optional[Dict] = None,
) -> str:
    doc = dict(meta or {})
    doc.update(n_strain=m.n_strain, r=m.r, hidden=m.W1.shape[0])
    blocks = {
        'W1': m.W1, 'B1': m.b1, 'W2': m.W2, 'B2': m.b2,
        'IN_SCALE': m.in_scale, 'OUT_SCALE': m.out_scale,
    }
    return Artifact(ArtifactKind.Evolution, meta=doc, blocks=blocks).write_on(directory, name)


def load_evolution(
        manifest_path: str,
) -> EvolutionModel:
    a = Artifact.read(manifest_path, kind=ArtifactKind.Evolution, required=('W1', 'B1', 'W2', 'B2'))
    b = a.blocks
    return EvolutionModel(
        b['W1'], b['B1'], b['W2'], b['B2'],
        n_strain=int(a.meta['n_strain']),
        in_scale=b['IN_SCALE'],
        out_scale=b['OUT_SCALE'],
    )
