#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Pointwise small-strain elasto-plasticity with linear isotropic hardening.

Both yield criteria are written as one smooth cone

    f(σ, α) = √J2 + η·I1 − (k + H·α)

von Mises being the η = 0 member (k = 2·Su/√3). Flow follows the potential
g = √J2 + η_g·I1 (η_g = η for associative parameters), α accumulates the plastic multiplier.

Free energy and dissipation of an increment:

    ψ     = ½ ε_el:C:ε_el + ½ H α²
    d_inc = σ_mid:Δε_pl − H·α_mid·Δα

so that σ_mid:Δε − Δψ − d_inc vanishes up to round-off on every increment.
"""

import logging

from dataclasses import (
    asdict,
    dataclass,
    field,
)

from typing import (
    Dict,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from scipy.integrate import solve_ivp

from .enums import (
    TensorUnit,
    YieldModel,
)

from .tensors import (
    IDENTITY6,
    SQRT2,
    SymTensor6,
    deviator,
    inner,
    norm,
    trace,
)

__all__ = [
    'MaterialParams',
    'MaterialTable',
    'PointState',
    'IncrementResult',
    'BatchIncrement',
    'MaterialParamsError',
    'StrainIncrementError',
    'NonConvergenceError',
    'elastic_stiffness',
    'dp_params_from_mc',
    'integrate_increment',
    'integrate_batch',
    'integrate_path',
    'yield_function',
]

logger = logging.getLogger(__name__)

FLOW_RTOL = 1e-10

FLOW_ATOL = 1e-14

MAX_INCREMENT_NORM = 0.05

IC_WIDTH = 13


class MaterialParamsError(Exception):
    pass


class StrainIncrementError(Exception):
    pass


class NonConvergenceError(Exception):

    def __init__(
            self,
            message: str,
            point_index: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.point_index = point_index


def dp_params_from_mc(
        c: float,
        phi: float,
) -> Tuple[float, float]:
    """
    Drucker-Prager cone matched to the Mohr-Coulomb compression meridian.

    :param c: cohesion (kPa)
    :param phi: friction angle (deg)
    :return: (alpha_dp, k_dp) of `√J2 + alpha_dp·I1 = k_dp`
    """
    if not 0.0 <= phi < 90.0:
        raise MaterialParamsError(
            f'Parameter `phi` expected a value in [0, 90), but {phi} was given.'
        )
    s = np.sin(np.radians(phi))
    denominator = np.sqrt(3.0) * (3.0 - s)
    alpha_dp = 2.0 * s / denominator
    k_dp = 6.0 * c * np.cos(np.radians(phi)) / denominator
    return float(alpha_dp), float(k_dp)


@dataclass(frozen=True)
class MaterialParams(object):
    E: float
    nu: float
    model: YieldModel = YieldModel.DruckerPrager
    c: float = 0.0
    phi: float = 0.0
    psi_dil: Optional[float] = None
    H: float = 0.0
    Su: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'model', YieldModel(self.model))
        if self.psi_dil is None:
            object.__setattr__(self, 'psi_dil', self.phi)

        if not self.E > 0.0:
            raise MaterialParamsError(
                f'Parameter `E` expected a positive value, but {self.E} was given.'
            )
        if not -1.0 < self.nu < 0.5:
            raise MaterialParamsError(
                f'Parameter `nu` expected a value in (-1, 0.5), but {self.nu} was given.'
            )
        if self.H < 0.0:
            raise MaterialParamsError(
                f'Parameter `H` expected a non-negative value, but {self.H} was given.'
            )
        if self.c < 0.0 or self.Su < 0.0:
            raise MaterialParamsError(
                'Parameters `c` and `Su` expected non-negative values, but a negative one was given.'
            )
        if not 0.0 <= self.phi < 90.0 or not 0.0 <= self.psi_dil < 90.0:
            raise MaterialParamsError(
                f'Parameters `phi` and `psi_dil` expected values in [0, 90), '
                f'but ({self.phi}, {self.psi_dil}) was given.'
            )

    @property
    def associative(self) -> bool:
        return self.model is YieldModel.VonMises or self.phi == self.psi_dil

    @property
    def bulk_modulus(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def cone(self) -> Tuple[float, float, float]:
        """
        (η, η_g, k) of the yield cone and the plastic potential.
        """
        if self.model is YieldModel.VonMises:
            _, k = dp_params_from_mc(self.Su, 0.0)
            return 0.0, 0.0, k

        eta, k = dp_params_from_mc(self.c, self.phi)
        eta_g, _ = dp_params_from_mc(0.0, self.psi_dil)
        return eta, eta_g, k

    def to_dict(self) -> Dict:
        d = asdict(self)
        d['model'] = self.model.value
        return d

    @classmethod
    def from_dict(
            cls,
            d: Dict,
    ) -> 'MaterialParams':
        return cls(**d)


class MaterialTable(object):
    """
    Column view of many `MaterialParams`, the layout consumed by `integrate_batch`.
    """

    def __init__(
            self,
            params: Sequence[MaterialParams],
    ) -> None:
        if not params:
            raise MaterialParamsError(
                'Parameter `params` expected at least one entry, but none was given.'
            )
        self.params = tuple(params)

        cones = np.array([p.cone for p in self.params], dtype=float)
        self.G = np.array([p.shear_modulus for p in self.params])
        self.K = np.array([p.bulk_modulus for p in self.params])
        self.H = np.array([p.H for p in self.params])
        self.eta = cones[:, 0]
        self.eta_g = cones[:, 1]
        self.k = cones[:, 2]
        self.yield_tol = 1e-8 * (np.array([p.c + p.Su for p in self.params]) + 1.0)
        # ∂f/∂λ along the flow, G + 9K·η·η_g + H
        self.slope = self.G + 9.0 * self.K * self.eta * self.eta_g + self.H

    def __len__(self) -> int:
        return len(self.params)

    def subset(
            self,
            mask: np.ndarray,
    ) -> 'MaterialTable':
        return MaterialTable([p for p, keep in zip(self.params, mask) if keep])

    def stress(
            self,
            eps_el: np.ndarray,
    ) -> np.ndarray:
        vol = trace(eps_el)
        return (self.K * vol)[..., None] * IDENTITY6 + 2.0 * self.G[..., None] * deviator(eps_el)

    def energy(
            self,
            eps_el: np.ndarray,
            alpha: np.ndarray,
    ) -> np.ndarray:
        return 0.5 * inner(self.stress(eps_el), eps_el) + 0.5 * self.H * alpha ** 2


@dataclass
class PointState(object):
    eps_el: np.ndarray = field(default_factory=lambda: np.zeros(6))
    eps_pl: np.ndarray = field(default_factory=lambda: np.zeros(6))
    alpha: float = 0.0

    @property
    def ics(self) -> np.ndarray:
        """
        [ε_el (6), ε_pl (6), α]
        """
        return np.concatenate([self.eps_el, self.eps_pl, [self.alpha]])

    @property
    def total_strain(self) -> np.ndarray:
        return self.eps_el + self.eps_pl


@dataclass
class IncrementResult(object):
    state_new: PointState
    sigma: SymTensor6
    psi: float
    d_inc: float
    apex: bool = False


@dataclass
class BatchIncrement(object):
    eps_el: np.ndarray
    eps_pl: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    d_inc: np.ndarray
    plastic: np.ndarray
    apex: np.ndarray


def elastic_stiffness(
        params: MaterialParams,
) -> np.ndarray:
    if params.nu >= 0.5:
        raise MaterialParamsError(
            f'Parameter `nu` expected a value below 0.5, but {params.nu} was given.'
        )
    p_vol = np.outer(IDENTITY6, IDENTITY6) / 3.0
    p_dev = np.eye(6) - p_vol
    return 3.0 * params.bulk_modulus * p_vol + 2.0 * params.shear_modulus * p_dev


def yield_function(
        table: MaterialTable,
        sigma: np.ndarray,
        alpha: np.ndarray,
) -> np.ndarray:
    sqrt_j2 = norm(deviator(sigma)) / SQRT2
    return sqrt_j2 + table.eta * trace(sigma) - (table.k + table.H * alpha)


def integrate_batch(
        table: MaterialTable,
        eps_el: np.ndarray,
        eps_pl: np.ndarray,
        alpha: np.ndarray,
        d_eps: np.ndarray,
        substeps: Optional[int] = 1,
) -> BatchIncrement:
    """
    One strain increment for every point of `table`, all points driven by `d_eps`
    (shape (6,) for a uniform strain, or (n, 6)).

    The elastic part of a yielding increment is split off in closed form and the rest follows
    the continuum flow on the cone, integrated in steps of at most 1/`substeps` of the increment.
    Points whose return passes the apex take the closed-form apex return.
    """
    d_eps = np.broadcast_to(np.asarray(d_eps, dtype=float), eps_el.shape)
    eps_el_tr = eps_el + d_eps
    vol_tr = trace(eps_el_tr)
    e_norm = norm(deviator(eps_el_tr))

    i1_tr = 3.0 * table.K * vol_tr
    sqrt_j2_tr = SQRT2 * table.G * e_norm
    f_tr = sqrt_j2_tr + table.eta * i1_tr - (table.k + table.H * alpha)

    plastic = f_tr > table.yield_tol
    d_lambda = np.zeros_like(f_tr)
    apex = np.zeros_like(plastic)
    eps_el_new = eps_el_tr.copy()

    if np.any(plastic):
        # radial return overshoots the apex
        apex = plastic & (sqrt_j2_tr * table.slope < table.G * f_tr)
        cone = plastic & ~apex

        if np.any(cone):
            eps_el_new[cone], d_lambda[cone] = _cone_flow(
                table.subset(cone), eps_el[cone], alpha[cone], d_eps[cone], substeps, np.flatnonzero(cone),
            )

        if np.any(apex):
            d_lambda[apex] = _apex_multiplier(table, i1_tr, alpha, apex)
            eps_el_new[apex] = (vol_tr[apex] / 3.0 - table.eta_g[apex] * d_lambda[apex])[:, None] * IDENTITY6
            logger.debug('apex return at %d point(s)', int(np.count_nonzero(apex)))

    d_eps_pl = eps_el_tr - eps_el_new
    alpha_new = alpha + d_lambda

    sigma_old = table.stress(eps_el)
    sigma = table.stress(eps_el_new)
    psi = 0.5 * inner(sigma, eps_el_new) + 0.5 * table.H * alpha_new ** 2
    d_inc = inner(0.5 * (sigma_old + sigma), d_eps_pl) - table.H * 0.5 * (alpha + alpha_new) * d_lambda

    return BatchIncrement(
        eps_el=eps_el_new,
        eps_pl=eps_pl + d_eps_pl,
        alpha=alpha_new,
        sigma=sigma,
        psi=psi,
        d_inc=d_inc,
        plastic=plastic,
        apex=apex,
    )


def _elastic_fraction(
        table: MaterialTable,
        eps_el: np.ndarray,
        alpha: np.ndarray,
        d_eps: np.ndarray,
) -> np.ndarray:
    """
    Largest t in [0, 1] with f(σ_n + t·Δσ_tr) = 0.

    Along the trial line √J2 is the root of a quadratic in t and the rest of f is linear,
    so squaring gives a quadratic whose roots are kept where k + Hα − η·I1 stays non-negative.
    """
    sigma_n = table.stress(eps_el)
    d_sigma = table.stress(d_eps)
    s_n = deviator(sigma_n)
    d_s = deviator(d_sigma)

    level = table.k + table.H * alpha - table.eta * trace(sigma_n)
    rate = table.eta * trace(d_sigma)

    a2 = 0.5 * inner(d_s, d_s) - rate ** 2
    a1 = inner(s_n, d_s) + 2.0 * level * rate
    a0 = 0.5 * inner(s_n, s_n) - level ** 2

    root = np.sqrt(np.maximum(a1 ** 2 - 4.0 * a2 * a0, 0.0))
    q = -0.5 * (a1 + np.copysign(root, a1))
    slack = table.yield_tol[:, None]
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        roots = np.stack([q / a2, a0 / q], axis=-1)
        valid = (
                np.isfinite(roots)
                & (roots >= -1e-12) & (roots <= 1.0 + 1e-12)
                & (level[:, None] - rate[:, None] * roots >= -slack)
        )
    return np.clip(np.max(np.where(valid, roots, 0.0), axis=-1), 0.0, 1.0)


def _cone_flow(
        table: MaterialTable,
        eps_el: np.ndarray,
        alpha: np.ndarray,
        d_eps: np.ndarray,
        substeps: int,
        index: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrates ε̇_el = ε̇ − λ̇·m, α̇ = λ̇ with λ̇ from the consistency condition,
    over the plastic part of the increment.

    :return: elastic strain after the increment and the plastic multiplier increment
    """
    m = len(table)
    t0 = _elastic_fraction(table, eps_el, alpha, d_eps)
    rate = (1.0 - t0)[:, None] * d_eps
    rate_dev = deviator(rate)
    loading_vol = 3.0 * table.K * table.eta * trace(rate)
    q_min = 1e-12 * (1.0 + table.k)

    def normal(eps: np.ndarray) -> np.ndarray:
        s = 2.0 * table.G[:, None] * deviator(eps)
        direction = np.where((norm(s) / SQRT2 > q_min)[:, None], s, rate_dev)
        return direction / (SQRT2 * np.maximum(norm(direction), 1e-300))[:, None]

    def flow(_: float, y: np.ndarray) -> np.ndarray:
        y = y.reshape(m, 7)
        n_s = normal(y[:, :6])
        loading = 2.0 * table.G * inner(n_s, rate_dev) + loading_vol
        d_lambda = np.maximum(loading, 0.0) / table.slope
        d_el = rate - d_lambda[:, None] * (n_s + table.eta_g[:, None] * IDENTITY6)
        return np.hstack([d_el, d_lambda[:, None]]).ravel()

    y0 = np.hstack([eps_el + t0[:, None] * d_eps, alpha[:, None]]).ravel()
    sol = solve_ivp(
        flow, (0.0, 1.0), y0,
        method='DOP853',
        rtol=FLOW_RTOL,
        atol=FLOW_ATOL,
        max_step=1.0 / max(int(substeps), 1),
    )
    if not sol.success:
        raise NonConvergenceError(
            f'Plastic flow integration failed at point {int(index[0])}: {sol.message}',
            point_index=int(index[0]),
        )

    y = sol.y[:, -1].reshape(m, 7)
    eps_end, alpha_end = y[:, :6], y[:, 6]

    # pull the end state back onto the yield surface along the current normal
    sigma_end = table.stress(eps_end)
    drift = yield_function(table, sigma_end, alpha_end)
    correction = drift / table.slope
    correction[norm(deviator(sigma_end)) / SQRT2 <= table.G * np.abs(correction)] = 0.0
    eps_end = eps_end - correction[:, None] * (normal(eps_end) + table.eta_g[:, None] * IDENTITY6)
    alpha_end = alpha_end + correction

    return eps_end, alpha_end - alpha


def _apex_multiplier(
        table: MaterialTable,
        i1_tr: np.ndarray,
        alpha: np.ndarray,
        apex: np.ndarray,
) -> np.ndarray:
    denominator = 9.0 * table.K[apex] * table.eta[apex] * table.eta_g[apex] + table.H[apex]
    if np.any(denominator <= 0.0):
        bad = int(np.flatnonzero(apex)[np.argmax(denominator <= 0.0)])
        raise NonConvergenceError(
            f'Apex return is undefined without dilatancy or hardening at point {bad}.',
            point_index=bad,
        )
    numerator = table.eta[apex] * i1_tr[apex] - table.k[apex] - table.H[apex] * alpha[apex]
    return numerator / denominator


def integrate_increment(
        params: MaterialParams,
        state: PointState,
        d_eps,
        substeps: Optional[int] = 1,
) -> IncrementResult:
    d = np.asarray(getattr(d_eps, 'components', d_eps), dtype=float)
    if norm(d) >= MAX_INCREMENT_NORM:
        raise StrainIncrementError(
            f'Parameter `d_eps` expected a norm below {MAX_INCREMENT_NORM}, but {norm(d):.3e} was given.'
        )

    table = MaterialTable([params])
    r = integrate_batch(
        table=table,
        eps_el=state.eps_el[None, :],
        eps_pl=state.eps_pl[None, :],
        alpha=np.array([state.alpha]),
        d_eps=d,
        substeps=substeps,
    )
    new = PointState(
        eps_el=r.eps_el[0],
        eps_pl=r.eps_pl[0],
        alpha=float(r.alpha[0]),
    )
    return IncrementResult(
        state_new=new,
        sigma=SymTensor6(r.sigma[0], unit=TensorUnit.Stress),
        psi=float(r.psi[0]),
        d_inc=float(r.d_inc[0]),
        apex=bool(r.apex[0]),
    )


def integrate_path(
        params: MaterialParams,
        increments: np.ndarray,
        substeps: Optional[int] = 1,
        state: Optional[PointState] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, PointState]:
    """
    Integrates a single point along `increments`, the plastic flow of each in steps of
    at most 1/`substeps` of the increment.

    :return: stress (n, 6), energy (n,), dissipation per increment (n,) and the final state
    """
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    state = state or PointState()
    n = len(increments)

    sigma = np.zeros((n, 6))
    psi = np.zeros(n)
    dissipation = np.zeros(n)
    for i, d in enumerate(increments):
        r = integrate_increment(params, state, d, substeps)
        state = r.state_new
        sigma[i] = r.sigma.components
        psi[i] = r.psi
        dissipation[i] = r.d_inc

    return sigma, psi, dissipation, state
