#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Force-driven macroelement with one degree of freedom.

A parallel Iwan system (spring k_i in series with a slider of threshold f_i^y and
linear kinematic hardening h_i per element) supplies the ground truth:

    F = Σ k_i (u − s_i)        |k_i (u − s_i) − h_i s_i| ≤ f_i^y
    Ψ = Σ ½ k_i (u − s_i)² + ½ h_i s_i²        D_inc = Σ f_i^y |Δs_i|
    Φ = Ψ − F·U                                 U = −∂Φ/∂F

The state of the macroelement is S = [F, Z], Z being the POD projection of the
per-element ICs [u − s_i, s_i, max |s_i|].
"""

import logging

from concurrent.futures import ThreadPoolExecutor

from dataclasses import dataclass

from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd

from .enums import (
    ArtifactKind,
    Potential,
    SvdMethod,
)

from .ensemble import worker_count

from .formats import table_frame

from .network import (
    EnergyModel,
    EpochRecord,
    ModeMismatchError,
    TannDataset,
    TrainConfig,
    train,
)

from .plasticity import NonConvergenceError

from .pod import (
    IcLayout,
    LayoutMismatchError,
    PodBasis,
    SnapshotMatrix,
    compute_pod_basis,
    select_modes_by_singular_threshold,
)

from .storage import (
    Artifact,
    SchemaError,
    ShapeError,
)

__all__ = [
    'MACRO_UNITS',
    'IwanSystem',
    'IwanState',
    'MacroRecord',
    'MacroSample',
    'IngestedSnapshots',
    'CapacityExceededError',
    'simulate_iwan',
    'simulate_iwan_paths',
    'simulate_iwan_displacement',
    'random_force_path',
    'symmetric_cycles',
    'asymmetric_cycles',
    'first_law_residual',
    'build_macro_dataset',
    'select_macro_basis',
    'train_macro',
    'loop_area',
    'masing_branch',
    'export_snapshots',
    'ingest_snapshots',
]

logger = logging.getLogger(__name__)

MAX_NEWTON_ITERATIONS = 100

MAX_BISECTIONS = 8

# relative to the reference force of the system
NEWTON_TOL = 1e-12

MACRO_UNITS = {
    'F': 'kN',
    'U': 'm',
    'PSI': 'kN*m',
    'PHI': 'kN*m',
    'D': 'kN*m',
    'W': 'kN*m',
    'XI': 'm',
    'PATH': '-',
}

_MACRO_BLOCKS = tuple(MACRO_UNITS)


class CapacityExceededError(Exception):

    def __init__(
            self,
            message: str,
            increment_index: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.increment_index = increment_index


class IwanSystem(object):
    """
    Parallel springs and sliders sharing one displacement.

    eg:
    >>> system = IwanSystem(k=[100.0], fy=[5.0])
    >>> system.backbone(0.1)
    5.0
    >>>
    """

    def __init__(
            self,
            k: Sequence[float],
            fy: Sequence[float],
            h: Optional[Sequence[float]] = None,
    ) -> None:
        self.k = np.asarray(k, dtype=float).ravel()
        self.fy = np.asarray(fy, dtype=float).ravel()
        self.h = np.zeros_like(self.k) if h is None else np.asarray(h, dtype=float).ravel()
        if not len(self.k) == len(self.fy) == len(self.h) or len(self.k) == 0:
            raise ValueError(
                f'Stiffnesses, thresholds and hardening moduli expected one shared positive length, '
                f'but {len(self.k)}, {len(self.fy)} and {len(self.h)} were given.'
            )
        if np.any(self.k <= 0.0) or np.any(self.fy <= 0.0) or np.any(self.h < 0.0):
            raise ValueError('Iwan elements expected k > 0, f_y > 0 and h >= 0.')

    @classmethod
    def random(
            cls,
            rng: np.random.Generator,
            n_el: Optional[int] = 200,
            k_total: Optional[float] = 1000.0,
            fy_min: Optional[float] = 1.0,
            fy_max: Optional[float] = 100.0,
            h_ratio: Optional[float] = 0.0,
    ) -> 'IwanSystem':
        """
        Equal stiffnesses summing to `k_total`, thresholds uniform in [fy_min, fy_max], h_i = h_ratio·k_i.
        """
        if n_el < 1 or not 0.0 < fy_min <= fy_max:
            raise ValueError(
                f'Parameters `n_el`, `fy_min` and `fy_max` expected n_el >= 1 and 0 < fy_min <= fy_max, '
                f'but ({n_el}, {fy_min}, {fy_max}) was given.'
            )
        k = np.full(n_el, k_total / n_el)
        fy = np.sort(rng.uniform(fy_min, fy_max, size=n_el))
        return cls(k, fy, h_ratio * k)

    @property
    def n_el(self) -> int:
        return len(self.k)

    @property
    def layout(self) -> IcLayout:
        return IcLayout.iwan(self.n_el)

    @property
    def reference_force(self) -> float:
        return float(np.sum(self.fy))

    @property
    def capacity(self) -> float:
        """
        Largest force magnitude the system can carry, infinite once any element hardens.
        """
        if np.any(self.h > 0.0):
            return float('inf')
        return self.reference_force

    def backbone(
            self,
            u: float,
    ) -> float:
        """
        Force on the virgin loading curve at displacement `u`.
        """
        a = abs(float(u))
        onset = self.fy / self.k
        slope = self.k * self.h / (self.k + self.h)
        f = np.where(a <= onset, self.k * a, self.fy + slope * (a - onset))
        return float(np.sign(u) * np.sum(f))

    def to_dict(self) -> Dict:
        return {'k': self.k.tolist(), 'fy': self.fy.tolist(), 'h': self.h.tolist()}

    @classmethod
    def from_dict(cls, d: Dict) -> 'IwanSystem':
        return cls(d['k'], d['fy'], d.get('h'))


@dataclass
class IwanState(object):
    u: float
    s: np.ndarray
    s_max: np.ndarray

    @classmethod
    def pristine(cls, n_el: int) -> 'IwanState':
        return cls(0.0, np.zeros(n_el), np.zeros(n_el))


def _element_response(
        system: IwanSystem,
        u: float,
        s_n: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Element forces, slips and sliding flags at `u`, reached monotonically from slips `s_n`.
    """
    f_trial = system.k * (u - s_n)
    xi = f_trial - system.h * s_n
    sliding = np.abs(xi) > system.fy
    ds = np.where(sliding, (np.abs(xi) - system.fy) / (system.k + system.h) * np.sign(xi), 0.0)
    s = s_n + ds
    return system.k * (u - s), s, sliding


def _tangent(
        system: IwanSystem,
        sliding: np.ndarray,
) -> float:
    return float(np.sum(np.where(sliding, system.k * system.h / (system.k + system.h), system.k)))


def _increment_work(
        system: IwanSystem,
        u_n: float,
        u: float,
        s_n: np.ndarray,
) -> float:
    """
    ∫F du from u_n to u, exact: the force is piecewise linear with kinks at slider onsets.
    """
    du = u - u_n
    if du == 0.0:
        return 0.0
    direction = np.sign(du)
    onsets = s_n + (system.h * s_n + direction * system.fy) / system.k
    inside = onsets[(onsets - u_n) * direction > 0.0]
    inside = inside[(u - inside) * direction > 0.0]
    points = np.concatenate([[u_n], np.sort(inside)[::int(direction)], [u]])
    forces = np.array([np.sum(_element_response(system, p, s_n)[0]) for p in points])
    return float(np.sum(0.5 * (forces[1:] + forces[:-1]) * np.diff(points)))


def _energy(
        system: IwanSystem,
        u: float,
        s: np.ndarray,
) -> float:
    return float(np.sum(0.5 * system.k * (u - s) ** 2 + 0.5 * system.h * s ** 2))


def _ics(
        state: IwanState,
) -> np.ndarray:
    return np.column_stack([state.u - state.s, state.s, state.s_max]).ravel()


def _solve_force(
        system: IwanSystem,
        state: IwanState,
        target: float,
) -> Optional[float]:
    """
    Scalar Newton on u for Σ f_i(u) = target, None when it does not converge.
    """
    tol = NEWTON_TOL * max(1.0, system.reference_force)
    u = state.u
    for _ in range(MAX_NEWTON_ITERATIONS):
        f, _, sliding = _element_response(system, u, state.s)
        residual = float(np.sum(f)) - target
        if abs(residual) <= tol:
            return u
        tangent = _tangent(system, sliding)
        if tangent <= 0.0:
            return None
        u -= residual / tangent
    return None


@dataclass
class _Step(object):
    state: IwanState
    work: float
    dissipation: float


def _advance_to(
        system: IwanSystem,
        state: IwanState,
        u: float,
) -> _Step:
    _, s, _ = _element_response(system, u, state.s)
    return _Step(
        state=IwanState(u, s, np.maximum(state.s_max, np.abs(s))),
        work=_increment_work(system, state.u, u, state.s),
        dissipation=float(np.sum(system.fy * np.abs(s - state.s))),
    )


def _force_step(
        system: IwanSystem,
        state: IwanState,
        f_n: float,
        target: float,
        index: int,
        depth: Optional[int] = 0,
) -> _Step:
    u = _solve_force(system, state, target)
    if u is not None:
        return _advance_to(system, state, u)

    if depth >= MAX_BISECTIONS:
        raise NonConvergenceError(
            f'Force increment {index} did not converge after {MAX_BISECTIONS} bisections.'
        )
    logger.warning('increment %d bisected (depth %d)', index, depth + 1)
    middle = 0.5 * (f_n + target)
    first = _force_step(system, state, f_n, middle, index, depth + 1)
    second = _force_step(system, first.state, middle, target, index, depth + 1)
    return _Step(second.state, first.work + second.work, first.dissipation + second.dissipation)


@dataclass
class MacroRecord(object):
    """
    One path of the macroelement, one row per increment.

    `increments` are force increments, `W` the external work of each increment,
    `xi` rows the per-element ICs [u − s, s, max |s|] after each increment.
    """
    increments: np.ndarray
    F: np.ndarray
    U: np.ndarray
    Psi: np.ndarray
    Phi: np.ndarray
    D_inc: np.ndarray
    W: np.ndarray
    xi: np.ndarray
    path_id: int = 0

    def __len__(self) -> int:
        return len(self.F)

    @property
    def dxi(self) -> np.ndarray:
        return np.diff(self.xi, axis=0, prepend=np.zeros((1, self.xi.shape[1])))

    def sample(
            self,
            i: int,
            basis: PodBasis,
    ) -> 'MacroSample':
        return MacroSample(
            F=float(self.F[i]),
            U=float(self.U[i]),
            Z=basis.project(self.xi[i]),
            Zdot=basis.project_rate(self.dxi[i]),
            Phi=float(self.Phi[i]),
            D=float(self.D_inc[i]),
        )


@dataclass
class MacroSample(object):
    F: float
    U: float
    Z: np.ndarray
    Zdot: np.ndarray
    Phi: float
    D: float


def _record(
        steps: List[_Step],
        F: np.ndarray,
        path_id: int,
        system: IwanSystem,
) -> MacroRecord:
    U = np.array([st.state.u for st in steps])
    Psi = np.array([_energy(system, st.state.u, st.state.s) for st in steps])
    return MacroRecord(
        increments=np.diff(F, prepend=0.0),
        F=F,
        U=U,
        Psi=Psi,
        Phi=Psi - F * U,
        D_inc=np.array([st.dissipation for st in steps]),
        W=np.array([st.work for st in steps]),
        xi=np.array([_ics(st.state) for st in steps]).reshape(len(steps), -1),
        path_id=path_id,
    )


def simulate_iwan(
        system: IwanSystem,
        force_increments: np.ndarray,
        path_id: Optional[int] = 0,
) -> MacroRecord:
    """
    Force-driven run from the pristine state, increments bisected when Newton fails.
    """
    dF = np.asarray(force_increments, dtype=float).ravel()
    F = np.cumsum(dF)
    over = np.flatnonzero(np.abs(F) >= system.capacity)
    if over.size:
        i = int(over[0])
        raise CapacityExceededError(
            f'Increment {i} of path {path_id} asks for |F| = {abs(F[i]):.6g}, '
            f'but the system carries at most {system.capacity:.6g}.',
            increment_index=i,
        )

    state = IwanState.pristine(system.n_el)
    f_n = 0.0
    steps = []
    for i, target in enumerate(F):
        step = _force_step(system, state, f_n, float(target), i)
        steps.append(step)
        state, f_n = step.state, float(target)

    logger.debug('path %d: %d force increments simulated', path_id, len(F))
    return _record(steps, F, path_id, system)


def simulate_iwan_paths(
        system: IwanSystem,
        force_paths: Sequence[np.ndarray],
        threads: Optional[int] = None,
) -> List[MacroRecord]:
    """
    Independent force paths run concurrently, results come back in path order.
    """
    threads = threads or worker_count()
    if threads == 1 or len(force_paths) < 2:
        return [simulate_iwan(system, p, i) for i, p in enumerate(force_paths)]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(simulate_iwan, system, p, i) for i, p in enumerate(force_paths)]
        return [f.result() for f in futures]


def simulate_iwan_displacement(
        system: IwanSystem,
        displacement_increments: np.ndarray,
        path_id: Optional[int] = 0,
) -> MacroRecord:
    """
    Displacement-driven run, which also follows the perfectly plastic plateau.
    """
    dU = np.asarray(displacement_increments, dtype=float).ravel()
    state = IwanState.pristine(system.n_el)
    steps = []
    forces = []
    for u in np.cumsum(dU):
        step = _advance_to(system, state, float(u))
        steps.append(step)
        forces.append(float(np.sum(system.k * (step.state.u - step.state.s))))
        state = step.state
    return _record(steps, np.array(forces), path_id, system)


def _legs(
        targets: Sequence[float],
        steps: int,
) -> np.ndarray:
    """
    Linear force legs from 0 through every target, `steps` increments per leg.
    """
    points = np.concatenate([[0.0], np.asarray(targets, dtype=float)])
    return np.concatenate([np.full(steps, (b - a) / steps) for a, b in zip(points[:-1], points[1:])])


def random_force_path(
        rng: np.random.Generator,
        n_targets: int,
        steps_per_target: int,
        f_max: float,
) -> np.ndarray:
    """
    Force increments through targets drawn uniformly from [−f_max, f_max].
    """
    return _legs(rng.uniform(-f_max, f_max, size=n_targets), steps_per_target)


def symmetric_cycles(
        amplitude: float,
        cycles: int,
        steps: int,
) -> np.ndarray:
    return _legs([amplitude, -amplitude] * cycles, steps)


def asymmetric_cycles(
        amplitude: float,
        cycles: int,
        steps: int,
        minimum: Optional[float] = 0.0,
) -> np.ndarray:
    """
    One-sided cycles between `minimum` and `amplitude`.
    """
    return _legs([amplitude, minimum] * cycles, steps)


def first_law_residual(
        rec: MacroRecord,
) -> np.ndarray:
    """
    W_inc − ΔΨ − D_inc per increment.
    """
    return rec.W - np.diff(rec.Psi, prepend=0.0) - rec.D_inc


def loop_area(
        F: np.ndarray,
        U: np.ndarray,
) -> float:
    """
    |∮F dU| by trapezoids, the loop closed back to its first point.
    """
    F = np.append(np.asarray(F, dtype=float), F[0])
    U = np.append(np.asarray(U, dtype=float), U[0])
    return abs(float(np.sum(0.5 * (F[1:] + F[:-1]) * np.diff(U))))


def masing_branch(
        system: IwanSystem,
        u_rev: float,
        f_rev: float,
        u: np.ndarray,
) -> np.ndarray:
    """
    Masing reversal branch: F = F_rev − 2·B((u_rev − u)/2).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.array([f_rev - 2.0 * system.backbone(0.5 * (u_rev - v)) for v in u])


def build_macro_dataset(
        records: Sequence[MacroRecord],
        basis: PodBasis,
) -> TannDataset:
    """
    Gibbs samples (F, Z) with the displacement as conjugate target and Φ as energy target.
    """
    for rec in records:
        if rec.xi.shape[1] != basis.n_dof:
            raise LayoutMismatchError(
                f'Path {rec.path_id} holds {rec.xi.shape[1]} ICs per increment, but the basis has {basis.n_dof} rows.'
            )

    def stack(name: str) -> np.ndarray:
        return np.concatenate([getattr(rec, name) for rec in records])

    return TannDataset(
        E=stack('F')[:, None],
        Z=basis.project(stack('xi')),
        Zdot=basis.project_rate(np.concatenate([rec.dxi for rec in records])),
        dE=stack('increments')[:, None],
        Sigma=stack('U')[:, None],
        Psi=stack('Phi'),
        D=stack('D_inc'),
        path=np.concatenate([np.full(len(rec), rec.path_id) for rec in records]),
        potential=Potential.Gibbs,
        basis_fingerprint=basis.fingerprint,
    )


def select_macro_basis(
        snapshots: SnapshotMatrix,
        threshold: Optional[float] = 1e-4,
        r: Optional[int] = None,
        method: Optional[SvdMethod] = SvdMethod.Auto,
        normalize_blocks: Optional[bool] = False,
) -> PodBasis:
    """
    POD basis truncated where the normalised singular values fall below `threshold`,
    or at `r` when given.
    """
    scales = None
    if normalize_blocks:
        snapshots, scales = snapshots.normalized_by_block()
    full = compute_pod_basis(snapshots, method=method, scales=scales)
    if r is None:
        r = select_modes_by_singular_threshold(full.singular_values, threshold)
        logger.info('%d mode(s) above the singular threshold %.1e', r, threshold)
    return full.truncate(r)


def train_macro(
        dataset: TannDataset,
        cfg: TrainConfig,
        model: Optional[EnergyModel] = None,
) -> Tuple[EnergyModel, List[EpochRecord]]:
    if dataset.potential is not Potential.Gibbs:
        raise ModeMismatchError(
            f'Macroelement training expected a "gibbs" dataset, but "{dataset.potential.value}" was given.'
        )
    return train(dataset, cfg, model)


@dataclass
class IngestedSnapshots(object):
    snapshots: SnapshotMatrix
    records: List[MacroRecord]
    meta: Dict

    def table(self) -> pd.DataFrame:
        """
        Force and displacement history, one row per snapshot.
        """
        def stack(name: str) -> np.ndarray:
            return np.concatenate([getattr(rec, name) for rec in self.records])

        return table_frame({
            'path': np.concatenate([np.full(len(rec), rec.path_id) for rec in self.records]),
            'F': stack('F'),
            'U': stack('U'),
            'Psi': stack('Psi'),
            'Phi': stack('Phi'),
            'D': stack('D_inc'),
            'W': stack('W'),
        })


def export_snapshots(
        records: Sequence[MacroRecord],
        layout: IcLayout,
        directory: str,
        name: Optional[str] = 'macro',
        meta: Optional[Dict] = None,
) -> str:
    blocks = {
        'F': np.concatenate([r.F for r in records]),
        'U': np.concatenate([r.U for r in records]),
        'PSI': np.concatenate([r.Psi for r in records]),
        'PHI': np.concatenate([r.Phi for r in records]),
        'D': np.concatenate([r.D_inc for r in records]),
        'W': np.concatenate([r.W for r in records]),
        'XI': np.concatenate([r.xi for r in records]),
        'PATH': np.concatenate([np.full(len(r), r.path_id, dtype=float) for r in records]),
    }
    doc = dict(meta or {})
    doc.update(
        layout=layout.to_dict(),
        layout_fingerprint=layout.fingerprint,
        n_paths=len(records),
        n_samples=int(len(blocks['F'])),
    )
    return Artifact(ArtifactKind.MacroDataset, meta=doc, blocks=blocks, units=MACRO_UNITS).write_on(directory, name)


def ingest_snapshots(
        manifest_path: str,
) -> IngestedSnapshots:
    """
    Reads a macroelement dataset, simulated here or exported by an external solver.
    """
    a = Artifact.read(
        manifest_path,
        kind=ArtifactKind.MacroDataset,
        required=_MACRO_BLOCKS,
        require_units=True,
    )
    if 'layout' not in a.meta:
        raise SchemaError(f'Manifest `{manifest_path}` declares no IC layout.')
    layout = IcLayout.from_dict(a.meta['layout'])

    b = a.blocks
    n = len(b['F'])
    for name in _MACRO_BLOCKS:
        if name == 'XI':
            continue
        if b[name].shape != (n,):
            raise ShapeError(f'Block `{name}` has shape {b[name].shape}, but ({n},) was expected.')
    if b['XI'].shape != (n, layout.size):
        raise ShapeError(
            f'Block `XI` has shape {b["XI"].shape}, but ({n}, {layout.size}) was expected.'
        )

    path = b['PATH'].astype(int)
    records = []
    # path ids are contiguous runs in file order
    for pid in dict.fromkeys(path.tolist()):
        idx = np.flatnonzero(path == pid)
        F = b['F'][idx]
        records.append(MacroRecord(
            increments=np.diff(F, prepend=0.0),
            F=F,
            U=b['U'][idx],
            Psi=b['PSI'][idx],
            Phi=b['PHI'][idx],
            D_inc=b['D'][idx],
            W=b['W'][idx],
            xi=b['XI'][idx],
            path_id=int(pid),
        ))

    logger.info('ingested %d snapshot(s) of %d path(s) from %s', n, len(records), manifest_path)
    return IngestedSnapshots(
        snapshots=SnapshotMatrix.from_rows(b['XI'], layout),
        records=records,
        meta=a.meta,
    )
