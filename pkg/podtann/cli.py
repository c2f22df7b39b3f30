#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command line front door:

    podtann <command> [--config FILE] [--out DIR] [--seed N] [--format csv|binary] [--verbose]

Every command reads its resolved configuration, writes its artifacts and reports into
`--out`, and finishes with `run_manifest.json`, which echoes the configuration and hashes
every output. Passing that manifest back as `--config` repeats the run.
"""

import os
import json
import argparse
import logging

from dataclasses import asdict

from typing import (
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import __version__

from .enums import (
    ArtifactKind,
    ExitCode,
    InferenceMode,
    LossVariant,
    Normalization,
    Potential,
    ReportFormat,
    SvdMethod,
)

from .ensemble import (
    CapUnreachableError,
    Ensemble,
    EnsembleError,
    augment_rotation,
    build_dataset,
    cyclic_shear_path,
    generate_strain_path,
    load_records,
    save_records,
    simulate_path,
    simulate_paths,
    triaxial_path,
)

from .fields import (
    DegenerateFieldError,
    GridError,
    GridMismatchError,
    GridSpec,
    empirical_autocorrelation,
    generate_correlated_field,
    histogram,
    radial_average,
    save_field,
    scale_field,
    theoretical_autocorrelation,
)

from .formats import (
    prediction_columns,
    sha256_of_file,
    write_csv,
    write_json,
)

from .macro import (
    CapacityExceededError,
    IwanSystem,
    asymmetric_cycles,
    build_macro_dataset,
    export_snapshots,
    first_law_residual,
    ingest_snapshots,
    random_force_path,
    select_macro_basis,
    simulate_iwan,
    simulate_iwan_paths,
    symmetric_cycles,
    train_macro,
)

from .network import (
    DimensionMismatchError,
    DivergedError,
    ModeMismatchError,
    TrainConfig,
    infer_path,
    load_dataset,
    load_evolution,
    load_model,
    save_evolution,
    save_model,
    train,
    train_evolution,
)

from .params import (
    DEFAULTS,
    RUN_MANIFEST_FORMAT,
    ConfigError,
    ConfigMap,
    load_document,
    resolve_config,
)

from .plasticity import (
    MaterialParams,
    MaterialParamsError,
    NonConvergenceError,
    StrainIncrementError,
)

from .pod import (
    LayoutMismatchError,
    RankTooLargeError,
    SnapshotMatrix,
    compression_ratio,
    compute_pod_basis,
    energy_reconstruction_error,
    load_basis,
    reconstruction_mae,
    save_basis,
    select_modes_by_energy_error,
    select_modes_by_singular_threshold,
)

from .storage import (
    Artifact,
    FingerprintMismatchError,
    SchemaError,
    ShapeError,
    UnitError,
)

from .tensors import (
    RotationError,
    random_rotation,
)

__all__ = [
    'RUN_MANIFEST',
    'Workspace',
    'exit_code_for',
    'main',
]

logger = logging.getLogger(__name__)

RUN_MANIFEST = 'run_manifest.json'

# checked in order, the first matching family wins
_EXIT_CODES: Tuple[Tuple[Tuple[type, ...], ExitCode], ...] = (
    ((ConfigError, RankTooLargeError, ModeMismatchError), ExitCode.Config),
    (
        (
            NonConvergenceError, CapUnreachableError, CapacityExceededError, StrainIncrementError,
            MaterialParamsError, EnsembleError, GridError, GridMismatchError, DegenerateFieldError,
            RotationError,
        ),
        ExitCode.Simulation,
    ),
    ((DivergedError,), ExitCode.Training),
    (
        (
            FingerprintMismatchError, LayoutMismatchError, DimensionMismatchError,
            SchemaError, ShapeError, UnitError,
        ),
        ExitCode.Mismatch,
    ),
)

_CR_CANDIDATES = (5, 10, 25, 50, 100)


def exit_code_for(
        error: BaseException,
) -> Optional[ExitCode]:
    for families, code in _EXIT_CODES:
        if isinstance(error, families):
            return code
    return None


class Workspace(object):
    """
    The output folder of one run, remembering every file written into it.
    """

    def __init__(
            self,
            out: str,
            fmt: Optional[ReportFormat] = ReportFormat.Csv,
    ) -> None:
        self.out = out
        self.fmt = ReportFormat(fmt)
        self.outputs: List[str] = []

    def artifact(
            self,
            manifest_path: str,
    ) -> str:
        self.outputs.append(manifest_path)
        binary = os.path.splitext(manifest_path)[0] + '.bin'
        if os.path.exists(binary):
            self.outputs.append(binary)
        return manifest_path

    def report(
            self,
            name: str,
            columns: Dict[str, Sequence],
    ) -> str:
        if self.fmt is ReportFormat.Csv:
            path = write_csv(os.path.join(self.out, f'{name}{self.fmt.suffix}'), columns)
            self.outputs.append(path)
            return path

        blocks = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        table = Artifact(ArtifactKind.Table, meta={'columns': list(columns)}, blocks=blocks)
        return self.artifact(table.write_on(self.out, name))

    def hashes(self) -> Dict[str, str]:
        return {os.path.relpath(p, self.out): sha256_of_file(p) for p in self.outputs}


def _required(
        cfg: ConfigMap,
        key: str,
) -> str:
    value = cfg.get(key)
    if value is None:
        raise ConfigError(f'Configuration key `{key}` is required by this command.')
    return value


def _choice(
        enum_cls: type,
        value: str,
        key: str,
):
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigError(
            f'Key `{key}` expected one of {[m.value for m in enum_cls]}, but `{value}` was given.'
        )


def _manifest_kind(
        path: str,
) -> ArtifactKind:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            kind = json.load(f).get('kind')
    except (OSError, ValueError) as e:
        raise SchemaError(f'Manifest `{path}` could not be read: {e}')
    try:
        return ArtifactKind(kind)
    except ValueError:
        raise SchemaError(f'Manifest `{path}` holds an unknown artifact kind `{kind}`.')


def _r_values(
        r_list: Sequence[int],
        limit: int,
) -> List[int]:
    kept = sorted({int(r) for r in r_list if 1 <= int(r) <= limit})
    dropped = sorted({int(r) for r in r_list} - set(kept))
    if dropped:
        logger.warning('mode counts %s outside [1, %d] skipped', dropped, limit)
    if not kept:
        raise ConfigError(f'Key `r_list` leaves no mode count in [1, {limit}].')
    return kept


def _ensemble(
        cfg: ConfigMap,
        rng: np.random.Generator,
) -> Ensemble:
    e = cfg.ensemble
    if e.preset == 'correlated':
        grid = GridSpec(tuple(e.field.lengths), tuple(e.field.shape))
        return Ensemble.correlated(grid, e.field.kappa, cfg.seed)

    if e.weights is not None:
        if e.materials is None:
            raise ConfigError('Key `ensemble.weights` needs `ensemble.materials` with one entry per point.')
        try:
            points = [MaterialParams.from_dict(dict(m)) for m in e.materials]
        except TypeError as error:
            raise ConfigError(f'Key `ensemble.materials` holds an unknown material parameter: {error}')
        return Ensemble(points, e.weights)

    materials = None
    if e.materials is not None:
        materials = [dict(m) for m in e.materials]
    try:
        return Ensemble.two_phase(
            rng,
            preset=e.preset,
            n_points=e.n_points,
            inclusion_fraction=e.inclusion_fraction,
            heterogeneity=e.heterogeneity,
            materials=materials,
        )
    except TypeError as error:
        raise ConfigError(f'Key `ensemble.materials` holds an unknown material parameter: {error}')


def cmd_gen_ruc(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    rng = np.random.default_rng(cfg.seed)
    ens = _ensemble(cfg, rng)
    p = cfg.paths

    paths = [
        generate_strain_path(rng, p.n_inc, p.std_dev, p.init_vol_strain, p.j2_cap)
        for _ in range(p.count)
    ]
    base = simulate_paths(ens, paths, p.substeps)

    records = list(base)
    next_id = len(base)
    for rec in base:
        for _ in range(cfg.rotations):
            records.append(augment_rotation(rec, random_rotation(rng), path_id=next_id))
            next_id += 1

    meta = {'seed': cfg.seed, 'base_paths': p.count, 'rotations': cfg.rotations}
    ws.artifact(save_records(records, ens, ws.out, cfg.name, meta))

    n_samples = sum(len(r) for r in records)
    dim_xi = ens.layout.size
    candidates = [r for r in _CR_CANDIDATES if r <= dim_xi]
    ws.report(f'{cfg.name}_summary', {
        'r': candidates,
        'CR': [compression_ratio(r, dim_xi) for r in candidates],
    })
    print(f'{len(records)} path(s), {n_samples} increment(s), {ens.n_points} point(s), dim(xi) = {dim_xi}')
    for r in candidates:
        print(f'  r = {r:>3}: CR = {compression_ratio(r, dim_xi):.2f} %')


def cmd_gen_field(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    if cfg.realizations < 1:
        raise ConfigError(f'Key `realizations` expected a positive count, but {cfg.realizations} was given.')
    grid = GridSpec(tuple(cfg.grid.lengths), tuple(cfg.grid.shape))
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.realizations)

    raw = [generate_correlated_field(grid, cfg.kappa, int(c.generate_state(1)[0])) for c in children]
    scaled = [scale_field(f, cfg.target_mean, cfg.target_std) for f in raw]
    ws.artifact(save_field(scaled[0], ws.out, cfg.name, meta={'realization': 0}))

    ws.report(f'{cfg.name}_stats', {
        'realization': np.arange(len(scaled)),
        'mean': [f.mean for f in scaled],
        'std': [f.std for f in scaled],
        'min': [f.stats()['min'] for f in scaled],
        'max': [f.stats()['max'] for f in scaled],
    })
    ws.report(f'{cfg.name}_histogram', histogram(scaled[0], cfg.bins))

    lag, empirical = radial_average(grid, empirical_autocorrelation(raw))
    _, theoretical = radial_average(grid, theoretical_autocorrelation(grid, cfg.kappa))
    ws.report(f'{cfg.name}_autocorrelation', {
        'lag': lag,
        'empirical': empirical,
        'theoretical': theoretical,
    })

    rms = float(np.sqrt(np.mean((empirical - theoretical) ** 2)))
    print(f'{len(scaled)} realization(s) on {grid.shape}, autocorrelation RMS deviation {rms:.4f}')


def cmd_pod(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    dataset = _required(cfg, 'dataset')
    method = _choice(SvdMethod, cfg.svd_method, 'svd_method')
    normalization = _choice(Normalization, cfg.normalization, 'normalization')

    records, ens, _ = load_records(dataset)
    xi = np.concatenate([r.xi for r in records])
    psi = np.concatenate([r.Psi for r in records])
    snapshots = SnapshotMatrix.from_rows(xi, ens.layout)

    scales = None
    if cfg.normalize_blocks:
        _, scales = snapshots.normalized_by_block()
    basis = compute_pod_basis(snapshots, method=method, scales=scales)
    ws.artifact(save_basis(basis, ws.out, cfg.name, meta={'dataset_sha256': sha256_of_file(dataset)}))

    s = basis.singular_values
    ws.report(f'{cfg.name}_spectrum', {
        'mode': np.arange(1, len(s) + 1),
        'sigma': s,
        'sigma_normalized': s / s[0] if len(s) and s[0] > 0.0 else s,
    })

    r_values = _r_values(cfg.r_list, basis.r)
    rows = energy_reconstruction_error(basis, r_values, xi, psi, ens.macro_energy, normalization)
    ws.report(f'{cfg.name}_energy_error', {
        'r': [row.r for row in rows],
        'mean': [row.mean for row in rows],
        'std': [row.std for row in rows],
        'mean_abs': [row.mean_abs for row in rows],
        'CR': [compression_ratio(row.r, basis.n_dof) for row in rows],
    })

    selected = select_modes_by_energy_error(rows, cfg.energy_tolerance)
    if selected is None:
        print(f'no mode count of {r_values} reaches mean |err_psi| <= {cfg.energy_tolerance:g}')
    else:
        print(f'r = {selected} reaches mean |err_psi| <= {cfg.energy_tolerance:g}, '
              f'CR = {compression_ratio(selected, basis.n_dof):.2f} %')


def _curve_columns(
        curves: Sequence,
) -> Dict[str, List[float]]:
    return {
        'epoch': [c.epoch for c in curves],
        'loss': [c.loss for c in curves],
        'psi': [c.psi for c in curves],
        'sigma': [c.sigma for c in curves],
        'd': [c.d for c in curves],
        'd_sign': [c.d_sign for c in curves],
        'val_loss': [c.val_loss for c in curves],
    }


def _final_losses(
        curves: Sequence,
) -> Optional[Dict[str, float]]:
    if not curves:
        return None
    return {k: None if isinstance(v, float) and np.isnan(v) else v for k, v in asdict(curves[-1]).items()}


def _train_config(
        cfg: ConfigMap,
) -> TrainConfig:
    doc = cfg.to_dict()
    doc['loss_variant'] = _choice(LossVariant, cfg.loss_variant, 'loss_variant')
    return TrainConfig.from_config(doc)


def cmd_train(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    tc = _train_config(cfg)
    if cfg.reduced is not None:
        dataset = load_dataset(cfg.reduced)
        meta = {'train': tc.to_dict(), 'reduced_sha256': sha256_of_file(cfg.reduced)}
    else:
        basis = load_basis(_required(cfg, 'basis'))
        records, ens, _ = load_records(_required(cfg, 'dataset'))
        if basis.layout != ens.layout:
            raise LayoutMismatchError(f'Basis layout {basis.layout} does not match the dataset layout {ens.layout}.')
        basis = basis.truncate(cfg.r)

        dataset = build_dataset(records, basis)
        meta = {'train': tc.to_dict(), 'dataset_sha256': sha256_of_file(cfg.dataset)}
        reduced = dataset.to_artifact({'r': dataset.r, 'dataset_sha256': meta['dataset_sha256']})
        ws.artifact(reduced.write_on(ws.out, f'{cfg.name}_reduced'))

    model, curves = train(dataset, tc)
    meta['losses'] = _final_losses(curves)
    ws.artifact(save_model(model, ws.out, cfg.name, meta))
    ws.report(f'{cfg.name}_curves', _curve_columns(curves))

    if cfg.evolution.enabled:
        evolution_cfg = TrainConfig(
            learning_rate=cfg.evolution.learning_rate,
            batch=tc.batch,
            epochs=cfg.evolution.epochs,
            seed=tc.seed,
            early_stop=tc.early_stop,
            hidden=cfg.evolution.hidden,
        )
        evolution, curve = train_evolution(dataset, evolution_cfg)
        ws.artifact(save_evolution(evolution, ws.out, f'{cfg.name}_evolution'))
        ws.report(f'{cfg.name}_evolution_curve', {'epoch': np.arange(1, len(curve) + 1), 'loss': curve})

    final = f'{curves[-1].loss:.3e}' if curves else 'n/a'
    print(f'{len(dataset)} sample(s), r = {dataset.r}, {len(curves)} epoch(s), final loss {final}')


def cmd_train_macro(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    tc = _train_config(cfg)
    method = _choice(SvdMethod, cfg.svd_method, 'svd_method')
    ingested = ingest_snapshots(_required(cfg, 'dataset'))

    basis = select_macro_basis(ingested.snapshots, cfg.threshold, cfg.r, method, cfg.normalize_blocks)
    ws.artifact(save_basis(basis, ws.out, f'{cfg.name}_basis', meta={'dataset_sha256': sha256_of_file(cfg.dataset)}))

    dataset = build_macro_dataset(ingested.records, basis)
    model, curves = train_macro(dataset, tc)
    meta = {'train': tc.to_dict(), 'losses': _final_losses(curves)}
    ws.artifact(save_model(model, ws.out, cfg.name, meta))
    ws.report(f'{cfg.name}_curves', _curve_columns(curves))

    final = f'{curves[-1].loss:.3e}' if curves else 'n/a'
    print(f'{len(dataset)} sample(s), r = {basis.r} of {basis.n_dof}, {len(curves)} epoch(s), final loss {final}')


def _helmholtz_truth(
        cfg: ConfigMap,
        rng: np.random.Generator,
) -> Tuple[np.ndarray, ...]:
    p = cfg.path
    records, ens, _ = load_records(_required(cfg, 'dataset'))
    if p.kind == 'dataset':
        rec = _pick(records, p.path_id)
    else:
        if p.kind == 'random':
            path = generate_strain_path(rng, p.n_inc, p.std_dev, p.init_vol_strain, p.j2_cap)
        elif p.kind == 'cyclic':
            path = cyclic_shear_path(p.amplitude, p.cycles, p.steps, p.init_vol_strain)
        elif p.kind == 'triaxial':
            path = triaxial_path(n_inc=p.n_inc, init_vol_strain=p.init_vol_strain)
        else:
            raise ConfigError(
                f'Key `path.kind` expected one of dataset, random, cyclic, triaxial, but `{p.kind}` was given.'
            )
        rec = simulate_path(ens, path)
    return rec.increments, rec.Sigma, rec.Psi, rec.D_inc, rec.xi, rec.dxi


def _gibbs_truth(
        cfg: ConfigMap,
        rng: np.random.Generator,
) -> Tuple[np.ndarray, ...]:
    p = cfg.path
    ingested = ingest_snapshots(_required(cfg, 'dataset'))
    if p.kind == 'dataset':
        rec = _pick(ingested.records, p.path_id)
    else:
        if 'system' not in ingested.meta:
            raise ConfigError(f'Dataset `{cfg.dataset}` carries no Iwan system, only `path.kind = dataset` applies.')
        system = IwanSystem.from_dict(ingested.meta['system'])
        amplitude = p.f_max * system.reference_force
        if p.kind == 'random':
            dF = random_force_path(rng, 2 * p.cycles, p.steps, amplitude)
        elif p.kind == 'symmetric':
            dF = symmetric_cycles(amplitude, p.cycles, p.steps)
        elif p.kind == 'asymmetric':
            dF = asymmetric_cycles(amplitude, p.cycles, p.steps)
        else:
            raise ConfigError(
                f'Key `path.kind` expected one of dataset, random, symmetric, asymmetric, but `{p.kind}` was given.'
            )
        rec = simulate_iwan(system, dF)
    return rec.increments[:, None], rec.U[:, None], rec.Phi, rec.D_inc, rec.xi, rec.dxi


def _pick(
        records: Sequence,
        path_id: int,
):
    for rec in records:
        if rec.path_id == path_id:
            return rec
    raise ConfigError(f'Key `path.path_id` names path {path_id}, which the dataset does not hold.')


def cmd_infer(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    mode = _choice(InferenceMode, cfg.mode, 'mode')
    model = load_model(_required(cfg, 'model'))
    basis = load_basis(_required(cfg, 'basis'))
    if model.r > basis.r:
        raise FingerprintMismatchError(f'Model uses {model.r} modes, but the basis retains only {basis.r}.')
    basis = basis.truncate(model.r)
    if model.basis_fingerprint is not None and model.basis_fingerprint != basis.fingerprint:
        raise FingerprintMismatchError(
            f'Model was trained on basis {model.basis_fingerprint[:12]}, but basis {basis.fingerprint[:12]} was supplied.'
        )
    evolution = load_evolution(cfg.evolution) if cfg.evolution else None

    rng = np.random.default_rng(cfg.seed)
    if model.potential is Potential.Gibbs:
        truth = _gibbs_truth(cfg, rng)
        strain, conjugate = 'F', 'U'
    else:
        truth = _helmholtz_truth(cfg, rng)
        strain, conjugate = 'E', 'S'
    dE, conj_true, psi_true, d_true, xi, dxi = truth

    result = infer_path(
        model, dE,
        Z=basis.project(xi),
        Zdot=basis.project_rate(dxi),
        evolution=evolution,
        mode=mode,
    )

    header = prediction_columns(model.n_strain, model.r, strain, conjugate)
    values = np.column_stack([
        np.arange(1, len(dE) + 1),
        result.E,
        result.conjugate,
        result.psi,
        result.d,
        conj_true,
        psi_true,
        d_true,
        result.Z,
    ])
    ws.report(cfg.name, {name: values[:, j] for j, name in enumerate(header)})

    mae = float(np.mean(np.abs(result.conjugate - conj_true) / model.scalers.conj_scale))
    negative = float(np.mean(result.d / model.scalers.d_scale < -1e-3))
    print(f'{len(dE)} increment(s), {mode.value}: scaled {conjugate} MAE {mae:.3e}, '
          f'{100.0 * negative:.2f} % increments with negative dissipation')


def cmd_reconstruct(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    basis = load_basis(_required(cfg, 'basis'))
    dataset = _required(cfg, 'dataset')
    if _manifest_kind(dataset) is ArtifactKind.MacroDataset:
        ingested = ingest_snapshots(dataset)
        records, layout = ingested.records, ingested.snapshots.layout
    else:
        records, ens, _ = load_records(dataset)
        layout = ens.layout
    if basis.layout != layout:
        raise LayoutMismatchError(f'Basis layout {basis.layout} does not match the dataset layout {layout}.')

    if cfg.path_id is not None:
        records = [_pick(records, cfg.path_id)]
    xi = np.concatenate([r.xi for r in records])

    r_values = _r_values(cfg.r_list, basis.r)
    rows = [reconstruction_mae(basis, xi, r) for r in r_values]
    columns = {'r': r_values, 'CR': [compression_ratio(r, basis.n_dof) for r in r_values]}
    for key in rows[0]:
        columns[f'mae_{key}'] = [row[key] for row in rows]
    ws.report(cfg.name, columns)

    for r, row in zip(r_values, rows):
        print(f'  r = {r:>3}: MAE {row["all"]:.3e}')


def cmd_macro_gen(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    rng = np.random.default_rng(cfg.seed)
    s, p = cfg.system, cfg.paths
    try:
        system = IwanSystem.random(rng, s.n_el, s.k_total, s.fy_min, s.fy_max, s.h_ratio)
    except ValueError as e:
        raise ConfigError(str(e))

    amplitude = p.f_max * system.reference_force
    force_paths = [random_force_path(rng, p.n_targets, p.steps_per_target, amplitude) for _ in range(p.count)]
    records = simulate_iwan_paths(system, force_paths)

    meta = {'seed': cfg.seed, 'system': system.to_dict()}
    ws.artifact(export_snapshots(records, system.layout, ws.out, cfg.name, meta))

    residual = max(float(np.max(np.abs(first_law_residual(r)))) for r in records)
    n_samples = sum(len(r) for r in records)
    print(f'{len(records)} path(s), {n_samples} increment(s), {system.n_el} element(s), '
          f'max first-law residual {residual:.3e}')


def cmd_ingest(
        cfg: ConfigMap,
        ws: Workspace,
) -> None:
    ingested = ingest_snapshots(_required(cfg, 'manifest'))
    snapshots = ingested.snapshots
    scales = None
    if cfg.normalize_blocks:
        _, scales = snapshots.normalized_by_block()
    full = compute_pod_basis(snapshots, scales=scales)
    r = select_modes_by_singular_threshold(full.singular_values, cfg.threshold)
    ws.artifact(save_basis(full.truncate(r), ws.out, cfg.name, meta={'threshold': cfg.threshold}))

    table = ingested.table()
    ws.report(f'{cfg.name}_table', {c: table[c].to_numpy() for c in table.columns})
    s = full.singular_values
    ws.report(f'{cfg.name}_spectrum', {
        'mode': np.arange(1, len(s) + 1),
        'sigma': s,
        'sigma_normalized': s / s[0] if len(s) and s[0] > 0.0 else s,
    })
    print(f'{snapshots.n_snap} snapshot(s) of {snapshots.n_dof} IC(s), r = {r} at threshold {cfg.threshold:g}')


COMMANDS: Dict[str, Callable[[ConfigMap, Workspace], None]] = {
    'gen-ruc': cmd_gen_ruc,
    'gen-field': cmd_gen_field,
    'pod': cmd_pod,
    'train': cmd_train,
    'train-macro': cmd_train_macro,
    'infer': cmd_infer,
    'reconstruct': cmd_reconstruct,
    'macro-gen': cmd_macro_gen,
    'ingest': cmd_ingest,
}


def write_run_manifest(
        command: str,
        cfg: ConfigMap,
        ws: Workspace,
) -> str:
    path = os.path.join(ws.out, RUN_MANIFEST)
    return write_json(path, {
        'format': RUN_MANIFEST_FORMAT,
        'command': command,
        'version': __version__,
        'config': cfg.to_dict(),
        'outputs': ws.hashes(),
    })


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='podtann', description='POD reduced states and energy networks.')
    parser.add_argument('command', choices=sorted(DEFAULTS), help='pipeline step to run')
    parser.add_argument('--config', default=None, help='JSON configuration or a previous run manifest')
    parser.add_argument('--out', default='.', help='output folder, created when missing')
    parser.add_argument('--seed', type=int, default=None, help='overrides the configured seed')
    parser.add_argument('--format', default=ReportFormat.Csv.value, choices=[f.value for f in ReportFormat])
    parser.add_argument('--verbose', '-v', action='store_true', help='log at debug level')
    return parser


def main(
        argv: Optional[Sequence[str]] = None,
) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        datefmt='%H:%M:%S',
    )

    try:
        doc = load_document(args.config, args.command) if args.config else {}
        cfg = resolve_config(args.command, doc, args.seed)
        os.makedirs(args.out, exist_ok=True)
        ws = Workspace(args.out, ReportFormat(args.format))
        COMMANDS[args.command](cfg, ws)
        write_run_manifest(args.command, cfg, ws)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            raise
        logger.error('%s failed: %s', args.command, e)
        return int(code)

    return int(ExitCode.Ok)
