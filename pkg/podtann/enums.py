#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Closed vocabularies of the toolkit.

Members are written in 'Pascal Case' rather than 'Upper Case',
so that a member (`YieldModel.VonMises`) never reads like a module constant (`SQRT2`).

The values are the strings that appear in configuration documents and artifact manifests,
which keeps a JSON config readable: `"model": "drucker_prager"`.
"""

from enum import Enum

__all__ = [
    'TensorUnit',
    'YieldModel',
    'SvdMethod',
    'Normalization',
    'LossVariant',
    'Potential',
    'InferenceMode',
    'ReportFormat',
    'ArtifactKind',
    'ExitCode',
]


class _StrEnum(str, Enum):
    pass


class TensorUnit(_StrEnum):
    Stress = 'kPa'
    Strain = '-'

    @property
    def label(self) -> str:
        return '[%s]' % self.value


class YieldModel(_StrEnum):
    VonMises = 'von_mises'
    DruckerPrager = 'drucker_prager'


class SvdMethod(_StrEnum):
    """
    `Direct` factorises the snapshot matrix itself,
    `Gram` diagonalises the smaller of the two Gram matrices,
    `Auto` picks `Gram` only for strongly rectangular, large matrices.
    """
    Auto = 'auto'
    Direct = 'direct'
    Gram = 'gram'


class Normalization(_StrEnum):
    Max = 'max'
    Mean = 'mean'

    def reference(
            self,
            energies,
    ) -> float:
        if self is Normalization.Max:
            return float(max(abs(e) for e in energies))
        return float(abs(sum(energies) / len(energies)))


class LossVariant(_StrEnum):
    # energy, conjugate, dissipation and dissipation-sign terms
    Full = 'full'
    # conjugate and dissipation-sign terms only
    Reduced = 'reduced'


class Potential(_StrEnum):
    """
    Helmholtz networks take (strain, ISV) and return the conjugate stress as +d/dE,
    Gibbs networks take (force, ISV) and return the conjugate displacement as -d/dF.
    """
    Helmholtz = 'helmholtz'
    Gibbs = 'gibbs'

    @property
    def sign(self) -> float:
        if self is Potential.Gibbs:
            return -1.0
        return 1.0


class InferenceMode(_StrEnum):
    TeacherForced = 'teacher_forced'
    Autonomous = 'autonomous'


class ReportFormat(_StrEnum):
    Csv = 'csv'
    Binary = 'binary'

    @property
    def suffix(self) -> str:
        if self is ReportFormat.Csv:
            return '.csv'
        return '.json'


class ArtifactKind(_StrEnum):
    RucDataset = 'ruc-dataset'
    MacroDataset = 'macro-dataset'
    ReducedDataset = 'reduced-dataset'
    Basis = 'basis'
    Model = 'model'
    Evolution = 'evolution'
    Field = 'field'
    Table = 'table'


class ExitCode(int, Enum):
    Ok = 0
    Config = 2
    Simulation = 3
    Training = 4
    Mismatch = 5
