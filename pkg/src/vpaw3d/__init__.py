"""Plane-wave eigensolver for periodic Coulomb Hamiltonians with a variational PAW transform."""
from .atomic import (PRESETS, DatasetError, DatasetFormatError, PawDataset, build_dataset,
                     hydrogenoid, kato_recurrence_check, load_dataset, preset_dataset,
                     save_dataset, validate_dataset)
from .diagnostics import bessel_asymptotics_probe, cusp_estimate, fit_slope
from .kernels import BACKEND
from .potential import EwaldParameters, NuclearConfiguration, coulomb_fourier, dimer, ewald_point
from .pwbasis import PlaneWaveBasis, UnitCell, build_basis
from .solver import SolverError, lowest_eigenpairs
from .vpaw import AssemblyError, VpawOperator, assemble

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "DatasetError", "DatasetFormatError", "PawDataset", "build_dataset", "hydrogenoid",
    "kato_recurrence_check", "load_dataset", "preset_dataset", "save_dataset", "validate_dataset",
    "bessel_asymptotics_probe", "cusp_estimate", "fit_slope", "BACKEND", "EwaldParameters",
    "NuclearConfiguration", "coulomb_fourier", "dimer", "ewald_point", "PlaneWaveBasis",
    "UnitCell", "build_basis", "SolverError", "lowest_eigenpairs", "AssemblyError",
    "VpawOperator", "assemble",
]
