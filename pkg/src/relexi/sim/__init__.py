from .grid import BlowUp, FlowField, Grid, IncompatibleGrids, OutOfRangeCs, SolverConfig
from .solver import (advance, eddy_viscosity, eddy_viscosity_from_strain,
                     spectral_filter, stable_dt, step, strain_rate)
from .dataset import (Dataset, HoldOutViolation, NotStatisticallySteady,
                      generate_dns_dataset, load_dataset, save_dataset)

__all__ = [
    "Grid", "FlowField", "SolverConfig", "BlowUp", "OutOfRangeCs",
    "IncompatibleGrids", "advance", "step", "strain_rate", "eddy_viscosity",
    "eddy_viscosity_from_strain", "spectral_filter", "stable_dt",
    "Dataset", "generate_dns_dataset", "load_dataset", "save_dataset",
    "HoldOutViolation", "NotStatisticallySteady",
]
