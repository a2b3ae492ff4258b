"""Mollified particle approximation of density-dependent McKean-Vlasov SDEs,
with transport metrics, a Fokker-Planck oracle and empirical estimate checks."""

__version__ = "0.1.0"

from mckv._backend import BACKEND
from mckv.coefficients import CoefficientSet, Constants, check_assumptions, scenario
from mckv.grid import GridDensity, gaussian_density, uniform_density
from mckv.mollify import BaseKernel, MollifierFamily, kde_at, mollifier_eval
from mckv.particles import ParticleCloud, SimConfig, TrajectoryStore, em_step, sample_initial, simulate
from mckv.transport import DiscreteMeasure, TransportPlan, wasserstein_1d, wasserstein_lp, weighted_tv

__all__ = [
    "BACKEND", "BaseKernel", "CoefficientSet", "Constants", "DiscreteMeasure", "GridDensity",
    "MollifierFamily", "ParticleCloud", "SimConfig", "TrajectoryStore", "TransportPlan",
    "check_assumptions", "em_step", "gaussian_density", "kde_at", "mollifier_eval",
    "sample_initial", "scenario", "simulate", "uniform_density", "wasserstein_1d",
    "wasserstein_lp", "weighted_tv",
]
