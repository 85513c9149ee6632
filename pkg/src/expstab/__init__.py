"""Partitioned exponential integrators for stiff semilinear spectral ODEs:
phi-function evaluation, one-step and multistep exponential schemes, linear
stability analysis on the two-rate oscillatory test equation, repartitioning
and hyperviscosity stabilization, and Fourier pseudo-spectral benchmarks.
"""

from .phicore import PhiCache, PhiTable, phi_scalar, phi_table
from .integrators import (FAMILIES, EXPONENTIAL_FAMILIES, DiagonalProblem,
                          MethodSpec, make_method, esdc_tableau, epbm_tableau,
                          imrk_tableau, epbm_v_coefficients, integrate,
                          IntegrationResult)
from .spectral import (PeriodicGrid, SemilinearSpectralProblem,
                       dealiased_product, build_zds, build_kdv,
                       RepartitionSpec, apply_repartition,
                       HyperviscositySpec, apply_hyperviscosity,
                       spectral_radius_fraction, write_spectrum,
                       read_spectrum)
from .stability import (DahlquistPoint, RepartitionAngle, stability_scalar,
                        epbm_transfer_matrix, power_bounded_classification,
                        region_grid, grid_to_csv, column_split_exists,
                        asymptotic_decay, StabilityGrid)
from .cli import (RunRecord, relative_error, ensure_reference,
                  run_convergence, run_longtime, run_stability_maps,
                  run_solve, main)

__version__ = "0.1.0"

__all__ = [
    "PhiCache", "PhiTable", "phi_scalar", "phi_table",
    "FAMILIES", "EXPONENTIAL_FAMILIES", "DiagonalProblem", "MethodSpec",
    "make_method", "esdc_tableau", "epbm_tableau", "imrk_tableau",
    "epbm_v_coefficients", "integrate", "IntegrationResult",
    "PeriodicGrid", "SemilinearSpectralProblem", "dealiased_product",
    "build_zds", "build_kdv", "RepartitionSpec", "apply_repartition",
    "HyperviscositySpec", "apply_hyperviscosity", "spectral_radius_fraction",
    "write_spectrum", "read_spectrum",
    "DahlquistPoint", "RepartitionAngle", "stability_scalar",
    "epbm_transfer_matrix", "power_bounded_classification", "region_grid",
    "grid_to_csv", "column_split_exists", "asymptotic_decay", "StabilityGrid",
    "RunRecord", "relative_error", "ensure_reference", "run_convergence",
    "run_longtime", "run_stability_maps", "run_solve", "main",
    "__version__",
]
