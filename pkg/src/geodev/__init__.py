"""Numerical laboratory for geodesic deviation under affine torsion-free connections."""

from .chartmap import (AffineMap, ChartMap, CubicCounterexampleMap, IdentityMap, InverseMap,
                       PolynomialMap, appendix_identities, cartesian_from_polar,
                       cartesian_from_spherical, map_from_spec, polar_map, pull_connection,
                       push_exact, push_geodesic, push_tensorial, spherical_map)
from .connection import (CATALOG_NAMES, ConnectionChart, MetricChart, catalog, chart_from_spec,
                         curvature, dgamma_fd, from_metric, polynomial_chart)
from .deviation import (DeviationKind, DeviationPath, covariant_jacobi_residual,
                        deviation_from_samples, deviation_residual, exact_by_difference,
                        integrate_exact_ode, integrate_gje, integrate_jacobi,
                        jacobi_from_variation, op_Delta, op_G, op_J)
from .errors import *  # noqa: F401,F403
from .experiments import (PropositionVerdict, prop3_sweep, run_polar_example, verify_prop3,
                          verify_prop4)
from .fermi import (FermiChart, build_fermi, change_frame, fermi_transition, fermi_xi,
                    gamma_on_axis)
from .geodesic import (FrameField, GeodesicPath, exp_map, geodesic_residual, integrate_geodesic,
                       integrate_geodesics, parallel_transport)
from .integrate import (IntegratorOptions, OdeProblem, Trajectory, rk4_fixed, rk_adaptive, solve)
from .residuals import ResidualReport

__version__ = "0.1.0"
