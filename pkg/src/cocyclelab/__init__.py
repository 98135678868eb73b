"""cocyclelab: explicit finite-depth KAM normal forms of SU(2) cocycles over circle rotations.

Modules
-------
algebra      SU(2) / su(2) arithmetic (first-row convention), exp/log, SO(3) distance
torus        fixed-point circle arithmetic, exact rotations, continued fractions
normal_form  level planning, backward synthesis of the cocycle, verification, KAM step
dynamics     orbits, cocycle products (direct and closed form), Birkhoff averages
diagnostics  condition checks, proof-chain errors, clustering, spread and coverage probes
cli          configuration-driven command-line front end
"""

from .algebra import SU2, Su2Tangent, compose, dist_so3, exp_su2, log_su2
from .errors import (
    CocycleLabError,
    ConfigInvalid,
    FastPathUnavailable,
    InsufficientPrecision,
    NearAntipode,
    NoDominantMode,
    NoValidTau,
    PrecisionOverflow,
    RationalAlpha,
)
from .normal_form import Cocycle, CocycleSpec, PlanParams, assemble, plan_levels, verify_level
from .torus import RotationSpec, TorusAngle, angle_times_int, cf_convergents, diophantine_scan

__all__ = [
    "SU2", "Su2Tangent", "compose", "dist_so3", "exp_su2", "log_su2",
    "CocycleLabError", "ConfigInvalid", "FastPathUnavailable", "InsufficientPrecision", "NearAntipode",
    "NoDominantMode", "NoValidTau", "PrecisionOverflow", "RationalAlpha",
    "Cocycle", "CocycleSpec", "PlanParams", "assemble", "plan_levels", "verify_level",
    "RotationSpec", "TorusAngle", "angle_times_int", "cf_convergents", "diophantine_scan",
]
