"""Operator-valued R- and S-transforms in concrete matrix algebras.

The package computes moment transforms of matrices relative to a
conditional expectation onto a unital subalgebra, inverts them by a
certified fixed-point iteration, and verifies the additive/multiplicative
transform identities both analytically (exact resolvents) and
combinatorially (non-crossing partition cumulants at truncation order).
"""

__version__ = "0.1.0"

from .algebra import (
    AlgebraContext,
    DomainCertificate,
    as_element,
    cond_expect,
    g_certificate,
    invert_in_B,
    is_invertible_in_B,
    mat_inv,
    mat_mul,
    op_norm,
    psi_certificate,
    resolvent,
)
from .distributions import (
    BDist,
    JointBDist,
    ScalingReport,
    additivity_scaling_test,
    bdist_from_concrete,
    correlated_join,
    cumulants_to_moments,
    dist_from_cumulants,
    free_join,
    freeness_oracle,
    moments_to_cumulants,
    multiplicativity_scaling_test,
    prod_dist,
    sum_dist,
)
from .noncrossing import (
    Composition,
    CumulantFamily,
    NCPartition,
    catalan,
    check_irreducible_identity,
    concat,
    enumerate_nc,
    interval_refinements,
    is_irreducible,
    kappa_pi_eval,
    r_series,
)
from .transforms import (
    ConcreteModel,
    FixedPointReport,
    IdentityReport,
    TruncatedModel,
    additivity_check,
    check_dilation,
    check_rs_relation,
    dg,
    dpsi,
    g_transform,
    invert_g,
    invert_psi,
    multiplicativity_check,
    psi_transform,
    r_transform,
    s_transform,
)

__all__ = [name for name in dir() if not name.startswith("_")]
