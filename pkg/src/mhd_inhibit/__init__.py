"""Magnetic-inhibition stability toolkit for non-resistive MHD slabs.

Computes critical impressed-field strengths for interchange instabilities
(Rayleigh-Taylor, two-layer, convective), verifies the Lagrangian kinematic
and flux-conservation identities of frozen-in fields, evaluates the energy
functionals whose sign structure encodes the minimum-potential-energy
principle, and runs a per-mode dynamic model whose stability boundary
coincides with the variational threshold.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BOUNDARY_FREE,
    BOUNDARY_PERIODIC3,
    BOUNDARY_VANISHING,
    Grid3D,
    PhysicalParams,
    Profile1D,
    SlabDomain,
    VectorField3,
    divergence,
    make_uniform_grid,
    named_profile,
    volume_integral,
)
from .kinematics import (  # noqa: F401
    ClosedFormField,
    DegenerateSurfaceError,
    FlowMap,
    ParamSurface,
    SingularDeformationError,
    axis_aligned_patch,
    build_flow_map,
    build_flow_map_from_closed_map,
    cauchy_magnetic_field,
    cauchy_magnetic_field_general,
    flow_from_divfree_field,
    flux_through_surface,
    kronecker_residual,
    load_field_csv,
    piola_residual,
    random_shear_map,
    save_field_csv,
    verify_flux_equivalence,
)
from .threshold import (  # noqa: F401
    ThresholdResult,
    stratified_maximizer_quotient,
    stratified_quotient,
    oscillatory_field_quotient,
    threshold_1d,
    threshold_benard,
    threshold_rt,
    threshold_stratified,
    trig_cell_norms,
)
from .energy import (  # noqa: F401
    EnergyReport,
    cubic_remainder_bound_check,
    evaluate_energy_report,
    magnetic_energy_variation,
    poincare_check,
    potential_variation_exact,
    remainder_value,
    stratified_surface_functionals,
)
from .dynamics import (  # noqa: F401
    ModeSpec,
    ModeState,
    characteristic_roots,
    closed_form_solution,
    energy_audit,
    growth_rate,
    simulate_mode,
    stability_boundary_scan,
)
from .landscape import (  # noqa: F401
    LandscapeVerdict,
    build_test_field,
    instability_witness,
    stability_certificate,
    stratified_landscape,
)
from .sampling import (  # noqa: F401
    random_band_limited_field,
    random_solenoidal_field,
    sample_field,
)
