"""Demand-system estimation and theoretical-regularity audit toolkit.

Implements the Rotterdam, AIDS and QUAIDS flexible functional forms on
panel expenditure data: restricted system estimation, expenditure and
price elasticities with delta-method standard errors, and the six-way
regularity audit (positivity, monotonicity, curvature, adding-up,
homogeneity, symmetry) that drives model selection.

The multi-stage budgeting framing behind such systems (weak separability
of the studied goods from the rest of consumption) is a modeling
assumption of the user's aggregation choice, not something this library
tests; it conditions only on the goods and expenditures it is given.
"""

from .data import (
    PanelDataset,
    RotterdamTransform,
    build_expenditure,
    load_panel_csv,
    rotterdam_transform,
    save_panel_csv,
)
from .elasticity import (
    ElasticityTable,
    EvaluationPoint,
    delta_method_se,
    elasticities,
    elasticities_aids,
    elasticities_quaids,
    elasticities_rotterdam,
    table_with_se,
)
from .estimation import (
    EstimationResult,
    default_init,
    estimate,
    estimate_nonlinear,
    estimate_rotterdam,
)
from .models import (
    AIDS,
    QUAIDS,
    ROTTERDAM,
    ModelSpec,
    ParamSet,
    aids_price_index,
    expenditure_deflator,
    n_free,
    pack,
    rotterdam_rhs,
    share_eval,
    unpack,
)
from .regularity import (
    RegularityReport,
    audit,
    check_monotonicity,
    check_positivity,
    eigen_test,
    negativity_matrix,
    select_model,
)
from .synth import SynthConfig, demo_config, demo_params, generate

__version__ = "0.1.0"
