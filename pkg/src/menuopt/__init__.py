"""menuopt: learn revenue-optimal selling menus for two goods.

Train menus by gradient descent against a softmax buyer, evaluate them
exactly via best-response polygons, benchmark against the direct-mechanism
LP, and certify triangle-family optima with transport duality.
"""

from .core import (
    BuyerBehavior,
    CustomTable,
    DistributionSpec,
    Menu,
    MenuItem,
    UniformRect,
    UniformTriangle,
    ValuationKind,
    ValueGrid,
    make_grid,
    menu_utilities,
    menu_utility,
    zero_item,
)
from .buyer import (
    BuyerResponse,
    RationalBuyer,
    hard_response,
    hard_response_grid,
    soft_response,
)
from .evaluator import ResponseRegion, exact_revenue, grid_revenue, region_plot, regions
from .oracles import (
    OptimalReference,
    optimal_2menu,
    optimal_3menu,
    optimal_rect,
    optimal_rect_revenue,
    optimal_triangle,
    optimality_ratio,
    reference_for,
    triangle_opt_revenue,
)
from .trainer import (
    MechanismParams,
    Mode,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    extract_clean_menu,
    gradient,
    lambda_schedule,
    materialize,
    soft_revenue,
    train,
)
from .lp_baseline import (
    AuditReport,
    DirectMechanism,
    LpInstance,
    audit_direct,
    build_lp,
    menu_from_direct,
    solve_grid,
    solve_lp,
    to_mps,
)
from .duality import (
    DualityCertificate,
    DualityMeasures,
    RegionBalance,
    build_measures,
    certify,
    dual_objective,
    region_balance,
    region_l1_integrals,
)

__version__ = "0.1.0"
