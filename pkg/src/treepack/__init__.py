"""treepack: optimal rate allocation over multiple multicast trees.

A dual subgradient solver with column generation and pluggable min-cost
tree oracles (exact, spanning arborescence, Charikar-style approximation),
plus certification bounds and an event-driven control-protocol simulator.
"""

from .colgen import (
    ColGenConfig,
    ColGenResult,
    TreePool,
    colgen_run,
    local_min_cost_tree,
    maybe_admit,
    optimality_check,
)
from .certify import Certificate, certificate_rho, exact_reference, sandwich
from .errors import (
    CertificateRefused,
    EnumerationCapError,
    InfeasibleError,
    OracleScaleError,
    ScenarioError,
    TreepackError,
)
from .net import (
    Link,
    Network,
    Overlay,
    ProfileSpec,
    Session,
    build_overlays,
    build_profile,
    separate_optimum,
    standard_profile,
)
from .scenario import (
    Scenario,
    fig_tree_toy,
    load_scenario,
    packaged_scenario,
    profile_scenario,
    resolve_scenario,
    save_scenario,
)
from .simulate import ControlPacket, LinkQueue, SimConfig, control_overhead, run_sim
from .steiner import ApproxConfig, approx_min_steiner, ratio_bound
from .subgradient import (
    Allocation,
    Engine,
    StepRule,
    dual_value,
    dual_value_with_oracle,
    lagrangian_maximizer_check,
    primal_value,
    step_size,
    update_prices,
)
from .trees import (
    IncidenceView,
    Tree,
    enumerate_trees,
    exact_min_steiner,
    min_arborescence,
    tree_cost,
    validate_tree,
)
from .utility import UtilitySpec, min_rate_surplus, surplus_at

__version__ = "0.1.0"
