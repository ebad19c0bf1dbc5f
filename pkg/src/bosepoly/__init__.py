"""bosepoly: high-temperature polymer-expansion estimator and exact oracle
for boson-number-truncated Bose-Hubbard lattice models."""

__version__ = "0.1.0"

SCHEMA_VERSION = "1"

from .lattice import (  # noqa: F401
    CouplingError,
    CouplingMatrix,
    Lattice,
    ModelInstance,
    OnsiteParams,
    build_couplings,
    build_lattice,
    graph_distance,
    interaction_edges,
)
from .fock import (  # noqa: F401
    EigensolverError,
    onsite_energy,
    restricted_log_partition,
    sector_blocks,
)
from .polymers import (  # noqa: F401
    Cluster,
    Polymer,
    enumerate_clusters,
    enumerate_polymers,
    incompatible,
)
from .ursell import UGraph, canonical_graph_key, ursell  # noqa: F401
from .weights import WeightRequest, WeightResult, polymer_weight, weight_table  # noqa: F401
from .expansion import (  # noqa: F401
    ExpansionConfig,
    ExpansionReport,
    approximate_log_partition,
    error_budget,
    kp_diagnostic,
    onsite_log_partition,
    truncated_log_ratio,
)
from .oracle import (  # noqa: F401
    DimensionCapError,
    MonomialOperator,
    ThermalState,
    clustering_scan,
    correlation,
    expectation,
    moments,
    mutual_information,
    occupation_distribution,
    thermalize,
)
