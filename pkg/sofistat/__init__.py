"""Finite-stage weak containment, approximate homomorphism counts and sofic entropy."""

from sofistat.config import CONFIG
from sofistat.distance import SearchStrategy, containment_verdict, d_inf, d_sup, d_sym
from sofistat.errors import BudgetError, InfeasibleError, InputError, SofistatError, UnsupportedPartitionError
from sofistat.hom_entropy import (
    CountMethod,
    HomAssignment,
    HomSource,
    count_homs,
    entropy_grid,
    entropy_point,
    entropy_separation,
    genprof_partition,
    hom_nonemptiness,
    is_hom,
    iter_homs,
)
from sofistat.partitions import (
    BernoulliModel,
    CylinderPartition,
    FiniteModel,
    IndexedPartition,
    StatsVector,
    TowerLevelModel,
    generated_partition,
    join,
    refines,
    shannon_entropy,
    stats,
    stats_l1,
    translate,
)
from sofistat.sofic_towers import (
    SoficApproximation,
    Tower,
    diagonal_product,
    odometer_tower,
    pullback_partition,
    random_sofic,
    tower_convergence,
    validate_sofic,
)
from sofistat.words import FiniteAction, GroupWord, evaluate, fix_ratio, parse_word, parse_word_list

__version__ = CONFIG.version

__all__ = [
    "BernoulliModel",
    "BudgetError",
    "CONFIG",
    "CountMethod",
    "CylinderPartition",
    "FiniteAction",
    "FiniteModel",
    "GroupWord",
    "HomAssignment",
    "HomSource",
    "IndexedPartition",
    "InfeasibleError",
    "InputError",
    "SearchStrategy",
    "SofistatError",
    "SoficApproximation",
    "StatsVector",
    "Tower",
    "TowerLevelModel",
    "UnsupportedPartitionError",
    "containment_verdict",
    "count_homs",
    "d_inf",
    "d_sup",
    "d_sym",
    "diagonal_product",
    "entropy_grid",
    "entropy_point",
    "entropy_separation",
    "evaluate",
    "fix_ratio",
    "generated_partition",
    "genprof_partition",
    "hom_nonemptiness",
    "is_hom",
    "iter_homs",
    "join",
    "odometer_tower",
    "parse_word",
    "parse_word_list",
    "pullback_partition",
    "random_sofic",
    "refines",
    "shannon_entropy",
    "stats",
    "stats_l1",
    "tower_convergence",
    "translate",
    "validate_sofic",
]
