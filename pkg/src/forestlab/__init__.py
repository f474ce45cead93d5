"""Dense forests from unions of grids: visibility, rationality certificates,
torus flows, sphere covers and random-rotation experiments."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, EnumerationBudgetExceeded, ForestLabError,
                     HypothesisViolated, InvalidRegime, RecursionBudgetExceeded,
                     SearchBudgetExceeded, SingularMatrix, UnsupportedDimension, ZeroPivot)
from .linalg import Matrix, ProjectivePoint, iwasawa_decompose, projective_distance
from .forest import (Forest, GridSpec, SegmentQuery, covering_radius,
                     directional_visibility, enumerate_near_segment, visibility_profile)
from .rationality import dense_forest_check, direction_dependence, integer_relation
from .torus import FlowSpec, filling_time, is_delta_dense
from .spherecover import build_cap_cover, verify_cover, x_set_measure_mc
from .experiments import ExperimentManifest, borel_cantelli_budget, run_experiment, sigma
