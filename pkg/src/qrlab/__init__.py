"""qrlab: a computational laboratory for quasi-redirecting geometry.

The package builds piecewise-Euclidean wall-and-strip templates, constructs
spiral quasi-geodesics with certified constants, searches for redirecting
witnesses between rays and assembles the induced order structure, produces
arithmetic certificates of non-redirectability, decomposes quasi-geodesics
in relatively hyperbolic Cayley graphs into deep and transition parts, and
classifies right-angled Coxeter defining graphs by their four-cycle
structure.

Modules
-------
geometry
    Chart-tagged points and the minimal metric protocol.
paths
    Polygonal paths, quasi-geodesic constant fitting, surgeries.
templates
    Wall-and-strip templates, their exact metric, and a mesh oracle.
spirals
    Backward and forward spiral constructions with concatenation checks.
redirecting
    Ray models, witness strategies, preorder evidence, certificates.
relhyp
    Marked Cayley graphs, coning, deep/transition decompositions.
racg
    Defining-graph invariants and boundary-type classification.
configs / export / cli
    Validated experiment configs, deterministic writers, entry point.
"""

from .errors import QRLabError
from .geometry import ChartPoint, PlaneGeometry, PLANE, plane_point
from .paths import (
    PolyPath,
    QGConstants,
    RedirectWitness,
    RestrictionMarks,
    bridge,
    concat,
    fellow_travel_surgery,
    fit_symmetric_constant,
    nearest_point_on_path,
    nearest_point_surgery,
    qg_fit,
    ray_to_geodesic_surgery,
    restrict,
    segment_to_ray_surgery,
    surgery,
    transitivity_compose,
)
from .templates import (
    PChainStats,
    Template,
    build_template,
    mesh_oracle_distance,
    p_chain_stats,
    random_template,
    standard_template_from_itinerary,
    template_from_json,
)
from .spirals import (
    ConcatReport,
    ConditionCheck,
    GrowthReport,
    SegmentRole,
    SpiralParams,
    SpiralPath,
    backward_spiral,
    constructqg_constants,
    forward_ratio_bound,
    forward_spiral_I,
    forward_spiral_II,
    growth_check,
    verify_concat_conditions,
)
from .redirecting import (
    Budget,
    CascadeRow,
    CrossingTail,
    DEFAULT_RADII,
    ExcursionProfile,
    FlatTail,
    LimitRayReport,
    NonRedirectCertificate,
    PosetReport,
    PreorderReport,
    RadiusRow,
    RayModel,
    STRATEGIES,
    best_witness,
    crossing_ray,
    default_rho0,
    excursion_classify,
    flat_ray,
    limit_ray,
    main_flat_ray,
    nonredirect_certificate,
    poset_build,
    preorder_estimate,
    product_jump_segment,
    redirect_at_radius,
    type_and_itinerary,
)
from .relhyp import (
    ConedGraph,
    DeepDecomposition,
    DeepInterval,
    MarkedGraph,
    Presentation,
    SaturationShadow,
    cone_off,
    deep_transition_decompose,
    marked_graph,
    path_constants,
    presentation_from_json,
    random_quasi_geodesic,
    saturation_and_shadow,
    tail_shadow,
    thin_triangle_delta,
    transient_prefix,
    transition_hausdorff,
)
from .racg import (
    CFSWitness,
    DefiningGraph,
    FourCycleGraph,
    PredictionRecord,
    StandingAssumptions,
    classify,
    corpus,
    four_cycle_graph,
    graph_from_edges,
    graph_from_json,
    is_broken_line,
    is_cfs,
    peripheral_cfs_subgraphs,
    planarity_1skeleton,
    separating_induced_four_cycles,
    standing_assumptions,
    suspension_base,
)

__version__ = "0.1.0"
