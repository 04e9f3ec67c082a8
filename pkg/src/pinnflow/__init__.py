"""pinnflow: physics-informed learning of parametric 2D incompressible flow.

A numpy-only stack: a tape-based automatic differentiator with nested
directional derivatives, a Fourier-feature MLP over (x, y, t, nu = 1/Re),
Navier-Stokes residual and lift-force operators, seeded collocation
sampling, Adam training with binary checkpoints, and an evaluation/CLI
layer for scorecards and plot-ready exports.
"""

from .analytic import rigid_rotation, taylor_green, taylor_green_vorticity, uniform_flow
from .autodiff import (
    AutodiffError,
    ComputationRecord,
    DiffValue,
    DivisionByZero,
    GradientVector,
    MixedRecords,
    UnknownNode,
    UnsupportedPrimitive,
    backward,
    directional_derivatives,
    record_op,
)
from .cli import cli, main
from .data import (
    SNAPSHOT_HEADER,
    DatasetSplit,
    LabeledPoint,
    LabeledSet,
    MalformedRow,
    MissingHeader,
    NonFiniteValue,
    OrphanNu,
    assemble_split,
    load_snapshots,
    taylor_green_dataset,
    write_snapshots,
)
from .evaluation import (
    METRIC_HEADER,
    ConfigMismatch,
    DegenerateSeries,
    MetricReport,
    MetricRow,
    evaluate,
    lift_series,
    time_shift,
    vorticity_field,
)
from .network import (
    FieldPrediction,
    ModelParams,
    NetworkConfig,
    NetworkField,
    NonFiniteOutput,
    NonPositiveReynolds,
    denormalize_input,
    embed,
    forward,
    forward_batch,
    init_params,
    normalize_input,
)
from .physics import (
    DEFAULT_PANEL_COUNT,
    BoundarySpec,
    DerivativeUnavailable,
    PointOffBoundary,
    ResidualTriple,
    SurfacePoint,
    TooFewPanels,
    boundary_residuals,
    cylinder_panels,
    lift_force,
    residuals,
    vorticity,
)
from .sampling import (
    RNG_ALGORITHM,
    DomainSpec,
    NuOutOfRange,
    PointBatch,
    SamplePoint,
    SamplingPlan,
    sample_boundary,
    sample_interior,
    sample_parameter_grid,
)
from .training import (
    AdamState,
    Checkpoint,
    EmptyBatch,
    LossWeights,
    NonFiniteLoss,
    ShapeMismatch,
    TrainRunConfig,
    adam_step,
    composite_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
