"""Candidate-trajectory generation, visual marking, and pluggable selection
for mapless 2D outdoor navigation, with a simulator and benchmark harness."""

from .geometry import (
    CameraModel,
    PixelPolyline,
    Pose2D,
    Trajectory,
    distance_to_goal,
    frechet_distance,
    hausdorff_distance,
    project_to_image,
    resample,
    to_camera_frame,
)
from .pipeline import EpisodeConfig, EpisodeLog, make_backend, run_episode, track
from .selection import (
    CandidatePool,
    MarkerSet,
    PromptBundle,
    SelectionResult,
    annotate_image,
    build_prompt,
    dedup_representatives,
    parse_response,
    select,
    sort_and_number,
    update_pool,
)
from .trajgen import (
    GeneratorConfig,
    GeneratorWeights,
    decode_trajectory,
    encode_condition,
    generate_candidates,
    project_latent,
)
from .world import (
    LidarScan,
    RobotState,
    ScenarioSpec,
    SemanticGrid,
    TraversabilityView,
    load_scenario,
    render_camera_image,
    save_scenario,
    simulate_lidar,
    step_robot,
    trace_traversable,
)
from .evaluation import (
    BenchmarkReport,
    FrameScore,
    run_benchmark,
    score_frame,
    variant_components,
)

__version__ = "0.1.0"
