"""Visual marking and selection: pool, dedup, number, annotate, pick.

This is one replan round of the navigation loop, shown in slow motion. The
oracle backend stands in for a vision-language service; swap in ReplayBackend
or RemoteBackend without touching anything else.

Run:  python3 demos/04_marking_and_selection.py
Writes demos/output/annotated.png
"""

from pathlib import Path

from marknav._draw import save_png
from marknav.geometry import world_to_robot
from marknav.selection import (
    CandidatePool,
    OracleBackend,
    SelectionContext,
    annotate_image,
    build_marker_set,
    build_prompt,
    dedup_representatives,
    select,
    sort_and_number,
    update_pool,
)
from marknav.trajgen import GeneratorConfig, generate_candidates
from marknav.world import (
    RobotState,
    TraversabilityView,
    load_bundled_scenario,
    render_camera_image,
    simulate_lidar,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

sc = load_bundled_scenario("crosswalk")
view = TraversabilityView.from_grid(sc.grid)
state = RobotState(pose=sc.start)

# generate and pool two rounds (the pool keeps the latest two batches and
# re-expresses the older one in the current robot frame)
scan = simulate_lidar(sc.grid, sc.start)
pool = CandidatePool(capacity=2)
batch = generate_candidates(scan, state, view, GeneratorConfig(K=6, seed=0))
pool = update_pool(pool, batch, sc.start)
print(f"pooled {len(batch)} candidates")

survivors = dedup_representatives(pool, d_t=1.0)
print(f"{len(survivors)} survive hausdorff dedup at d_t = 1.0 m")

goal_robot = world_to_robot(sc.goal, sc.start)[0]
numbered = sort_and_number(survivors, goal_robot)
print("numbering by distance-to-goal:",
      [(n, f"{t.waypoints[-1].round(1)}") for n, t in numbered])

markers = build_marker_set(numbered, sc.camera)
image = render_camera_image(sc.grid, sc.start, sc.camera)
annotated = annotate_image(image, markers, sc.camera)
save_png(annotated, out / "annotated.png")
print(f"wrote {out / 'annotated.png'} with {len(markers.items)} numbered lines")

bundle = build_prompt(markers, image=annotated)
print("\nprompt sent to the selector:\n" + "-" * 40)
print(bundle.instruction)
print("-" * 40)

result = select(OracleBackend(), bundle, markers, SelectionContext(view, sc.start))
print(f"\noracle picked marker {result.chosen}; raw response: {result.raw_response}")
