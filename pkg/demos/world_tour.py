"""
A tour of the grid world
========================

Generate a scenario, look at it from both viewpoints, and see how a wrong
answer turns into structured feedback.
"""

from cimr import generate_scenario
from cimr.backends import correct_response, erroneous_response
from cimr.context import ContextState
from cimr.engine import parse_feedback
from cimr.mapsim import anchors_of, apply_plan, evaluate_goal, parse_observation, render

# seed 1 uses the "red cube left of the blue sphere" template
scenario = generate_scenario(1, "place")
print(scenario.instruction)
for o in scenario.scene.objects:
    print(f"  #{o.id} {o.color} {o.material} {o.shape} at {o.pos} ({o.depth})")

# a plan that lands one row too high, then the right one
for label, answer in (("wrong", erroneous_response(scenario)), ("right", correct_response(scenario))):
    scene = apply_plan(scenario.scene, answer)
    fb = parse_feedback(answer, render(scene, 1), ContextState(scenario.instruction),
                        scenario.goal, anchors_of(scene))
    outcome = evaluate_goal(scenario.goal, scene, answer)
    print(f"{label}: success={outcome.success}")
    for d in fb.discrepancies:
        print(f"  {d.category}: {d.detail}")

# counting under occlusion: the front view undercounts
counting = generate_scenario(1, "count")
print(counting.instruction)
# viewpoint 0 hides back-row objects, viewpoint 1 shows them
for vp in (0, 1):
    print(f"  viewpoint {vp}: {len(parse_observation(render(counting.scene, vp)))} objects visible")
print("  front-view answer:", erroneous_response(counting).answer.value,
      "| true count:", correct_response(counting).answer.value)
