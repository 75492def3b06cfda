from .scenario import (Scenario, Track, EgoState, AgentState, LaneSegment, CrosswalkPolygon, StaticObstacle, Camera,
                       CameraRig, SCENARIO_TYPES, SCENARIO_TYPE_NAMES, AGENT_CLASSES, LIGHT_STATES,
                       rigid_transform_scenario)
from .io import load_scenario, save_scenario, loads_scenario, dumps_scenario, load_scenario_dir
from .lane_graph import LaneGraph
from .ego_frame import LocalSceneView, to_ego_frame
from .navigation import build_navigation_instruction, parse_navigation_instruction, route_path, route_instruction
from .synth import synth_scenario, synth_batch, default_camera_rig
