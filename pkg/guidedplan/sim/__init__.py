from .collision import BoxState, CollisionEvent, boxes_overlap, collision_check, in_contact, is_at_fault
from .agents import AgentSimulator, LaneFollower, idm_acceleration, idm_step, lane_path, step_agents
from .trace import SimTrace, TickRecord, dumps_trace, loads_trace, save_trace, load_trace
from .simulator import ExpertPlanner, Observation, PlanningBundle, run, pure_pursuit, start_tick_for
from .metrics import (METRICS, MetricReport, aggregate_score, evaluate, metrics, drivable_area, comfort_signals,
                      speed_limit_compliance, min_time_to_collision)
from .open_loop import HORIZONS_S, OpenLoopReport, run_open_loop, displacement_errors, proxy_score, expert_future
from .hard20 import Hard20Manifest, select_hard20
