__version__ = "0.1.0"

from replen.domain import Instance as Instance
from replen.domain import ItemSpec as ItemSpec
from replen.domain import DemandDist as DemandDist
from replen.domain import DemandPartition as DemandPartition
from replen.domain import partition as partition
from replen.domain import loss_exact as loss_exact
from replen.domain import loss_lb as loss_lb
from replen.domain import load_instance as load_instance

from replen.errors import ReplenError as ReplenError
from replen.errors import InvalidInstanceError as InvalidInstanceError
from replen.errors import DomainError as DomainError
from replen.errors import ModeError as ModeError
from replen.errors import ResourceCapError as ResourceCapError

from replen.planner import Plan as Plan
from replen.planner import RSPlanner as RSPlanner
from replen.planner import solve_rs as solve_rs
from replen.planner import cycle_cost as cycle_cost
from replen.planner import per_item_schedule as per_item_schedule
from replen.planner import audit_plan as audit_plan

from replen.sdp import StateGrid as StateGrid
from replen.sdp import ValueFunction as ValueFunction
from replen.sdp import solve_sdp as solve_sdp
from replen.sdp import optimal_policy_actions as optimal_policy_actions
from replen.sdp import cost_grid as cost_grid

from replen.milp import build_rs_model as build_rs_model
from replen.milp import build_stationary_model as build_stationary_model
from replen.milp import brute_force_solve as brute_force_solve
from replen.milp import evaluate as evaluate
from replen.milp import export as export

from replen.sigma import classify as classify
from replen.sigma import sigma_map as sigma_map
from replen.sigma import sdp_sigma_map as sdp_sigma_map

from replen.stationary import order_up_to_stationary as order_up_to_stationary
from replen.stationary import cycle_cost_stationary as cycle_cost_stationary
from replen.stationary import solve_stationary as solve_stationary

from replen.simulator import SimConfig as SimConfig
from replen.simulator import SimReport as SimReport
from replen.simulator import simulate_plan as simulate_plan
from replen.simulator import simulate_policy as simulate_policy
from replen.simulator import compare_literature as compare_literature

from replen.config import Settings as Settings
