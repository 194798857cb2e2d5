"""Multi-robot grid warehouse built on the filtering engine."""

from .control import Auction, BeliefView, Task, control_step, robot_action, run_auction, step_towards
from .model import MOTIONS, PRESETS, WarehouseConfig, WarehouseModel, parse_action, preset
from .sim import SimResult, SummaryStats, TraceRow, resolve_collisions, simulate, trace_csv


def build_action_dbn(config: WarehouseConfig, joint_action):
    """Network for one joint action (one action name per robot)."""
    return WarehouseModel(config).action_dbn(tuple(joint_action))


__all__ = [
    "Auction", "BeliefView", "MOTIONS", "PRESETS", "SimResult", "SummaryStats", "Task", "TraceRow",
    "WarehouseConfig", "WarehouseModel", "build_action_dbn", "control_step", "parse_action",
    "preset", "resolve_collisions", "robot_action", "run_auction", "simulate", "step_towards",
    "trace_csv",
]
