"""Online FIFO buffering of k-packet frames under order-respecting arrivals."""

from .model import Instance, PacketId, read_instance, validate_order_respecting, write_instance
from .opt import OptResult, feasible, opt_branch_bound, opt_bruteforce, solve
from .policies import GR1, Greedy, MiddleDropFlush, SimResult, StaticPartitioning, run_policy

__all__ = [
    "Instance", "PacketId", "read_instance", "write_instance", "validate_order_respecting",
    "OptResult", "feasible", "opt_bruteforce", "opt_branch_bound", "solve",
    "GR1", "Greedy", "MiddleDropFlush", "StaticPartitioning", "SimResult", "run_policy",
]
