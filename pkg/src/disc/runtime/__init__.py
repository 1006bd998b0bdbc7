from .allocator import CachedAllocator
from .codegen import codegen
from .executor import Executor, RunStats, Trace, run_plan
from .plan import CompiledPlan, load_plan, save_plan

__all__ = [
    "CachedAllocator", "codegen", "Executor", "RunStats", "Trace", "run_plan", "CompiledPlan", "load_plan",
    "save_plan",
]
