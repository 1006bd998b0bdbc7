"""Dynamic-shape tensor compiler: framework graph -> DHLO -> fused kernels -> host runtime program."""

from .frontend.graph import FrameworkGraph, parse_graph
from .pipeline import CompileOptions, compile, compile_uncached, static_specialize
from .runtime import CompiledPlan, Executor, load_plan, run_plan, save_plan

__all__ = ["CompileOptions", "CompiledPlan", "Executor", "FrameworkGraph", "compile", "compile_uncached",
           "load_plan", "parse_graph", "run_plan", "save_plan", "static_specialize"]
__version__ = "0.1.0"
