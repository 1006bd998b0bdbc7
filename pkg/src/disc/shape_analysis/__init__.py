from .constraints import ConstraintSet, same_dims, same_size
from .program import ShapeProgram, emit_shape_program, evaluate
from .propagation import PROPAGATION_CLASS, infer, propagation_class

__all__ = [
    "ConstraintSet", "same_dims", "same_size", "infer", "propagation_class", "PROPAGATION_CLASS",
    "ShapeProgram", "emit_shape_program", "evaluate",
]
