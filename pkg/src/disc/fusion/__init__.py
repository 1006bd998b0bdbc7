from .planner import FUSIBLE, LOOP, REDUCE_ROOT, SINGLE, FusionGroup, fuse, is_convex, signature

__all__ = ["FUSIBLE", "LOOP", "REDUCE_ROOT", "SINGLE", "FusionGroup", "fuse", "is_convex", "signature"]
