"""Base manifolds, regions, curves, compactly supported fields and path planning."""
from .curves import Curve, separation_threshold, split_injective
from .fields import (DEFAULT_STEP, BumpField, CompactVectorField, TubeField, ZeroField, check_reach,
                     flow, smooth_step, tube_field)
from .manifold import Manifold
from .planning import plan_path
from .regions import Ball, Box, Empty, Punctured, Region, Union, Whole

__all__ = [
    "Ball", "Box", "BumpField", "CompactVectorField", "Curve", "DEFAULT_STEP", "Empty", "Manifold",
    "Punctured", "Region", "TubeField", "Union", "Whole", "ZeroField", "check_reach", "flow",
    "plan_path", "separation_threshold", "smooth_step", "split_injective", "tube_field",
]
