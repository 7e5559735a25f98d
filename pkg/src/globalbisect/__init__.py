"""Finitely generated global bisections of pair, frame and torus-action groupoids.

Build words of exponentials of compactly supported sections that pass through
prescribed groupoid elements, evaluate them, and check them numerically.
"""
from .errors import *  # noqa: F401,F403
from .exponential import CompactSection, ConstantFactor, FiberBump, exp_bisection, gauge_generators
from .geometry import Ball, Box, Curve, Manifold, Punctured, Whole, flow, plan_path
from .groupoid import (BisectionWord, Element, Generator, Groupoid, VerificationReport, bis_eval,
                       bis_inv, bis_mul, compose, evaluate, identity_word, invert, target_map, unit,
                       verify_bisection)
from .multipoint import (bisection_through_points, find_chains, is_concordant, is_independent,
                         separated_bisection, well_order)
from .serialization import load_scene, load_word, word_dumps, word_loads
from .single_point import (ConstructionRequest, bisection_through, bundle_automorphism_through,
                           homogeneity_diffeo, invertible_function_through, moving_flows)

__version__ = "0.1.0"
