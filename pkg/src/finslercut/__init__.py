"""Geodesics, anisotropic distance fields and cut loci on 2-D Finsler charts."""

from .chart import Domain, Grid, plane_window, torus
from .cutlocus import CutGraph, arc_length, classify, detect, extract_graph, intrinsic_distance
from .distance import (
    DistanceField,
    distance_field,
    first_variation_probe,
    gradient,
    min_segments,
    reversibility,
)
from .geodesic import GeodesicPath, distance, integrate, jacobi, log, minimal_geodesic
from .metric import (
    MetricSpec,
    fundamental_tensor,
    make_euclidean,
    make_riemannian,
    make_zermelo,
    norm,
    spray,
)
from .sets import Circle, ClosedSet, Disc, Point, Polyline

__version__ = "0.1.0"

__all__ = [
    "Circle",
    "ClosedSet",
    "CutGraph",
    "Disc",
    "DistanceField",
    "Domain",
    "GeodesicPath",
    "Grid",
    "MetricSpec",
    "Point",
    "Polyline",
    "arc_length",
    "classify",
    "detect",
    "distance",
    "distance_field",
    "extract_graph",
    "first_variation_probe",
    "fundamental_tensor",
    "gradient",
    "integrate",
    "intrinsic_distance",
    "jacobi",
    "log",
    "make_euclidean",
    "make_riemannian",
    "make_zermelo",
    "min_segments",
    "minimal_geodesic",
    "norm",
    "plane_window",
    "reversibility",
    "spray",
    "torus",
    "__version__",
]
