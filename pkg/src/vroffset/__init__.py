"""Variable-radius offset surfaces for polygons and triangle meshes.

The method represents the offset as a crust of power-diagram facets
between paired weighted sites sampled on the input, then places crust
vertices by a closed-form least-squares fit against the tangent planes of
the contributing spheres.
"""

from .applications import (Directrix, MatInput, channel_surface,
                           cyclide_directrix, knot_directrix, load_mat,
                           morphological_op, reconstruct_from_mat, save_mat)
from .crust import CrustSurface, Crust2D, extract, extract_planar
from .mesh import Polygon2D, TriangleMesh, load_mesh, quality_report, save_mesh
from .metrics import (DistanceField, MetricsReport, brute_force_offset,
                      brute_force_offset_2d, compare_meshes,
                      one_sided_offset_error, point_mesh_distance)
from .pipeline import (OffsetResult, compute_offset, offset_from_samples,
                       offset_polygon)
from .powerdiagram import PowerDiagram, build as build_power_diagram, power_vertex
from .radius import (RadiusConstraintSet, RadiusField, field_from_expression,
                     interpolate_biharmonic, validate_lipschitz)
from .refine import RefinementConfig, refine_crust, refine_vertex
from .sampling import (BaseSample, SamplingConfig, Side, SiteKind, WeightedSite,
                       blue_noise_sample, displacement_direction, emit_sites)

__version__ = "0.1.0"

__all__ = [
    "BaseSample", "Crust2D", "CrustSurface", "Directrix", "DistanceField",
    "MatInput", "MetricsReport", "OffsetResult", "Polygon2D", "PowerDiagram",
    "RadiusConstraintSet", "RadiusField", "RefinementConfig", "SamplingConfig",
    "Side", "SiteKind", "TriangleMesh", "WeightedSite", "blue_noise_sample",
    "brute_force_offset", "brute_force_offset_2d", "build_power_diagram",
    "channel_surface", "compare_meshes", "compute_offset", "cyclide_directrix",
    "displacement_direction", "emit_sites", "extract", "extract_planar",
    "field_from_expression", "interpolate_biharmonic", "knot_directrix",
    "load_mat", "load_mesh", "morphological_op", "offset_from_samples",
    "offset_polygon", "one_sided_offset_error", "point_mesh_distance",
    "power_vertex", "quality_report", "reconstruct_from_mat", "refine_crust",
    "refine_vertex", "save_mat", "save_mesh", "validate_lipschitz",
    "__version__",
]
