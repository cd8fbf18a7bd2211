"""Shapes as unions of convex polytopes, fitted to silhouettes by differentiable rendering."""

from .errors import (
    BehindCamera,
    ConvexDRError,
    DegenerateInput,
    EmptyInput,
    EmptyMesh,
    EmptyTopology,
    IllConditioned,
    InvalidConfig,
    NonPositiveOffset,
    NotManifold,
    ParseError,
    ShapeMismatch,
    UnboundedOrDegenerate,
)
from .hull import Hull, HullFacet, Location, classify_points, convex_hull_3d, point_in_hull
from .polytope import (
    ConvexPolyhedron,
    Hyperplane,
    Mesh,
    PolytopeTopology,
    VertexRecord,
    build_mesh,
    dualize,
    intersect_halfspaces,
    loop_subdivide,
    polytope_mesh,
    redundant_planes,
    signed_volume,
    solve_vertex,
)
from .diffgeom import ParamGradients, VertexJacobian, backprop_vertices, vertex_jacobian
from .render import (
    Camera,
    RenderTarget,
    SoftRasterConfig,
    depth_l1,
    fibonacci_cameras,
    image_l1,
    multiview_l1,
    project,
    raster_hard,
    raster_soft,
    raster_soft_backward,
)
from .optimize import (
    OptimizerState,
    Scene,
    Schedule,
    densify,
    fit,
    init_scene,
    optimizer_step,
    purge_convexes,
    purge_planes,
    spawn,
)
from .metrics import SampledSurface, chamfer, evaluate, normal_consistency, sample_surface
from .io import CvxDocument, parse_cvx, read_image, read_obj, write_cvx, write_image, write_obj

__version__ = "0.1.0"
