"""Conservative smooth distances between simplicial meshes."""

from .mesh import SimplexMesh, load_mesh, save_obj
from .exact_dist import simplex_distance, exact_min_distance
from .weights import build_weights
from .bvh import build_bvh
from .smooth import SmoothParams, DistanceField, smooth_min_dist, smooth_mesh_dist, alpha_heuristic

__version__ = "0.1.0"
