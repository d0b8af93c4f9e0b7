"""Lipschitz graph domains, polygons, cones, surface balls and cubes."""

from .graph import (DomainError, GeometryError, GraphDomain, box_factor, critical_exponent,
                    default_aperture, load_profile, save_profile)
from .polygon import (Chart, LocalizationError, PolygonDomain, default_aperture_for,
                      localize_polygon, verify_chart_graph, verify_cover)
from .regions import (BallRegion, CarlesonBox, ConeRegion, ConeSpec, ContainmentResult,
                      SurfaceBall, SurfaceCube, ball_in_double_cone, carleson_box_mesh_region,
                      cone_contains)
