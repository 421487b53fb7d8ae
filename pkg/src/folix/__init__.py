"""folix: transverse dynamics on the linearly foliated 2-torus.

Library layers, bottom to top:

* ``trigpoly`` / ``geometry`` -- exact metric data and derived transverse fields;
* ``flows`` -- geodesic, restricted, groupoid and reduced dynamics (RK4);
* ``symbols`` -- the leafwise convolution algebra of matrix symbols and their
  transport along the lifted flow;
* ``quantize`` -- kernel operators on the Fourier(x)C^2 basis and the
  lattice-sum principal symbol;
* ``dirac`` -- the transverse Dirac operator, its spectral calculus and the
  induced Heisenberg evolution;
* ``egorov`` -- band-compressed residuals comparing the two evolutions;
* ``cli`` -- scenario configuration and artifact emission.
"""

from .trigpoly import Slope, TrigPoly
from .geometry import (MetricCoeffs, GeometryCache, build_geometry, eval_metric,
                       is_bundle_like, mean_curvature, transverse_derivatives,
                       metric_from_json, metric_to_json, geometry_report)

__all__ = [
    "Slope", "TrigPoly", "MetricCoeffs", "GeometryCache", "build_geometry",
    "eval_metric", "is_bundle_like", "mean_curvature", "transverse_derivatives",
    "metric_from_json", "metric_to_json", "geometry_report",
]

__version__ = "0.1.0"
