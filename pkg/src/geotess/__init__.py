"""Random geodesic tessellations of a genus-2 surface versus Poisson line processes."""

__version__ = "0.1.0"
