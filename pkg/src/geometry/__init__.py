"""
Domains, distance to the complement and interior quadrature grids.
"""

from .domain import Domain, BoxSpec, InteriorGrid, dist_to_complement, interior_grid

__all__ = [
    'Domain',
    'BoxSpec',
    'InteriorGrid',
    'dist_to_complement',
    'interior_grid',
]
