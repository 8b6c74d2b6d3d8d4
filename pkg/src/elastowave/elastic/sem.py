"""Spectral elements as a multiblock SBP scheme: every cell is a GLL block."""
import itertools

import numpy as np

from .. import geometry as geo
from .. import sbp
from .assembly import ElasticBlock, InterfaceFace, assemble, face_condition


def sem_assembly(cells, n_nodes, extent, rho, stiffness, outer="free_surface", mapping=None):
    """Tensor grid of ``cells`` GLL blocks with ``n_nodes`` per axis over ``extent``.

    Neighbouring cells are joined by interfaces (shared nodes, summed
    operators and masses); outer faces take ``outer``.  An optional global
    ``mapping`` is composed with the affine cell placement.
    """
    cells = tuple(int(c) for c in cells)
    d = len(cells)
    extent = np.asarray(extent, float).reshape(d, 2)
    edges = [np.linspace(extent[k, 0], extent[k, 1], cells[k] + 1) for k in range(d)]
    index = {c: i for i, c in enumerate(itertools.product(*[range(n) for n in cells]))}
    blocks = []
    for c, i in index.items():
        tr = [sbp.build_gll(n_nodes, edges[k][c[k]], edges[k][c[k] + 1]) for k in range(d)]
        faces = {}
        for k in range(d):
            for side in (-1, 1):
                nb = list(c)
                nb[k] += side
                name = geo.face_name(k, side)
                if 0 <= nb[k] < cells[k]:
                    faces[name] = InterfaceFace(index[tuple(nb)], geo.face_name(k, -side))
                else:
                    faces[name] = face_condition(outer)
        m = mapping if mapping is not None else geo.identity(d)
        blocks.append(ElasticBlock(geo.build_grid(m, tr), rho, stiffness, faces, name=f"cell{c}"))
    return assemble(blocks)
