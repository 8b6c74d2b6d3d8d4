"""Ready-made configurations: the 2D Lamb half-plane and a two-layer 3D TTI model."""
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .. import sbp
from .assembly import ElasticBlock, InterfaceFace, NonReflectingFace, assemble
from .run import PointForce, Explosion, receiver_at
from .stiffness import isotropic_stiffness, tti_stiffness

LAMB_VP, LAMB_VS, LAMB_RHO = 3200.0, 1847.5, 2200.0
LAMB_NU0 = 10.0
LAMB_DT = 4e-4
LAMB_NODES = (251, 181)
LAMB_EXTENT = ((-1500.0, 1500.0), (-1500.0, 0.0))

# Thomsen media of the two-layer anisotropic model (top, bottom)
TTI_TOP = dict(vp=2000.0, vs=1200.0, rho=2000.0, eps=0.334, gamma=0.575, delta=0.818, tilt=45.0, azimuth=45.0)
TTI_BOTTOM = dict(vp=3000.0, vs=1600.0, rho=2000.0, eps=0.022, gamma=0.087, delta=-0.072, tilt=90.0, azimuth=15.0)


@dataclass
class Scenario:
    assembly: object
    sources: list
    receivers: list
    info: dict


def refine_nodes(n, level):
    """Node count after ``level`` nested halvings of the spacing."""
    return (n - 1) * 2 ** level + 1


def lamb(level=0, p=8, kind="shifted", nodes=LAMB_NODES, extent=LAMB_EXTENT, angle_deg=0.0,
         receiver_offsets=(600.0,), force=1e9, nu0=LAMB_NU0, mode="shear"):
    """Lamb's problem: vertical (surface-normal) point force on a free half-plane.

    The top face is traction-free, the other faces are non-reflecting.  With a
    nonzero ``angle_deg`` the half-plane is sheared so that its surface is
    inclined and parametric ``xi_1`` is arclength along it.  Receivers sit on
    the surface at the given signed arclength offsets from the source.
    """
    (x0, x1), (y0, y1) = extent
    n1, n2 = (refine_nodes(n, level) for n in nodes)
    tr = (sbp.build_triplet(kind, n1, p=p, a=x0, b=x1), sbp.build_triplet(kind, n2, p=p, a=y0, b=y1))
    if angle_deg:
        mapping = geo.oblique_halfplane(angle_deg, bottom=y0, top=y1, mode=mode)
        normal = mapping.surface_normal
    else:
        mapping = geo.identity(2)
        normal = np.array([0.0, 1.0])
    C = isotropic_stiffness(LAMB_VP, LAMB_VS, LAMB_RHO, dim=2)
    nr = NonReflectingFace()
    blk = ElasticBlock(geo.build_grid(mapping, tr), LAMB_RHO, C,
                       {"xmin": nr, "xmax": nr, "ymin": nr, "ymax": "free_surface"})
    asm = assemble([blk])
    src_node, dist = asm.locate(mapping.forward(np.array([0.0, y1])))
    if dist > 1e-9:
        raise ValueError("the source point is not a grid node")
    sources = [PointForce(src_node, -force * normal, nu0)]
    receivers = []
    for off in receiver_offsets:
        pt = mapping.forward(np.array([float(off), y1]))
        receivers.append(receiver_at(asm, f"r{off:g}", pt))
    info = dict(level=level, p=p, kind=kind, nodes=(n1, n2), angle_deg=angle_deg,
                spacing=((x1 - x0) / (n1 - 1), (y1 - y0) / (n2 - 1)), normal=normal, nu0=nu0)
    return Scenario(asm, sources, receivers, info)


def tti_two_layer(n_horizontal=61, n_top=25, n_bottom=21, extent=1200.0, depth=(300.0, 400.0),
                  p=8, kind="shifted", seed=7, amplitude=60.0, n_hills=6, nu0=10.0, moment=1e12):
    """Two-block 3D model: TTI layer under Gaussian topography on a TTI layer.

    The interface repeats the topography shape at half amplitude and the
    bottom surface repeats the interface shape.  The top surface is free,
    every other outer face is non-reflecting.  An explosion source sits at
    the centre of the top surface.
    """
    L = float(extent)
    topo = geo.gaussian_topography(seed, amplitude, n_hills, ((0.0, L), (0.0, L)), base=0.0)
    interface = topo.scaled(0.5, base=-depth[0])
    bottom = interface.scaled(1.0, base=-depth[0] - depth[1])
    Ct = tti_stiffness(**{k: TTI_TOP[k] for k in ("vp", "vs", "rho", "eps", "gamma", "delta")},
                       tilt=TTI_TOP["tilt"], azimuth=TTI_TOP["azimuth"])
    Cb = tti_stiffness(**{k: TTI_BOTTOM[k] for k in ("vp", "vs", "rho", "eps", "gamma", "delta")},
                       tilt=TTI_BOTTOM["tilt"], azimuth=TTI_BOTTOM["azimuth"])
    hx = [sbp.build_triplet(kind, n_horizontal, p=p, a=0.0, b=L) for _ in range(2)]
    nr = NonReflectingFace()
    side = {"xmin": nr, "xmax": nr, "ymin": nr, "ymax": nr}
    top_map = geo.LayerMapping(3, interface, topo)
    bot_map = geo.LayerMapping(3, bottom, interface)
    top = ElasticBlock(geo.build_grid(top_map, hx + [sbp.build_triplet(kind, n_top, p=p, a=0.0, b=1.0)]),
                       TTI_TOP["rho"], Ct, dict(side, zmax="free_surface", zmin=InterfaceFace(1, "zmax")), "top")
    bot = ElasticBlock(geo.build_grid(bot_map, hx + [sbp.build_triplet(kind, n_bottom, p=p, a=0.0, b=1.0)]),
                       TTI_BOTTOM["rho"], Cb, dict(side, zmin=nr, zmax=InterfaceFace(0, "zmin")), "bottom")
    asm = assemble([top, bot])
    c = n_horizontal // 2
    src = Explosion(0, (c, c, n_top - 1), moment, nu0)
    receivers = [receiver_at(asm, "center", top.x[c, c, -1]),
                 receiver_at(asm, "offset", top.x[min(c + n_horizontal // 4, n_horizontal - 1), c, -1])]
    return Scenario(asm, [src], receivers, dict(seed=seed, nodes=(n_horizontal, n_horizontal, n_top + n_bottom)))
