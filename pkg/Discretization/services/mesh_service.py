"""
Mesh Service
Structured quadrilateral meshes, boundary tagging and the local-to-global dof maps.
"""

import hashlib
import logging
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from errors import ConfigurationError, InvalidArgumentError
from models import (
    BasisSpec, BoundaryTag, BoundaryTags, Discretization, DofMaps, ElementSide, QuadMesh
)
from Discretization.services.basis_service import BasisService, SIDE_VERTICES, VERTEX_MODES
from settings import REFERENCE_GLOBAL_DOFS

logger = logging.getLogger(__name__)

GRID_TOL = 1e-12


class MeshService:

    @staticmethod
    def build_channel_mesh(
        nx: int,
        ny: int,
        lx: float,
        ly: float,
        origin: Tuple[float, float] = (0.0, 0.0),
    ) -> QuadMesh:
        """
        Uniform nx x ny grid of axis-aligned quads covering [x0, x0+lx] x [y0, y0+ly]

        Args:
            nx: Elements in x
            ny: Elements in y
            lx: Domain length
            ly: Domain height
            origin: Lower-left corner

        Returns:
            QuadMesh with elements numbered e = j*nx + i
        """
        if nx < 1 or ny < 1:
            raise InvalidArgumentError(f"Element counts must be positive, got nx={nx}, ny={ny}")
        if lx <= 0 or ly <= 0:
            raise InvalidArgumentError(f"Domain lengths must be positive, got lx={lx}, ly={ly}")

        hx, hy = lx / nx, ly / ny
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        ii, jj = ii.ravel(), jj.ravel()
        x0 = origin[0] + ii * hx
        y0 = origin[1] + jj * hy

        corners = np.array(VERTEX_MODES, dtype=float)
        vertices = np.stack(
            [np.stack([x0 + cx * hx, y0 + cy * hy], axis=1) for cx, cy in corners], axis=1
        )
        center = np.stack([x0 + 0.5 * hx, y0 + 0.5 * hy], axis=1)
        scale = np.tile([0.5 * hx, 0.5 * hy], (nx * ny, 1))
        jacobian = scale[:, 0] * scale[:, 1]

        shared = []
        for j in range(ny):
            for i in range(nx):
                e = j * nx + i
                if i + 1 < nx:
                    shared.append((e, ElementSide.RIGHT, e + 1, ElementSide.LEFT))
                if j + 1 < ny:
                    shared.append((e, ElementSide.TOP, e + nx, ElementSide.BOTTOM))
        shared_edges = np.array(
            [
                (a, int(sa), b, int(sb), MeshService._orientation(nx, a, sa, b, sb))
                for a, sa, b, sb in shared
            ],
            dtype=np.int64,
        ).reshape(-1, 5)

        boundary = []
        for e in range(nx * ny):
            i, j = e % nx, e // nx
            if j == 0:
                boundary.append((e, int(ElementSide.BOTTOM)))
            if i == nx - 1:
                boundary.append((e, int(ElementSide.RIGHT)))
            if j == ny - 1:
                boundary.append((e, int(ElementSide.TOP)))
            if i == 0:
                boundary.append((e, int(ElementSide.LEFT)))

        mesh = QuadMesh(
            nx=nx,
            ny=ny,
            lx=lx,
            ly=ly,
            origin=origin,
            vertices=vertices,
            element_center=center,
            element_scale=scale,
            jacobian=jacobian,
            shared_edges=shared_edges,
            boundary_edges=np.array(boundary, dtype=np.int64),
        )
        logger.info(f"Built {nx}x{ny} mesh on [{origin[0]}, {origin[0] + lx}] x [{origin[1]}, {origin[1] + ly}] ({mesh.n_elements} elements)")
        return mesh

    @staticmethod
    def _grid_vertex(nx: int, element: int, local_vertex: int) -> int:
        i, j = element % nx, element // nx
        di, dj = VERTEX_MODES[local_vertex]
        return (j + dj) * (nx + 1) + (i + di)

    @staticmethod
    def _edge_direction(nx: int, element: int, side: int) -> int:
        """+1 when the side's mode parametrization runs from the lower to the higher grid vertex"""
        start, end = SIDE_VERTICES[ElementSide(side)]
        return 1 if MeshService._grid_vertex(nx, element, start) < MeshService._grid_vertex(nx, element, end) else -1

    @staticmethod
    def _orientation(nx: int, a: int, side_a: int, b: int, side_b: int) -> int:
        return MeshService._edge_direction(nx, a, side_a) * MeshService._edge_direction(nx, b, side_b)

    @staticmethod
    def side_span(mesh: QuadMesh, element: int, side: int) -> Tuple[np.ndarray, np.ndarray]:
        """Physical start and end points of a side, in mode parametrization order"""
        start, end = SIDE_VERTICES[ElementSide(side)]
        return mesh.vertices[element, start], mesh.vertices[element, end]

    @staticmethod
    def tag_boundaries(
        mesh: QuadMesh,
        inflow_span: Tuple[float, float],
        subedge_projection: bool = True,
    ) -> BoundaryTags:
        """
        Tag every boundary edge: right side outflow, left edges overlapping the span inflow, the rest walls

        Args:
            mesh: Channel mesh
            inflow_span: (y0, y1) of the inflow window, measured from the mesh origin
            subedge_projection: Allow spans that cut through element edges

        Returns:
            BoundaryTags aligned with mesh.boundary_edges
        """
        y0, y1 = inflow_span
        if not (0.0 <= y0 < y1 <= mesh.ly):
            raise ConfigurationError(f"Inflow span {inflow_span} must satisfy 0 <= y0 < y1 <= {mesh.ly}")

        if not subedge_projection:
            for y in (y0, y1):
                ratio = y / mesh.hy
                if abs(ratio - round(ratio)) > GRID_TOL * max(1.0, ratio):
                    raise ConfigurationError(
                        f"Inflow span endpoint y={y} does not lie on an element edge "
                        f"(grid spacing {mesh.hy}); enable sub-edge projection or change the mesh"
                    )

        tags = []
        for element, side in mesh.boundary_edges:
            if side == ElementSide.RIGHT:
                tags.append(BoundaryTag.OUTFLOW)
            elif side == ElementSide.LEFT:
                start, end = MeshService.side_span(mesh, element, side)
                lo = start[1] - mesh.origin[1]
                hi = end[1] - mesh.origin[1]
                overlap = min(hi, y1) - max(lo, y0)
                tags.append(BoundaryTag.INFLOW if overlap > GRID_TOL else BoundaryTag.WALL)
            else:
                tags.append(BoundaryTag.WALL)

        n_inflow = tags.count(BoundaryTag.INFLOW)
        logger.info(f"Tagged {len(tags)} boundary edges: {n_inflow} inflow, {tags.count(BoundaryTag.OUTFLOW)} outflow")
        return BoundaryTags(
            edges=mesh.boundary_edges,
            tags=tags,
            inflow_span=(y0, y1),
            subedge_projection=subedge_projection,
        )

    @staticmethod
    def tag_dirichlet_everywhere(mesh: QuadMesh) -> BoundaryTags:
        """Prescribed velocity on the whole boundary"""
        return BoundaryTags(
            edges=mesh.boundary_edges,
            tags=[BoundaryTag.INFLOW] * len(mesh.boundary_edges),
            inflow_span=None,
        )

    @staticmethod
    def build_dof_maps(mesh: QuadMesh, spec: BasisSpec, tags: BoundaryTags) -> DofMaps:
        """
        Local-to-global boundary velocity map M and the mean-pressure permutation P

        Global scalar boundary dofs are numbered by first appearance over (element, local boundary mode).

        Args:
            mesh: Structured mesh
            spec: Basis orders
            tags: Boundary tags (Dirichlet mask and pressure pin)

        Returns:
            DofMaps
        """
        p = spec.order_velocity
        nb = 4 * p
        n_el = mesh.n_elements

        numbering: Dict[Tuple, int] = {}
        scalar_index = np.zeros((n_el, nb), dtype=np.int64)
        scalar_sign = np.ones((n_el, nb))

        for e in range(n_el):
            for v in range(4):
                key = ("v", MeshService._grid_vertex(mesh.nx, e, v))
                scalar_index[e, v] = numbering.setdefault(key, len(numbering))
            for side in ElementSide:
                start, end = SIDE_VERTICES[side]
                a = MeshService._grid_vertex(mesh.nx, e, start)
                b = MeshService._grid_vertex(mesh.nx, e, end)
                _, _, edge_ids = BasisService.edge_modes(p, side)
                for k, local in enumerate(edge_ids, start=1):
                    key = ("e", min(a, b), max(a, b), k)
                    scalar_index[e, local] = numbering.setdefault(key, len(numbering))
                    if a > b:
                        # phi_k(-t) = (-1)^(k-1) phi_k(t)
                        scalar_sign[e, local] = (-1.0) ** (k - 1)

        n_scalar = len(numbering)
        gather_index = np.concatenate([scalar_index, scalar_index + n_scalar], axis=1)
        gather_sign = np.concatenate([scalar_sign, scalar_sign], axis=1)
        n_global = 2 * n_scalar

        rows = np.arange(gather_index.size)
        gather = sp.csr_matrix(
            (gather_sign.ravel(), (rows, gather_index.ravel())),
            shape=(gather_index.size, n_global),
        )
        multiplicity = np.bincount(gather_index.ravel(), minlength=n_global).astype(float)

        dirichlet = np.zeros(n_global, dtype=bool)
        for (element, side), tag in zip(tags.edges, tags.tags):
            if tag == BoundaryTag.OUTFLOW:
                continue
            start, end, edge_ids = BasisService.edge_modes(p, side)
            local = [start, end] + edge_ids
            dirichlet[scalar_index[element, local]] = True
            dirichlet[scalar_index[element, local] + n_scalar] = True

        n_pressure = (spec.order_pressure + 1) ** 2
        means = np.arange(n_el) * n_pressure
        rest = (np.arange(n_el)[:, None] * n_pressure + np.arange(1, n_pressure)[None, :]).ravel()
        permutation = np.concatenate([means, rest]).astype(np.int64)

        pressure_pin = None if tags.has_outflow else 0

        digest = hashlib.sha256()
        for array in (gather_index, gather_sign, dirichlet, permutation):
            digest.update(np.ascontiguousarray(array).tobytes())
        digest.update(str(pressure_pin).encode())

        maps = DofMaps(
            n_elements=n_el,
            n_scalar_boundary=n_scalar,
            gather_index=gather_index,
            gather_sign=gather_sign,
            gather=gather,
            multiplicity=multiplicity,
            dirichlet_mask=dirichlet,
            pressure_pin=pressure_pin,
            n_pressure=n_pressure,
            mean_pressure_permutation=permutation,
            checksum=digest.hexdigest(),
        )
        logger.info(f"Dof maps: {maps.n_local_boundary} local / {n_global} global boundary velocity dofs, {int(dirichlet.sum())} Dirichlet")
        return maps

    @staticmethod
    def build_discretization(mesh: QuadMesh, spec: BasisSpec, tags: BoundaryTags) -> Discretization:
        """Bundle mesh, basis tables, tags and dof maps under one fingerprint"""
        rule, velocity_modes, pressure_modes, velocity_table, pressure_table = BasisService.tensor_tables(spec)
        maps = MeshService.build_dof_maps(mesh, spec, tags)

        key = (
            f"{mesh.nx}|{mesh.ny}|{mesh.lx!r}|{mesh.ly!r}|{mesh.origin!r}|"
            f"{spec.order_velocity}|{spec.order_pressure}|{spec.quad_points}|{maps.checksum}"
        )
        fingerprint = hashlib.sha256(key.encode()).hexdigest()

        return Discretization(
            spec=spec,
            mesh=mesh,
            tags=tags,
            maps=maps,
            rule=rule,
            velocity_modes=velocity_modes,
            pressure_modes=pressure_modes,
            velocity_table=velocity_table,
            pressure_table=pressure_table,
            fingerprint=fingerprint,
        )

    @staticmethod
    def global_dof_counts(disc: Discretization, reference: Optional[int] = REFERENCE_GLOBAL_DOFS) -> Dict[str, int]:
        """
        Dof bookkeeping of the discretization

        Returns:
            Dict with local/global boundary velocity, interior velocity, pressure and total counts
        """
        n_el = disc.n_elements
        counts = {
            "local_boundary_velocity": disc.maps.n_local_boundary,
            "global_boundary_velocity": disc.maps.n_global_boundary,
            "dirichlet_velocity": int(disc.maps.dirichlet_mask.sum()),
            "interior_velocity": n_el * 2 * disc.n_interior_modes,
            "pressure": n_el * disc.n_pressure,
        }
        counts["total"] = counts["global_boundary_velocity"] + counts["interior_velocity"] + counts["pressure"]
        counts["schur"] = counts["global_boundary_velocity"] + n_el

        if reference is not None:
            logger.info(
                f"Global dofs: {counts['total']} (boundary velocity {counts['global_boundary_velocity']}, "
                f"interior velocity {counts['interior_velocity']}, pressure {counts['pressure']}); "
                f"published reference count {reference}, difference {counts['total'] - reference}"
            )
        return counts
