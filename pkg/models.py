import math
from enum import Enum, IntEnum
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class BoundaryTag(str, Enum):
    INFLOW = "inflow"
    OUTFLOW = "outflow"
    WALL = "wall"


class ElementSide(IntEnum):
    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not_converged"


class PayloadKind(str, Enum):
    SNAPSHOTS = "snapshots"
    ROM = "rom"
    FIELD = "field"


class PodCriterion(str, Enum):
    ENERGY = "energy"
    MODE_FRACTION = "mode_fraction"


class Subcommand(str, Enum):
    VERIFY = "verify"
    SOLVE = "solve"
    OFFLINE = "offline"
    ONLINE = "online"
    COMPARE = "compare"


class ArrayModel(BaseModel):
    """Base for records that hold numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True)


# Basis Models
class BasisSpec(BaseModel):
    """Velocity order p, pressure order p-2 and quadrature points per direction"""
    model_config = ConfigDict(frozen=True)

    order_velocity: int = Field(ge=2)
    quad_points: int = Field(ge=2)
    over_integration: bool = False

    @model_validator(mode="before")
    @classmethod
    def _default_quadrature(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("quad_points") is None:
            p = data.get("order_velocity")
            if isinstance(p, int):
                data = dict(data)
                if data.get("over_integration"):
                    # cubic convective integrand integrated exactly
                    data["quad_points"] = math.ceil((3 * p + 3) / 2)
                else:
                    data["quad_points"] = p + 2
        return data

    @model_validator(mode="after")
    def _check_quadrature(self) -> "BasisSpec":
        if self.quad_points < self.order_velocity + 2:
            raise ValueError(
                f"quad_points={self.quad_points} must be at least order_velocity + 2 = {self.order_velocity + 2}"
            )
        return self

    @computed_field
    @property
    def order_pressure(self) -> int:
        return self.order_velocity - 2


class QuadratureRule(ArrayModel):
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.nodes)


class ModeTable(ArrayModel):
    """1D modes evaluated at quadrature nodes: values[k, i] = phi_i(xi_k)"""
    order: int
    nodes: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    boundary_mode_ids: List[int]
    interior_mode_ids: List[int]

    @property
    def n_points(self) -> int:
        return len(self.nodes)


class TensorTable(ArrayModel):
    """
    2D tensor-product modes at the q*q quadrature grid.
    Columns follow the local mode order (boundary modes first); point k = a*q + b sits at (xi_a, eta_b).
    """
    order: int
    n_points: int
    values: np.ndarray
    d_xi: np.ndarray
    d_eta: np.ndarray
    weights: np.ndarray
    mode_i: np.ndarray
    mode_j: np.ndarray
    n_boundary: int

    @property
    def n_modes(self) -> int:
        return self.values.shape[1]

    @property
    def n_interior(self) -> int:
        return self.n_modes - self.n_boundary


# Mesh Models
class QuadMesh(ArrayModel):
    nx: int
    ny: int
    lx: float
    ly: float
    origin: Tuple[float, float] = (0.0, 0.0)
    vertices: np.ndarray          # (n_el, 4, 2) counter-clockwise from bottom-left
    element_center: np.ndarray    # (n_el, 2)
    element_scale: np.ndarray     # (n_el, 2) half widths of the affine map
    jacobian: np.ndarray          # (n_el,)
    shared_edges: np.ndarray      # (k, 5): element_a, side_a, element_b, side_b, orientation sign
    boundary_edges: np.ndarray    # (m, 2): element, side

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    def element_index(self, i: int, j: int) -> int:
        return j * self.nx + i


class BoundaryTags(ArrayModel):
    edges: np.ndarray
    tags: List[BoundaryTag]
    inflow_span: Optional[Tuple[float, float]] = None
    subedge_projection: bool = True

    @property
    def has_outflow(self) -> bool:
        return BoundaryTag.OUTFLOW in self.tags


class DofMaps(ArrayModel):
    """
    Local-to-global map M for boundary velocity dofs and the mean-pressure permutation P.
    Local boundary velocity dofs per element are [u_x boundary modes, u_y boundary modes];
    global ones are [u_x scalar dofs, u_y scalar dofs].
    """
    n_elements: int
    n_scalar_boundary: int
    gather_index: np.ndarray              # (n_el, 2*n_bnd)
    gather_sign: np.ndarray               # (n_el, 2*n_bnd)
    gather: Any                           # scipy.sparse csr, local x global
    multiplicity: np.ndarray              # (n_global,)
    dirichlet_mask: np.ndarray            # (n_global,) bool
    pressure_pin: Optional[int] = None
    n_pressure: int
    mean_pressure_permutation: np.ndarray  # hat order -> element order index
    checksum: str

    @property
    def n_global_boundary(self) -> int:
        return 2 * self.n_scalar_boundary

    @property
    def n_local_boundary(self) -> int:
        return int(self.gather_index.size)

    @property
    def inverse_pressure_permutation(self) -> np.ndarray:
        inverse = np.empty_like(self.mean_pressure_permutation)
        inverse[self.mean_pressure_permutation] = np.arange(len(self.mean_pressure_permutation))
        return inverse


class Discretization(ArrayModel):
    spec: BasisSpec
    mesh: QuadMesh
    tags: BoundaryTags
    maps: DofMaps
    rule: QuadratureRule
    velocity_modes: ModeTable
    pressure_modes: ModeTable
    velocity_table: TensorTable
    pressure_table: TensorTable
    fingerprint: str

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def n_boundary_modes(self) -> int:
        return self.velocity_table.n_boundary

    @property
    def n_interior_modes(self) -> int:
        return self.velocity_table.n_interior

    @property
    def n_modes(self) -> int:
        return self.velocity_table.n_modes

    @property
    def n_pressure(self) -> int:
        return self.pressure_table.n_modes


class FlowProblem(ArrayModel):
    """A discretization plus its Dirichlet data and body force"""
    discretization: Discretization
    dirichlet_values: np.ndarray     # global boundary velocity vector, zero off the Dirichlet mask
    lift_local: np.ndarray           # (n_el, 2*n_bnd) = M g
    forcing: Optional[Callable[..., Any]] = None
    label: str = "channel"


# Boundary Data Models
class InflowProfile(BaseModel):
    """u_x = (y - y0)(y1 - y) inside the span, zero outside; optional one-sided tilt"""
    model_config = ConfigDict(frozen=True)

    y0: float = 2.5
    y1: float = 3.5
    origin_y: float = 0.0
    perturbation: float = Field(default=0.0, ge=0.0)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = np.asarray(y, dtype=float) - self.origin_y
        inside = (s >= self.y0) & (s <= self.y1)
        ux = np.where(inside, (s - self.y0) * (self.y1 - s), 0.0)
        if self.perturbation:
            mid = 0.5 * (self.y0 + self.y1)
            half = 0.5 * (self.y1 - self.y0)
            ux = ux * (1.0 + self.perturbation * (s - mid) / half)
        return ux, np.zeros_like(ux)

    @property
    def breakpoints(self) -> Tuple[float, float]:
        return self.origin_y + self.y0, self.origin_y + self.y1


class KovasznayFlow(BaseModel):
    """Closed-form steady Navier-Stokes solution with nu = 1/Re"""
    model_config = ConfigDict(frozen=True)

    reynolds: float = Field(default=40.0, gt=0)

    @property
    def nu(self) -> float:
        return 1.0 / self.reynolds

    @property
    def lam(self) -> float:
        re = self.reynolds
        return 0.5 * re - math.sqrt(0.25 * re * re + 4.0 * math.pi ** 2)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lam = self.lam
        ex = np.exp(lam * x)
        ux = 1.0 - ex * np.cos(2.0 * math.pi * y)
        uy = lam / (2.0 * math.pi) * ex * np.sin(2.0 * math.pi * y)
        return ux, uy

    def gradient(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(dux/dx, dux/dy, duy/dx, duy/dy)"""
        lam = self.lam
        ex = np.exp(lam * x)
        c = np.cos(2.0 * math.pi * y)
        s = np.sin(2.0 * math.pi * y)
        return (
            -lam * ex * c,
            2.0 * math.pi * ex * s,
            lam * lam / (2.0 * math.pi) * ex * s,
            lam * ex * c,
        )

    def pressure(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 - np.exp(2.0 * self.lam * x))


# Assembly Models
class LocalBlockSystem(ArrayModel):
    """
    Per-element blocks of the Oseen system, stacked over elements.
    bt_tilde holds the interior x boundary block (B-tilde transposed).
    """
    nu: float
    a: np.ndarray
    b: np.ndarray
    bt_tilde: np.ndarray
    c: np.ndarray
    d_bnd: np.ndarray
    d_int: np.ndarray
    f_bnd: np.ndarray
    f_int: np.ndarray
    g_p: np.ndarray
    lift_bnd: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.a.shape[0]


class FlowField(ArrayModel):
    velocity: np.ndarray    # (n_el, 2, n_modes) local mode order
    pressure: np.ndarray    # (n_el, n_pressure)
    nu: Optional[float] = None
    iterations: int = 0

    @classmethod
    def zeros(cls, discretization: Discretization, nu: Optional[float] = None) -> "FlowField":
        n_el = discretization.n_elements
        return cls(
            velocity=np.zeros((n_el, 2, discretization.n_modes)),
            pressure=np.zeros((n_el, discretization.n_pressure)),
            nu=nu,
        )


# Condensation Models
class Level1System(ArrayModel):
    s_vv: np.ndarray
    s_vp: np.ndarray
    s_pv: np.ndarray
    s_pp: np.ndarray
    r_v: np.ndarray
    r_p: np.ndarray
    c_factors: List[Any]


class HatSystem(ArrayModel):
    """Reordered system: b = [global boundary velocity, element mean pressures], p_hat = remaining pressures"""
    a_hat: Any
    b_hat: Any
    c_hat: Any
    d_hat: np.ndarray        # (n_el, n_p - 1, n_p - 1)
    f_bnd: np.ndarray
    f_p: np.ndarray
    free_index: np.ndarray
    fixed_index: np.ndarray
    fixed_values: np.ndarray
    element_b_index: np.ndarray   # (n_el, 2*n_bnd + 1) b dofs touched by each element
    element_b_sign: np.ndarray
    b_local: np.ndarray           # (n_el, 2*n_bnd + 1, n_p - 1)
    c_local: np.ndarray           # (n_el, n_p - 1, 2*n_bnd + 1)
    n_velocity: int

    @property
    def n_b(self) -> int:
        return self.a_hat.shape[0]

    @property
    def n_rest_per_element(self) -> int:
        return self.d_hat.shape[1]


class SchurSystem(ArrayModel):
    matrix: np.ndarray
    rhs: np.ndarray
    d_factors: List[Any]
    free_index: np.ndarray
    fixed_index: np.ndarray
    fixed_values: np.ndarray
    n_b: int


# Solver Models
class IterationConfig(BaseModel):
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=100, ge=1)
    continuation_step: Optional[float] = Field(default=None, gt=0)
    under_relaxation: float = Field(default=1.0, gt=0, le=1)
    # iterates mixed per step; 0 is the plain Oseen fixed point
    acceleration_depth: int = Field(default=5, ge=0)
    # bisections of a failed continuation move before the sweep halts
    max_step_halvings: int = Field(default=6, ge=0)


class SteadySolution(ArrayModel):
    field: FlowField
    nu: float
    status: SolveStatus
    iterations: int
    history: List[float]
    iteration_times: List[float]

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    @property
    def final_rel_change(self) -> float:
        return self.history[-1] if self.history else 0.0

    @property
    def median_iteration_time(self) -> float:
        return float(np.median(self.iteration_times)) if self.iteration_times else 0.0


class SweepResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    nu: float = Field(gt=0)
    status: SolveStatus = SolveStatus.CONVERGED
    iterations: Optional[int] = None
    final_rel_change: Optional[float] = None
    asymmetry: Optional[float] = None
    fom_time_s: Optional[float] = None
    rom_time_s: Optional[float] = None
    rel_h1_error: Optional[float] = None
    solution: Optional[Any] = Field(default=None, exclude=True, repr=False)

    @computed_field
    @property
    def reynolds(self) -> float:
        return 1.0 / (4.0 * self.nu)


# Reduction Models
class SnapshotSet(ArrayModel):
    """Columns are homogeneous hat-ordered states (lift removed) and the matching interior velocities"""
    parameters: List[float]
    states: np.ndarray
    interior: np.ndarray
    fingerprint: str

    @model_validator(mode="after")
    def _check_consistency(self) -> "SnapshotSet":
        if self.states.ndim != 2 or self.interior.ndim != 2:
            raise ValueError("snapshot matrices must be two-dimensional")
        if self.states.shape[1] != len(self.parameters) or self.interior.shape[1] != len(self.parameters):
            raise ValueError("one snapshot column per parameter is required")
        if len(set(self.parameters)) != len(self.parameters):
            raise ValueError("snapshot parameters must be distinct")
        return self

    @property
    def count(self) -> int:
        return len(self.parameters)


class PodBasis(ArrayModel):
    modes: np.ndarray
    singular_values: np.ndarray
    n_modes: int
    energy_fraction: float
    criterion: PodCriterion = PodCriterion.ENERGY

    @property
    def truncation_tail(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.energy_fraction))


class ReducedProjection(ArrayModel):
    """U = P M V per element, plus the interior-velocity basis W"""
    state_modes: np.ndarray       # V, (n_state, N)
    interior_modes: np.ndarray    # W, (n_interior, N_i)
    local_state: np.ndarray       # (n_el, 2*n_bnd + n_p, N)
    local_interior: np.ndarray    # (n_el, 2*n_int, N_i)
    fingerprint: str

    @property
    def n_modes(self) -> int:
        return self.state_modes.shape[1]

    @property
    def n_interior(self) -> int:
        return self.interior_modes.shape[1]


class RomOperators(ArrayModel):
    """
    Reduced operator over y = [a (N boundary/pressure coords), c (N_i interior coords)]:
    A(nu, y) = nu*k_visc + k_fixed + t_lift + sum_m y_m t_conv[m]
    rhs(nu, y) = rhs_force - nu*rhs_visc - rhs_fixed - rhs_lift - rhs_conv @ y
    """
    n_modes: int
    n_interior: int
    k_visc: np.ndarray
    k_fixed: np.ndarray
    t_lift: np.ndarray
    t_conv: np.ndarray
    rhs_force: np.ndarray
    rhs_visc: np.ndarray
    rhs_fixed: np.ndarray
    rhs_lift: np.ndarray
    rhs_conv: np.ndarray
    fingerprint: str

    @property
    def size(self) -> int:
        return self.n_modes + self.n_interior


class RomSolution(ArrayModel):
    nu: float
    coordinates: np.ndarray
    n_modes: int
    status: SolveStatus
    iterations: int
    history: List[float]
    iteration_times: List[float]

    @property
    def boundary_coordinates(self) -> np.ndarray:
        return self.coordinates[:self.n_modes]

    @property
    def interior_coordinates(self) -> np.ndarray:
        return self.coordinates[self.n_modes:]

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    @property
    def median_iteration_time(self) -> float:
        return float(np.median(self.iteration_times)) if self.iteration_times else 0.0


# Storage Models
class ArtifactHeader(BaseModel):
    magic: str = "SEMRB"
    version: int = 1
    fingerprint: str
    kind: PayloadKind


# CLI Models
class RunConfig(BaseModel):
    subcommand: Subcommand
    nx: int = Field(default=8, ge=1)
    ny: int = Field(default=4, ge=1)
    lx: float = Field(default=36.0, gt=0)
    ly: float = Field(default=6.0, gt=0)
    order: int = Field(default=12, ge=2)
    quad: Optional[int] = None
    nu: Optional[List[float]] = None
    nu_range: Optional[Tuple[float, float]] = None
    nu_count: Optional[int] = Field(default=None, ge=0)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=100, ge=1)
    relax: float = Field(default=1.0, gt=0, le=1)
    continuation_step: Optional[float] = Field(default=None, gt=0)
    acceleration_depth: int = Field(default=5, ge=0)
    max_step_halvings: int = Field(default=6, ge=0)
    perturb: bool = False
    cold_start: bool = False
    energy: float = Field(default=0.999, gt=0, le=1)
    pod_criterion: PodCriterion = PodCriterion.ENERGY
    snapshots_path: str
    rom_path: str
    report_path: str
    output_dir: str
    threads: int = Field(default=1, ge=1)
    allow_partial: bool = False
    inflow_span: Tuple[float, float] = (2.5, 3.5)
    strict_inflow: bool = False
    grid: Tuple[int, int] = (361, 61)
    p_list: List[int] = Field(default_factory=lambda: [4, 6, 8, 10])
    kovasznay_re: float = Field(default=40.0, gt=0)

    @field_validator("nu")
    @classmethod
    def _positive_nu(cls, values: Optional[List[float]]) -> Optional[List[float]]:
        if values is not None and any(v <= 0 for v in values):
            raise ValueError("viscosities must be positive")
        return values

    @field_validator("nu_range")
    @classmethod
    def _positive_range(cls, bounds: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if bounds is not None and min(bounds) <= 0:
            raise ValueError("viscosity range must be positive")
        return bounds

    @field_validator("grid", mode="before")
    @classmethod
    def _parse_grid(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = value.lower().split("x")
            if len(parts) != 2:
                raise ValueError(f"grid must look like NXxNY, got {value}")
            return int(parts[0]), int(parts[1])
        return value

    @field_validator("p_list")
    @classmethod
    def _orders(cls, values: List[int]) -> List[int]:
        if any(p < 2 for p in values):
            raise ValueError("polynomial orders must be at least 2")
        return values

    @model_validator(mode="after")
    def _check_span(self) -> "RunConfig":
        y0, y1 = self.inflow_span
        if not 0 <= y0 < y1 <= self.ly:
            raise ValueError(f"inflow span {self.inflow_span} must satisfy 0 <= y0 < y1 <= ly")
        if self.grid[0] < 2 or self.grid[1] < 2:
            raise ValueError("export grid needs at least 2 points per direction")
        return self

    def nu_values(self, default_count: int) -> List[float]:
        """Explicit list, else a uniform range; always sorted descending (easy to hard)"""
        if self.nu is not None:
            return sorted(self.nu, reverse=True)
        high, low = self.nu_range if self.nu_range is not None else (0.0075, 0.0025)
        count = self.nu_count if self.nu_count is not None else default_count
        if count == 0:
            return []
        if count == 1:
            return [max(high, low)]
        return sorted(np.linspace(high, low, count).tolist(), reverse=True)
