"""Linear discrete-time transient model of a pipeline network.

States are node densities followed by the two end flows of every pipeline::

    x = [rho_1 .. rho_nN, m_1^from, m_1^to, .. m_nL^from, m_nL^to]

Each pipeline contributes a continuity and a momentum row obtained by
box-scheme (two-point, time-centred) differencing of the isothermal,
convection-free flow equations with one spatial element per pipe. Sources add
a density-pinning row, sinks a nodal mass balance row, which closes the
system ``A x_{t+1} = B x_t + U_{t+1}`` and gives ``x_{t+1} = F x_t + u_{t+1}``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .network import GasNetwork, Pipeline


class SingularModelError(np.linalg.LinAlgError):
    """The assembled left-hand matrix is (numerically) singular."""


class SteadyStateError(RuntimeError):
    """The steady-state iteration failed or produced an infeasible state."""


@dataclass(frozen=True)
class StateIndex:
    n_nodes: int
    n_pipelines: int

    @property
    def dim(self) -> int:
        return self.n_nodes + 2 * self.n_pipelines

    def density_slot(self, node_id: int) -> int:
        if not 1 <= node_id <= self.n_nodes:
            raise KeyError(node_id)
        return node_id - 1

    def flow_slot(self, pipe: int, end: str) -> int:
        """Slot of a pipeline end flow; ``pipe`` is the 0-based pipeline index."""
        if not 0 <= pipe < self.n_pipelines:
            raise KeyError(pipe)
        if end not in ("from", "to"):
            raise ValueError(f"end must be 'from' or 'to', got {end!r}")
        return self.n_nodes + 2 * pipe + (end == "to")

    @property
    def density_slots(self) -> slice:
        return slice(0, self.n_nodes)

    @property
    def flow_slots(self) -> slice:
        return slice(self.n_nodes, self.dim)


def build_index(net: GasNetwork) -> StateIndex:
    return StateIndex(net.n_nodes, net.n_pipelines)


@dataclass(frozen=True)
class PipelineCoefficients:
    """Stencil coefficients for one pipeline.

    ``flow`` multiplies the end-flow difference in the continuity row,
    ``alpha`` the density difference in the momentum row and ``gamma`` the
    end-flow sum through friction.
    """

    flow: float
    alpha: float
    gamma: float


def pipeline_coefficients(pipe: Pipeline, dt: float, c: float, u_bar: float,
                          friction_factor: float) -> PipelineCoefficients:
    a = pipe.area
    return PipelineCoefficients(
        flow=dt / (a * pipe.length),
        alpha=a * dt * c**2 / pipe.length,
        gamma=friction_factor * abs(u_bar) * dt / (4.0 * pipe.diameter),
    )


def pipeline_rows(pipe: Pipeline, dt: float, c: float, u_bar: float, friction_factor: float,
                  index: StateIndex, pipe_idx: int):
    """Continuity and momentum rows of one pipeline.

    Returns ``(left, right)``, each a ``(2, dim)`` array; row 0 is continuity,
    row 1 momentum, and ``left @ x_{t+1} = right @ x_t`` holds for the pipe.
    """
    k = pipeline_coefficients(pipe, dt, c, u_bar, friction_factor)
    ri = index.density_slot(pipe.from_node)
    rj = index.density_slot(pipe.to_node)
    mi = index.flow_slot(pipe_idx, "from")
    mj = index.flow_slot(pipe_idx, "to")

    left = np.zeros((2, index.dim))
    right = np.zeros((2, index.dim))

    # continuity: (rho_j + rho_i) + flow*(m_j - m_i) at t+1 == (rho_j + rho_i) - flow*(m_j - m_i) at t
    left[0, [ri, rj]] = 1.0
    left[0, mj] += k.flow
    left[0, mi] -= k.flow
    right[0, [ri, rj]] = 1.0
    right[0, mj] -= k.flow
    right[0, mi] += k.flow

    # momentum: (1+gamma)(m_j + m_i) + alpha(rho_j - rho_i) at t+1
    #        == (1-gamma)(m_j + m_i) - alpha(rho_j - rho_i) at t
    left[1, [mi, mj]] = 1.0 + k.gamma
    left[1, rj] += k.alpha
    left[1, ri] -= k.alpha
    right[1, [mi, mj]] = 1.0 - k.gamma
    right[1, rj] -= k.alpha
    right[1, ri] += k.alpha
    return left, right


def nodal_balance_row(net: GasNetwork, index: StateIndex, node_id: int) -> np.ndarray:
    """Inflow through pipe to-ends minus outflow through from-ends at ``node_id``."""
    row = np.zeros(index.dim)
    for k, end in net.incident(node_id):
        row[index.flow_slot(k, end)] += 1.0 if end == "to" else -1.0
    return row


@dataclass(frozen=True)
class BoundaryRows:
    rows: np.ndarray  # (n_source + n_sink, dim)
    node_ids: tuple[int, ...]  # node owning each row
    is_source: np.ndarray  # bool per row


def boundary_rows(net: GasNetwork, index: StateIndex) -> BoundaryRows:
    """Source density pins first (ascending id), then sink balances (ascending id)."""
    rows, ids, src = [], [], []
    for n in net.sources:
        r = np.zeros(index.dim)
        r[index.density_slot(n.id)] = 1.0
        rows.append(r)
        ids.append(n.id)
        src.append(True)
    for n in net.sinks:
        rows.append(nodal_balance_row(net, index, n.id))
        ids.append(n.id)
        src.append(False)
    return BoundaryRows(np.array(rows).reshape(len(rows), index.dim), tuple(ids), np.array(src))


@dataclass(frozen=True, eq=False)
class TransientModel:
    index: StateIndex
    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    input_transform: np.ndarray
    dt: float
    u_bar: np.ndarray
    boundary: BoundaryRows

    @property
    def n_pde_rows(self) -> int:
        return 2 * self.index.n_pipelines

    def raw_input(self, net: GasNetwork, loads) -> np.ndarray:
        """Right-hand input vector U: source densities and sink loads in boundary rows.

        ``loads`` maps sink node id to load in kg/s; missing sinks carry zero.
        """
        U = np.zeros(self.index.dim)
        for r, (nid, src) in enumerate(zip(self.boundary.node_ids, self.boundary.is_source)):
            U[self.n_pde_rows + r] = net.source_density(nid) if src else loads.get(nid, 0.0)
        return U

    def input_vector(self, net: GasNetwork, loads) -> np.ndarray:
        return self.input_transform @ self.raw_input(net, loads)

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.F @ x + u

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.A))


def assemble_rows(net: GasNetwork, dt: float, u_bar, index: StateIndex | None = None):
    """Stack pipeline and boundary rows into the (A, B) pair, without factorizing."""
    index = index or build_index(net)
    u_bar = np.broadcast_to(np.asarray(u_bar, dtype=float), (net.n_pipelines,))
    A = np.zeros((index.dim, index.dim))
    B = np.zeros((index.dim, index.dim))
    for k, pipe in enumerate(net.pipelines):
        left, right = pipeline_rows(pipe, dt, net.sound_speed, u_bar[k], net.friction_factor,
                                    index, k)
        A[2 * k:2 * k + 2] = left
        B[2 * k:2 * k + 2] = right
    bnd = boundary_rows(net, index)
    A[2 * net.n_pipelines:] = bnd.rows
    return A, B, bnd


def _factorize(A: np.ndarray):
    with warnings.catch_warnings():
        # singularity is reported below with the offending pivot
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    smallest = float(pivots.min())
    if smallest <= 1e-12 * max(float(pivots.max()), 1.0):
        raise SingularModelError(
            f"assembled system is singular: smallest LU pivot {smallest:.3e} "
            f"at row {int(pivots.argmin())}"
        )
    return lu, piv


def assemble(net: GasNetwork, dt: float, u_bar) -> TransientModel:
    if not dt > 0:
        raise ValueError("dt must be positive")
    index = build_index(net)
    A, B, bnd = assemble_rows(net, dt, u_bar, index)
    if A.shape[0] != index.dim:
        raise SingularModelError(f"{A.shape[0]} equations for {index.dim} states")
    lu_piv = _factorize(A)
    F = linalg.lu_solve(lu_piv, B)
    Ainv = linalg.lu_solve(lu_piv, np.eye(index.dim))
    # source rows are unit rows of A with empty B rows: rho_S(t+1) = U exactly,
    # so write them exactly instead of keeping the LU round-off
    for r, (nid, src) in enumerate(zip(bnd.node_ids, bnd.is_source)):
        if src:
            slot = index.density_slot(nid)
            F[slot] = 0.0
            Ainv[slot] = 0.0
            Ainv[slot, 2 * net.n_pipelines + r] = 1.0
    u = np.array(np.broadcast_to(np.asarray(u_bar, dtype=float), (net.n_pipelines,)))
    for arr in (A, B, F, Ainv, u):
        arr.setflags(write=False)
    return TransientModel(index, A, B, F, Ainv, float(dt), u, bnd)


def pipe_flows(index: StateIndex, x: np.ndarray) -> np.ndarray:
    """(n_pipelines, 2) array of [from-end, to-end] flows."""
    return x[index.flow_slots].reshape(-1, 2)


def source_injection(net: GasNetwork, index: StateIndex, x: np.ndarray) -> dict[int, float]:
    return {n.id: -float(nodal_balance_row(net, index, n.id) @ x) for n in net.sources}


def steady_state(net: GasNetwork, loads, max_iter: int = 50, tol: float = 1e-8,
                 u_guess: float = 1.0):
    """Steady state for constant loads, with self-consistent linearization speeds.

    Alternates between solving the time-independent network equations for a
    fixed per-pipe speed and updating that speed from the mean pipe flow and
    mean end density. Returns ``(x, u_bar)``.
    """
    index = build_index(net)
    # a frictionless guess is singular when sources sit at different pressures
    u_bar = np.full(net.n_pipelines, float(u_guess))
    areas = np.array([p.area for p in net.pipelines])
    ends = np.array([[index.density_slot(p.from_node), index.density_slot(p.to_node)]
                     for p in net.pipelines], dtype=int).reshape(-1, 2)
    U = np.zeros(index.dim)
    bnd = boundary_rows(net, index)
    for r, (nid, src) in enumerate(zip(bnd.node_ids, bnd.is_source)):
        U[2 * net.n_pipelines + r] = net.source_density(nid) if src else loads.get(nid, 0.0)
    if not np.all(np.isfinite(U)):
        raise SteadyStateError("loads must be finite")

    for _ in range(max_iter):
        # dt cancels out of the stationary equations; any positive value works
        A, B, _ = assemble_rows(net, 1.0, u_bar, index)
        try:
            x = linalg.solve(A - B, U)
        except linalg.LinAlgError as exc:
            raise SteadyStateError(f"stationary system is singular: {exc}") from exc
        rho = x[index.density_slots]
        if np.any(rho <= 0) or not np.all(np.isfinite(x)):
            raise SteadyStateError("infeasible loads: nonpositive density in steady state")
        m = pipe_flows(index, x).mean(axis=1)
        rho_bar = rho[ends].mean(axis=1)
        # geometric damping: on a source-to-source path flow scales like 1/u_bar and
        # the undamped update oscillates
        new_u = np.sqrt(u_bar * np.abs(m) / (areas * rho_bar))
        change = np.max(np.abs(new_u - u_bar) / np.maximum(np.abs(new_u), 1e-12), initial=0.0)
        u_bar = new_u
        if change < tol:
            A, B, _ = assemble_rows(net, 1.0, u_bar, index)
            x = linalg.solve(A - B, U)
            for n in net.sources:
                x[index.density_slot(n.id)] = net.source_density(n.id)
            return x, u_bar
    raise SteadyStateError(f"steady state did not converge in {max_iter} iterations")


def dump_matrix(M: np.ndarray, fh) -> None:
    """Row-major text dump with a ``rows cols`` header."""
    M = np.atleast_2d(M)
    fh.write(f"{M.shape[0]} {M.shape[1]}\n")
    for row in M:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_matrix(fh) -> np.ndarray:
    rows, cols = (int(t) for t in fh.readline().split())
    data = np.array([[float(t) for t in fh.readline().split()] for _ in range(rows)])
    if data.shape != (rows, cols):
        raise ValueError(f"matrix dump shape {data.shape} does not match header {(rows, cols)}")
    return data
