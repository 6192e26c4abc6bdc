"""Temperature transport on the flattened domain.

The heat problem is posed in weak form against nodal bilinear elements on
the reference rectangle: find theta vanishing on walls and bottom with

    (d/dt theta, psi)_J + k (grad_calA theta, grad_calA psi)_J
        + <theta, psi |N|>_Sigma = (F8, psi)_J + <F9, psi>_Sigma
        + (transport terms, psi)_J

where (.,.)_J carries the volume weight Jvol = J H of the composed
flattening and <.,.>_Sigma is the top-edge line integral (the Robin weight
|N| sits in the operator; inhomogeneous Robin data F9 pairs against the
flat measure). The conduction tensor at a quadrature point is
k Jvol c^T c with c the effective cofactor matrix, so the stiffness is
symmetric positive definite by construction and Crank-Nicolson stepping
satisfies a discrete energy identity on static geometry.

Transport (u . grad_calA theta and the mesh-motion term
dt(etabar) W K d2 theta) is explicit with two-level extrapolation, keeping
the implicit part linear and symmetric.

The spectral path projects the same matrices onto a frozen eigenbasis of
(B, M); with the full basis on static geometry it reproduces the nodal
stepper to roundoff, which is a strong consistency check between the two
discretization routes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry


# ============================================================
# operator assembly
# ============================================================

_GP = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class HeatOperators:
    """Mass, conduction + Robin stiffness and surface load matrices."""

    def __init__(self, fields, k_cond):
        grid = fields.grid
        nx, ny = grid.nx, grid.ny
        hx, hs = grid.hx, grid.hs
        self.grid = grid
        self.k_cond = k_cond
        nn = (nx + 1) * (ny + 1)

        # tensor grid of 2x2 Gauss stations, cell (i, j) owns [2i+gx, 2j+gz]
        dx = hx * (np.array(_GP) - 0.5)
        xg = (grid.xc[:, None] + dx[None, :]).ravel()
        dz = hs * (np.array(_GP) - 0.5)
        sg = (grid.sc[:, None] + dz[None, :]).ravel()
        met = fields.sample_metric(xg, sg)
        srf = fields.surface_metric(xg)

        ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        corners = [ci * (ny + 1) + cj, (ci + 1) * (ny + 1) + cj,
                   ci * (ny + 1) + cj + 1, (ci + 1) * (ny + 1) + cj + 1]

        Kloc = np.zeros((4, 4, nx, ny))
        Mloc = np.zeros((4, 4, nx, ny))
        w = hx * hs / 4.0
        for gx in range(2):
            for gz in range(2):
                xi, ze = _GP[gx], _GP[gz]
                Na = np.array([(1 - xi) * (1 - ze), xi * (1 - ze),
                               (1 - xi) * ze, xi * ze])
                dNx = np.array([-(1 - ze), (1 - ze), -ze, ze]) / hx
                dNs = np.array([-(1 - xi), -xi, (1 - xi), xi]) / hs
                jv = met["Jvol"][gx::2, gz::2]
                c12 = met["c12"][gx::2, gz::2]
                c22 = met["c22"][gx::2, gz::2]
                d11 = k_cond * jv
                d12 = k_cond * jv * c12
                d22 = k_cond * jv * (c12 ** 2 + c22 ** 2)
                for a in range(4):
                    for b in range(4):
                        Kloc[a, b] += w * (dNx[a] * dNx[b] * d11
                                           + (dNx[a] * dNs[b]
                                              + dNs[a] * dNx[b]) * d12
                                           + dNs[a] * dNs[b] * d22)
                        Mloc[a, b] += w * Na[a] * Na[b] * jv

        rows, cols, kv, mv = [], [], [], []
        for a in range(4):
            for b in range(4):
                rows.append(corners[a].ravel())
                cols.append(corners[b].ravel())
                kv.append(Kloc[a, b].ravel())
                mv.append(Mloc[a, b].ravel())
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.M = sp.csr_matrix((np.concatenate(mv), (rows, cols)), (nn, nn))
        K = sp.csr_matrix((np.concatenate(kv), (rows, cols)), (nn, nn))

        # top edge: 1D linear elements, Robin weight |N|, flat-load variant
        seg_l = np.arange(nx) * (ny + 1) + ny
        seg_r = (np.arange(nx) + 1) * (ny + 1) + ny
        segs = [seg_l, seg_r]
        Sloc = np.zeros((2, 2, nx))
        Floc = np.zeros((2, 2, nx))
        for g in range(2):
            xi = _GP[g]
            N1 = np.array([1 - xi, xi])
            absn = srf["abs_n"][g::2]
            for a in range(2):
                for b in range(2):
                    Sloc[a, b] += 0.5 * hx * N1[a] * N1[b] * absn
                    Floc[a, b] += 0.5 * hx * N1[a] * N1[b]
        rows, cols, sv, fv = [], [], [], []
        for a in range(2):
            for b in range(2):
                rows.append(segs[a])
                cols.append(segs[b])
                sv.append(Sloc[a, b])
                fv.append(Floc[a, b])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.S_robin = sp.csr_matrix((np.concatenate(sv), (rows, cols)),
                                     (nn, nn))
        self.S_flat = sp.csr_matrix((np.concatenate(fv), (rows, cols)),
                                    (nn, nn))
        self.B = (K + self.S_robin).tocsr()

        free = np.zeros((nx + 1, ny + 1), bool)
        free[1:nx, 1:] = True
        self.free = np.flatnonzero(free.ravel())
        self.M_ff = self.M[self.free][:, self.free].tocsc()
        self.B_ff = self.B[self.free][:, self.free].tocsc()
        self._lu = {}

    def lu(self, key, mat):
        if key not in self._lu:
            self._lu[key] = spla.splu(mat.tocsc())
        return self._lu[key]

    def embed(self, vec_free):
        nn = self.M.shape[0]
        out = np.zeros(nn)
        out[self.free] = vec_free
        return out


def heat_operators(fields, k_cond):
    key = ("heat_ops", float(k_cond))
    if key not in fields._cache:
        fields._cache[key] = HeatOperators(fields, k_cond)
    return fields._cache[key]


# ============================================================
# state
# ============================================================

@dataclass
class HeatState:
    theta: np.ndarray               # (nx+1, ny+1) node samples
    time: float = 0.0
    dt: float = 0.0
    levels: list = field(default_factory=list)  # previous thetas, newest first

    def dtheta_dt(self):
        if not self.levels or self.dt == 0.0:
            return np.zeros_like(self.theta)
        return (self.theta - self.levels[0]) / self.dt

    def d2theta_dt2(self):
        if len(self.levels) < 2 or self.dt == 0.0:
            return np.zeros_like(self.theta)
        return (self.theta - 2.0 * self.levels[0] + self.levels[1]) / self.dt ** 2

    def advanced(self, theta_new, dt):
        levels = [self.theta] + self.levels[:2]
        return HeatState(theta=theta_new, time=self.time + dt, dt=dt,
                         levels=levels)


def _transport_nodes(fields, theta, u_nodes):
    """Explicit transport sources: mesh motion plus advection by u."""
    met = fields.at("nodes")
    grid = fields.grid
    out = np.zeros_like(theta)
    if np.any(fields.deta_dt):
        ds = np.gradient(theta, grid.hs, axis=1, edge_order=2)
        out += met["dt_eta_bar"] * met["W"] * met["K"] * met["invH"][:, None] * ds
    if u_nodes is not None:
        g = geometry.grad_a(fields, theta)
        out -= u_nodes[0] * g[0] + u_nodes[1] * g[1]
    return out


def _load_vector(ops, f8, f9):
    nn = ops.M.shape[0]
    load = np.zeros(nn)
    if f8 is not None:
        load += ops.M @ np.asarray(f8, float).ravel()
    if f9 is not None:
        grid = ops.grid
        full = np.zeros((grid.nx + 1, grid.ny + 1))
        full[:, -1] = np.asarray(f9, float)
        load += ops.S_flat @ full.ravel()
    return load


# ============================================================
# time stepping
# ============================================================

def step_fd(fields, k_cond, state, dt, transport=None, f8=None, f9=None):
    """One Crank-Nicolson step of the nodal scheme.

    transport: node-sampled velocity (2, nx+1, ny+1) or None. Advection and
    mesh motion are treated explicitly with the two-level extrapolant
    1.5 theta^n - 0.5 theta^{n-1} so the implicit matrix stays symmetric.
    """
    ops = heat_operators(fields, k_cond)
    th = state.theta.ravel()
    that = state.theta
    if state.levels:
        that = 1.5 * state.theta - 0.5 * state.levels[0]

    rhs = (ops.M / dt - ops.B * 0.5) @ th
    rhs += _load_vector(ops, f8, f9)
    adv = _transport_nodes(fields, that, transport)
    if np.any(adv):
        rhs += ops.M @ adv.ravel()

    lu = ops.lu(("cn", round(dt, 14)), ops.M_ff / dt + ops.B_ff * 0.5)
    sol = lu.solve(rhs[ops.free])
    theta_new = ops.embed(sol).reshape(state.theta.shape)
    return state.advanced(theta_new, dt)


# ============================================================
# spectral path
# ============================================================

@dataclass
class GalerkinBasis:
    modes: np.ndarray        # (nfree, m), M-orthonormal columns
    lam: np.ndarray          # Rayleigh quotients at build time
    free: np.ndarray
    shape: tuple


def build_basis(fields, k_cond, m=None):
    """Eigenbasis of (B, M) on the free nodes, frozen at the given fields.

    Asking for a few modes on a fine grid routes through shift-invert
    Lanczos; the dense path is kept for the full-basis equivalence check.
    """
    ops = heat_operators(fields, k_cond)
    nfree = ops.free.size
    if m is not None and 8 * m < nfree:
        from scipy.sparse.linalg import eigsh
        lam, vecs = eigsh(ops.B_ff.tocsc(), k=m, M=ops.M_ff.tocsc(),
                          sigma=0.0)
        order = np.argsort(lam)
        lam, vecs = lam[order], vecs[:, order]
    else:
        from scipy.linalg import eigh
        lam, vecs = eigh(ops.B_ff.toarray(), ops.M_ff.toarray())
    if m is None:
        m = lam.size
    grid = fields.grid
    return GalerkinBasis(modes=vecs[:, :m], lam=lam[:m], free=ops.free,
                         shape=(grid.nx + 1, grid.ny + 1))


def coeffs_from_theta(basis, ops, theta):
    return basis.modes.T @ (ops.M_ff @ theta.ravel()[basis.free])


def theta_from_coeffs(basis, coeffs):
    full = np.zeros(basis.shape[0] * basis.shape[1])
    full[basis.free] = basis.modes @ coeffs
    return full.reshape(basis.shape)


def step_galerkin(fields, k_cond, basis, coeffs, dt, transport=None,
                  f8=None, f9=None, theta_prev=None):
    """Crank-Nicolson on the projected system.

    The matrices are reassembled from the current fields and projected onto
    the frozen basis; with the full basis on static geometry this is the
    nodal step in different coordinates.
    """
    ops = heat_operators(fields, k_cond)
    V = basis.modes
    MV = ops.M_ff @ V
    BV = ops.B_ff @ V
    Mg = V.T @ MV
    Bg = V.T @ BV

    theta = theta_from_coeffs(basis, coeffs)
    that = theta if theta_prev is None else 1.5 * theta - 0.5 * theta_prev
    load = _load_vector(ops, f8, f9)
    adv = _transport_nodes(fields, that, transport)
    if np.any(adv):
        load += ops.M @ adv.ravel()
    g = V.T @ load[ops.free]

    rhs = (Mg / dt - 0.5 * Bg) @ coeffs + g
    return np.linalg.solve(Mg / dt + 0.5 * Bg, rhs)


# ============================================================
# elliptic Robin solve and forcing chains
# ============================================================

def robin_elliptic_solve(fields, k_cond, f8=None, f9=None):
    """Solve k (grad theta, grad psi)_J + <theta psi |N|> = loads."""
    ops = heat_operators(fields, k_cond)
    load = _load_vector(ops, f8, f9)
    lu = ops.lu(("elliptic",), ops.B_ff)
    return ops.embed(lu.solve(load[ops.free])).reshape(
        (fields.grid.nx + 1, fields.grid.ny + 1))


def dt_forcing_chain(fields, theta, k_cond, dt_f8=None, dt_f9=None):
    """Commutator forcing of the time-differentiated heat problem.

    G8 = k div_calA grad_{dt calA} theta + k div_{dt calA} grad_calA theta,
    G9 = -k grad_{dt calA} theta . N - k grad_calA theta . dt N
         - theta dt|N|,
    F8' = dt F8 + G8, F9' = dt F9 + G9 (time derivatives of the original
    data supplied by the caller; they vanish for autonomous forcing).
    """
    g_dt = geometry.grad_a(fields, theta, "dt_calA")
    g_a = geometry.grad_a(fields, theta, "calA")
    G8 = k_cond * (geometry.div_a(fields, g_dt, "calA")
                   + geometry.div_a(fields, g_a, "dt_calA"))
    srf = fields.surface("nodes")
    top = np.s_[:, -1]
    G9 = (-k_cond * (g_dt[0][top] * srf["normal"][0]
                     + g_dt[1][top] * srf["normal"][1])
          - k_cond * (g_a[0][top] * srf["dt_normal"][0]
                      + g_a[1][top] * srf["dt_normal"][1])
          - theta[top] * srf["dt_abs_n"])
    F81 = G8 if dt_f8 is None else G8 + dt_f8
    F91 = G9 if dt_f9 is None else G9 + dt_f9
    return F81, F91, G8, G9


# ============================================================
# compatible initial data
# ============================================================

@dataclass
class HeatInitialData:
    theta0: np.ndarray
    dtheta0: np.ndarray
    sweeps: int
    residual: float


def construct_heat_initial_data(fields, k_cond, f8=None, f9=None,
                                dt_f8=None, dt_f9=None, d2theta0=None,
                                tol=1e-10, max_sweeps=60, strict=True):
    """Alternating Robin solves for compatible (theta0, d/dt theta0).

    Given the geometry at t = 0 (including its time derivative through the
    initial surface velocity), iterate

        -k Lap_calA (dtheta) = F8' - d2theta0,   Robin data F9'
        -k Lap_calA theta    = F8  - dtheta,     Robin data F9

    where F8' = dt F8 + G8(theta), F9' = dt F9 + G9(theta). The loop
    contracts at a rate comparable to the size of the initial surface
    velocity; it is a fixed point exactly when the t = 0 heat equation and
    its first time derivative hold simultaneously.
    """
    shape = (fields.grid.nx + 1, fields.grid.ny + 1)
    theta = np.zeros(shape)
    dtheta = np.zeros(shape)
    if d2theta0 is None:
        d2theta0 = np.zeros(shape)
    residual = math.inf
    for sweep in range(1, max_sweeps + 1):
        F81, F91, _, _ = dt_forcing_chain(fields, theta, k_cond, dt_f8, dt_f9)
        rhs8 = F81 - d2theta0
        dtheta_new = robin_elliptic_solve(fields, k_cond, rhs8, F91)
        rhs8 = (np.zeros(shape) if f8 is None else np.asarray(f8, float))
        theta_new = robin_elliptic_solve(fields, k_cond, rhs8 - dtheta_new, f9)
        residual = float(np.max(np.abs(theta_new - theta))
                         + np.max(np.abs(dtheta_new - dtheta)))
        theta, dtheta = theta_new, dtheta_new
        if residual < tol:
            break
    else:
        if strict:
            raise RuntimeError("initial-data iteration stalled at %g" % residual)
    return HeatInitialData(theta0=theta, dtheta0=dtheta,
                           sweeps=sweep, residual=residual)


def heat_t0_residual(fields, k_cond, theta0, dtheta0, f8=None, f9=None):
    """Weak residual of the t = 0 heat equation, max-normalized."""
    ops = heat_operators(fields, k_cond)
    shape = theta0.shape
    rhs8 = (np.zeros(shape) if f8 is None else np.asarray(f8, float))
    load = _load_vector(ops, rhs8 - dtheta0, f9)
    r = (ops.B @ theta0.ravel() - load)[ops.free]
    return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(theta0))))


def lowest_eigenvalues(fields, k_cond, m=6):
    """Smallest generalized eigenvalues of (B, M) on the free nodes."""
    basis = build_basis(fields, k_cond, m)
    return basis.lam
