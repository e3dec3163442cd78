"""Convex AWMSE subproblem shared by the digital-precoding stages.

For fixed equalizers and MSE weights, minimizing the augmented weighted MSEs
over the digital precoders (plus the common-rate split where one exists) is a
convex QCQP. The problem is described scheme-agnostically as a list of MSE
terms: each term is one (stream, decoding user, subcarrier) triple together
with the set of transmit columns appearing in its received power.

The default backend canonicalizes the QCQP to a second-order cone program by
hand (every term's quadratic sits under an epigraph variable, so the cone
structure is uniform) and calls Clarabel directly; a cvxpy backend builds the
same problem independently and is used to cross-check the canonicalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import clarabel
import numpy as np
from scipy import sparse

from .channel import ConfigurationError
from .rsma import ClusterPlan, InfeasibleRateError

LN2 = float(np.log(2.0))
#: Offset linking rates and optimal AWMSEs: rate = AWMSE_RATE_OFFSET - awmse.
AWMSE_RATE_OFFSET = 1.0 / LN2 + float(np.log2(LN2))


class SolverError(RuntimeError):
    """Convex solver failed to converge; carries the best iterate found."""

    def __init__(self, status: str, solution=None, residual: float = np.inf):
        self.status = status
        self.solution = solution
        self.residual = residual
        super().__init__(f"QCQP solver finished with status '{status}'")


@dataclass(frozen=True)
class MseTerm:
    """One decoded stream instance: who decodes what, where, against what."""

    stream: int
    decoder: int
    sc: int
    desired: int  # flat transmit column n' * J + j of the wanted coefficient
    mask: tuple[int, ...]  # flat columns inside the received-power sum


@dataclass(frozen=True)
class SchemeLayout:
    """Structure of one access scheme's AWMSE problem."""

    kind: str  # 'rsma' | 'sdma' | 'noma'
    K: int
    Nc: int
    J: int  # transmit stream columns per subcarrier
    terms: tuple[MseTerm, ...]
    epigraph_streams: tuple[int, ...]  # streams capped by their worst decoder
    qos_stream_of_user: tuple[int, ...]
    has_common_alloc: bool


def _flat(n2: int, j: int, J: int) -> int:
    return n2 * J + j


def rsma_layout(K: int, Nc: int, plan: ClusterPlan) -> SchemeLayout:
    """Common stream decoded by everyone plus one private stream per user."""
    J = K + 1
    mask_rows = plan.interference_mask()
    terms: list[MseTerm] = []
    for k in range(K):
        for n in range(Nc):
            cols = [_flat(n2, 0, J) for n2 in np.flatnonzero(mask_rows[n])]
            cols += [_flat(n2, 1 + kk, J) for n2 in range(Nc) for kk in range(K)]
            terms.append(
                MseTerm(stream=0, decoder=k, sc=n, desired=_flat(n, 0, J), mask=tuple(cols))
            )
    for k in range(K):
        for n in range(Nc):
            cols = [_flat(n2, 1 + k, J) for n2 in np.flatnonzero(mask_rows[n])]
            cols += [
                _flat(n2, 1 + kk, J) for n2 in range(Nc) for kk in range(K) if kk != k
            ]
            terms.append(
                MseTerm(
                    stream=1 + k, decoder=k, sc=n, desired=_flat(n, 1 + k, J), mask=tuple(cols)
                )
            )
    return SchemeLayout(
        kind="rsma",
        K=K,
        Nc=Nc,
        J=J,
        terms=tuple(terms),
        epigraph_streams=(0,),
        qos_stream_of_user=tuple(1 + k for k in range(K)),
        has_common_alloc=True,
    )


def sdma_layout(K: int, Nc: int, plan: ClusterPlan) -> SchemeLayout:
    """Private streams only; the common stream and its constraints drop out."""
    J = K
    mask_rows = plan.interference_mask()
    terms: list[MseTerm] = []
    for k in range(K):
        for n in range(Nc):
            cols = [_flat(n2, k, J) for n2 in np.flatnonzero(mask_rows[n])]
            cols += [_flat(n2, kk, J) for n2 in range(Nc) for kk in range(K) if kk != k]
            terms.append(
                MseTerm(stream=k, decoder=k, sc=n, desired=_flat(n, k, J), mask=tuple(cols))
            )
    return SchemeLayout(
        kind="sdma",
        K=K,
        Nc=Nc,
        J=J,
        terms=tuple(terms),
        epigraph_streams=(),
        qos_stream_of_user=tuple(range(K)),
        has_common_alloc=False,
    )


def noma_layout(K: int, Nc: int, plan: ClusterPlan, order: Sequence[int]) -> SchemeLayout:
    """Superposed per-subcarrier streams with a fixed SIC order.

    Column p carries the message of user ``order[p]``. The user at position q
    decodes messages p <= q in order; a message's rate is capped by the worst
    of its decoders. Across clusters, a decoder has already removed every
    message it decodes (positions <= its own) from earlier clusters.
    """
    order = tuple(int(u) for u in order)
    if sorted(order) != list(range(K)):
        raise ConfigurationError("order must be a permutation of the users")
    J = K
    pos_of_user = {u: p for p, u in enumerate(order)}
    mask_rows = plan.interference_mask()
    terms: list[MseTerm] = []
    for p in range(K):
        for q_pos in range(p, K):
            decoder = order[q_pos]
            for n in range(Nc):
                cols = [_flat(n, pp, J) for pp in range(p, K)]
                interfering = np.flatnonzero(mask_rows[n])
                cols += [
                    _flat(n2, pp, J)
                    for n2 in interfering
                    if n2 != n
                    for pp in range(K)
                ]
                later = np.flatnonzero(~mask_rows[n])
                cols += [
                    _flat(n2, pp, J) for n2 in later for pp in range(q_pos + 1, K)
                ]
                terms.append(
                    MseTerm(
                        stream=p,
                        decoder=decoder,
                        sc=n,
                        desired=_flat(n, p, J),
                        mask=tuple(cols),
                    )
                )
    return SchemeLayout(
        kind="noma",
        K=K,
        Nc=Nc,
        J=J,
        terms=tuple(terms),
        epigraph_streams=tuple(range(K)),
        qos_stream_of_user=tuple(pos_of_user[k] for k in range(K)),
        has_common_alloc=False,
    )


def term_stats(
    layout: SchemeLayout, coef: np.ndarray, sigma2: float
) -> tuple[np.ndarray, np.ndarray]:
    """Received power T and desired coefficient of every MSE term.

    ``coef`` is the (K, Nc, Nc, J) effective-coefficient tensor in the
    layout's column convention.
    """
    flat = coef.reshape(layout.K, layout.Nc, layout.Nc * layout.J)
    power = np.abs(flat) ** 2
    t_out = np.empty(len(layout.terms))
    d_out = np.empty(len(layout.terms), dtype=complex)
    for i, term in enumerate(layout.terms):
        t_out[i] = power[term.decoder, term.sc, list(term.mask)].sum() + sigma2
        d_out[i] = flat[term.decoder, term.sc, term.desired]
    return t_out, d_out


def mmse_update(
    t_vals: np.ndarray, desired: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form equalizers, optimal weights and MMSE values per term."""
    eq = np.conj(desired) / t_vals
    eps = (t_vals - np.abs(desired) ** 2) / t_vals
    weight = 1.0 / (eps * LN2)
    return eq, weight, eps


def term_rates(layout: SchemeLayout, t_vals: np.ndarray, desired: np.ndarray) -> np.ndarray:
    """Achievable rate of each term, -log2 of its MMSE."""
    eps = (t_vals - np.abs(desired) ** 2) / t_vals
    return -np.log2(eps)


def coef_from_ec(ec: np.ndarray, digital: np.ndarray) -> np.ndarray:
    """Effective coefficients (K, Nc, Nc, J) from folded channel rows."""
    return np.einsum("knpr,prj->knpj", ec, digital)


def term_awmse(
    layout: SchemeLayout,
    coef: np.ndarray,
    weights: np.ndarray,
    equalizers: np.ndarray,
    sigma2: float,
) -> np.ndarray:
    """AWMSE value of every term at the given coefficients."""
    t_vals, desired = term_stats(layout, coef, sigma2)
    eps = (
        np.abs(equalizers) ** 2 * t_vals
        - 2.0 * np.real(equalizers * desired)
        + 1.0
    )
    return weights * eps - np.log2(weights)


@dataclass
class QcqpSolution:
    """Digital precoders, rate split and caps returned by one convex solve."""

    digital: np.ndarray  # (Nc, K, J)
    common_alloc: np.ndarray  # (K, Nc); zeros when the scheme has none
    awmse_caps: np.ndarray  # (n_epigraph_streams, Nc)
    objective: float
    kkt_residual: float


class _SocBuilder:
    """Accumulates rows of A z + s = b with cone bookkeeping."""

    def __init__(self, nz: int):
        self.nz = nz
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        self.cones: list = []
        self.n_rows = 0

    def add_entries(self, rows, cols, vals) -> None:
        self.rows.append(np.asarray(rows, dtype=np.int64))
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))

    def new_rows(self, count: int, b_vals) -> int:
        start = self.n_rows
        self.n_rows += count
        self.b.append(np.broadcast_to(np.asarray(b_vals, dtype=float), (count,)).copy())
        return start

    def matrices(self):
        a_mat = sparse.coo_matrix(
            (
                np.concatenate(self.vals) if self.vals else np.empty(0),
                (
                    np.concatenate(self.rows) if self.rows else np.empty(0, dtype=np.int64),
                    np.concatenate(self.cols) if self.cols else np.empty(0, dtype=np.int64),
                ),
            ),
            shape=(self.n_rows, self.nz),
        ).tocsc()
        return a_mat, np.concatenate(self.b)


def _real_rows(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real 2x2K stacking of one complex row w: maps [Re f; Im f] to
    [Re(w f); Im(w f)]."""
    return (
        np.concatenate([w.real, -w.imag]),
        np.concatenate([w.imag, w.real]),
    )


def _soc_epigraph(
    builder: _SocBuilder,
    quad_rows: np.ndarray,  # (m, nx) dense rows of the quadratic part
    x_cols: np.ndarray,  # (m, nx) matching column indices
    lin_cols: np.ndarray,
    lin_vals: np.ndarray,
    const: float,
    target_col: int | None,
    target_const: float,
) -> None:
    """Add the cone for  ||quad x||^2 + lin.x + const <= target.

    ``target`` is the affine z[target_col] + target_const (a constant bound
    when target_col is None).
    """
    m = quad_rows.shape[0]
    start = builder.new_rows(2 + m, 0.0)
    b0 = (1.0 + target_const - const) / 2.0
    b1 = (1.0 - target_const + const) / 2.0
    builder.b[-1][0] = b0
    builder.b[-1][1] = b1
    # s0 = b0 - A0 z = (1 + target - lin.x - const)/2
    if target_col is not None:
        builder.add_entries([start, start + 1], [target_col, target_col], [-0.5, 0.5])
    if lin_cols.size:
        builder.add_entries(
            np.full(lin_cols.size, start), lin_cols, lin_vals / 2.0
        )
        builder.add_entries(
            np.full(lin_cols.size, start + 1), lin_cols, -lin_vals / 2.0
        )
    rr = np.repeat(np.arange(start + 2, start + 2 + m), quad_rows.shape[1])
    builder.add_entries(rr, x_cols.reshape(-1), -quad_rows.reshape(-1))
    builder.cones.append(clarabel.SecondOrderConeT(2 + m))


class _Structure:
    """Index bookkeeping shared by every solve of one layout."""

    def __init__(self, layout: SchemeLayout, n_tx: int):
        K, Nc, J = layout.K, layout.Nc, layout.J
        self.Nc = Nc
        self.M = Nc * J
        self.nx = 2 * K * self.M
        self.epi_row = {s: r for r, s in enumerate(layout.epigraph_streams)}
        self.n_caps = len(layout.epigraph_streams) * Nc
        self.single_terms = [
            i for i, t in enumerate(layout.terms) if t.stream not in self.epi_row
        ]
        self.t_index = {i: j for j, i in enumerate(self.single_terms)}
        self.cap_off = self.nx
        self.t_off = self.cap_off + self.n_caps
        self.alloc_off = self.t_off + len(self.single_terms)
        self.n_alloc = K * Nc if layout.has_common_alloc else 0
        self.nz = self.alloc_off + self.n_alloc
        # x-column indices of each flat transmit column
        self.col_x = np.arange(self.M * 2 * K).reshape(self.M, 2 * K)
        # per-term mask as n' indices (the K complex entries live per column)
        self.term_n2 = [np.asarray(t.mask, dtype=int) // J for t in layout.terms]
        self.term_maskcols = [np.asarray(t.mask, dtype=int) for t in layout.terms]

    def cap_index(self, stream: int, sc: int) -> int:
        return self.epi_row[stream] * self.Nc + sc


_STRUCTURE_CACHE: dict[tuple[SchemeLayout, int], _Structure] = {}


def _structure_for(layout: SchemeLayout, n_tx: int) -> _Structure:
    key = (layout, n_tx)
    hit = _STRUCTURE_CACHE.get(key)
    if hit is None:
        hit = _Structure(layout, n_tx)
        _STRUCTURE_CACHE[key] = hit
    return hit


def _clarabel_solve(
    layout: SchemeLayout,
    ec: np.ndarray,
    analog: np.ndarray,
    weights: np.ndarray,
    equalizers: np.ndarray,
    sigma2: float,
    pt: float,
    r_min: np.ndarray,
    tol: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, str]:
    K, Nc, J = layout.K, layout.Nc, layout.J
    st = _structure_for(layout, analog.shape[0])
    lam = AWMSE_RATE_OFFSET
    builder = _SocBuilder(st.nz)

    # Nonnegative block first: C >= 0, common-rate cap, linear QoS rows.
    n_nonneg = 0
    if layout.has_common_alloc:
        start = builder.new_rows(st.n_alloc, 0.0)
        idx = np.arange(st.n_alloc)
        builder.add_entries(start + idx, st.alloc_off + idx, -np.ones(st.n_alloc))
        n_nonneg += st.n_alloc
        start = builder.new_rows(Nc, lam)  # cap_n + sum_k C_kn <= lam
        for n in range(Nc):
            builder.add_entries([start + n], [st.cap_off + st.cap_index(0, n)], [1.0])
            cols = st.alloc_off + np.arange(K) * Nc + n
            builder.add_entries(np.full(K, start + n), cols, np.ones(K))
        n_nonneg += Nc
    for k in range(K):
        stream = layout.qos_stream_of_user[k]
        rhs = Nc * lam - float(r_min[k])
        start = builder.new_rows(1, rhs)
        if stream in st.epi_row:
            cols = st.cap_off + st.cap_index(stream, 0) + np.arange(Nc)
            builder.add_entries(np.full(Nc, start), cols, np.ones(Nc))
        else:
            t_cols = [
                st.t_off + st.t_index[i]
                for i, t in enumerate(layout.terms)
                if t.stream == stream and t.decoder == k
            ]
            builder.add_entries(
                np.full(len(t_cols), start), np.asarray(t_cols), np.ones(len(t_cols))
            )
        if layout.has_common_alloc:
            cols = st.alloc_off + k * Nc + np.arange(Nc)
            builder.add_entries(np.full(Nc, start), cols, -np.ones(Nc))
        n_nonneg += 1
    builder.cones.insert(0, clarabel.NonnegativeConeT(n_nonneg))

    # One SOC per MSE term: ||scaled coef vec||^2 <= cap/t - lin.x - const.
    for i, term in enumerate(layout.terms):
        u, g = float(weights[i]), complex(equalizers[i])
        if u <= 0:
            raise ConfigurationError("AWMSE weights must be strictly positive")
        scale = np.sqrt(u) * g
        rows_c = scale * ec[term.decoder, term.sc, st.term_n2[i], :]  # (m, K)
        m = rows_c.shape[0]
        quad = np.empty((2 * m, 2 * K))
        quad[0::2, :K] = rows_c.real
        quad[0::2, K:] = -rows_c.imag
        quad[1::2, :K] = rows_c.imag
        quad[1::2, K:] = rows_c.real
        x_cols = np.repeat(st.col_x[st.term_maskcols[i]], 2, axis=0)
        lin_c = -2.0 * u * g * ec[term.decoder, term.sc, term.sc, :]
        lin_cols = st.col_x[term.desired]
        lin_vals = np.concatenate([lin_c.real, -lin_c.imag])
        const = u * (abs(g) ** 2 * sigma2 + 1.0) - np.log2(u)
        if term.stream in st.epi_row:
            target = st.cap_off + st.cap_index(term.stream, term.sc)
        else:
            target = st.t_off + st.t_index[i]
        _soc_epigraph(builder, quad, x_cols, lin_cols, lin_vals, const, target, 0.0)

    # Power: ||F_RF F_BB||_F^2 <= Pt over all subcarriers.
    n_tx = analog.shape[0]
    fr = np.empty((2 * n_tx, 2 * K))
    fr[:n_tx, :K] = analog.real
    fr[:n_tx, K:] = -analog.imag
    fr[n_tx:, :K] = analog.imag
    fr[n_tx:, K:] = analog.real
    quad = np.tile(fr, (st.M, 1))
    x_cols = np.repeat(st.col_x, 2 * n_tx, axis=0)
    _soc_epigraph(
        builder,
        quad,
        x_cols,
        np.empty(0, dtype=int),
        np.empty(0),
        0.0,
        None,
        float(pt),
    )

    q = np.zeros(st.nz)
    q[st.cap_off : st.t_off] = 1.0
    q[st.t_off : st.alloc_off] = 1.0
    a_mat, b_vec = builder.matrices()
    p_mat = sparse.csc_matrix((st.nz, st.nz))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    if tol is not None:
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
    solver = clarabel.DefaultSolver(p_mat, q, a_mat, b_vec, builder.cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    z = np.asarray(sol.x)
    f_cols = z[: st.nx].reshape(st.M, 2 * K)
    digital = (f_cols[:, :K] + 1j * f_cols[:, K:]).reshape(Nc, J, K).transpose(0, 2, 1)
    caps = z[st.cap_off : st.t_off].reshape(len(layout.epigraph_streams), Nc)
    alloc = (
        np.maximum(z[st.alloc_off :].reshape(K, Nc), 0.0)
        if layout.has_common_alloc
        else np.zeros((K, Nc))
    )
    return digital, alloc, caps, float(sol.obj_val), status


def _cvxpy_solve(
    layout: SchemeLayout,
    ec: np.ndarray,
    analog: np.ndarray,
    weights: np.ndarray,
    equalizers: np.ndarray,
    sigma2: float,
    pt: float,
    r_min: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, str]:
    """Independent reference construction of the same problem via cvxpy."""
    import cvxpy as cp

    K, Nc, J = layout.K, layout.Nc, layout.J
    M = Nc * J
    lam = AWMSE_RATE_OFFSET
    f_var = cp.Variable((K, M), complex=True)
    epi_row = {s: r for r, s in enumerate(layout.epigraph_streams)}
    caps = cp.Variable((max(len(epi_row), 1), Nc))
    alloc = cp.Variable((K, Nc), nonneg=True) if layout.has_common_alloc else None

    zetas = []
    for i, term in enumerate(layout.terms):
        u, g = float(weights[i]), complex(equalizers[i])
        rows = (np.sqrt(u) * g) * ec[term.decoder, term.sc, np.asarray(term.mask) // J, :]
        vec = cp.sum(cp.multiply(rows.T, f_var[:, list(term.mask)]), axis=0)
        lin = -2.0 * u * g * ec[term.decoder, term.sc, term.sc, :]
        const = u * (abs(g) ** 2 * sigma2 + 1.0) - np.log2(u)
        zetas.append(cp.sum_squares(vec) + cp.real(lin @ f_var[:, term.desired]) + const)

    cons = [cp.sum_squares(analog @ f_var) <= pt]
    for i, term in enumerate(layout.terms):
        if term.stream in epi_row:
            cons.append(zetas[i] <= caps[epi_row[term.stream], term.sc])
    if layout.has_common_alloc:
        cons.append(caps[0, :] + cp.sum(alloc, axis=0) <= lam)
    for k in range(K):
        stream = layout.qos_stream_of_user[k]
        if stream in epi_row:
            lhs = cp.sum(caps[epi_row[stream], :])
        else:
            lhs = cp.sum(
                cp.hstack(
                    [
                        zetas[i]
                        for i, t in enumerate(layout.terms)
                        if t.stream == stream and t.decoder == k
                    ]
                )
            )
        rhs = Nc * lam - float(r_min[k])
        if layout.has_common_alloc:
            rhs = rhs + cp.sum(alloc[k, :])
        cons.append(lhs <= rhs)

    objective = sum(zetas[i] for i in range(len(layout.terms)) if layout.terms[i].stream not in epi_row)
    if epi_row:
        objective = objective + cp.sum(caps)
    prob = cp.Problem(cp.Minimize(objective), cons)
    prob.solve(solver=cp.CLARABEL)
    f_val = f_var.value.reshape(K, Nc, J)
    digital = np.transpose(f_val, (1, 0, 2))
    alloc_val = (
        np.maximum(alloc.value, 0.0) if alloc is not None else np.zeros((K, Nc))
    )
    caps_val = caps.value if epi_row else np.zeros((0, Nc))
    return digital, alloc_val, caps_val, float(prob.value), str(prob.status)


_OK_STATUSES = {"Solved", "optimal", "optimal_inaccurate"}
_INFEASIBLE_STATUSES = {"PrimalInfeasible", "AlmostPrimalInfeasible", "infeasible"}


def solve_awmse_qcqp(
    layout: SchemeLayout,
    ec: np.ndarray,
    analog: np.ndarray,
    weights: np.ndarray,
    equalizers: np.ndarray,
    sigma2: float,
    pt: float,
    r_min: np.ndarray,
    backend: str = "clarabel",
) -> QcqpSolution:
    """Minimize the summed AWMSE caps for fixed weights and equalizers.

    ``ec[k, n, n', :]`` is the effective channel row mapping the digital
    column of subcarrier n' onto user k's observation at n (the analog stage
    already folded in); ``weights`` and ``equalizers`` align with
    ``layout.terms``.
    """
    r_min = np.asarray(r_min, dtype=float)
    if backend == "clarabel":
        # Default tolerances stall occasionally right at the optimum; retry
        # at 1e-7 (still well inside the 1e-6 contract), then fall back to
        # the independent cvxpy construction.
        digital, alloc, caps, obj, status = _clarabel_solve(
            layout, ec, analog, weights, equalizers, sigma2, pt, r_min
        )
        if status not in _OK_STATUSES and status not in _INFEASIBLE_STATUSES:
            digital, alloc, caps, obj, status = _clarabel_solve(
                layout, ec, analog, weights, equalizers, sigma2, pt, r_min, tol=1e-7
            )
        if status not in _OK_STATUSES and status not in _INFEASIBLE_STATUSES:
            digital, alloc, caps, obj, status = _cvxpy_solve(
                layout, ec, analog, weights, equalizers, sigma2, pt, r_min
            )
    else:
        digital, alloc, caps, obj, status = _cvxpy_solve(
            layout, ec, analog, weights, equalizers, sigma2, pt, r_min
        )
    if status in _INFEASIBLE_STATUSES:
        raise InfeasibleRateError(r_min, 0.0)
    if status not in _OK_STATUSES:
        raise SolverError(status)
    residual = _primal_residual(
        layout, ec, analog, digital, alloc, caps, weights, equalizers, sigma2, pt, r_min
    )
    sol = QcqpSolution(
        digital=digital,
        common_alloc=alloc,
        awmse_caps=caps,
        objective=obj,
        kkt_residual=residual,
    )
    if residual > 1e-6:
        raise SolverError(status, solution=sol, residual=residual)
    return sol


def _primal_residual(
    layout, ec, analog, digital, alloc, caps, weights, equalizers, sigma2, pt, r_min
) -> float:
    lam = AWMSE_RATE_OFFSET
    coef = coef_from_ec(ec, digital)
    zeta = term_awmse(layout, coef, weights, equalizers, sigma2)
    viol = [0.0]
    power = float(np.sum(np.abs(np.einsum("tk,nkj->ntj", analog, digital)) ** 2))
    viol.append(power - pt)
    epi_row = {s: r for r, s in enumerate(layout.epigraph_streams)}
    for i, term in enumerate(layout.terms):
        if term.stream in epi_row:
            viol.append(zeta[i] - caps[epi_row[term.stream], term.sc])
    if layout.has_common_alloc:
        viol.append(float(np.max(caps[0, :] + alloc.sum(axis=0) - lam)))
    for k in range(layout.K):
        stream = layout.qos_stream_of_user[k]
        if stream in epi_row:
            lhs = caps[epi_row[stream], :].sum()
        else:
            lhs = sum(
                zeta[i]
                for i, t in enumerate(layout.terms)
                if t.stream == stream and t.decoder == k
            )
        rhs = layout.Nc * lam - float(r_min[k])
        if layout.has_common_alloc:
            rhs += alloc[k, :].sum()
        viol.append(lhs - rhs)
    return float(max(viol))


def qos_precheck(layout: SchemeLayout, rates: np.ndarray, r_min: np.ndarray) -> None:
    """Raise when the warm-start point cannot satisfy the QoS constraints.

    ``rates`` holds the per-term achievable rates of the warm start. For a
    scheme with a common stream the pooled common rate may cover deficits;
    otherwise each user's own stream must already meet its minimum.
    """
    r_min = np.asarray(r_min, dtype=float)
    per_stream_sc: dict[tuple[int, int], float] = {}
    for i, term in enumerate(layout.terms):
        key = (term.stream, term.sc)
        per_stream_sc[key] = min(per_stream_sc.get(key, np.inf), rates[i])
    own = np.zeros(layout.K)
    for k in range(layout.K):
        stream = layout.qos_stream_of_user[k]
        own[k] = sum(per_stream_sc[(stream, n)] for n in range(layout.Nc))
    deficits = np.maximum(r_min - own, 0.0)
    budget = 0.0
    if layout.has_common_alloc:
        budget = sum(per_stream_sc[(0, n)] for n in range(layout.Nc))
    if deficits.sum() > budget + 1e-9:
        raise InfeasibleRateError(deficits, budget)
