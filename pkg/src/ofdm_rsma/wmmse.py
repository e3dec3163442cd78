"""WMMSE digital precoding and the alternating hybrid-precoder loop.

Rate maximization is recast through augmented weighted MSEs: at the optimal
scalar equalizer and weight, each stream's AWMSE equals a fixed offset minus
its achievable rate. Alternating closed-form equalizer/weight updates with a
convex precoder subproblem therefore descends a surrogate whose decrease is a
sum-rate increase. The analog stage in between is searched by the particle
swarm in :mod:`ofdm_rsma.pso`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import pso, rsma
from .channel import ConfigurationError, FreqChannel, SystemConfig
from .qcqp import (
    AWMSE_RATE_OFFSET,
    LN2,
    QcqpSolution,
    SchemeLayout,
    SolverError,
    coef_from_ec,
    mmse_update,
    qos_precheck,
    rsma_layout,
    solve_awmse_qcqp,
    term_awmse,
    term_rates,
    term_stats,
)

__all__ = [
    "AWMSE_RATE_OFFSET",
    "QcqpSolution",
    "SolverError",
    "WmmseState",
    "WmmseResult",
    "HybridResult",
    "mmse_equalizers",
    "mse_values",
    "optimal_weights",
    "awmse",
    "state_from_coeffs",
    "solve_qcqp",
    "run_wmmse",
    "optimize_hybrid",
    "folded_channel",
    "matched_filter_digital",
    "RsmaAdapter",
    "RSMA",
]


def mmse_equalizers(
    t_common: np.ndarray, t_private: np.ndarray, eff: rsma.EffectiveCoefficients
) -> tuple[np.ndarray, np.ndarray]:
    """MMSE scalar equalizers: conjugate desired coefficient over received power."""
    w_diag = np.einsum("knn->kn", eff.common)
    v_diag = np.einsum("kknn->kn", eff.private)
    return np.conj(w_diag) / t_common, np.conj(v_diag) / t_private


def mse_values(eq: np.ndarray, t_vals: np.ndarray, desired: np.ndarray) -> np.ndarray:
    """MSE of a scalar-equalized unit-power stream: |g|^2 T - 2 Re{g d} + 1."""
    return np.abs(eq) ** 2 * t_vals - 2.0 * np.real(eq * desired) + 1.0


def optimal_weights(eps_mmse: np.ndarray) -> np.ndarray:
    """Weights minimizing the augmented MSE: inverse MMSE over ln 2."""
    return 1.0 / (np.asarray(eps_mmse) * LN2)


def awmse(weight: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Augmented weighted MSE u * eps - log2(u)."""
    return weight * eps - np.log2(weight)


@dataclass
class WmmseState:
    """Scalar equalizers, positive weights and the AWMSEs they induce."""

    eq_common: np.ndarray  # (K, Nc)
    eq_private: np.ndarray
    weight_common: np.ndarray
    weight_private: np.ndarray
    awmse_common: np.ndarray
    awmse_private: np.ndarray
    awmse_cap: np.ndarray  # (Nc,) worst-user common AWMSE

    @property
    def rate_offset(self) -> float:
        return AWMSE_RATE_OFFSET


def state_from_coeffs(
    eff: rsma.EffectiveCoefficients, plan: rsma.ClusterPlan, sigma2: float
) -> WmmseState:
    """Closed-form block update of equalizers and weights for fixed precoders."""
    t_c, i_c = rsma.common_power_terms(eff, plan, sigma2)
    t_p, i_p = rsma.private_power_terms(eff, plan, sigma2)
    g_c, g_p = mmse_equalizers(t_c, t_p, eff)
    eps_c, eps_p = i_c / t_c, i_p / t_p
    u_c, u_p = optimal_weights(eps_c), optimal_weights(eps_p)
    z_c, z_p = awmse(u_c, eps_c), awmse(u_p, eps_p)
    return WmmseState(
        eq_common=g_c,
        eq_private=g_p,
        weight_common=u_c,
        weight_private=u_p,
        awmse_common=z_c,
        awmse_private=z_p,
        awmse_cap=z_c.max(axis=0),
    )


def folded_channel(h: FreqChannel, analog: np.ndarray) -> np.ndarray:
    """Effective channel rows (K, Nc, Nc, K) with the analog stage folded in."""
    return np.einsum("kmnp,mr->knpr", h.H, analog)


def _rsma_term_vectors(state: WmmseState) -> tuple[np.ndarray, np.ndarray]:
    weights = np.concatenate(
        [state.weight_common.reshape(-1), state.weight_private.reshape(-1)]
    )
    eqs = np.concatenate([state.eq_common.reshape(-1), state.eq_private.reshape(-1)])
    return weights, eqs


def solve_qcqp(
    h: FreqChannel,
    analog: np.ndarray,
    state: WmmseState,
    plan: rsma.ClusterPlan,
    cfg: SystemConfig,
    backend: str = "clarabel",
) -> QcqpSolution:
    """Optimal digital precoders and common-rate split for fixed equalizers
    and weights (rate-splitting layout)."""
    layout = rsma_layout(cfg.K, cfg.Nc, plan)
    ec = folded_channel(h, analog)
    weights, eqs = _rsma_term_vectors(state)
    return solve_awmse_qcqp(
        layout, ec, analog, weights, eqs, cfg.sigma2, cfg.Pt, cfg.r_min_array,
        backend=backend,
    )


def stream_sum_rate(layout: SchemeLayout, rates: np.ndarray) -> float:
    """Total rate: per (stream, subcarrier) the worst decoder binds."""
    per: dict[tuple[int, int], float] = {}
    for i, term in enumerate(layout.terms):
        key = (term.stream, term.sc)
        per[key] = min(per.get(key, np.inf), rates[i])
    return float(sum(per.values()))


def _grouped_awmse(layout: SchemeLayout, zeta: np.ndarray) -> float:
    """Objective value with epigraph caps at their active level."""
    epi = set(layout.epigraph_streams)
    caps: dict[tuple[int, int], float] = {}
    total = 0.0
    for i, term in enumerate(layout.terms):
        if term.stream in epi:
            key = (term.stream, term.sc)
            caps[key] = max(caps.get(key, -np.inf), zeta[i])
        else:
            total += zeta[i]
    return total + sum(caps.values())


def matched_filter_digital(
    ec: np.ndarray, cfg: SystemConfig, n_cols: int, col_user: list[int | None],
    analog: np.ndarray | None = None,
) -> np.ndarray:
    """Warm-start digital precoder: matched filters at equal column power.

    ``col_user[j]`` names the served user of column j; ``None`` marks a
    common column steered along the dominant direction of the stacked
    per-user effective channels. Every column radiates Pt / (Nc * n_cols)
    through the analog stage when one is given.
    """
    k_users, n_sc = ec.shape[0], ec.shape[1]
    digital = np.empty((n_sc, k_users, n_cols), dtype=complex)
    for n in range(n_sc):
        rows = ec[:, n, n, :]  # (K, K) effective channel rows at this subcarrier
        for j, user in enumerate(col_user):
            if user is None:
                _, _, vh = np.linalg.svd(rows)
                col = np.conj(vh[0])
            else:
                col = np.conj(rows[user])
            radiated = analog @ col if analog is not None else col
            norm = np.linalg.norm(radiated)
            digital[n, :, j] = col / norm if norm > 0 else 0.0
    return digital * np.sqrt(cfg.Pt / (n_sc * n_cols))


class RsmaAdapter:
    """Scheme hooks used by the generic WMMSE loop and the outer alternation."""

    kind = "rsma"

    def layout(self, cfg: SystemConfig, plan: rsma.ClusterPlan) -> SchemeLayout:
        return rsma_layout(cfg.K, cfg.Nc, plan)

    def init_digital(self, ec: np.ndarray, cfg: SystemConfig, analog: np.ndarray) -> np.ndarray:
        cols: list[int | None] = [None] + list(range(cfg.K))
        return matched_filter_digital(ec, cfg, cfg.K + 1, cols, analog)

    def evaluator_factory(self, h: FreqChannel, plan: rsma.ClusterPlan, cfg: SystemConfig):
        return lambda digital: pso.rsma_evaluator(h, digital, plan, cfg)

    def report(
        self,
        h: FreqChannel,
        analog: np.ndarray,
        digital: np.ndarray,
        plan: rsma.ClusterPlan,
        cfg: SystemConfig,
    ) -> rsma.RateReport:
        coef = rsma.coefficient_tensor(h, analog, digital)
        return rsma.rate_report(rsma.split_coefficients(coef), plan, cfg.sigma2)

    def finalize(self, report: rsma.RateReport, cfg: SystemConfig) -> np.ndarray:
        return rsma.allocate_common_rate(report, cfg.r_min_array)

    def embed_digital(self, digital: np.ndarray, cfg: SystemConfig) -> np.ndarray:
        return digital


RSMA = RsmaAdapter()


@dataclass
class WmmseResult:
    """Outcome of the inner digital-precoder alternation."""

    digital: np.ndarray
    common_alloc: np.ndarray
    sum_rate_trace: np.ndarray  # entry 0 is the warm start
    awmse_trace: np.ndarray  # objective after every half update
    epochs: int
    solution: QcqpSolution | None

    @property
    def sum_rate(self) -> float:
        return float(self.sum_rate_trace[-1])


def run_wmmse(
    h: FreqChannel,
    analog: np.ndarray,
    plan: rsma.ClusterPlan,
    cfg: SystemConfig,
    tol: float = 1e-3,
    max_epochs: int = 30,
    init_digital: np.ndarray | None = None,
    adapter=RSMA,
    backend: str = "clarabel",
) -> WmmseResult:
    """Alternate closed-form equalizer/weight updates with the convex
    precoder subproblem until the sum rate stalls.

    The AWMSE objective never increases across half updates, which makes the
    recorded sum-rate trace non-decreasing.
    """
    layout = adapter.layout(cfg, plan)
    ec = folded_channel(h, analog)
    digital = (
        adapter.init_digital(ec, cfg, analog)
        if init_digital is None
        else np.array(init_digital, dtype=complex)
    )
    if digital.shape != (cfg.Nc, cfg.K, layout.J):
        raise ConfigurationError("digital warm start has the wrong shape")

    coef = coef_from_ec(ec, digital)
    t_vals, desired = term_stats(layout, coef, cfg.sigma2)
    qos_precheck(layout, term_rates(layout, t_vals, desired), cfg.r_min_array)

    trace = [stream_sum_rate(layout, term_rates(layout, t_vals, desired))]
    awmse_trace: list[float] = []
    alloc = np.zeros((cfg.K, cfg.Nc))
    solution: QcqpSolution | None = None
    epochs = 0
    for _ in range(max_epochs):
        eqs, weights, _ = mmse_update(t_vals, desired)
        awmse_trace.append(_grouped_awmse(layout, term_awmse(layout, coef, weights, eqs, cfg.sigma2)))
        solution = solve_awmse_qcqp(
            layout, ec, analog, weights, eqs, cfg.sigma2, cfg.Pt, cfg.r_min_array,
            backend=backend,
        )
        digital = solution.digital
        alloc = solution.common_alloc
        awmse_trace.append(solution.objective)
        coef = coef_from_ec(ec, digital)
        t_vals, desired = term_stats(layout, coef, cfg.sigma2)
        trace.append(stream_sum_rate(layout, term_rates(layout, t_vals, desired)))
        epochs += 1
        if abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-2]), 1e-12):
            break
    return WmmseResult(
        digital=digital,
        common_alloc=alloc,
        sum_rate_trace=np.asarray(trace),
        awmse_trace=np.asarray(awmse_trace),
        epochs=epochs,
        solution=solution,
    )


@dataclass
class HybridResult:
    """Best iterate of the outer analog/digital alternation."""

    precoder: rsma.HybridPrecoder
    report: object
    round_rates: np.ndarray
    pso_histories: list[np.ndarray] = field(default_factory=list)
    wmmse_traces: list[np.ndarray] = field(default_factory=list)


def optimize_hybrid(
    h: FreqChannel,
    plan: rsma.ClusterPlan,
    cfg: SystemConfig,
    pso_cfg: pso.PsoConfig,
    outer_rounds: int = 3,
    rel_tol: float = 1e-3,
    wmmse_tol: float = 1e-3,
    wmmse_max_epochs: int = 30,
    adapter=RSMA,
    backend: str = "clarabel",
) -> HybridResult:
    """Alternate the swarm search for the analog stage with the WMMSE digital
    stage, returning the best iterate by sum rate."""
    seq = np.random.SeedSequence(pso_cfg.seed)
    init_seed, *round_seeds = seq.spawn(outer_rounds + 1)
    rng = np.random.default_rng(init_seed)
    analog = np.exp(2j * np.pi * rng.uniform(size=(h.n_tx, cfg.K)))
    digital = adapter.init_digital(folded_channel(h, analog), cfg, analog)
    factory = adapter.evaluator_factory(h, plan, cfg)

    best = None
    round_rates = []
    pso_histories = []
    wmmse_traces = []
    for r in range(outer_rounds):
        round_cfg = replace(pso_cfg, seed=int(round_seeds[r].generate_state(1)[0]))
        swarm = pso.run_abc_pso(
            h, digital, plan, cfg, round_cfg, evaluator_factory=factory
        )
        analog = swarm.analog
        pso_histories.append(swarm.history)
        inner = run_wmmse(
            h,
            analog,
            plan,
            cfg,
            tol=wmmse_tol,
            max_epochs=wmmse_max_epochs,
            init_digital=swarm.digital,
            adapter=adapter,
            backend=backend,
        )
        digital = inner.digital
        wmmse_traces.append(inner.sum_rate_trace)
        round_rates.append(inner.sum_rate)
        if best is None or inner.sum_rate > best[0]:
            best = (inner.sum_rate, analog.copy(), digital.copy())
        if r > 0 and abs(round_rates[-1] - round_rates[-2]) <= rel_tol * max(
            abs(round_rates[-2]), 1e-12
        ):
            break

    _, analog_best, digital_best = best
    report = adapter.report(h, analog_best, digital_best, plan, cfg)
    precoder = rsma.HybridPrecoder(
        analog=analog_best,
        digital=adapter.embed_digital(digital_best, cfg),
        common_alloc=adapter.finalize(report, cfg),
    )
    return HybridResult(
        precoder=precoder,
        report=report,
        round_rates=np.asarray(round_rates),
        pso_histories=pso_histories,
        wmmse_traces=wmmse_traces,
    )
