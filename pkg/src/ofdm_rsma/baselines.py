"""SDMA and NOMA comparison schemes on the shared channel and SIC machinery.

Both baselines reuse the cluster plans, the swarm search for the analog stage
and the WMMSE digital stage. SDMA is the rate-splitting system with the
common stream removed. NOMA superposes one stream per user on every
subcarrier with a fixed successive decoding order; a message's rate is capped
by the worst user that has to decode it.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import rsma
from .channel import ConfigurationError, FreqChannel, SystemConfig
from .qcqp import noma_layout, sdma_layout
from .wmmse import matched_filter_digital
from .pso import POWER_SLACK


class Scheme(str, Enum):
    RSMA = "RSMA"
    SDMA = "SDMA"
    NOMA = "NOMA"


def sdma_rate_report(
    h: FreqChannel,
    precoder: rsma.HybridPrecoder,
    plan: rsma.ClusterPlan,
    sigma2: float,
) -> rsma.RateReport:
    """Rate report of a pure private-stream transmission.

    The precoder must carry an all-zero common column; the report then
    degenerates to the private terms of the rate-splitting model.
    """
    if np.any(precoder.digital[:, :, 0] != 0):
        raise ConfigurationError("SDMA requires a zero common precoding column")
    eff = rsma.effective_coeffs(h, precoder)
    return rsma.rate_report(eff, plan, sigma2)


def noma_decode_order(h: FreqChannel) -> np.ndarray:
    """Users sorted by descending average on-diagonal channel gain."""
    diag = np.einsum("kmnn->kmn", h.H)
    gain = np.mean(np.sum(np.abs(diag) ** 2, axis=1), axis=1)
    return np.argsort(-gain, kind="stable")


def noma_stream_rates(
    coef: np.ndarray,
    plan: rsma.ClusterPlan,
    sigma2: float,
    order: np.ndarray,
) -> np.ndarray:
    """Per-message achievable rates (..., K, Nc) under ordered SIC decoding.

    ``coef[..., q, n, n', p]`` couples the message at decode position p sent
    on subcarrier n' into user q's observation at n. While decoding position
    p, the same-subcarrier messages below p are gone, the interference-set
    subcarriers contribute in full, and earlier clusters only leak the
    positions the decoding user never decodes.
    """
    order = np.asarray(order, dtype=int)
    k_users = coef.shape[-4]
    n_sc = coef.shape[-3]
    power = np.abs(coef) ** 2
    mask = plan.interference_mask()
    off_diag = mask & ~np.eye(n_sc, dtype=bool)
    earlier = ~mask
    diag = np.einsum("...qnnp->...qnp", power)
    ici_all = np.einsum("...qnmp,nm->...qn", power, off_diag)

    msg_rates = np.empty(coef.shape[:-4] + (k_users, n_sc))
    for p in range(k_users):
        per_decoder = []
        same_sc = diag[..., p + 1 :].sum(axis=-1)  # positions above p, own subcarrier
        for q_pos in range(p, k_users):
            q = order[q_pos]
            residual = np.einsum(
                "...nmp,nm->...n", power[..., q, :, :, q_pos + 1 :], earlier
            )
            interf = same_sc[..., q, :] + ici_all[..., q, :] + residual + sigma2
            sinr = diag[..., q, :, p] / interf
            per_decoder.append(np.log2(1.0 + sinr))
        msg_rates[..., p, :] = np.min(np.stack(per_decoder, axis=0), axis=0)
    return msg_rates


def noma_rate_report(
    h: FreqChannel,
    analog: np.ndarray,
    digital: np.ndarray,
    plan: rsma.ClusterPlan,
    sigma2: float,
    order: np.ndarray,
) -> rsma.RateReport:
    """Rate report of the superposition baseline; per-user rates are the
    rates of their messages after the worst-decoder cap."""
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(h.n_users)):
        raise ConfigurationError("order must permute the users")
    coef = rsma.coefficient_tensor(h, analog, digital)
    msg_rates = noma_stream_rates(coef, plan, sigma2, order)
    k_users, n_sc = msg_rates.shape
    user_rates = np.empty_like(msg_rates)
    user_rates[order] = msg_rates
    sinr = 2.0**user_rates - 1.0
    zeros = np.zeros((k_users, n_sc))
    return rsma.RateReport(
        common_rate_user=zeros,
        common_rate=np.zeros(n_sc),
        private_rate=user_rates,
        sinr_common=zeros,
        sinr_private=sinr,
        rx_power_common=np.full((k_users, n_sc), sigma2),
        interf_common=np.full((k_users, n_sc), sigma2),
        rx_power_private=(1.0 + sinr) * sigma2,
        interf_private=np.full((k_users, n_sc), sigma2),
        sum_rate=float(user_rates.sum()),
    )


def _embed_zero_common(digital: np.ndarray) -> np.ndarray:
    out = np.zeros(digital.shape[:-1] + (digital.shape[-1] + 1,), dtype=complex)
    out[..., 1:] = digital
    return out


def sdma_evaluator(h: FreqChannel, digital: np.ndarray, plan: rsma.ClusterPlan,
                   cfg: SystemConfig):
    """Batched swarm fitness for the private-only scheme."""
    r_min = cfg.r_min_array

    def evaluate(positions: np.ndarray) -> np.ndarray:
        stacked = np.einsum("ltk,nkj->lntj", positions, digital)
        power = np.sum(np.abs(stacked) ** 2, axis=(1, 2, 3))
        coef = np.einsum("kmnp,lpmj->lknpj", h.H, stacked)
        eff = rsma.EffectiveCoefficients(
            common=np.zeros_like(coef[..., 0]),
            private=np.moveaxis(coef, -1, -3),
        )
        t_p, i_p = rsma.private_power_terms(eff, plan, cfg.sigma2)
        rate_p = np.log2(t_p / i_p)
        total = rate_p.sum(axis=(-2, -1))
        deficits = np.maximum(r_min - rate_p.sum(axis=-1), 0.0).sum(axis=-1)
        ok = (power <= cfg.Pt + POWER_SLACK) & (deficits <= 1e-12)
        return np.where(ok, total, 0.0)

    return evaluate


def noma_evaluator(h: FreqChannel, digital: np.ndarray, plan: rsma.ClusterPlan,
                   cfg: SystemConfig, order: np.ndarray):
    """Batched swarm fitness for the superposition scheme."""
    r_min = cfg.r_min_array
    order = np.asarray(order, dtype=int)

    def evaluate(positions: np.ndarray) -> np.ndarray:
        stacked = np.einsum("ltk,nkj->lntj", positions, digital)
        power = np.sum(np.abs(stacked) ** 2, axis=(1, 2, 3))
        coef = np.einsum("kmnp,lpmj->lknpj", h.H, stacked)
        msg_rates = noma_stream_rates(coef, plan, cfg.sigma2, order)
        total = msg_rates.sum(axis=(-2, -1))
        user_sums = msg_rates.sum(axis=-1)[..., np.argsort(order)]
        deficits = np.maximum(r_min - user_sums, 0.0).sum(axis=-1)
        ok = (power <= cfg.Pt + POWER_SLACK) & (deficits <= 1e-12)
        return np.where(ok, total, 0.0)

    return evaluate


class SdmaAdapter:
    """Rate splitting with the common stream and its constraints removed."""

    kind = "sdma"

    def layout(self, cfg: SystemConfig, plan: rsma.ClusterPlan):
        return sdma_layout(cfg.K, cfg.Nc, plan)

    def init_digital(self, ec: np.ndarray, cfg: SystemConfig, analog: np.ndarray) -> np.ndarray:
        return matched_filter_digital(ec, cfg, cfg.K, list(range(cfg.K)), analog)

    def evaluator_factory(self, h: FreqChannel, plan: rsma.ClusterPlan, cfg: SystemConfig):
        return lambda digital: sdma_evaluator(h, digital, plan, cfg)

    def report(self, h, analog, digital, plan, cfg) -> rsma.RateReport:
        precoder = rsma.HybridPrecoder(analog=analog, digital=_embed_zero_common(digital))
        return sdma_rate_report(h, precoder, plan, cfg.sigma2)

    def finalize(self, report, cfg) -> np.ndarray:
        return np.zeros((cfg.K, cfg.Nc))

    def embed_digital(self, digital: np.ndarray, cfg: SystemConfig) -> np.ndarray:
        return _embed_zero_common(digital)


class NomaAdapter:
    """Superposition coding with a fixed per-channel decode order."""

    kind = "noma"

    def __init__(self, order: np.ndarray):
        self.order = np.asarray(order, dtype=int)

    def layout(self, cfg: SystemConfig, plan: rsma.ClusterPlan):
        return noma_layout(cfg.K, cfg.Nc, plan, self.order)

    def init_digital(self, ec: np.ndarray, cfg: SystemConfig, analog: np.ndarray) -> np.ndarray:
        return matched_filter_digital(ec, cfg, cfg.K, [int(u) for u in self.order], analog)

    def evaluator_factory(self, h: FreqChannel, plan: rsma.ClusterPlan, cfg: SystemConfig):
        return lambda digital: noma_evaluator(h, digital, plan, cfg, self.order)

    def report(self, h, analog, digital, plan, cfg) -> rsma.RateReport:
        return noma_rate_report(h, analog, digital, plan, cfg.sigma2, self.order)

    def finalize(self, report, cfg) -> np.ndarray:
        return np.zeros((cfg.K, cfg.Nc))

    def embed_digital(self, digital: np.ndarray, cfg: SystemConfig) -> np.ndarray:
        out = np.zeros((cfg.Nc, cfg.K, cfg.K + 1), dtype=complex)
        for p, user in enumerate(self.order):
            out[:, :, 1 + int(user)] = digital[:, :, p]
        return out


SDMA = SdmaAdapter()


def adapter_for(scheme: Scheme | str, h: FreqChannel | None = None):
    """Scheme adapter instance; NOMA derives its decode order from the channel."""
    from .wmmse import RSMA  # local import to avoid a cycle at module load

    scheme = Scheme(scheme)
    if scheme is Scheme.RSMA:
        return RSMA
    if scheme is Scheme.SDMA:
        return SDMA
    if h is None:
        raise ConfigurationError("NOMA needs the channel to fix its decode order")
    return NomaAdapter(noma_decode_order(h))
