"""Monte-Carlo experiment driver: seeded sweeps, aggregation, file outputs.

One trial draws one channel realization; every (scheme, cluster count, SNR)
point of the sweep reuses that channel and the same swarm seed, so scheme
comparisons are paired. All randomness descends from the master seed, making
rerun outputs byte-identical. Wall-clock timings are kept on the in-memory
results but never written to files for the same reason.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import Scheme, adapter_for
from .channel import SystemConfig, freq_channel, sample_channel
from .pso import PsoConfig
from .rsma import make_cluster_plan, sic_complexity
from .wmmse import optimize_hybrid

SNR_CONVENTION = "per-subcarrier transmit SNR: sigma2 = (Pt/Nc) * 10**(-snr_db/10)"


class SpecValidationError(ValueError):
    """The experiment description is inconsistent."""


def snr_to_noise(snr_db: float, pt: float, nc: int) -> float:
    """Noise variance for a target per-subcarrier transmit SNR in dB."""
    if pt <= 0:
        raise SpecValidationError("Pt must be positive")
    return (pt / nc) * 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one reproducible sweep."""

    system: SystemConfig
    pso: PsoConfig
    snr_grid: tuple[float, ...]
    g_grid: tuple[int, ...]
    schemes: tuple[Scheme, ...]
    trials: int
    master_seed: int
    output_dir: str
    output_format: str = "csv"
    outer_rounds: int = 2
    wmmse_tol: float = 1e-3
    wmmse_max_epochs: int = 30

    def validate(self) -> None:
        if self.trials < 1:
            raise SpecValidationError("trials must be >= 1")
        if not self.snr_grid:
            raise SpecValidationError("snr_grid must be nonempty")
        if not self.g_grid:
            raise SpecValidationError("g_grid must be nonempty")
        for g in self.g_grid:
            if not 1 <= g <= self.system.Nc:
                raise SpecValidationError(f"cluster count {g} outside [1, Nc]")
        if not self.schemes:
            raise SpecValidationError("schemes must be nonempty")
        if self.output_format not in ("csv", "json"):
            raise SpecValidationError("output_format must be 'csv' or 'json'")


@dataclass
class TrialResult:
    trial: int
    seed: int
    scheme: str
    g: int
    snr_db: float
    sum_rate: float
    sum_rate_per_sc: float
    common_rate_total: float
    per_user_rate: tuple[float, ...]  # private plus allocated common share
    epochs_to_converge: int
    complexity_ops: float
    wall_time: float  # in-memory only; excluded from deterministic outputs


@dataclass
class FailureRecord:
    trial: int
    scheme: str
    g: int
    snr_db: float
    error: str


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[TrialResult]
    failures: list[FailureRecord]

    @property
    def failure_rate(self) -> float:
        total = len(self.rows) + len(self.failures)
        return len(self.failures) / total if total else 0.0


def _trial_seeds(master_seed: int, trial: int) -> tuple[np.random.Generator, int]:
    channel_rng = np.random.default_rng(
        np.random.SeedSequence((master_seed, trial, 0))
    )
    pso_seed = int(np.random.SeedSequence((master_seed, trial, 1)).generate_state(1)[0])
    return channel_rng, pso_seed


def run_trial(spec: ExperimentSpec, trial: int) -> tuple[list[TrialResult], list[FailureRecord]]:
    """Run all sweep points of one trial on one shared channel realization."""
    channel_rng, pso_seed = _trial_seeds(spec.master_seed, trial)
    real = sample_channel(spec.system, channel_rng)
    h = freq_channel(real, spec.system)
    pso_cfg = replace(spec.pso, seed=pso_seed)

    rows: list[TrialResult] = []
    failures: list[FailureRecord] = []
    for scheme in spec.schemes:
        adapter = adapter_for(scheme, h)
        for g in spec.g_grid:
            plan = make_cluster_plan(spec.system.Nc, g)
            for snr_db in spec.snr_grid:
                cfg = replace(
                    spec.system,
                    sigma2=snr_to_noise(snr_db, spec.system.Pt, spec.system.Nc),
                    n_clusters=g,
                )
                start = time.perf_counter()
                try:
                    res = optimize_hybrid(
                        h,
                        plan,
                        cfg,
                        pso_cfg,
                        outer_rounds=spec.outer_rounds,
                        wmmse_tol=spec.wmmse_tol,
                        wmmse_max_epochs=spec.wmmse_max_epochs,
                        adapter=adapter,
                    )
                except Exception as exc:  # noqa: BLE001 - sweep must survive
                    failures.append(
                        FailureRecord(trial, scheme.value, g, snr_db, f"{type(exc).__name__}: {exc}")
                    )
                    continue
                elapsed = time.perf_counter() - start
                report = res.report
                per_user = report.private_rate.sum(axis=1) + res.precoder.common_alloc.sum(axis=1)
                rows.append(
                    TrialResult(
                        trial=trial,
                        seed=pso_seed,
                        scheme=scheme.value,
                        g=g,
                        snr_db=float(snr_db),
                        sum_rate=float(report.sum_rate),
                        sum_rate_per_sc=float(report.sum_rate / spec.system.Nc),
                        common_rate_total=float(report.common_rate.sum()),
                        per_user_rate=tuple(float(x) for x in per_user),
                        epochs_to_converge=int(sum(len(t) - 1 for t in res.wmmse_traces)),
                        complexity_ops=sic_complexity(
                            g, spec.system.K, spec.system.Nt, spec.system.Nc
                        ),
                        wall_time=elapsed,
                    )
                )
    return rows, failures


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Execute the full sweep; per-point failures are recorded, never fatal."""
    spec.validate()
    rows: list[TrialResult] = []
    failures: list[FailureRecord] = []
    for trial in range(spec.trials):
        r, f = run_trial(spec, trial)
        rows.extend(r)
        failures.extend(f)
    rows.sort(key=lambda r: (r.trial, r.scheme, r.g, r.snr_db))
    failures.sort(key=lambda r: (r.trial, r.scheme, r.g, r.snr_db))
    return ExperimentResult(spec=spec, rows=rows, failures=failures)


def aggregate(result: ExperimentResult) -> dict:
    """Group means with 95% confidence intervals per sweep point."""
    groups: dict[tuple, list[TrialResult]] = {}
    for row in result.rows:
        groups.setdefault((row.scheme, row.g, row.snr_db), []).append(row)
    out = {}
    for key in sorted(groups):
        rows = groups[key]
        rates = np.array([r.sum_rate for r in rows])
        n = len(rates)
        std = float(rates.std(ddof=1)) if n > 1 else 0.0
        out["{}/g={}/snr={:g}".format(*key)] = {
            "n": n,
            "mean_sum_rate": float(rates.mean()),
            "std_sum_rate": std,
            "ci95_half_width": 1.96 * std / np.sqrt(n) if n > 1 else 0.0,
            "mean_sum_rate_per_sc": float(rates.mean() / result.spec.system.Nc),
            "mean_epochs": float(np.mean([r.epochs_to_converge for r in rows])),
        }
    return out


def complexity_table(spec: ExperimentSpec) -> list[dict]:
    sys_cfg = spec.system
    return [
        {
            "g": g,
            "ops": sic_complexity(g, sys_cfg.K, sys_cfg.Nt, sys_cfg.Nc),
            "ratio_to_parallel": sic_complexity(g, sys_cfg.K, sys_cfg.Nt, sys_cfg.Nc)
            / sic_complexity(1, sys_cfg.K, sys_cfg.Nt, sys_cfg.Nc),
        }
        for g in spec.g_grid
    ]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def result_table(result: ExperimentResult) -> tuple[list[str], list[list[str]]]:
    """Header and stringified rows of the per-trial results table (1-based users)."""
    k = result.spec.system.K
    header = [
        "trial",
        "seed",
        "scheme",
        "g",
        "snr_db",
        "sum_rate",
        "sum_rate_per_sc",
        "common_rate_total",
    ] + [f"user{j + 1}_rate" for j in range(k)] + ["epochs_to_converge", "complexity_ops"]
    table = []
    for row in result.rows:
        cells = [
            str(row.trial),
            str(row.seed),
            row.scheme,
            str(row.g),
            _fmt(row.snr_db),
            _fmt(row.sum_rate),
            _fmt(row.sum_rate_per_sc),
            _fmt(row.common_rate_total),
            *[_fmt(x) for x in row.per_user_rate],
            str(row.epochs_to_converge),
            _fmt(row.complexity_ops),
        ]
        table.append(cells)
    return header, table


def parse_results_csv(path: str | Path) -> list[TrialResult]:
    """Inverse of the CSV writer (wall times come back as zero)."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    n_users = sum(1 for h in header if h.startswith("user") and h.endswith("_rate"))
    rows = []
    for line in lines[1:]:
        c = line.split(",")
        rows.append(
            TrialResult(
                trial=int(c[0]),
                seed=int(c[1]),
                scheme=c[2],
                g=int(c[3]),
                snr_db=float(c[4]),
                sum_rate=float(c[5]),
                sum_rate_per_sc=float(c[6]),
                common_rate_total=float(c[7]),
                per_user_rate=tuple(float(x) for x in c[8 : 8 + n_users]),
                epochs_to_converge=int(c[8 + n_users]),
                complexity_ops=float(c[9 + n_users]),
                wall_time=0.0,
            )
        )
    return rows


def spec_to_dict(spec: ExperimentSpec) -> dict:
    data = asdict(spec)
    data["schemes"] = [s.value for s in spec.schemes]
    return data


def prepare_output_dir(path: str | Path) -> Path:
    """Create the output directory and prove it is writable before any work."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("", encoding="utf-8")
    probe.unlink()
    return out


def emit_outputs(
    result: ExperimentResult, out_dir: str | Path | None = None, fmt: str | None = None
) -> dict[str, Path]:
    """Write the results table, aggregate summary and run metadata.

    Outputs are deterministic functions of the spec and master seed; nothing
    time- or host-dependent is written.
    """
    if not result.rows and not result.failures:
        raise SpecValidationError("refusing to emit outputs for an empty result")
    out = prepare_output_dir(out_dir if out_dir is not None else result.spec.output_dir)
    fmt = fmt or result.spec.output_format
    header, table = result_table(result)
    paths: dict[str, Path] = {}
    if fmt == "csv":
        paths["results"] = out / "results.csv"
        lines = [",".join(header)] + [",".join(row) for row in table]
        paths["results"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        paths["results"] = out / "results.json"
        records = [dict(zip(header, row)) for row in table]
        paths["results"].write_text(
            json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    summary = {
        "aggregate": aggregate(result),
        "complexity_table": complexity_table(result.spec),
        "failures": [asdict(f) for f in result.failures],
        "failure_rate": result.failure_rate,
        "rows_emitted": len(result.rows),
        "points_expected": result.spec.trials
        * len(result.spec.schemes)
        * len(result.spec.g_grid)
        * len(result.spec.snr_grid),
    }
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    metadata = {
        "spec": spec_to_dict(result.spec),
        "master_seed": result.spec.master_seed,
        "version": __version__,
        "snr_convention": SNR_CONVENTION,
    }
    paths["metadata"] = out / "metadata.json"
    paths["metadata"].write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return paths


def run_trace(spec: ExperimentSpec, trial: int = 0) -> list[dict]:
    """Convergence trace rows (scheme, g, epoch, sum_rate) for one trial."""
    spec.validate()
    channel_rng, pso_seed = _trial_seeds(spec.master_seed, trial)
    real = sample_channel(spec.system, channel_rng)
    h = freq_channel(real, spec.system)
    pso_cfg = replace(spec.pso, seed=pso_seed)
    snr_db = spec.snr_grid[0]
    rows = []
    for scheme in spec.schemes:
        adapter = adapter_for(scheme, h)
        for g in spec.g_grid:
            plan = make_cluster_plan(spec.system.Nc, g)
            cfg = replace(
                spec.system,
                sigma2=snr_to_noise(snr_db, spec.system.Pt, spec.system.Nc),
                n_clusters=g,
            )
            res = optimize_hybrid(
                h,
                plan,
                cfg,
                pso_cfg,
                outer_rounds=spec.outer_rounds,
                wmmse_tol=spec.wmmse_tol,
                wmmse_max_epochs=spec.wmmse_max_epochs,
                adapter=adapter,
            )
            epoch = 0
            for trace in res.wmmse_traces:
                for value in trace:
                    rows.append(
                        {
                            "scheme": scheme.value,
                            "g": g,
                            "snr_db": float(snr_db),
                            "epoch": epoch,
                            "sum_rate": float(value),
                        }
                    )
                    epoch += 1
    return rows
