"""
Seeded Monte-Carlo experiments.

Every realization is an independent job which owns the random streams derived
from ``(seed, realization index)``, see
:py:func:`jaxcfm.scenario.realization_streams`. Jobs are distributed over
worker threads with :py:func:`tqdm.contrib.concurrent.thread_map`; results are
collected in job order, so the output does not depend on the number of
workers.

Each realization compares up to three methods on the same channel:

``conventional``
    The per-subcarrier ZF precoder with all APs active. It is the baseline of
    all gains.
``optimal``
    The PA-consumption-optimal precoder from the antenna power fixed point on
    the instantaneous channel.
``rmt``
    The PA-consumption-optimal precoder evaluated at the AP powers of the
    deterministic equivalent, with APs switched off from second-order
    statistics only.
"""

import hashlib
import logging
import platform
from pathlib import Path
from typing import Literal

import jax
import jax.numpy as jnp
import numpy as onp
import pandas as pd
from tqdm.contrib.concurrent import thread_map

from . import saving
from .channel import RankDeficientChannelError, draw_channel, normalize
from .config import SystemConfig
from .consumption import (
    ConsumptionParameters,
    ConsumptionReport,
    ap_average_powers,
    network_power,
)
from .helpers import antenna_offsets, antenna_to_ap, timer
from .precoding import (
    SingularGramError,
    SingularityGuardError,
    optimal_precoder,
    per_antenna_powers,
    solve_antenna_powers,
    zf_precoder,
    zf_violation,
)
from .rmt import (
    InfeasibleActivationError,
    InvalidRegimeError,
    RmtConvergenceError,
    RmtInput,
    expand_ap_powers,
    pbar_map,
    rmt_induced_precoder,
    rmt_input,
    solve_b,
    solve_b_dot,
    solve_pbar,
)
from .scenario import (
    PlacementError,
    Scenario,
    draw_scenario,
    realization_streams,
)

logger = logging.getLogger(__name__)

ExperimentKind = Literal[
    "antenna-profile", "subcarrier-sweep", "load-sweep", "validate"
]

KINDS = ("antenna-profile", "subcarrier-sweep", "load-sweep", "validate")

METHODS = ("conventional", "optimal", "rmt")

#: Largest accepted relative violation of the ZF constraint
ZF_TOLERANCE = 1e-9

#: Largest accepted relative deviation between the powers of the optimal
#: precoder and the fixed point it was computed from
SELF_CONSISTENCY_TOLERANCE = 1e-6

#: Iteration cap of the antenna power fixed point. A realization whose
#: iteration stops early still has to pass the self-consistency check.
OPTIMAL_MAX_ITER = 20_000

#: Failures of a single realization which do not stop a run
SOLVER_ERRORS = (
    PlacementError,
    RankDeficientChannelError,
    SingularGramError,
    SingularityGuardError,
    RmtConvergenceError,
    InvalidRegimeError,
    InfeasibleActivationError,
)

SWEEP_COLUMNS = [
    "experiment",
    "Q",
    "K",
    "L",
    "method",
    "metric",
    "mean",
    "stderr",
    "count",
]

PROFILE_COLUMNS = [
    "antenna",
    "ap",
    "antenna_in_ap",
    "optimal",
    "conventional",
    "rmt",
    "optimal_ap_mean",
]

#: Format of all floats in CSV output
FLOAT_FORMAT = "%.10e"


class InvariantViolation(RuntimeError):
    """
    Raised if a realization violates the ZF constraint or the fixed-point
    self-consistency.
    """


class ExperimentSpec:
    """
    Everything defining one Monte-Carlo run.

    Sweep values and realization counts which are not given take the default
    of the experiment ``kind``:

    * ``antenna-profile``: a single realization with the base configuration.
    * ``subcarrier-sweep``: ``Q`` in 1, 2, 4, ..., 256, 100 realizations.
    * ``load-sweep``: ``K`` in 1...19, ``L`` in 2...10, 100 realizations.
    * ``validate``: ``K`` in 1, 4, 8, ``N`` in 8, 16, 64 and ``Q`` in 1, 16,
      5 realizations each.
    """

    def __init__(
        self,
        kind: ExperimentKind,
        config: SystemConfig | None = None,
        q_values: tuple[int, ...] | None = None,
        k_values: tuple[int, ...] | None = None,
        l_values: tuple[int, ...] | None = None,
        realizations: int | None = None,
        out: str | Path | None = None,
        seed: int | None = None,
        workers: int = 1,
        progress: bool = False,
    ):
        if kind not in KINDS:
            raise ValueError(
                f"Unknown experiment {kind!r}, use one of {KINDS}."
            )
        self.kind: ExperimentKind = kind
        config = SystemConfig() if config is None else config
        if seed is not None:
            config = config.replace(rng_seed=seed)
        #: The base configuration. Sweeps replace single fields of it.
        self.config: SystemConfig = config
        defaults = {
            "subcarrier-sweep": (tuple(2**i for i in range(9)), (), (), 100),
            "load-sweep": ((), tuple(range(1, 20)), tuple(range(2, 11)), 100),
            "antenna-profile": ((), (), (), 1),
            "validate": ((1, 16), (1, 4, 8), (), 5),
        }[kind]
        self.q_values: tuple[int, ...] = tuple(
            defaults[0] if q_values is None else q_values
        )
        self.k_values: tuple[int, ...] = tuple(
            defaults[1] if k_values is None else k_values
        )
        self.l_values: tuple[int, ...] = tuple(
            defaults[2] if l_values is None else l_values
        )
        self.realizations: int = int(
            defaults[3] if realizations is None else realizations
        )
        #: Path of the CSV output
        self.out: Path = Path(out if out is not None else f"{kind}.csv")
        self.workers: int = int(workers)
        self.progress: bool = progress
        self._validate()

    def _validate(self) -> None:
        kind = self.kind
        if self.realizations < 1:
            raise ValueError("At least one realization is required.")
        if self.workers < 1:
            raise ValueError("At least one worker is required.")
        if kind == "subcarrier-sweep" and not self.q_values:
            raise ValueError("The subcarrier sweep needs Q values.")
        if kind == "load-sweep" and not (self.k_values and self.l_values):
            raise ValueError("The load sweep needs K and L values.")
        if kind == "validate" and not (self.q_values and self.k_values):
            raise ValueError("The validation suite needs Q and K values.")

    @property
    def seed(self) -> int:
        return self.config.rng_seed

    def quick(self) -> "ExperimentSpec":
        """
        A reduced copy of this spec: ``Q`` capped at 64, and at most 20
        realizations.

        Raises
        ------
        ValueError
            If no ``Q`` value of a sweep is left.
        """
        out = object.__new__(ExperimentSpec)
        out.__dict__.update(self.__dict__)
        out.config = self.config.replace(Q=min(self.config.Q, 64))
        out.q_values = tuple(q for q in self.q_values if q <= 64)
        out.realizations = min(self.realizations, 20)
        out._validate()
        return out


class MonteCarloResult:
    """
    Per-realization records of a run and their aggregates.
    """

    def __init__(
        self,
        spec: ExperimentSpec,
        records: list[dict],
        table: pd.DataFrame,
    ):
        self.spec = spec
        #: One dictionary per realization and sweep point
        self.records: list[dict] = records
        #: The CSV content. Aggregates for sweeps, one row per antenna for the
        #: antenna profile.
        self.table: pd.DataFrame = table

    @property
    def violations(self) -> list[dict]:
        return [
            r for r in self.records if r["status"] == "invariant-violation"
        ]

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.records if r["status"] == "solver-error"]


def scenario_digest(scenario: Scenario) -> str:
    """
    SHA-256 over the positions, LSF and targets of a scenario.
    """
    h = hashlib.sha256()
    for arr in (
        scenario.geometry.ap_positions,
        scenario.geometry.user_positions,
        scenario.large_scale.beta,
        scenario.targets.gamma,
    ):
        h.update(onp.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def config_digest(cfg: SystemConfig) -> str:
    return hashlib.sha256(
        saving.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()


def _evaluate(
    cfg: SystemConfig,
    index: int,
    methods: tuple[str, ...],
    record: dict,
    keep_powers: bool,
) -> None:
    streams = realization_streams(cfg.rng_seed, index)
    scenario = draw_scenario(cfg, streams)
    record["scenario_digest"] = scenario_digest(scenario)
    ch = draw_channel(scenario, cfg.Q, streams["channel"])
    record["diagnostics"]["channel_redraws"] = ch.redraws
    targets = scenario.targets
    noise = cfg.noise_power

    precoders = {"conventional": zf_precoder(ch, targets, noise)}
    powers = {"conventional": per_antenna_powers(precoders["conventional"])}
    if "optimal" in methods:
        p_opt, fp = solve_antenna_powers(
            normalize(ch, targets, noise), max_iter=OPTIMAL_MAX_ITER
        )
        record["diagnostics"]["optimal"] = fp.to_dict()
        precoders["optimal"] = optimal_precoder(ch, targets, noise, p_opt)
        realized = per_antenna_powers(precoders["optimal"]).p
        deviation = float(
            jnp.max(jnp.abs(realized - p_opt.p)) / jnp.max(p_opt.p)
        )
        record["diagnostics"]["self_consistency"] = deviation
        if not deviation <= SELF_CONSISTENCY_TOLERANCE:
            raise InvariantViolation(
                f"Powers of the optimal precoder deviate by {deviation:.3e} "
                f"from the fixed point after {fp.iterations} iterations."
            )
        powers["optimal"] = p_opt
    if "rmt" in methods:
        ap_powers, fp = solve_pbar(
            rmt_input(scenario), threshold_rel=cfg.activation_threshold_rel
        )
        record["diagnostics"]["rmt"] = {
            **fp.to_dict(),
            "active_set": list(ap_powers.active_set),
        }
        precoders["rmt"] = rmt_induced_precoder(ch, targets, noise, ap_powers)
        powers["rmt"] = per_antenna_powers(precoders["rmt"])
        if keep_powers:
            record["allocation"] = expand_ap_powers(ap_powers, cfg.M).p

    violation = {
        method: zf_violation(ch, ws, targets, noise)
        for method, ws in precoders.items()
    }
    record["diagnostics"]["zf_violation"] = violation
    for method, value in violation.items():
        if not value <= ZF_TOLERANCE:
            raise InvariantViolation(
                f"The {method} precoder violates the ZF constraint by "
                f"{value:.3e}."
            )

    params = ConsumptionParameters.from_config(cfg)
    baseline = network_power(powers["conventional"], cfg.M, params, targets)
    reports: dict[str, ConsumptionReport] = {
        method: network_power(powers[method], cfg.M, params, targets)
        .with_baseline(baseline)
        for method in methods
    }
    record["methods"] = {m: r.to_dict() for m, r in reports.items()}
    if "optimal" in reports and "rmt" in reports:
        record["methods"]["rmt"]["pas_ratio_to_optimal"] = (
            reports["rmt"].p_pas / reports["optimal"].p_pas
        )
    if keep_powers:
        record["powers"] = {m: powers[m].p for m in methods}


def run_realization(
    cfg: SystemConfig,
    index: int,
    methods: tuple[str, ...] = METHODS,
    experiment: str = "",
    keep_powers: bool = False,
) -> dict:
    """
    Run all ``methods`` on realization ``index`` of ``cfg``.

    Solver failures and invariant violations are recorded in the ``status``
    and ``message`` fields of the returned record; they never propagate.
    """
    record = {
        "experiment": experiment,
        "index": index,
        "seed": cfg.rng_seed,
        "Q": cfg.Q,
        "K": cfg.K,
        "L": cfg.L,
        "status": "ok",
        "message": "",
        "scenario_digest": "",
        "methods": {},
        "diagnostics": {},
    }
    try:
        _evaluate(cfg, index, tuple(methods), record, keep_powers)
    except InvariantViolation as err:
        record["status"] = "invariant-violation"
        record["message"] = str(err)
        record["methods"] = {}
        logger.error(f"Realization {index} of {cfg}: {err}")
    except SOLVER_ERRORS as err:
        record["status"] = "solver-error"
        record["message"] = f"{type(err).__name__}: {err}"
        record["methods"] = {}
        logger.error(f"Realization {index} of {cfg} failed: {err}")
    return record


def _run_jobs(spec: ExperimentSpec, jobs: list[tuple], **kwargs) -> list:
    return thread_map(
        lambda job: run_realization(*job, **kwargs),
        jobs,
        max_workers=spec.workers,
        disable=not spec.progress,
        desc=spec.kind,
    )


def aggregate(records: list[dict]) -> pd.DataFrame:
    """
    Mean, standard error and count of every metric of every method, per
    experiment and sweep point. Only records with status ``ok`` enter.
    """
    rows = [
        {
            "experiment": r["experiment"],
            "Q": r["Q"],
            "K": r["K"],
            "L": r["L"],
            "method": method,
            "metric": metric,
            "value": float(value),
        }
        for r in records
        if r["status"] == "ok"
        for method, report in r["methods"].items()
        for metric, value in report.items()
    ]
    if not rows:
        return pd.DataFrame(columns=SWEEP_COLUMNS)
    keys = SWEEP_COLUMNS[:6]
    table = (
        pd.DataFrame(rows)
        .groupby(keys, sort=True)["value"]
        .agg(["mean", "sem", "count"])
        .rename(columns={"sem": "stderr"})
        .reset_index()
    )
    return table[SWEEP_COLUMNS]


def antenna_profile_table(
    record: dict, antennas: tuple[int, ...]
) -> pd.DataFrame:
    """
    One row per antenna with the powers of all methods.
    """
    if record["status"] != "ok":
        return pd.DataFrame(columns=PROFILE_COLUMNS)
    ap = onp.asarray(antenna_to_ap(antennas))
    antenna = onp.arange(sum(antennas))
    optimal = onp.asarray(record["powers"]["optimal"])
    return pd.DataFrame(
        {
            "antenna": antenna,
            "ap": ap,
            "antenna_in_ap": antenna - antenna_offsets(antennas)[ap],
            "optimal": optimal,
            "conventional": onp.asarray(record["powers"]["conventional"]),
            "rmt": onp.asarray(record["allocation"]),
            "optimal_ap_mean": onp.asarray(
                ap_average_powers(optimal, antennas)
            )[ap],
        }
    )[PROFILE_COLUMNS]


@timer
def run_antenna_profile(spec: ExperimentSpec) -> MonteCarloResult:
    """
    Per-antenna band powers of the optimal, conventional and RMT methods on
    realization 0 of ``spec.config``.
    """
    cfg = spec.config
    record = run_realization(
        cfg, 0, METHODS, experiment=spec.kind, keep_powers=True
    )
    return MonteCarloResult(
        spec, [record], antenna_profile_table(record, cfg.M)
    )


@timer
def run_subcarrier_sweep(spec: ExperimentSpec) -> MonteCarloResult:
    """
    All three methods for every number of subcarriers in ``spec.q_values``.
    Realization ``i`` shares its geometry, LSF and targets across all ``Q``.
    """
    jobs = [
        (spec.config.replace(Q=q), i)
        for q in spec.q_values
        for i in range(spec.realizations)
    ]
    records = _run_jobs(spec, jobs, experiment=spec.kind)
    return MonteCarloResult(spec, records, aggregate(records))


@timer
def run_load_sweep(spec: ExperimentSpec) -> MonteCarloResult:
    """
    Network power gain of the RMT method over the conventional baseline for
    every combination of ``K`` and ``L``. Points without more antennas than
    users are skipped.
    """
    jobs = []
    m = spec.config.M[0]
    for n_aps in spec.l_values:
        for n_users in spec.k_values:
            if n_users >= n_aps * m:
                logger.warning(
                    f"Skipping K={n_users}, L={n_aps}: only {n_aps * m} "
                    "antennas."
                )
                continue
            cfg = spec.config.replace(L=n_aps, M=m, K=n_users)
            jobs.extend((cfg, i) for i in range(spec.realizations))
    records = _run_jobs(
        spec, jobs, methods=("conventional", "rmt"), experiment=spec.kind
    )
    return MonteCarloResult(spec, records, aggregate(records))


def _closed_form_record() -> dict:
    # Single uncorrelated AP, M=16, K=8, D=I: b=2, b_dot=8, p=0.0625
    inp = RmtInput.from_eigenvalues(jnp.ones((1, 8)), [jnp.ones(16)], 1)
    p = jnp.ones(1)
    b = solve_b(inp, p)
    aux = solve_b_dot(inp, p, b)
    values = {
        "b": (float(b[0]), 2.0),
        "b_dot": (float(aux.b_dot[0]), 8.0),
        "pbar": (float(pbar_map(inp, p)[0]), 0.0625),
    }
    bad = {
        k: v for k, v in values.items() if abs(v[0] - v[1]) > 1e-10 * v[1]
    }
    return {
        "experiment": "validate",
        "index": -1,
        "seed": 0,
        "Q": 1,
        "K": 8,
        "L": 1,
        "status": "invariant-violation" if bad else "ok",
        "message": f"Closed forms off: {bad}" if bad else "",
        "scenario_digest": "",
        "methods": {},
        "diagnostics": {k: v[0] for k, v in values.items()},
    }


@timer
def run_validation(spec: ExperimentSpec) -> MonteCarloResult:
    """
    The invariant suite: ZF feasibility and fixed-point self-consistency of
    all methods over small random systems, and the closed-form deterministic
    equivalents of a single uncorrelated AP.

    Systems combine ``K`` from ``spec.k_values``, ``Q`` from
    ``spec.q_values`` and ``N`` in 8, 16 and 64, with APs of 8 antennas.
    """
    jobs = []
    for n_antennas in (8, 16, 64):
        for n_users in spec.k_values:
            if n_users >= n_antennas:
                continue
            for q in spec.q_values:
                cfg = spec.config.replace(
                    L=n_antennas // 8, M=8, K=n_users, Q=q
                )
                jobs.extend((cfg, i) for i in range(spec.realizations))
    records = _run_jobs(spec, jobs, experiment=spec.kind)
    records.append(_closed_form_record())
    return MonteCarloResult(spec, records, aggregate(records))


def run_experiment(spec: ExperimentSpec) -> MonteCarloResult:
    """
    Dispatch on ``spec.kind``.
    """
    return {
        "antenna-profile": run_antenna_profile,
        "subcarrier-sweep": run_subcarrier_sweep,
        "load-sweep": run_load_sweep,
        "validate": run_validation,
    }[spec.kind](spec)


def metadata_lines(spec: ExperimentSpec) -> list[str]:
    from . import __version__

    lines = [
        f"experiment: {spec.kind}",
        f"config_digest: sha256:{config_digest(spec.config)}",
        f"seed: {spec.seed}",
        f"realizations: {spec.realizations}",
    ]
    if spec.q_values:
        lines.append(f"Q: {','.join(map(str, spec.q_values))}")
    if spec.k_values:
        lines.append(f"K: {','.join(map(str, spec.k_values))}")
    if spec.l_values:
        lines.append(f"L: {','.join(map(str, spec.l_values))}")
    lines += [
        f"jaxcfm: {__version__}",
        f"jax: {jax.__version__}",
        f"numpy: {onp.__version__}",
        f"pandas: {pd.__version__}",
        f"python: {platform.python_version()}",
    ]
    return lines


def write_result(result: MonteCarloResult, out: str | Path | None = None):
    """
    Write the CSV table of a result, and next to it the run metadata
    (``<out>.meta.txt``) and all records (``<out>.records.json``).
    """
    out = Path(out if out is not None else result.spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(
        out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    meta = out.with_name(out.name + ".meta.txt")
    meta.write_text("\n".join(metadata_lines(result.spec)) + "\n")
    with open(out.with_name(out.name + ".records.json"), "w") as f:
        saving.dump(
            {"config": result.spec.config, "records": result.records},
            f,
            indent=1,
        )
    logger.info(f"Wrote {len(result.table)} rows to {out}.")
