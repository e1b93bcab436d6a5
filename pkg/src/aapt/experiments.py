"""
Monte-Carlo harness: single trials, MSE sweeps over the copy number, paired
optimal-vs-random input comparisons, the error-bound evaluator and log-log fits.

Seeds are derived, never drawn: trial ``i`` samples with
``derive_seed(base_seed, 0, i)`` and a generated random input state uses
``derive_seed(base_seed, 1)``, so results do not depend on execution order.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import channel as ch
from . import statesim as ss
from . import tomography as tm
from .errors import AaptError, CompletenessError, ConfigError, DegenerateInputError, FitError

log = logging.getLogger(__name__)

TRIAL_STREAM = 0
INPUT_STREAM = 1


@dataclass(frozen=True)
class ChannelSpec:
    name: str = "phase_damping"
    lam: float = 2 / 3
    rank: int = 2
    tp: bool = True
    seed: int = 0
    path: str | None = None

    def build(self, dA):
        if self.name == "phase_damping":
            if dA != 2:
                raise ConfigError("phase_damping is a single-qubit channel (dA must be 2)")
            return ch.phase_damping(self.lam)
        if self.name == "identity":
            return ch.identity_channel(dA)
        if self.name == "random":
            return ch.random_channel(dA, self.rank, self.tp, self.seed)
        if self.name == "file":
            if not self.path:
                raise ConfigError("channel 'file' needs a path")
            try:
                obj = json.loads(Path(self.path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read channel file {self.path}: {exc}") from exc
            chan = ch.channel_from_json(obj)
            if not isinstance(chan, ch.KrausChannel):
                raise ConfigError("simulation needs a Kraus channel file")
            return chan
        raise ConfigError(f"unknown channel name {self.name!r}")


@dataclass(frozen=True)
class InputSpec:
    kind: str = "maximally_entangled"
    seed: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelSpec = ChannelSpec()
    dA: int = 2
    dB: int = 2
    input_state: InputSpec = InputSpec()
    n_qubits: int = 2
    n_values: tuple = (9_000, 90_000, 900_000, 9_000_000)
    repetitions: int = 20
    base_seed: int = 2024
    mode: str = tm.TP

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        try:
            object.__setattr__(self, "mode", tm._normalize_mode(self.mode))
        except AaptError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dB < self.dA:
            raise ConfigError(f"dB={self.dB} must be >= dA={self.dA}")
        if 2**self.n_qubits != self.dA * self.dB:
            raise ConfigError(f"cube suite on {self.n_qubits} qubits does not match dA*dB={self.dA * self.dB}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.n_values:
            raise ConfigError("n_values must not be empty")
        L = 3**self.n_qubits
        bad = [n for n in self.n_values if n < L]
        if bad:
            raise ConfigError(f"every N must be >= L={L}; got {bad}")
        if self.input_state.kind not in ("maximally_entangled", "random_full_schmidt"):
            raise ConfigError(f"unknown input state kind {self.input_state.kind!r}")

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        unknown = set(obj) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "channel" in obj:
                obj["channel"] = ChannelSpec(**obj["channel"])
            if "input_state" in obj:
                obj["input_state"] = InputSpec(**obj["input_state"])
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_dict(self):
        d = asdict(self)
        d["n_values"] = list(self.n_values)
        return d


@dataclass(frozen=True, eq=False)
class Setup:
    channel: ch.KrausChannel
    X: ch.ProcessMatrix
    sigma_in: np.ndarray
    schmidt: ss.SchmidtDecomposition
    sigma_out: np.ndarray
    suite: ss.MeasurementSuite


def input_state(cfg):
    spec = cfg.input_state
    if spec.kind == "maximally_entangled":
        if cfg.dA != cfg.dB:
            raise ConfigError("the maximally entangled input needs dA == dB")
        return ss.maximally_entangled_state(cfg.dA)
    seed = spec.seed if spec.seed is not None else ss.derive_seed(cfg.base_seed, INPUT_STREAM)
    return ss.random_full_schmidt_state(cfg.dA, cfg.dB, seed)


@functools.lru_cache(maxsize=64)
def prepare(cfg):
    chan = cfg.channel.build(cfg.dA)
    sigma_in = input_state(cfg)
    schmidt = ss.operator_schmidt(sigma_in, cfg.dA, cfg.dB)
    sigma_out = ss.evolve_input(chan, sigma_in, cfg.dA, cfg.dB)
    return Setup(chan, ch.kraus_to_process(chan), sigma_in, schmidt, sigma_out, ss.cube_measurements(cfg.n_qubits))


@dataclass(frozen=True, eq=False)
class TrialResult:
    N: int | None
    trial: int
    Xhat: ch.ProcessMatrix
    mse: float
    diagnostics: tm.TssDiagnostics


def run_trial(cfg, N, trial_index):
    """
    One simulated experiment. ``N=None`` (or ``inf``) substitutes exact Born
    probabilities for sampled frequencies.
    """
    setup = prepare(cfg)
    try:
        if N is None or not math.isfinite(N):
            record = ss.exact_record(setup.sigma_out, setup.suite)
            N = None
        else:
            seed = ss.derive_seed(cfg.base_seed, TRIAL_STREAM, trial_index)
            record = ss.sample_counts(setup.sigma_out, setup.suite, int(N), seed)
        Xhat, diag = tm.aapt_reconstruct(record, setup.schmidt, setup.suite, cfg.mode)
    except AaptError as exc:
        raise type(exc)(f"trial {trial_index} (N={N}): {exc}") from exc
    return TrialResult(N, trial_index, Xhat, ch.process_distance(Xhat, setup.X) ** 2, diag)


def _trial_mse(args):
    cfg, N, i = args
    return run_trial(cfg, N, i).mse


def theoretical_bound(E, L, C, s, N, dA, dB):
    """
    Unit-constant error scale
    ``dA sqrt(dB) Tr(E) sqrt(L Tr((C^T C)^-1)) sqrt(sum 1/s_j^2) / sqrt(N)``.
    """
    C = np.asarray(C)
    s = np.asarray(s, dtype=float)
    gram = C.conj().T @ C
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise CompletenessError("C^dagger C is singular")
    if np.any(s <= 0):
        raise DegenerateInputError("every Schmidt coefficient must be positive")
    tr_inv = np.trace(np.linalg.inv(gram)).real
    return float(
        dA * np.sqrt(dB) * np.trace(E).real * np.sqrt(L * tr_inv) * np.sqrt(np.sum(1.0 / s**2)) / np.sqrt(N)
    )


@dataclass(frozen=True)
class SweepRow:
    N: int
    mean_mse: float
    std_err: float
    per_trial: tuple
    bound: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    config: ExperimentConfig | None = None
    label: str = ""

    def to_json(self):
        return {
            "label": self.label,
            "config": self.config.to_dict() if self.config else None,
            "rows": [
                {"N": r.N, "meanMSE": r.mean_mse, "stdErr": r.std_err,
                 "perTrialMSE": list(r.per_trial), "theoreticalBound": r.bound}
                for r in self.rows
            ],
        }


def bound_for(cfg, N):
    setup = prepare(cfg)
    C = tm.measurement_parameterization_C(setup.suite)
    return theoretical_bound(setup.X.trace_map, setup.suite.L, C, setup.schmidt.s[: cfg.dA**2], N, cfg.dA, cfg.dB)


def mse_sweep(cfg, jobs=1, label=""):
    """``cfg.repetitions`` trials at every N; mean and standard error of the MSE."""
    tasks = [(cfg, N, i) for N in cfg.n_values for i in range(cfg.repetitions)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            mses = list(pool.map(_trial_mse, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        mses = []
        for k, t in enumerate(tasks):
            mses.append(_trial_mse(t))
            if (k + 1) % cfg.repetitions == 0:
                log.info("%s N=%d done (%d/%d trials)", label or "sweep", t[1], k + 1, len(tasks))
    R = cfg.repetitions
    rows = []
    for j, N in enumerate(cfg.n_values):
        vals = np.asarray(mses[j * R:(j + 1) * R])
        se = float(np.std(vals, ddof=1) / np.sqrt(R)) if R > 1 else 0.0
        rows.append(SweepRow(N, float(vals.mean()), se, tuple(float(v) for v in vals), bound_for(cfg, N)))
    return SweepResult(tuple(rows), cfg, label)


@dataclass(frozen=True)
class Comparison:
    optimal: SweepResult
    random: SweepResult

    def to_json(self):
        return {"optimal": self.optimal.to_json(), "random": self.random.to_json()}


def compare_input_states(cfg, jobs=1):
    """
    Paired sweeps with the maximally entangled input and a random full-Schmidt
    input. Both share the per-trial sampling seeds.
    """
    opt = replace(cfg, input_state=InputSpec("maximally_entangled"))
    if cfg.input_state.kind == "random_full_schmidt":
        rnd = cfg
    else:
        rnd = replace(cfg, input_state=InputSpec("random_full_schmidt", ss.derive_seed(cfg.base_seed, INPUT_STREAM)))
    return Comparison(mse_sweep(opt, jobs, "optimal"), mse_sweep(rnd, jobs, "random"))


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog_slope(result):
    """Ordinary least squares of ``log(mean MSE)`` against ``log(N)``."""
    rows = result.rows if isinstance(result, SweepResult) else result
    if len(rows) < 3:
        raise FitError(f"need at least 3 rows, got {len(rows)}")
    N = np.array([r.N for r in rows], dtype=float)
    m = np.array([r.mean_mse for r in rows], dtype=float)
    if np.any(m <= 0) or np.any(N <= 0):
        raise FitError("log-log fit needs positive N and MSE")
    fit = stats.linregress(np.log(N), np.log(m))
    return LogLogFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2))


def _fmt(x):
    return "%.17g" % x


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trials_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "trial", "mse"])
    for r in result.rows:
        for i, v in enumerate(r.per_trial):
            w.writerow([r.N, i, _fmt(v)])
    return buf.getvalue()


def summary_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "mean_mse", "std_err", "bound"])
    for r in result.rows:
        w.writerow([r.N, _fmt(r.mean_mse), _fmt(r.std_err), _fmt(r.bound)])
    return buf.getvalue()


def sweep_file_contents(result, prefix=""):
    """Mapping of file name to contents for a sweep's CSV and JSON outputs."""
    return {
        f"{prefix}trials.csv": trials_csv(result),
        f"{prefix}summary.csv": summary_csv(result),
        f"{prefix}sweep.json": json.dumps(result.to_json(), indent=2) + "\n",
    }
