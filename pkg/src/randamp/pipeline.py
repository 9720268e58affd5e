"""End-to-end protocol run over the simulated device, and the S-vs-n trade-off sweep.

Protocol (one run):

1. For each trial i, take x_i, y_i from the weak source and record the
   device outputs a_i, b_i.
2. Tally all trials, estimate S_mu; abort if it is negative.
3. Otherwise draw the 2n-bit seed Z from the same source, size the output
   from the observed violation, and emit K = Ext(AB, Z) with Z in the
   extractor's strong slot.

Source draws never see device outputs: the source stream is consumed in a
fixed order that does not depend on a_i, b_i.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from randamp import __version__
from randamp.bitstore import BitString, CountTable16, TrialWriter, write_bits
from randamp.device import (
    LhvDeviceModel,
    QuantumDeviceModel,
    calibrate_visibility,
    expected_values,
    sample_trials,
)
from randamp.entropy import (
    AffineEta,
    ConstantEta,
    EtaStrategy,
    SecurityParams,
    adaptive_output_length,
    default_eta,
    output_length,
    sv_bits_consumed,
)
from randamp.extractor import ShiftExtractorSpec, extract_fast, extract_naive
from randamp.inequality import (
    EstimationError,
    MdlParams,
    chsh_observed,
    s_mu_observed,
    s_mu_sigma,
    tally_cells,
)
from randamp.source import AdaptiveAdversary, FileBacked, IidBias, SVModel
from randamp.stats import MIN_BITS, test_battery

SCHEMA = "randamp.report/1"
CHUNK = 1 << 20


class ConfigError(ValueError):
    pass


@dataclass
class ProtocolConfig:
    n: int
    mu: float = 0.0075
    block_size: int = 1 << 26
    device: dict = field(default_factory=lambda: {"kind": "quantum", "visibility": 1.0})
    source: dict = field(default_factory=lambda: {"kind": "iid", "delta": 0.0})
    epsilon: float = 1e-12
    epsilon_s: float | None = None
    epsilon_ea: float = 1e-12
    eta: dict = field(default_factory=lambda: {"kind": "default"})
    grid: int = 100
    s_mu_max: float | None = None
    fixed_s_mu: float | None = None
    extractor: str = "fast"
    seed: int = 0
    workers: int = 1
    visibility_drift_per_block: float = 0.0
    output_dir: str | None = None

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if self.block_size < 1:
            raise ConfigError("block_size must be at least 1")
        if self.extractor not in ("fast", "naive"):
            raise ConfigError(f"extractor must be 'fast' or 'naive', got {self.extractor!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 <= self.mu < 0.5:
            raise ConfigError(f"mu must lie in [0, 0.5), got {self.mu}")
        self.security_params()
        self.device_model()
        self.eta_strategy()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "n" not in doc:
            raise ConfigError("config needs n")
        return cls(**doc)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ProtocolConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- builders ---------------------------------------------------------

    def security_params(self, n: int | None = None) -> SecurityParams:
        try:
            return SecurityParams(
                n or self.n, self.mu, self.epsilon, self.epsilon_s, self.epsilon_ea
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def device_model(self, block: int = 0) -> QuantumDeviceModel | LhvDeviceModel:
        d = dict(self.device)
        kind = d.pop("kind", "quantum")
        try:
            if kind == "quantum":
                if "target_S" in d:
                    d["visibility"] = calibrate_visibility(d.pop("target_S"))
                if "angles" in d:
                    d["angles"] = tuple(d["angles"])
                if self.visibility_drift_per_block:
                    v = d.get("visibility", 1.0) + block * self.visibility_drift_per_block
                    d["visibility"] = min(max(v, 0.0), 1.0)
                return QuantumDeviceModel(**d, seed=self.seed)
            if kind == "lhv":
                d["responses"] = tuple(tuple(r) for r in d.get("responses", [(0, 0, 0, 0)]))
                d["weights"] = tuple(d.get("weights", [1.0] * len(d["responses"])))
                if d.get("input_dists") is not None:
                    d["input_dists"] = tuple(tuple(p) for p in d["input_dists"])
                return LhvDeviceModel(**d, seed=self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad device section: {exc}") from exc
        raise ConfigError(f"unknown device kind {kind!r}")

    def source_model(self) -> SVModel:
        s = dict(self.source)
        kind = s.pop("kind", "iid")
        strategies = {"iid": IidBias, "adaptive": AdaptiveAdversary, "file": FileBacked}
        if kind not in strategies:
            raise ConfigError(f"unknown source kind {kind!r}")
        try:
            return SVModel(self.mu, strategies[kind](**s), seed=self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad source section: {exc}") from exc

    def eta_strategy(self) -> EtaStrategy:
        return eta_from_dict(self.eta)


def eta_from_dict(doc: dict) -> EtaStrategy:
    d = dict(doc)
    kind = d.pop("kind", "default")
    if kind == "default":
        return default_eta()
    if kind == "constant":
        return ConstantEta(float(d["rate"]))
    if kind == "affine":
        return AffineEta(float(d["alpha"]), float(d.get("s0", 0.0)), float(d.get("beta", 0.0)))
    raise ConfigError(f"unknown eta kind {kind!r}")


@dataclass
class ProtocolReport:
    schema: str
    version: str
    n: int
    S_obs: float | None
    S_mu_obs: float
    S_mu_sigma: float
    abort: bool
    m: int
    s_mu_used: float
    s_mu_max: float
    security: float
    sv_bits_consumed: int
    sv_bits_planned: int
    counts: list
    blocks: list
    timings: dict
    battery: list | None
    output_file: str | None
    trials_file: str | None
    config: dict
    created_at: str = ""
    key: BitString | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "key"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def deterministic_view(self) -> dict:
        d = self.to_dict()
        for key in ("created_at", "timings", "output_file", "trials_file"):
            d.pop(key)
        d["config"] = {k: v for k, v in d["config"].items() if k not in ("workers", "output_dir")}
        return d


def _s_mu_max(config: ProtocolConfig) -> float:
    if config.s_mu_max is not None:
        return config.s_mu_max
    s_mu = expected_values(config.device_model(), config.mu)[1]
    if s_mu <= 0:
        # a local device has no positive expectation; fall back to the ideal quantum value
        s_mu = expected_values(QuantumDeviceModel(), config.mu)[1]
    return s_mu


def _device_outcomes(device, x, y, start, workers):
    if workers <= 1 or x.size < 2 * 4096:
        return sample_trials(device, x, y, start)
    bounds = np.linspace(0, x.size, workers + 1).astype(int)
    parts = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        res = list(pool.map(lambda p: sample_trials(device, x[p[0]:p[1]], y[p[0]:p[1]], start + p[0]), parts))
    return np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res])


def simulate_counts(
    config: ProtocolConfig, trials_path: str | os.PathLike | None = None, keep_ab: bool = True
):
    """Generate all trials; returns (total counts, per-block counts, AB bits or None, source)."""
    source = config.source_model()
    mdl_total = CountTable16(np.zeros(16, dtype=np.int64))
    blocks: list[CountTable16] = []
    ab_parts: list[np.ndarray] = []
    writer = TrialWriter(trials_path, config.n) if trials_path else None
    try:
        for b_index, b_start in enumerate(range(0, config.n, config.block_size)):
            b_stop = min(b_start + config.block_size, config.n)
            device = config.device_model(b_index)
            block_counts = CountTable16(np.zeros(16, dtype=np.int64))
            for start in range(b_start, b_stop, CHUNK):
                stop = min(start + CHUNK, b_stop)
                xy = source.sample_array(2 * (stop - start))
                x, y = xy[0::2], xy[1::2]
                a, b = _device_outcomes(device, x, y, start, config.workers)
                cells = x | (y << 1) | (a << 2) | (b << 3)
                block_counts = block_counts + tally_cells(cells)
                if writer:
                    writer.append(cells)
                if keep_ab:
                    ab = np.empty(2 * cells.size, dtype=np.uint8)
                    ab[0::2], ab[1::2] = a, b
                    ab_parts.append(ab)
            blocks.append(block_counts)
            mdl_total = mdl_total + block_counts
    finally:
        if writer:
            writer.close()
    ab_bits = np.concatenate(ab_parts) if keep_ab else None
    return mdl_total, blocks, ab_bits, source


def _block_rows(blocks: list[CountTable16], params: MdlParams, block_size: int) -> list[dict]:
    rows = []
    for k, c in enumerate(blocks):
        try:
            s = chsh_observed(c)
        except EstimationError:
            s = None
        rows.append(
            {"block": k, "trials": c.total, "S": s, "S_mu": s_mu_observed(c, params)[0],
             "partial": c.total < block_size}
        )
    return rows


def run_protocol(config: ProtocolConfig, output_dir: str | os.PathLike | None = None) -> ProtocolReport:
    config.validate()
    out = Path(output_dir or config.output_dir) if (output_dir or config.output_dir) else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    params = MdlParams(config.mu)
    timings = {}

    t0 = time.perf_counter()
    trials_path = out / "trials.bin" if out else None
    counts, blocks, ab_bits, source = simulate_counts(config, trials_path)
    timings["simulate_s"] = time.perf_counter() - t0

    s_mu, abort = s_mu_observed(counts, params)
    sigma = s_mu_sigma(counts, params)
    try:
        s_obs = chsh_observed(counts)
    except EstimationError:
        s_obs = None

    sec = config.security_params()
    eta = config.eta_strategy()
    s_max = _s_mu_max(config)
    m, s_used, security = 0, 0.0, sec.epsilon
    if not abort:
        if config.fixed_s_mu is not None:
            if s_mu >= config.fixed_s_mu:
                m, s_used = output_length(config.fixed_s_mu, eta, sec), config.fixed_s_mu
        else:
            adaptive = adaptive_output_length(s_mu, s_max, config.grid, eta, sec)
            m, s_used, security = adaptive.m, adaptive.s_mu_used, adaptive.security

    out_file, battery, key = None, None, None
    consumed = 2 * config.n
    if not abort:
        z = source.sample(2 * config.n)
        consumed += 2 * config.n
        key = BitString.zeros(0)
        if m > 0:
            spec = ShiftExtractorSpec(2 * config.n, m)
            ab = BitString.from_bits(ab_bits)
            t1 = time.perf_counter()
            if config.extractor == "naive":
                key = extract_naive(spec, z, ab)
            else:
                key = extract_fast(spec, z, ab, workers=config.workers)
            timings["extract_s"] = time.perf_counter() - t1
            if key.length >= MIN_BITS:
                battery = [dataclasses.asdict(r) for r in test_battery(key)]
        if out:
            out_file = str(out / "K.bin")
            write_bits(key, out_file)

    report = ProtocolReport(
        schema=SCHEMA,
        version=__version__,
        n=config.n,
        S_obs=s_obs,
        S_mu_obs=s_mu,
        S_mu_sigma=sigma,
        abort=abort,
        m=m,
        s_mu_used=s_used,
        s_mu_max=s_max,
        security=security,
        sv_bits_consumed=consumed,
        sv_bits_planned=sv_bits_consumed(config.n),
        counts=counts.counts.tolist(),
        blocks=_block_rows(blocks, params, config.block_size),
        timings=timings,
        battery=battery,
        output_file=out_file,
        trials_file=str(trials_path) if trials_path else None,
        config=config.to_dict(),
        created_at=datetime.now(timezone.utc).isoformat(),
        key=key,
    )
    if out:
        (out / "report.json").write_text(report.to_json())
        _write_blocks_csv(report.blocks, out / "blocks.csv")
    return report


def _write_blocks_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "S", "S_mu"])
        for r in rows:
            w.writerow([r["block"], "" if r["S"] is None else repr(r["S"]), repr(r["S_mu"])])


def dry_run(config: ProtocolConfig) -> dict:
    """Resource and output-length plan without generating any data."""
    config.validate()
    sec = config.security_params()
    s_max = _s_mu_max(config)
    s_exp = expected_values(config.device_model(), config.mu)
    return {
        "schema": SCHEMA,
        "n": config.n,
        "blocks": math.ceil(config.n / config.block_size),
        "sv_bits_inputs": 2 * config.n,
        "sv_bits_seed": 2 * config.n,
        "sv_bits_total": sv_bits_consumed(config.n),
        "extractor_input_bits": 2 * config.n,
        "expected_S": s_exp[0],
        "expected_S_mu": s_exp[1],
        "s_mu_max": s_max,
        "m_at_expected": adaptive_output_length(
            max(s_exp[1], 0.0), s_max, config.grid, config.eta_strategy(), sec
        ).m,
        "security": config.grid * sec.epsilon,
    }


# -- trade-off sweep --------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    S: float
    S_mu: float
    n: int | None
    reason: str = ""


N_LIMIT = 1 << 62


def minimal_trials(target_m: int, s_mu: float, eta: EtaStrategy, template: SecurityParams) -> int | None:
    """Smallest n whose output length reaches ``target_m``; None if unreachable below N_LIMIT."""

    def enough(n: int) -> bool:
        return output_length(max(s_mu, 0.0), eta, template.with_n(n)) >= target_m

    if enough(1):
        return 1
    if not enough(N_LIMIT):
        return None
    lo, hi = 1, N_LIMIT
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if enough(mid):
            hi = mid
        else:
            lo = mid
    return hi


def tradeoff_sweep(
    target_m: int,
    mu: float,
    eta: EtaStrategy,
    s_grid,
    epsilon: float = 1e-12,
    epsilon_s: float | None = None,
    template: QuantumDeviceModel | None = None,
) -> list[SweepRow]:
    """Minimal trial count reaching ``target_m`` output bits for each CHSH value."""
    grid = [float(s) for s in s_grid]
    if not grid:
        raise ValueError("S grid must be nonempty")
    template = template or QuantumDeviceModel()
    sec = SecurityParams(1, mu, epsilon, epsilon_s)
    rows = []
    for s in grid:
        v = calibrate_visibility(s, template)
        model = dataclasses.replace(template, visibility=v)
        s_mu = expected_values(model, mu)[1]
        if s_mu <= 0:
            rows.append(SweepRow(s, s_mu, None, "no MDL violation at this bias"))
            continue
        n = minimal_trials(target_m, s_mu, eta, sec)
        rows.append(SweepRow(s, s_mu, n, "" if n else "target unreachable under eta model"))
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["S", "S_mu", "n", "reason"])
        for r in rows:
            w.writerow([repr(r.S), repr(r.S_mu), "" if r.n is None else r.n, r.reason])
