"""Command-line interface: ``randamp <subcommand> ...``.

Exit status is 0 on success (a protocol abort is a success), 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from randamp import __version__
from randamp.bitstore import FormatError, read_bits, read_trials, write_bits, xor_pad
from randamp.entropy import (
    ConstantEta,
    SecurityParams,
    implied_eta,
    output_length,
    sv_bits_consumed,
)
from randamp.extractor import ShiftExtractorSpec, extract_fast, extract_naive
from randamp.inequality import (
    EstimationError,
    MdlParams,
    block_series,
    chsh_observed,
    s_mu_observed,
    s_mu_sigma,
    tally,
    write_series_csv,
)
from randamp.pipeline import (
    ConfigError,
    ProtocolConfig,
    dry_run,
    eta_from_dict,
    run_protocol,
    simulate_counts,
    tradeoff_sweep,
    write_sweep_csv,
)
from randamp.stats import battery_json, test_battery
from randamp.timing import (
    REFERENCE_DISTANCE_M,
    REFERENCE_DRIFT,
    REFERENCE_SEGMENTS,
    load_timing_config,
    verify_locality,
)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def _eta_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", choices=["default", "constant", "affine"], default="default")
    p.add_argument("--rate", type=float, help="constant eta rate (bits/trial)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--s0", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)


def _eta_from_args(args):
    doc = {"kind": args.eta}
    if args.eta == "constant":
        doc["rate"] = args.rate
    elif args.eta == "affine":
        doc.update(alpha=args.alpha, s0=args.s0, beta=args.beta)
    return eta_from_dict(doc)


def _config_from_args(args) -> ProtocolConfig:
    if getattr(args, "config", None):
        cfg = ProtocolConfig.load(args.config)
    else:
        device = {"kind": "quantum"}
        if args.target_s is not None:
            device["target_S"] = args.target_s
        else:
            device["visibility"] = args.visibility
        cfg = ProtocolConfig(n=args.n, mu=args.mu, device=device, seed=args.seed)
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    cfg.validate()
    counts, _, _, _ = simulate_counts(cfg, args.out, keep_ab=False)
    params = MdlParams(cfg.mu)
    s_mu, abort = s_mu_observed(counts, params)
    _emit({"trials_file": args.out, "n": cfg.n, "S_mu": s_mu, "abort": abort})
    return 0


def cmd_estimate(args) -> int:
    trials = read_trials(args.trials)
    params = MdlParams(args.mu)
    counts = tally(trials)
    s_mu, abort = s_mu_observed(counts, params)
    try:
        s = chsh_observed(counts)
    except EstimationError as exc:
        logging.warning("%s", exc)
        s = None
    if args.series:
        write_series_csv(block_series(trials, args.chunk, params), args.series)
    _emit({"n": trials.n, "S": s, "S_mu": s_mu, "S_mu_sigma": s_mu_sigma(counts, params),
           "abort": abort})
    return 0


def cmd_params(args) -> int:
    if args.config:
        _emit(dry_run(ProtocolConfig.load(args.config)))
        return 0
    sec = SecurityParams(args.n, args.mu, args.epsilon, args.epsilon_s)
    out = {"n": args.n, "mu": args.mu, "sv_bits_total": sv_bits_consumed(args.n),
           "log_term": sec.log_term}
    if args.m is not None:
        rate = implied_eta(args.m, sec)
        out["implied_eta"] = rate
        out["m_roundtrip"] = output_length(0.0, ConstantEta(rate), sec)
    if args.s_mu is not None:
        out["m"] = output_length(args.s_mu, _eta_from_args(args), sec)
    _emit(out)
    return 0


def cmd_extract(args) -> int:
    ab = read_bits(args.ab)
    z = read_bits(args.z)
    spec = ShiftExtractorSpec(ab.length, args.m)
    # K = Ext(AB, Z) externally; Z occupies the strong (first) slot internally.
    if args.naive:
        key = extract_naive(spec, z, ab)
    else:
        key = extract_fast(spec, z, ab, workers=args.workers)
    write_bits(key, args.out)
    _emit({"output_file": args.out, "m": key.length})
    return 0


def cmd_run(args) -> int:
    cfg = ProtocolConfig.load(args.config)
    if args.workers:
        cfg.workers = args.workers
    if args.dry_run:
        _emit(dry_run(cfg))
        return 0
    report = run_protocol(cfg, args.out)
    summary = {k: report.to_dict()[k] for k in ("S_obs", "S_mu_obs", "abort", "m", "security")}
    summary["report"] = f"{args.out}/report.json" if args.out else None
    _emit(summary)
    return 0


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        return [float(v) for v in np.arange(lo, hi + step / 2, step)]
    return [float(v) for v in text.split(",")]


def cmd_sweep(args) -> int:
    rows = tradeoff_sweep(args.target_m, args.mu, _eta_from_args(args), _parse_grid(args.grid),
                          epsilon=args.epsilon)
    if args.out:
        write_sweep_csv(rows, args.out)
    else:
        print("S,S_mu,n,reason")
        for r in rows:
            print(f"{r.S!r},{r.S_mu!r},{'' if r.n is None else r.n},{r.reason}")
    return 0


def cmd_timing(args) -> int:
    if args.config:
        table, distance, drift = load_timing_config(args.config)
    else:
        table, distance, drift = REFERENCE_SEGMENTS, REFERENCE_DISTANCE_M, REFERENCE_DRIFT
    out = verify_locality(table, distance).to_dict()
    if drift is not None:
        name, hours = drift.limiting()
        out["jitter_free_hours"] = drift.windows()
        out["limiting_device"] = {"name": name, "hours": hours, "days": hours / 24}
    _emit(out)
    return 0


def cmd_stats(args) -> int:
    print(battery_json(test_battery(read_bits(args.bits))))
    return 0


def cmd_pad(args) -> int:
    write_bits(xor_pad(read_bits(args.data), read_bits(args.pad)), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randamp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a RATRIAL1 trial file")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=1 << 16)
    p.add_argument("--mu", type=float, default=0.0075)
    p.add_argument("--visibility", type=float, default=1.0)
    p.add_argument("--target-s", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="S and S_mu from a trial file")
    p.add_argument("trials")
    p.add_argument("--mu", type=float, default=0.0075)
    p.add_argument("--chunk", type=int, default=1 << 22)
    p.add_argument("--series", help="write per-block CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("params", help="output-length calculus")
    p.add_argument("--config", help="plan a run from a config (no data generated)")
    p.add_argument("--n", type=int, default=20 * 2**26)
    p.add_argument("--mu", type=float, default=0.0075)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--epsilon-s", type=float)
    p.add_argument("--m", type=int, help="invert: entropy rate implied by this output length")
    p.add_argument("--s-mu", type=float, help="forward: output length at this violation")
    _eta_args(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("extract", help="K = Ext(AB, Z)")
    p.add_argument("ab")
    p.add_argument("z")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--naive", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="full protocol from a config")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="minimal n per CHSH value for a target output length")
    p.add_argument("--target-m", type=int, default=10**6)
    p.add_argument("--mu", type=float, default=0.0075)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--grid", default="2.05:2.80:0.05", help="lo:hi:step or comma list")
    p.add_argument("--out")
    _eta_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("timing", help="locality budget check")
    p.add_argument("--config", help="JSON with distance_m, segments, drift")
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("stats", help="3-test battery on a RABITS01 file")
    p.add_argument("bits")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pad", help="one-time pad: out = data XOR pad")
    p.add_argument("data")
    p.add_argument("pad")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pad)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"randamp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
