"""Command line: ``sparseproof {train,verify,decode,report}``.

Exit codes: 0 success / verified, 1 usage error, 2 counterexample found,
3 incomplete (timeout), 4 training diverged.
"""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .bnb import COUNTEREXAMPLE, PROVED, Budget, measure_witness, verdict, verify_network
from .config import ConfigError, load_config
from .model import forward_measurements, load_model, reconstruct, save_model
from .results import (ResultsParseError, cactus_series, outcome_rows, read_results_csv,
                      write_cactus_csv, write_results_csv)
from .training import TrainingDiverged, fuzz, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COUNTEREXAMPLE = 2
EXIT_INCOMPLETE = 3
EXIT_DIVERGED = 4

log = logging.getLogger("sparseproof")


class UsageError(Exception):
    pass


def cmd_train(config_path, out_path, seed=None, fuzz_samples: int = 10_000) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if seed is not None:
        cfg.seed = cfg.training.seed = seed
    out_path = Path(out_path)
    log_path = out_path.with_suffix(".log.jsonl")
    decoder = cfg.initial_decoder()
    print(f"training n={cfg.problem.n} m1={cfg.problem.m1} m2={cfg.problem.m2} "
          f"l={cfg.problem.l} eps={cfg.problem.eps} seed={cfg.seed}")
    try:
        with open(log_path, "w") as fh:
            fh.write(json.dumps({"seed": cfg.seed, "config": str(config_path)}) + "\n")
            result = train(decoder, cfg.training, log_file=fh)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    save_model(result.decoder, out_path)
    if fuzz_samples:
        bad = fuzz(result.decoder, fuzz_samples, np.random.default_rng([cfg.seed, 2]))
        print(f"fuzzing: {len(bad)} / {fuzz_samples} signals misdecoded")
    print(f"wrote {out_path} and {log_path}")
    return EXIT_OK


def exit_code(statuses) -> int:
    statuses = list(statuses)
    if COUNTEREXAMPLE in statuses:
        return EXIT_COUNTEREXAMPLE
    if all(s == PROVED for s in statuses):
        return EXIT_OK
    return EXIT_INCOMPLETE


def cmd_verify(model_path, out_csv, workers=1, budget_s=3600.0, max_subdomains=10_000_000,
               seed=0, deterministic=False, proof_log=None) -> int:
    decoder = load_model(model_path)
    if deterministic:
        workers = 1
    budget = Budget(budget_s, max_subdomains)
    plog = open(proof_log, "w") if proof_log else None
    try:
        outcomes = verify_network(decoder, budget, workers=workers, seed=seed, proof_log=plog)
    finally:
        if plog:
            plog.close()
    rows = outcome_rows(outcomes, witness=lambda x: measure_witness(decoder, x))
    write_results_csv(out_csv, rows)

    for kind in ("on", "off"):
        sel = [o for o in outcomes if o.prop.kind == kind]
        counts = {s: sum(o.status == s for o in sel) for s in ("proved", "counterexample", "timeout")}
        med = statistics.median(o.stats["wall_time"] for o in sel) if sel else 0.0
        med_sub = statistics.median(o.stats["subdomains"] for o in sel) if sel else 0
        print(f"{kind:>4}: proved {counts['proved']:3d}  counterexample {counts['counterexample']:3d}  "
              f"timeout {counts['timeout']:3d}  median time {med:.3f}s  median subdomains {med_sub}")
    print(f"verdict: {verdict(outcomes)}")
    return exit_code(o.status for o in outcomes)


def _read_measurements(arg: str, m: int) -> np.ndarray:
    try:
        is_file = Path(arg).is_file()
    except OSError:     # e.g. a long vector literal exceeds the path length limit
        is_file = False
    if is_file:
        path = Path(arg)
        rows = [line for line in path.read_text().splitlines() if line.strip()]
        Y = np.array([[float(v) for v in line.replace(",", " ").split()] for line in rows])
    else:
        Y = np.array([[float(v) for v in arg.replace(",", " ").split()]])
    if Y.ndim != 2 or Y.shape[1] != m:
        raise UsageError(f"measurements must have length {m}")
    return Y


def decode_one(decoder, y):
    z = forward_measurements(decoder.params, y)
    supp = np.flatnonzero(z > 0)
    x = reconstruct(decoder.sensing, y, supp) if decoder.sensing.is_linear else None
    return supp, x


def cmd_decode(model_path, measurements, out=None) -> int:
    decoder = load_model(model_path)
    try:
        Y = _read_measurements(measurements, decoder.sensing.m)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fh = open(out, "w") if out else sys.stdout
    try:
        for y in Y:
            t0 = time.perf_counter()
            supp, x = decode_one(decoder, y)
            latency = (time.perf_counter() - t0) * 1e3
            rec = {"support": supp.tolist(), "latency_ms": latency}
            if x is not None:
                rec["x"] = x.tolist()
            fh.write(json.dumps(rec) + "\n")
    finally:
        if out:
            fh.close()
    return EXIT_OK


def cmd_report(csv_paths, out=None) -> int:
    rows = []
    try:
        for path in csv_paths:
            rows += cactus_series(read_results_csv(path), Path(path).stem)
    except (ResultsParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if out:
        with open(out, "w", newline="") as fh:
            write_cactus_csv(fh, rows)
    else:
        write_cactus_csv(sys.stdout, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseproof", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a decoder from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--seed", type=int)
    p.add_argument("--fuzz", type=int, default=10_000, help="post-training fuzzing samples")

    p = sub.add_parser("verify", help="prove all support properties of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="results CSV to write")
    p.add_argument("--config", help="take verification settings from this config")
    p.add_argument("--workers", type=int)
    p.add_argument("--budget-s", type=float)
    p.add_argument("--max-subdomains", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--proof-log", help="write line-delimited subdomain records here")

    p = sub.add_parser("decode", help="decode measurements with a model")
    p.add_argument("--model", required=True)
    p.add_argument("measurements", help="comma/space separated vector, or a file with one per line")
    p.add_argument("--out")

    p = sub.add_parser("report", help="cactus-plot series from results CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")

    if args.command == "train":
        return cmd_train(args.config, args.out, seed=args.seed, fuzz_samples=args.fuzz)
    if args.command == "verify":
        settings = {"workers": 1, "budget_s": 3600.0, "max_subdomains": 10_000_000,
                    "seed": 0, "deterministic": False}
        if args.config:
            try:
                cfg = load_config(args.config)
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            v = cfg.verification
            settings.update(workers=v.workers, budget_s=v.budget_s, max_subdomains=v.max_subdomains,
                            seed=cfg.seed, deterministic=v.deterministic)
        for key in ("workers", "budget_s", "max_subdomains", "seed"):
            if getattr(args, key) is not None:
                settings[key] = getattr(args, key)
        settings["deterministic"] = settings["deterministic"] or args.deterministic
        return cmd_verify(args.model, args.out, proof_log=args.proof_log, **settings)
    if args.command == "decode":
        return cmd_decode(args.model, args.measurements, args.out)
    return cmd_report(args.csv, args.out)


if __name__ == "__main__":
    sys.exit(main())
